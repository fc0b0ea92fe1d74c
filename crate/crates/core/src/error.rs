use alloc::string::String;

/// Errors raised by the core library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("invalid thread {thread}: {reason}")]
    InvalidThread { thread: String, reason: String },
    #[error("empty corpus: {0}")]
    EmptyCorpus(&'static str),
    #[error("corpus too small: {0}")]
    CorpusTooSmall(String),
    #[error("every softmax entry is masked")]
    AllMasked,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unknown architecture `{0}`")]
    UnknownArchitecture(String),
    #[error("unknown discourse act `{0}`")]
    UnknownAct(String),
    #[error("missing input: {0}")]
    MissingInput(&'static str),
    #[error("non-finite loss in bucket {bucket_len}, epoch {epoch}, batch {batch}: {detail}")]
    NonFiniteLoss {
        bucket_len: usize,
        epoch: usize,
        batch: usize,
        detail: String,
    },
    #[error("comment length {len} exceeds padded width {c_max}")]
    BucketMismatch { len: usize, c_max: usize },
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }
}
