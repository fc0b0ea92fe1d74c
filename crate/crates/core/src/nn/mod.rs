//! Dense numerics and reverse-mode gradients.
//!
//! Everything trainable in the crate is built out of [`Tensor`] values
//! recorded on a [`Tape`]; parameters live in a [`ParamStore`] and are
//! updated by an [`Optimizer`]. [`grad_check`] compares analytic gradients
//! against central finite differences.

mod check;
pub mod init;
pub mod ops;
mod optim;
mod params;
mod tape;
mod tensor;

use core::fmt::Debug;
use core::iter::Sum;
use core::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive};

pub use check::{grad_check, grad_check_against, GradCheckReport};
pub use optim::{Adam, Optimizer, Sgd, StepReport};
pub use params::{Binding, ParamId, ParamStore};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

/// Floating point element type of tensors (`f32` for training, `f64` for
/// gradient checks).
pub trait Real:
    Float
    + FromPrimitive
    + Debug
    + Default
    + Send
    + Sync
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + 'static
{
    /// Bit width of the type, recorded in checkpoints.
    const BITS: u32;

    fn lit(v: f64) -> Self;

    fn as_f64(self) -> f64;
}

impl Real for f32 {
    const BITS: u32 = 32;

    fn lit(v: f64) -> Self {
        v as f32
    }

    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    const BITS: u32 = 64;

    fn lit(v: f64) -> Self {
        v
    }

    fn as_f64(self) -> f64 {
        self
    }
}
