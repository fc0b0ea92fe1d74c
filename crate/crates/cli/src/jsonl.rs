//! Thread JSONL input and output.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use discourse_core::{Comment, DiscourseAct, Thread};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawPost {
    pub id: String,
    #[serde(default)]
    pub in_reply_to: Option<String>,
    #[serde(default)]
    pub author: Option<String>,
    #[serde(default)]
    pub created_utc: Option<serde_json::Number>,
    #[serde(default)]
    pub body: Option<String>,
    #[serde(default)]
    pub majority_type: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawThread {
    pub id: String,
    #[serde(default)]
    pub title: String,
    pub posts: Vec<RawPost>,
}

/// Outcome of reading a thread file.
#[derive(Debug, Default)]
pub struct ParseReport {
    pub threads: Vec<Thread>,
    /// `(line number, message)` of skipped lines.
    pub errors: Vec<(usize, String)>,
    /// Comments whose parent did not resolve.
    pub dropped: usize,
    /// Labels that were not a known act and became `Other`.
    pub unknown_acts: usize,
}

fn timestamp(n: &serde_json::Number) -> Option<i64> {
    n.as_i64().or_else(|| n.as_f64().filter(|f| f.is_finite()).map(|f| f.floor() as i64))
}

/// Converts one raw thread. Returns the thread, dropped count and unknown
/// label count.
pub fn convert(raw: RawThread) -> Result<(Thread, usize, usize)> {
    let mut unknown = 0;
    let comments = raw
        .posts
        .into_iter()
        .map(|p| {
            let mut c = Comment::new(&p.id, p.in_reply_to.as_deref().filter(|s| !s.is_empty()), p.body.as_deref().unwrap_or(""));
            if let Some(a) = &p.author {
                c = c.with_author(a);
            }
            if let Some(ts) = p.created_utc.as_ref().and_then(timestamp) {
                c = c.with_timestamp(ts);
            }
            if let Some(label) = p.majority_type.as_deref().filter(|s| !s.is_empty()) {
                let act = label.parse().unwrap_or_else(|_| {
                    unknown += 1;
                    DiscourseAct::Other
                });
                c = c.with_act(act);
            }
            c
        })
        .collect();
    let built = Thread::build(&raw.id, &raw.title, comments)?;
    Ok((built.thread, built.dropped, unknown))
}

pub fn parse_str(text: &str) -> ParseReport {
    let mut report = ParseReport::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let res = serde_json::from_str::<RawThread>(line)
            .map_err(anyhow::Error::from)
            .and_then(convert);
        match res {
            Ok((t, dropped, unknown)) => {
                report.threads.push(t);
                report.dropped += dropped;
                report.unknown_acts += unknown;
            }
            Err(e) => report.errors.push((i + 1, e.to_string())),
        }
    }
    report
}

/// Reads a thread file. Malformed lines are logged and skipped; a file with
/// no valid thread is an error.
pub fn parse_threads(path: &Path) -> Result<ParseReport> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let report = parse_str(&text);
    for (line, msg) in &report.errors {
        log::warn!("{}:{line}: skipped: {msg}", path.display());
    }
    if report.dropped > 0 {
        log::warn!("{} comments with unresolvable parents dropped", report.dropped);
    }
    if report.unknown_acts > 0 {
        log::warn!("{} unknown labels mapped to other", report.unknown_acts);
    }
    if report.threads.is_empty() {
        bail!("no valid threads in {}", path.display());
    }
    Ok(report)
}

pub fn to_raw(t: &Thread) -> RawThread {
    RawThread {
        id: t.id.clone(),
        title: t.title.clone(),
        posts: t
            .comments
            .iter()
            .map(|c| RawPost {
                id: c.id.clone(),
                in_reply_to: c.parent_id.clone(),
                author: (!c.author.is_empty()).then(|| c.author.clone()),
                created_utc: c.timestamp.map(Into::into),
                body: Some(c.body.clone()),
                majority_type: c.gold_act.map(|a| a.name().to_string()),
            })
            .collect(),
    }
}

pub fn write_threads(path: &Path, threads: &[Thread]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for t in threads {
        serde_json::to_writer(&mut w, &to_raw(t))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
