//! Writers for metrics, predictions and analysis outputs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use discourse_core::analyze::{DiscourseSeries, Partition, RelevanceRecord, SignedUserGraph};
use discourse_core::eval::{CommentPrediction, Metrics, Scores};
use discourse_core::DiscourseAct;
use serde::Serialize;
use serde_json::json;

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

/// `class,precision,recall,f1,support`, then `weighted` and `macro` rows.
/// Classes in `skip` are left out.
pub fn write_metrics_csv(path: &Path, m: &Metrics, skip: &[DiscourseAct]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "class,precision,recall,f1,support")?;
    let row = |w: &mut BufWriter<File>, name: &str, s: &Scores| -> Result<()> {
        writeln!(w, "{name},{:.6},{:.6},{:.6},{}", s.precision, s.recall, s.f1, s.support)?;
        Ok(())
    };
    for act in DiscourseAct::ALL {
        if !skip.contains(&act) {
            row(&mut w, act.name(), &m.per_class[act.code()])?;
        }
    }
    row(&mut w, "weighted", &m.weighted)?;
    row(&mut w, "macro", &m.macro_avg)?;
    w.flush()?;
    Ok(())
}

pub fn write_confusion_tsv(path: &Path, m: &Metrics) -> Result<()> {
    let mut w = create(path)?;
    let names: Vec<&str> = DiscourseAct::ALL.iter().map(|a| a.name()).collect();
    writeln!(w, "gold\\pred\t{}", names.join("\t"))?;
    for (g, row) in m.confusion.counts.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(usize::to_string).collect();
        writeln!(w, "{}\t{}", names[g], cells.join("\t"))?;
    }
    w.flush()?;
    Ok(())
}

fn scores_json(s: &Scores) -> serde_json::Value {
    json!({"precision": s.precision, "recall": s.recall, "f1": s.f1, "support": s.support})
}

pub fn metrics_json(m: &Metrics) -> serde_json::Value {
    json!({
        "accuracy": m.accuracy,
        "weighted": scores_json(&m.weighted),
        "macro": scores_json(&m.macro_avg),
    })
}

#[derive(Serialize)]
struct PredictionLine<'a> {
    thread_id: &'a str,
    comment_id: &'a str,
    gold: Option<&'static str>,
    pred: &'static str,
    probs: &'a [f32],
}

pub fn write_predictions(path: &Path, comments: &[CommentPrediction]) -> Result<()> {
    let mut w = create(path)?;
    for c in comments {
        serde_json::to_writer(
            &mut w,
            &PredictionLine {
                thread_id: &c.thread_id,
                comment_id: &c.comment_id,
                gold: c.gold.map(DiscourseAct::name),
                pred: c.pred.name(),
                probs: &c.probs,
            },
        )?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// `(thread_id, comment_id) -> pred` from a predictions file.
pub fn read_predictions(path: &Path) -> Result<std::collections::BTreeMap<(String, String), DiscourseAct>> {
    #[derive(serde::Deserialize)]
    struct Line {
        thread_id: String,
        comment_id: String,
        pred: String,
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = std::collections::BTreeMap::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let l: Line = serde_json::from_str(line).with_context(|| format!("{}:{}", path.display(), i + 1))?;
        out.insert((l.thread_id, l.comment_id), l.pred.parse()?);
    }
    Ok(out)
}

pub fn write_relevance(path: &Path, records: &[RelevanceRecord]) -> Result<()> {
    let mut w = create(path)?;
    for r in records {
        serde_json::to_writer(
            &mut w,
            &json!({
                "thread_id": r.thread_id,
                "comment_id": r.comment_id,
                "position": r.position,
                "tokens": r.tokens,
                "relevance": r.relevance,
                "pred": r.pred.name(),
            }),
        )?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// `window_start,act,fraction`, acts with zero share omitted.
pub fn write_series_csv(path: &Path, s: &DiscourseSeries) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "window_start,act,fraction")?;
    for (start, f) in &s.windows {
        for act in DiscourseAct::ALL {
            let v = f[act.code()];
            if v > 0.0 {
                writeln!(w, "{start},{},{v}", act.name())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_partition(path: &Path, g: &SignedUserGraph, p: &Partition) -> Result<()> {
    let (a, b) = p.groups(&g.users);
    let value = json!({
        "group_a": a,
        "group_b": b,
        "frustration": p.frustration,
        "method": p.method.name(),
    });
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, &value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}
