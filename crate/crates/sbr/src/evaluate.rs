//! Ranking evaluation, reports and scatter-plot data.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use sbr_core::data::{expand_all, Batch, Dataset, LabeledExample};
use sbr_core::graph::EdgeWeighting;
use sbr_core::metrics::{rank_of, Evaluation, MetricsReport};
use sbr_core::{Model, Real};
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::error::{Error, Result};
use crate::store;

/// Examples scored per parallel task.
const CHUNK: usize = 64;

/// Outcome of scoring one example.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scored {
    pub prefix_len: usize,
    /// 1-based rank of the label among all items.
    pub rank: usize,
    /// Cross-entropy of the label.
    pub loss: f64,
}

pub fn score_example<T: Real>(
    model: &Model<T>,
    example: &LabeledExample,
    weighting: EdgeWeighting,
) -> Result<Scored> {
    let batch = Batch::from_examples(&[example], weighting)?;
    let scores = model.scores(batch.row(0))?;
    let rank = rank_of(&scores, example.label)?;
    let max = scores.iter().map(|s| s.as_f64()).fold(f64::NEG_INFINITY, f64::max);
    let lse = max + scores.iter().map(|s| (s.as_f64() - max).exp()).sum::<f64>().ln();
    Ok(Scored {
        prefix_len: example.prefix.len(),
        rank,
        loss: lse - scores[example.label as usize - 1].as_f64(),
    })
}

/// Scores in example order; the result does not depend on the thread count.
pub fn score_all<T: Real>(
    model: &Model<T>,
    examples: &[LabeledExample],
    weighting: EdgeWeighting,
) -> Result<Vec<Scored>> {
    let chunks: Vec<Vec<Scored>> = examples
        .par_chunks(CHUNK)
        .map(|chunk| {
            chunk
                .iter()
                .map(|e| score_example(model, e, weighting))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

pub fn report(scored: &[Scored], n: usize) -> MetricsReport {
    let mut e = Evaluation::new(n);
    for s in scored {
        e.push(s.prefix_len, s.rank);
    }
    e.report()
}

pub fn mean_loss(scored: &[Scored]) -> f64 {
    scored.iter().map(|s| s.loss).sum::<f64>() / scored.len().max(1) as f64
}

/// A checkpoint scored on the test split of a sessions file.
#[derive(Clone, Debug)]
pub struct Evaluated {
    pub header: checkpoint::Header,
    pub dataset: Dataset,
    pub scored: Vec<Scored>,
}

pub fn evaluate_files(checkpoint: &Path, data: &Path) -> Result<Evaluated> {
    let ckpt = checkpoint::read(checkpoint)?;
    let (data, _) = store::read(data)?;
    let m = ckpt.header.model.num_items;
    if m != data.vocab.len() {
        return Err(Error::config(format!(
            "checkpoint scores {m} items but the data vocabulary has {}",
            data.vocab.len()
        )));
    }
    let examples = expand_all(&data.test);
    let scored = score_all(&ckpt.model, &examples, ckpt.header.edge_weighting)?;
    Ok(Evaluated {
        header: ckpt.header,
        dataset: data.dataset,
        scored,
    })
}

pub fn write_report(path: &Path, report: &MetricsReport) -> Result<()> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    fs::write(path, text).map_err(Error::io(path))
}

/// One point of the HR@20 / MRR@20 scatter plot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub model: String,
    pub dataset: String,
    pub hr20: f64,
    pub mrr20: f64,
}

/// CSV `model,dataset,hr20,mrr20`, one row per report.
pub fn emit_plot_data(rows: &[PlotRow]) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::config("plot data needs at least one report"));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plot_rows() {
        let rows = vec![PlotRow {
            model: "full".into(),
            dataset: "yoochoose1_64".into(),
            hr20: 71.5,
            mrr20: 31.25,
        }];
        let text = emit_plot_data(&rows).unwrap();
        assert_eq!(text, "model,dataset,hr20,mrr20\nfull,yoochoose1_64,71.5,31.25\n");
        let three = emit_plot_data(&[rows[0].clone(), rows[0].clone(), rows[0].clone()]).unwrap();
        assert_eq!(three.lines().count(), 4);
        assert!(emit_plot_data(&[]).is_err());
    }

    #[test]
    fn report_from_ranks() {
        let scored: Vec<Scored> = [1, 3, 25]
            .iter()
            .map(|&rank| Scored { prefix_len: 2, rank, loss: 0.0 })
            .collect();
        let r = report(&scored, 20);
        assert_eq!(r.hr, 200.0 / 3.0);
        assert_eq!(r.example_count, 3);
    }
}
