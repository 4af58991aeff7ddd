//! The epoch loop: shuffled mini-batches, per-row gradients summed in a
//! fixed shard order, optional clipping, Adam, validation, checkpoints.
//!
//! Every random draw comes from a stream forked off the run seed by
//! purpose (initialization, validation split, epoch shuffle, dropout per
//! epoch/batch/row), so results do not depend on the thread count.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use sbr_core::data::{expand_all, make_batches, Batch, BatchOrder, LabeledExample};
use sbr_core::graph::{EdgeWeighting, SessionGraph};
use sbr_core::optim::AdamState;
use sbr_core::{Model, ParamGrads, Real, Rng};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::checkpoint;
use crate::config::{Precision, RunConfig};
use crate::error::{Error, Result};
use crate::evaluate::{mean_loss, report, score_all, write_report, Scored};
use crate::preprocess::Preprocessed;
use crate::store;

/// Rows per gradient shard. Fixed, so the summation order is too.
pub const SHARD_ROWS: usize = 8;

const STREAM_INIT: u64 = 1;
const STREAM_SPLIT: u64 = 2;
const STREAM_SHUFFLE: u64 = 3;
const STREAM_DROPOUT: u64 = 4;

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const CONFIG_FILE: &str = "config.json";
pub const CONFIG_TEXT_FILE: &str = "config.resolved";
pub const GRAPHS_FILE: &str = "graphs.json";

/// One line of the metrics log. Validation fields are `null` when no
/// examples are held out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    /// 1-based number of completed epochs.
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_hr20: Option<f64>,
    pub val_mrr20: Option<f64>,
    pub wall_ms: u64,
}

#[derive(Clone, Debug)]
pub struct Trained<T: Real> {
    pub model: Model<T>,
    pub history: Vec<EpochMetrics>,
}

/// Training examples and the held-out validation examples: the last
/// `val_fraction` of the training examples shuffled under the run seed.
pub fn split_examples(
    data: &Preprocessed,
    val_fraction: f64,
    seed: u64,
) -> (Vec<LabeledExample>, Vec<LabeledExample>) {
    let mut examples = expand_all(&data.train);
    Rng::new(seed).fork(STREAM_SPLIT).shuffle(&mut examples);
    let n_val = (examples.len() as f64 * val_fraction).floor() as usize;
    let val = examples.split_off(examples.len() - n_val);
    (examples, val)
}

pub fn init_model<T: Real>(cfg: &RunConfig) -> Result<Model<T>> {
    Ok(Model::new(cfg.model.clone(), &mut Rng::new(cfg.seed).fork(STREAM_INIT))?)
}

/// Loss sum and summed gradients of a batch, each row weighted `1/B`.
fn batch_gradients<T: Real>(
    model: &Model<T>,
    batch: &Batch,
    dropout: &Rng,
) -> Result<(f64, ParamGrads<T>)> {
    let weight = T::of(1.0 / batch.len() as f64);
    let rows: Vec<usize> = (0..batch.len()).collect();
    let shards: Vec<(f64, ParamGrads<T>)> = rows
        .par_chunks(SHARD_ROWS)
        .map(|shard| {
            let mut loss = 0.0;
            let mut acc: Option<ParamGrads<T>> = None;
            for &i in shard {
                let mut rng = dropout.fork(i as u64);
                let (l, g) = model.row_loss_and_grads(batch.row(i), Some(&mut rng), weight)?;
                loss += l;
                match &mut acc {
                    None => acc = Some(g),
                    Some(a) => a.accumulate(&g),
                }
            }
            Ok((loss, acc.expect("shards are non-empty")))
        })
        .collect::<Result<_>>()?;
    let mut shards = shards.into_iter();
    let (mut loss, mut grads) = shards.next().expect("batches are non-empty");
    for (l, g) in shards {
        loss += l;
        grads.accumulate(&g);
    }
    Ok((loss, grads))
}

/// JSON description of a batch: prefixes, labels and dense adjacency.
pub fn graphs_json(examples: &[&LabeledExample], weighting: EdgeWeighting) -> Result<serde_json::Value> {
    let rows = examples
        .iter()
        .map(|e| {
            let g = SessionGraph::build_with(&e.prefix, weighting)?;
            let n = g.node_count();
            let dense = |flat: &[f64]| flat.chunks(n.max(1)).map(<[f64]>::to_vec).collect::<Vec<_>>();
            Ok(json!({
                "prefix": e.prefix,
                "label": e.label,
                "nodes": g.nodes(),
                "alias": g.alias(),
                "a_in": dense(g.a_in()),
                "a_out": dense(g.a_out()),
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(json!(rows))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(Error::io(path))
}

/// Where a run writes its files; `None` keeps everything in memory.
#[derive(Clone, Copy, Debug, Default)]
pub struct Output<'a> {
    pub dir: Option<&'a Path>,
    pub dump_graphs: bool,
}

pub fn train<T: Real>(cfg: &RunConfig, data: &Preprocessed, out: Output<'_>) -> Result<Trained<T>> {
    if cfg.model.num_items != data.vocab.len() {
        return Err(Error::config(format!(
            "num_items = {} but the data vocabulary has {} items",
            cfg.model.num_items,
            data.vocab.len()
        )));
    }
    let weighting = cfg.edge_weighting();
    let schedule = cfg.train.schedule()?;
    let adam = cfg.train.adam();
    let agc = cfg.train.agc()?;
    let (train_ex, val_ex) = split_examples(data, cfg.train.val_fraction, cfg.seed);
    if train_ex.is_empty() {
        return Err(Error::config("no training examples left after the validation split"));
    }

    let mut model = init_model::<T>(cfg)?;
    let mut state = AdamState::new(model.params());
    let root = Rng::new(cfg.seed);
    let mut log = match out.dir {
        Some(dir) => {
            let path = dir.join(METRICS_FILE);
            Some((OpenOptions::new().create_new(true).append(true).open(&path).map_err(Error::io(&path))?, path))
        }
        None => None,
    };
    let mut history = Vec::with_capacity(cfg.train.epochs);

    for epoch in 0..cfg.train.epochs {
        let start = Instant::now();
        let lr = schedule.lr(epoch);
        let mut shuffle = root.fork(STREAM_SHUFFLE).fork(epoch as u64);
        let batches = make_batches(&train_ex, cfg.train.batch_size, BatchOrder::Shuffled(&mut shuffle), weighting)?;
        let order = batches.order().to_vec();
        let mut loss_sum = 0.0;
        for (b, batch) in batches.enumerate() {
            if epoch == 0 && b == 0 && out.dump_graphs {
                if let Some(dir) = out.dir {
                    let rows: Vec<&LabeledExample> = order[..batch.len()].iter().map(|&i| &train_ex[i]).collect();
                    write_json(&dir.join(GRAPHS_FILE), &graphs_json(&rows, weighting)?)?;
                }
            }
            let dropout = root.fork(STREAM_DROPOUT).fork(epoch as u64).fork(b as u64);
            let step = batch_gradients(&model, &batch, &dropout).and_then(|(loss, grads)| {
                if !loss.is_finite() {
                    Err(diverged(epoch, b, "loss"))
                } else if !grads.is_finite() {
                    Err(diverged(epoch, b, "gradients"))
                } else {
                    Ok((loss, grads))
                }
            });
            let (loss, mut grads) = match step {
                Ok(v) => v,
                Err(e) => {
                    let e = match e {
                        Error::Core(sbr_core::Error::NonFinite { op }) => diverged(epoch, b, op),
                        e => e,
                    };
                    if let (Some(dir), Error::Diverged { .. }) = (out.dir, &e) {
                        let start = b * cfg.train.batch_size;
                        let rows: Vec<&LabeledExample> =
                            order[start..start + batch.len()].iter().map(|&i| &train_ex[i]).collect();
                        let dump = json!({
                            "epoch": epoch + 1,
                            "batch": b,
                            "error": e.to_string(),
                            "examples": graphs_json(&rows, weighting)?,
                        });
                        write_json(&dir.join(format!("diverged-epoch{}-batch{b}.json", epoch + 1)), &dump)?;
                    }
                    return Err(e);
                }
            };
            loss_sum += loss;
            if let Some(agc) = &agc {
                agc.clip(model.params(), &mut grads);
            }
            adam.step(model.params_mut(), &grads, &mut state, lr)?;
        }

        let (val_loss, val_hr20, val_mrr20) = if val_ex.is_empty() {
            (None, None, None)
        } else {
            let scored = score_all(&model, &val_ex, weighting)?;
            let r = report(&scored, 20);
            (Some(mean_loss(&scored)), Some(r.hr), Some(r.mrr))
        };
        let metrics = EpochMetrics {
            epoch: epoch + 1,
            lr,
            train_loss: loss_sum / train_ex.len() as f64,
            val_loss,
            val_hr20,
            val_mrr20,
            wall_ms: start.elapsed().as_millis() as u64,
        };
        if let Some(dir) = out.dir {
            let path = dir.join(checkpoint::file_name(epoch + 1));
            checkpoint::write(&path, &model, epoch + 1, cfg.seed, weighting, &cfg.data_hash)?;
        }
        if let Some((file, path)) = &mut log {
            let line = serde_json::to_string(&metrics)?;
            writeln!(file, "{line}").map_err(Error::io(path.as_path()))?;
        }
        history.push(metrics);
    }
    Ok(Trained { model, history })
}

fn diverged(epoch: usize, batch: usize, op: &str) -> Error {
    Error::Diverged {
        epoch: epoch + 1,
        batch,
        op: op.to_owned(),
    }
}

/// Loads the data, checks its hash, and creates the run directory with
/// the resolved config. Fails if the directory already exists.
pub fn prepare(cfg: &RunConfig) -> Result<(PathBuf, Preprocessed)> {
    let (data, hash) = store::read(&cfg.data)?;
    if hash != cfg.data_hash {
        return Err(Error::format(&cfg.data, "data file changed since the config was resolved"));
    }
    let dir = cfg.run_dir()?;
    fs::create_dir_all(&cfg.out).map_err(Error::io(&cfg.out))?;
    create_fresh_dir(&dir)?;
    let mut json = cfg.to_json()?;
    json.push('\n');
    fs::write(dir.join(CONFIG_FILE), json).map_err(Error::io(dir.join(CONFIG_FILE)))?;
    fs::write(dir.join(CONFIG_TEXT_FILE), cfg.to_text()?).map_err(Error::io(dir.join(CONFIG_TEXT_FILE)))?;
    Ok((dir, data))
}

pub(crate) fn create_fresh_dir(dir: &Path) -> Result<()> {
    fs::create_dir(dir).map_err(|e| {
        if e.kind() == std::io::ErrorKind::AlreadyExists {
            Error::format(dir, "directory already exists; remove it or change the config")
        } else {
            Error::io(dir)(e)
        }
    })
}

pub const REPORT_FILE: &str = "report.json";

/// Trains in a fresh run directory, writes the test-split report of the
/// final model, and returns the directory and the per-example scores.
pub fn run(cfg: &RunConfig, dump_graphs: bool) -> Result<(PathBuf, Vec<Scored>)> {
    let (dir, data) = prepare(cfg)?;
    let out = Output {
        dir: Some(&dir),
        dump_graphs,
    };
    let scored = match cfg.train.precision {
        Precision::F32 => train_and_test::<f32>(cfg, &data, out)?,
        Precision::F64 => train_and_test::<f64>(cfg, &data, out)?,
    };
    write_report(&dir.join(REPORT_FILE), &report(&scored, 20))?;
    Ok((dir, scored))
}

fn train_and_test<T: Real>(cfg: &RunConfig, data: &Preprocessed, out: Output<'_>) -> Result<Vec<Scored>> {
    let trained = train::<T>(cfg, data, out)?;
    score_all(&trained.model, &expand_all(&data.test), cfg.edge_weighting())
}

/// Reads a metrics log.
pub fn read_metrics(path: &Path) -> Result<Vec<EpochMetrics>> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    text.lines()
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}
