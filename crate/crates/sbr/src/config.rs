//! Run configuration.
//!
//! Config files are flat `key = value` lines; values are JSON (`50`,
//! `1e-4`, `true`, `"runs"`), string values may also be written bare, and
//! `#` starts a comment. Resolution starts from the per-dataset defaults
//! of the data file, applies the file, then command-line overrides, and
//! reports every invalid key at once.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use sbr_core::data::Dataset;
use sbr_core::graph::EdgeWeighting;
use sbr_core::optim::{Adam, Agc, StepDecay};
use sbr_core::model::{EMBEDDING, FUSION};
use sbr_core::ModelConfig;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::store;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub decay_factor: f64,
    pub decay_every: usize,
    pub l2: f64,
    pub agc_lambda: f64,
    pub agc_eps: f64,
    pub agc_enabled: bool,
    /// Share of the shuffled training examples held out for validation.
    pub val_fraction: f64,
    pub precision: Precision,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 50,
            epochs: 15,
            lr0: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            decay_factor: 0.1,
            decay_every: 3,
            l2: 1e-6,
            agc_lambda: 0.02,
            agc_eps: 1e-3,
            agc_enabled: true,
            val_fraction: 0.1,
            precision: Precision::F32,
        }
    }
}

impl TrainConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
            ("decay_every", self.decay_every),
        ] {
            if v == 0 {
                out.push(format!("{name} must be positive"));
            }
        }
        for (name, v) in [("lr0", self.lr0), ("adam_eps", self.adam_eps), ("agc_lambda", self.agc_lambda), ("agc_eps", self.agc_eps)] {
            if !(v > 0.0 && v.is_finite()) {
                out.push(format!("{name} = {v} must be positive"));
            }
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2), ("val_fraction", self.val_fraction)] {
            if !(0.0..1.0).contains(&v) {
                out.push(format!("{name} = {v} outside [0, 1)"));
            }
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            out.push(format!("decay_factor = {} outside (0, 1]", self.decay_factor));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            out.push(format!("l2 = {} must be non-negative", self.l2));
        }
        out
    }

    pub fn schedule(&self) -> Result<StepDecay> {
        Ok(StepDecay::new(self.lr0, self.decay_factor, self.decay_every)?)
    }

    pub fn adam(&self) -> Adam {
        Adam {
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
            l2: self.l2,
        }
    }

    /// Clipping with the embedding table and the fusion layer exempt, or
    /// `None` when disabled.
    pub fn agc(&self) -> Result<Option<Agc>> {
        if !self.agc_enabled {
            return Ok(None);
        }
        let exempt = vec![EMBEDDING.to_owned(), FUSION.to_owned()];
        Ok(Some(Agc::new(self.agc_lambda, self.agc_eps, exempt)?))
    }
}

/// Fully resolved settings of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub data: PathBuf,
    pub out: PathBuf,
    pub dataset: Dataset,
    pub data_hash: String,
    pub seed: u64,
    pub weighted_edges: bool,
    #[serde(flatten)]
    pub model: ModelConfig,
    #[serde(flatten)]
    pub train: TrainConfig,
}

/// Keys filled in from the data file.
const DERIVED: [&str; 3] = ["dataset", "data_hash", "num_items"];
const PATHS: [&str; 2] = ["data", "out"];

/// Command-line settings applied after the file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub max_epochs: Option<usize>,
    pub no_agc: bool,
    pub no_gnn: bool,
    pub no_pe: bool,
    pub no_transformer: bool,
}

impl Overrides {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(e) = self.max_epochs {
            cfg.train.epochs = e;
        }
        cfg.train.agc_enabled &= !self.no_agc;
        cfg.model.use_gnn &= !self.no_gnn;
        cfg.model.use_pe &= !self.no_pe;
        cfg.model.use_transformer &= !self.no_transformer;
    }
}

/// One `key = value` entry with its source line.
#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub raw: String,
}

/// Splits a config file into entries; malformed lines are reported as
/// problems.
pub fn parse_entries(text: &str) -> (Vec<Entry>, Vec<String>) {
    let mut entries = Vec::new();
    let mut problems = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let body = strip_comment(line).trim();
        if body.is_empty() {
            continue;
        }
        let Some((key, raw)) = body.split_once('=') else {
            problems.push(format!("line {line_no}: expected `key = value`"));
            continue;
        };
        let key = key.trim();
        if key.is_empty() {
            problems.push(format!("line {line_no}: missing key"));
            continue;
        }
        if !seen.insert(key.to_owned()) {
            problems.push(format!("{key}: set more than once (line {line_no})"));
            continue;
        }
        entries.push(Entry {
            line: line_no,
            key: key.to_owned(),
            raw: raw.trim().to_owned(),
        });
    }
    (entries, problems)
}

/// Drops a `#` comment that is not inside a JSON string.
fn strip_comment(line: &str) -> &str {
    let mut in_str = false;
    let mut escaped = false;
    for (i, c) in line.char_indices() {
        match c {
            _ if escaped => escaped = false,
            '\\' if in_str => escaped = true,
            '"' => in_str = !in_str,
            '#' if !in_str => return &line[..i],
            _ => {}
        }
    }
    line
}

fn placeholder(dataset: Dataset, num_items: usize, data: PathBuf, hash: String, base: &Path) -> RunConfig {
    RunConfig {
        data,
        out: base.join("runs"),
        dataset,
        data_hash: hash,
        seed: 1,
        weighted_edges: false,
        model: ModelConfig::for_dataset(dataset, num_items),
        train: TrainConfig::default(),
    }
}

impl RunConfig {
    /// Resolves config text; relative paths are taken against `base`.
    pub fn resolve(text: &str, base: &Path, overrides: &Overrides) -> Result<RunConfig> {
        let (entries, mut problems) = parse_entries(text);
        let mut data_path = None;
        for e in &entries {
            if e.key == "data" {
                match value_of(e) {
                    Value::String(s) => data_path = Some(base.join(s)),
                    _ => problems.push("data: expected a path".to_owned()),
                }
            }
        }
        let defaults = match &data_path {
            None => {
                if !entries.iter().any(|e| e.key == "data") {
                    problems.push("data: required (path to a .sessions.bin file)".to_owned());
                }
                placeholder(Dataset::Yoochoose, 1, PathBuf::new(), String::new(), base)
            }
            Some(path) => match store::read(path) {
                Ok((data, hash)) => placeholder(data.dataset, data.vocab.len(), path.clone(), hash, base),
                Err(e) => {
                    problems.push(format!("data: {e}"));
                    placeholder(Dataset::Yoochoose, 1, path.clone(), String::new(), base)
                }
            },
        };

        let Value::Object(default_map) = serde_json::to_value(&defaults)? else {
            unreachable!("configs serialize to objects");
        };
        let mut map = default_map.clone();
        for e in &entries {
            if e.key == "data" {
                continue;
            }
            if DERIVED.contains(&e.key.as_str()) {
                problems.push(format!("{}: derived from the data file, cannot be set", e.key));
                continue;
            }
            if !default_map.contains_key(&e.key) {
                problems.push(format!("{}: unknown key (line {})", e.key, e.line));
                continue;
            }
            let mut value = value_of(e);
            if PATHS.contains(&e.key.as_str()) {
                if let Value::String(s) = &value {
                    value = Value::String(base.join(s).to_string_lossy().into_owned());
                }
            }
            match check_one(&default_map, &e.key, value.clone()) {
                Ok(()) => {
                    map.insert(e.key.clone(), value);
                }
                Err(msg) => problems.push(format!("{}: {msg} (line {})", e.key, e.line)),
            }
        }
        if !entries.iter().any(|e| e.key == "ffn_hidden") {
            if let Some(d) = map.get("d").and_then(Value::as_u64) {
                map.insert("ffn_hidden".into(), Value::from(4 * d));
            }
        }

        let mut cfg: RunConfig = serde_json::from_value(Value::Object(map))?;
        overrides.apply(&mut cfg);
        problems.extend(cfg.model.problems());
        problems.extend(cfg.train.problems());
        if problems.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::Config(problems))
        }
    }

    pub fn load(path: &Path, overrides: &Overrides) -> Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(Error::io(path))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::resolve(&text, base, overrides)
    }

    /// The settable keys as config text that resolves back to `self`.
    pub fn to_text(&self) -> Result<String> {
        let Value::Object(map) = serde_json::to_value(self)? else {
            unreachable!("configs serialize to objects");
        };
        let mut out = String::new();
        for (k, v) in &map {
            if !DERIVED.contains(&k.as_str()) {
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> Result<String> {
        Ok(store::sha256_hex(&serde_json::to_vec(self)?))
    }

    /// `<out>/<data stem>-<first 12 hex digits of the config hash>`.
    pub fn run_dir(&self) -> Result<PathBuf> {
        let name = self
            .data
            .file_name()
            .and_then(|n| n.to_str())
            .map(|n| n.trim_end_matches(".bin").trim_end_matches(".sessions"))
            .filter(|n| !n.is_empty())
            .unwrap_or("run");
        Ok(self.out.join(format!("{name}-{}", &self.hash()?[..12])))
    }

    pub fn edge_weighting(&self) -> EdgeWeighting {
        if self.weighted_edges {
            EdgeWeighting::Counted
        } else {
            EdgeWeighting::Binary
        }
    }
}

/// JSON value of an entry; text that is not JSON is read as a bare string.
fn value_of(e: &Entry) -> Value {
    serde_json::from_str(&e.raw).unwrap_or_else(|_| Value::String(e.raw.clone()))
}

/// Deserializes the defaults with only `key` replaced, so that each key is
/// type-checked on its own.
fn check_one(defaults: &Map<String, Value>, key: &str, value: Value) -> std::result::Result<(), String> {
    let mut probe = defaults.clone();
    probe.insert(key.to_owned(), value);
    serde_json::from_value::<RunConfig>(Value::Object(probe))
        .map(drop)
        .map_err(|e| e.to_string())
}
