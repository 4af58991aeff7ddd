//! The five-row ablation sweep: the full model and one run per removed
//! component.

use std::fs;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::evaluate::{emit_plot_data, report, PlotRow};
use crate::train;

pub const ABLATION_FILE: &str = "ablation.csv";
pub const SCATTER_FILE: &str = "scatter.csv";

/// Names and configurations of the sweep, in reporting order. The base
/// must have every component switched on.
pub fn variants(base: &RunConfig) -> Result<Vec<(&'static str, RunConfig)>> {
    let mut off = Vec::new();
    for (name, on) in [
        ("agc_enabled", base.train.agc_enabled),
        ("use_gnn", base.model.use_gnn),
        ("use_pe", base.model.use_pe),
        ("use_transformer", base.model.use_transformer),
    ] {
        if !on {
            off.push(format!("{name}: must be true in the base config of an ablation"));
        }
    }
    if !off.is_empty() {
        return Err(Error::Config(off));
    }
    let with = |f: fn(&mut RunConfig)| {
        let mut c = base.clone();
        f(&mut c);
        c
    };
    Ok(vec![
        ("TAGNN++", base.clone()),
        ("- AGC", with(|c| c.train.agc_enabled = false)),
        ("- GNN", with(|c| c.model.use_gnn = false)),
        ("- PE", with(|c| c.model.use_pe = false)),
        ("- Transformer", with(|c| c.model.use_transformer = false)),
    ])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub agc_enabled: bool,
    pub use_gnn: bool,
    pub use_pe: bool,
    pub use_transformer: bool,
    pub hr20: f64,
    pub mrr20: f64,
    pub hr1: f64,
    pub examples: u64,
    pub run_dir: String,
}

/// Trains every variant in turn, then writes `ablation.csv` and
/// `scatter.csv` into `<out>/ablation-<config hash>`.
pub fn run(base: &RunConfig) -> Result<(PathBuf, Vec<AblationRow>)> {
    let variants = variants(base)?;
    fs::create_dir_all(&base.out).map_err(Error::io(&base.out))?;
    let dir = base.out.join(format!("ablation-{}", &base.hash()?[..12]));
    train::create_fresh_dir(&dir)?;
    let mut rows = Vec::new();
    for (name, cfg) in variants {
        let (run_dir, scored) = train::run(&cfg, false)?;
        let at20 = report(&scored, 20);
        let at1 = report(&scored, 1);
        rows.push(AblationRow {
            variant: name.to_owned(),
            agc_enabled: cfg.train.agc_enabled,
            use_gnn: cfg.model.use_gnn,
            use_pe: cfg.model.use_pe,
            use_transformer: cfg.model.use_transformer,
            hr20: at20.hr,
            mrr20: at20.mrr,
            hr1: at1.hr,
            examples: at20.example_count,
            run_dir: run_dir.display().to_string(),
        });
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r)?;
    }
    let table = w.into_inner().map_err(|e| Error::config(e.to_string()))?;
    let path = dir.join(ABLATION_FILE);
    fs::write(&path, table).map_err(Error::io(&path))?;
    let plot: Vec<PlotRow> = rows
        .iter()
        .map(|r| PlotRow {
            model: r.variant.clone(),
            dataset: base.dataset.to_string(),
            hr20: r.hr20,
            mrr20: r.mrr20,
        })
        .collect();
    let path = dir.join(SCATTER_FILE);
    fs::write(&path, emit_plot_data(&plot)?).map_err(Error::io(&path))?;
    Ok((dir, rows))
}
