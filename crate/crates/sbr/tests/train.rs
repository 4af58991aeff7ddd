use std::fs;
use std::path::Path;

use sbr::config::{Overrides, RunConfig};
use sbr::synthetic::{markov_corpus, MarkovSpec};
use sbr::train::{self, split_examples, Output};
use sbr::{store, Error};
use sbr_core::data::expand_all;
use tempfile::TempDir;

fn setup(dir: &Path, extra: &str) -> (RunConfig, sbr::preprocess::Preprocessed) {
    let data = markov_corpus(&MarkovSpec::default()).unwrap();
    store::write(&dir.join("m.sessions.bin"), &data).unwrap();
    let text = format!("data = m.sessions.bin\nout = runs\nd = 16\nheads = 2\ndecay_factor = 1\n{extra}");
    let cfg = RunConfig::resolve(&text, dir, &Overrides::default()).unwrap();
    (cfg, data)
}

#[test]
fn smoothed_loss_falls_over_fifty_epochs() {
    let dir = TempDir::new().unwrap();
    let (cfg, data) = setup(dir.path(), "epochs = 50\nval_fraction = 0\n");
    let trained = train::train::<f32>(&cfg, &data, Output::default()).unwrap();
    let losses: Vec<f64> = trained.history.iter().map(|m| m.train_loss).collect();
    assert_eq!(losses.len(), 50);
    let smoothed: Vec<f64> = losses.windows(5).map(|w| w.iter().sum::<f64>() / 5.0).collect();
    for pair in smoothed.windows(2) {
        assert!(pair[1] < pair[0], "{smoothed:?}");
    }
    assert!(trained.history.iter().all(|m| m.val_loss.is_none() && m.val_hr20.is_none()));
}

#[test]
fn validation_split_takes_the_floor() {
    let data = markov_corpus(&MarkovSpec::default()).unwrap();
    let total = expand_all(&data.train).len();
    let (train_ex, val) = split_examples(&data, 0.1, 3);
    assert_eq!(val.len(), total / 10);
    assert_eq!(train_ex.len() + val.len(), total);
    let (again, _) = split_examples(&data, 0.1, 3);
    assert_eq!(train_ex, again);
    let (_, none) = split_examples(&data, 0.0, 3);
    assert!(none.is_empty());
}

#[test]
fn resolved_text_reloads_to_the_same_config() {
    let dir = TempDir::new().unwrap();
    let (cfg, _) = setup(dir.path(), "seed = 9\nweighted_edges = true\nprecision = \"f64\"\n");
    let text = cfg.to_text().unwrap();
    let back = RunConfig::resolve(&text, Path::new("/elsewhere"), &Overrides::default()).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.hash().unwrap(), cfg.hash().unwrap());
}

#[test]
fn overrides_win_over_the_file() {
    let dir = TempDir::new().unwrap();
    let (file_cfg, _) = setup(dir.path(), "seed = 9\nepochs = 8\n");
    let o = Overrides {
        seed: Some(4),
        max_epochs: Some(2),
        no_pe: true,
        ..Overrides::default()
    };
    let cfg = RunConfig::resolve(&file_cfg.to_text().unwrap(), dir.path(), &o).unwrap();
    assert_eq!((cfg.seed, cfg.train.epochs), (4, 2));
    assert!(!cfg.model.use_pe && cfg.model.use_gnn && cfg.model.use_transformer && cfg.train.agc_enabled);
}

#[test]
fn precisions_agree_on_the_first_epoch() {
    let dir = TempDir::new().unwrap();
    let (cfg, data) = setup(dir.path(), "lr0 = 1e-3\nepochs = 1\nval_fraction = 0.1\n");
    let a = train::train::<f32>(&cfg, &data, Output::default()).unwrap().history;
    let b = train::train::<f64>(&cfg, &data, Output::default()).unwrap().history;
    let rel = (a[0].train_loss - b[0].train_loss).abs() / b[0].train_loss;
    assert!(rel < 1e-4, "{} vs {}", a[0].train_loss, b[0].train_loss);
    assert!(a[0].val_loss.is_some());
}

#[test]
fn divergence_stops_with_a_dump() {
    let dir = TempDir::new().unwrap();
    let (cfg, data) = setup(dir.path(), "lr0 = 1e30\nepochs = 3\nval_fraction = 0\nagc_enabled = false\n");
    let out_dir = dir.path().join("run");
    fs::create_dir(&out_dir).unwrap();
    let out = Output {
        dir: Some(&out_dir),
        dump_graphs: false,
    };
    let err = train::train::<f32>(&cfg, &data, out).unwrap_err();
    let Error::Diverged { epoch, batch, .. } = &err else {
        panic!("expected divergence, got {err}");
    };
    let dump = out_dir.join(format!("diverged-epoch{epoch}-batch{batch}.json"));
    let json: serde_json::Value = serde_json::from_slice(&fs::read(&dump).unwrap()).unwrap();
    assert_eq!(json["batch"], *batch);
    assert!(!json["examples"].as_array().unwrap().is_empty());
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn vocabulary_mismatch_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let (mut cfg, data) = setup(dir.path(), "epochs = 1\n");
    cfg.model.num_items += 1;
    let err = train::train::<f32>(&cfg, &data, Output::default()).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}
