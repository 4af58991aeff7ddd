use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sbr_core::data::{CountScope, Dataset, Fraction};
use sbr_core::gradcheck::{check_all_ops, check_model, tiny_model, MODEL_TOLERANCE};
use sbr_core::ModelConfig;

use sbr::config::{Overrides, RunConfig};
use sbr::error::{Error, Result};
use sbr::evaluate::{emit_plot_data, evaluate_files, report, write_report, PlotRow};
use sbr::preprocess::{preprocess_file, PreprocessOptions};
use sbr::train::REPORT_FILE;
use sbr::{ablate, store, train};

#[derive(Parser)]
#[command(name = "sbr", version, about = "Session-based next-item recommendation (TAGNN++)")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sessionize, filter and split a raw click log.
    Preprocess {
        #[arg(long, value_parser = parse_dataset)]
        dataset: Dataset,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Keep this most recent fraction of the training sessions, e.g. 1/64.
        #[arg(long, value_parser = parse_fraction)]
        fraction: Option<Fraction>,
        /// Length of the test window in days.
        #[arg(long)]
        test_days: Option<i64>,
        /// Count item frequencies on training sessions only.
        #[arg(long)]
        count_train_only: bool,
        /// Output file stem; defaults to the dataset name plus fraction.
        #[arg(long)]
        name: Option<String>,
    },
    /// Train a model in a fresh run directory.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        max_epochs: Option<usize>,
        #[arg(long)]
        no_agc: bool,
        #[arg(long)]
        no_gnn: bool,
        #[arg(long)]
        no_pe: bool,
        #[arg(long)]
        no_transformer: bool,
        /// Write the session graphs of the first batch as JSON.
        #[arg(long)]
        dump_graphs: bool,
    },
    /// Score a checkpoint on the test split of a sessions file.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 20)]
        n: usize,
        /// Directory for report.json and scatter.csv (default: next to
        /// the checkpoint).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the full model and the four single-component removals.
    Ablate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Finite-difference check of every operation and the tiny model.
    Gradcheck {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn parse_dataset(s: &str) -> std::result::Result<Dataset, String> {
    s.parse::<Dataset>().map_err(|e| e.to_string())
}

fn parse_fraction(s: &str) -> std::result::Result<Fraction, String> {
    s.parse::<Fraction>().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Preprocess {
            dataset,
            input,
            out,
            fraction,
            test_days,
            count_train_only,
            name,
        } => {
            let mut opts = PreprocessOptions::new(dataset).with_fraction(fraction)?;
            if let Some(days) = test_days {
                opts.split.test_days = days;
            }
            if count_train_only {
                opts.count_scope = CountScope::TrainOnly;
            }
            preprocess(&input, &out, &opts, name)
        }
        Command::Train {
            config,
            seed,
            max_epochs,
            no_agc,
            no_gnn,
            no_pe,
            no_transformer,
            dump_graphs,
        } => {
            let overrides = Overrides {
                seed,
                max_epochs,
                no_agc,
                no_gnn,
                no_pe,
                no_transformer,
            };
            let cfg = RunConfig::load(&config, &overrides)?;
            let (dir, scored) = train::run(&cfg, dump_graphs)?;
            let r = report(&scored, 20);
            println!("run directory: {}", dir.display());
            println!("test HR@20 {:.2}  MRR@20 {:.2}  ({} examples)", r.hr, r.mrr, r.example_count);
            Ok(())
        }
        Command::Evaluate {
            checkpoint,
            data,
            n,
            out,
        } => evaluate(&checkpoint, &data, n, out),
        Command::Ablate { config } => {
            let cfg = RunConfig::load(&config, &Overrides::default())?;
            let (dir, rows) = ablate::run(&cfg)?;
            println!("{:<16}{:>8}{:>8}{:>8}", "variant", "HR@20", "MRR@20", "HR@1");
            for r in &rows {
                println!("{:<16}{:>8.2}{:>8.2}{:>8.2}", r.variant, r.hr20, r.mrr20, r.hr1);
            }
            println!("written to {}", dir.join(ablate::ABLATION_FILE).display());
            Ok(())
        }
        Command::Gradcheck { seed } => gradcheck(seed),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

/// `SBR_THREADS` caps the worker pool.
fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("SBR_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Usage(format!("SBR_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Usage(e.to_string()))
}

fn preprocess(input: &Path, out: &Path, opts: &PreprocessOptions, name: Option<String>) -> Result<()> {
    if !input.is_file() {
        return Err(Error::Usage(format!("input file {} does not exist", input.display())));
    }
    let (data, stats) = preprocess_file(input, opts)?;
    fs::create_dir_all(out).map_err(Error::io(&out))?;
    let name = name.unwrap_or_else(|| opts.default_name());
    let bin = out.join(format!("{name}.sessions.bin"));
    store::write(&bin, &data)?;
    let json_path = out.join(format!("{name}.stats.json"));
    let mut json = serde_json::to_string_pretty(&stats)?;
    json.push('\n');
    fs::write(&json_path, json).map_err(Error::io(&json_path))?;
    println!("{stats}");
    println!("wrote {} and {}", bin.display(), json_path.display());
    Ok(())
}

fn variant_name(model: &ModelConfig) -> String {
    let mut name = String::from("TAGNN++");
    for (on, part) in [
        (model.use_gnn, "GNN"),
        (model.use_pe, "PE"),
        (model.use_transformer, "Transformer"),
    ] {
        if !on {
            name.push_str(&format!(" - {part}"));
        }
    }
    name
}

fn evaluate(ckpt_path: &Path, data: &Path, n: usize, out: Option<PathBuf>) -> Result<()> {
    if n == 0 {
        return Err(Error::Usage("--n must be positive".into()));
    }
    let ev = evaluate_files(ckpt_path, data)?;
    let r = report(&ev.scored, n);
    let at20 = report(&ev.scored, 20);
    let out = out.unwrap_or_else(|| ckpt_path.parent().map(Path::to_path_buf).unwrap_or_default());
    fs::create_dir_all(&out).map_err(Error::io(&out))?;
    write_report(&out.join(REPORT_FILE), &r)?;
    let row = PlotRow {
        model: variant_name(&ev.header.model),
        dataset: ev.dataset.to_string(),
        hr20: at20.hr,
        mrr20: at20.mrr,
    };
    let scatter = out.join(ablate::SCATTER_FILE);
    fs::write(&scatter, emit_plot_data(&[row])?).map_err(Error::io(&scatter))?;
    println!("HR@{n} {:.2}  MRR@{n} {:.2}  ({} examples)", r.hr, r.mrr, r.example_count);
    for b in &r.buckets {
        println!("  {:<8} HR@{n} {:.2}  MRR@{n} {:.2}  ({} examples)", b.bucket, b.hr, b.mrr, b.example_count);
    }
    Ok(())
}

fn gradcheck(seed: u64) -> Result<()> {
    let mut failed = 0;
    for (name, r) in check_all_ops(seed)? {
        println!("{:<28} {} max rel err {:.2e}", name, verdict(r.passed()), r.max_rel_error);
        failed += usize::from(!r.passed());
    }
    let (full, batch) = tiny_model(seed)?;
    let variants = [
        ("model", full.config().clone()),
        ("model -GNN", ModelConfig { use_gnn: false, ..full.config().clone() }),
        ("model -PE", ModelConfig { use_pe: false, ..full.config().clone() }),
        ("model -Transformer", ModelConfig { use_transformer: false, ..full.config().clone() }),
    ];
    for (name, cfg) in variants {
        let model = sbr_core::Model::from_params(cfg, full.params().clone())?;
        let r = check_model(&model, &batch, MODEL_TOLERANCE)?;
        println!(
            "{:<28} {} max rel err {:.2e} over {} entries",
            name,
            verdict(r.passed()),
            r.max_rel_error,
            r.checked
        );
        failed += usize::from(!r.passed());
    }
    if failed > 0 {
        return Err(Error::Failed(format!("{failed} gradient checks failed")));
    }
    println!("all gradient checks passed");
    Ok(())
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "ok  "
    } else {
        "FAIL"
    }
}
