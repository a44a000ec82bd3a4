//! `dynhin`: ingestion, view building, training, evaluation, sweeps and
//! synthetic data from one JSON run config.

mod args;

use std::path::Path;
use std::process::ExitCode;

use clap::Parser;
use dynhin_core::pipeline::{self, SweepAxis};
use dynhin_core::synth::{self, SyntheticSpec};
use dynhin_core::{Error, Result, RunConfig};

use args::{Cli, Command, Overrides};

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_DIVERGENCE: u8 = 4;

fn exit_code(err: &Error) -> u8 {
    match err {
        e if e.is_divergence() => EXIT_DIVERGENCE,
        Error::Invalid(_) | Error::Json(_) | Error::MetaPath { .. } => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

fn load_config(path: &Path, o: &Overrides) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    o.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { config, overrides } => {
            let cfg = load_config(&config, &overrides)?;
            let (_, cache, stats) = pipeline::ingest(&cfg)?;
            print!("{stats}");
            println!("cache: {}", cache.display());
        }
        Command::BuildViews { config, overrides } => {
            let cfg = load_config(&config, &overrides)?;
            let prep = pipeline::prepare(&cfg)?;
            for v in &prep.views {
                let last = v.last();
                println!(
                    "{}\tnodes={}\tsteps={}\tlast={}",
                    v.meta_path(),
                    v.n_nodes(),
                    v.len(),
                    if last.is_dense() { "dense" } else { "sparse" }
                );
            }
        }
        Command::Train {
            config,
            overrides,
            resume,
            emit_plot_data,
        } => {
            let cfg = load_config(&config, &overrides)?;
            let summary = pipeline::run_train(&cfg, resume)?;
            if emit_plot_data {
                pipeline::write_trace_plot(&summary.output_dir, &summary.trace)?;
            }
            match (summary.trace.first(), summary.trace.last()) {
                (Some(first), Some(last)) => println!(
                    "trained {} epochs: L_all {:.6} -> {:.6}, best epoch {}",
                    summary.trace.len(),
                    first.total,
                    last.total,
                    summary.best_epoch
                ),
                _ => println!("no epochs run; checkpoint holds the initialization"),
            }
            println!("output: {}", summary.output_dir.display());
        }
        Command::Evaluate {
            config,
            overrides,
            checkpoint,
            dump_attention,
        } => {
            let cfg = load_config(&config, &overrides)?;
            let report = pipeline::run_evaluate(&cfg, checkpoint.as_deref(), dump_attention)?;
            print!("{}", report.to_table());
        }
        Command::Sweep {
            config,
            overrides,
            axis,
            values,
            emit_plot_data,
        } => {
            let cfg = load_config(&config, &overrides)?;
            let axis: SweepAxis = axis.parse()?;
            let rows = pipeline::run_sweep(&cfg, axis, &values, emit_plot_data)?;
            for r in rows {
                let metrics: Vec<String> = r.metrics.iter().map(|(k, v)| format!("{k}={v:.4}")).collect();
                println!("{axis}={}\t{}", r.value, metrics.join("\t"));
            }
        }
        Command::Synth { out, spec, seed } => {
            let mut s = match spec {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| Error::Io { path: p.clone(), source: e })?;
                    serde_json::from_str::<SyntheticSpec>(&text)?
                }
                None => SyntheticSpec::default(),
            };
            if let Some(seed) = seed {
                s.seed = seed;
            }
            s.generate()?.write_to(&out)?;
            let spec_path = out.join("spec.json");
            let json = serde_json::to_string_pretty(&s)?;
            std::fs::write(&spec_path, json).map_err(|e| Error::Io { path: spec_path, source: e })?;
            println!("informative views: {} {}", synth::INFORMATIVE_VIEW, synth::ITEM_INFORMATIVE_VIEW);
            println!("noise views: {} {}", synth::NOISE_VIEW, synth::ITEM_NOISE_VIEW);
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(cli.log_level.as_str())).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
