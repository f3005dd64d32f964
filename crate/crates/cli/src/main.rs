use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use csgld::harness::{self, ExperimentConfig};

/// Contour stochastic gradient Langevin dynamics experiments.
#[derive(Parser)]
#[command(name = "csgld", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Replace `run.seeds`, e.g. `7` or `0..3`.
    #[arg(long, global = true, value_name = "SEEDS")]
    seed_override: Option<String>,

    /// Replace `run.steps`.
    #[arg(long, global = true, value_name = "STEPS")]
    steps_override: Option<u64>,

    /// Replace `run.output_dir`.
    #[arg(long, global = true, value_name = "DIR")]
    output_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one chain per seed with the configured kernel.
    Run { config: PathBuf },
    /// Run every method in `compare.methods` on common seeds and track estimator error.
    Compare { config: PathBuf },
    /// Quadrature ground truth: θ★, flattened densities, barriers, stability check.
    Oracle { config: PathBuf },
    /// Flat-histogram diagnostic over the visit counts of a finished run.
    FlatHist { run_dir: PathBuf },
}

impl Cli {
    fn load(&self, path: &Path) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::from_file(path).with_context(|| format!("reading {}", path.display()))?;
        if let Some(s) = &self.seed_override {
            cfg = cfg.with_value("run.seeds", s)?;
        }
        if let Some(n) = self.steps_override {
            cfg = cfg.with_steps(n)?;
        }
        if let Some(d) = &self.output_dir {
            cfg = cfg.with_output_dir(d)?;
        }
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Run { config } => {
            let cfg = cli.load(config)?;
            let summary = harness::run(&cfg)?;
            let errors = summary.weighted_errors();
            for (s, err) in summary.seeds.iter().zip(errors) {
                match s.diverged_at {
                    Some(step) => println!("seed {}: diverged at step {step}", s.seed),
                    None => println!(
                        "seed {}: {} steps, weighted estimate {}, error {}",
                        s.seed,
                        s.steps,
                        s.weighted_estimate.as_ref().map_or("-".into(), |v| format!("{:.5}", v[0])),
                        err.map_or("-".into(), |e| format!("{e:.5}")),
                    ),
                }
            }
            println!("outputs in {}", cfg.run.output_dir.display());
            if summary.any_diverged() {
                eprintln!("error: at least one chain diverged");
                return Ok(ExitCode::from(2));
            }
        }
        Command::Compare { config } => {
            let cfg = cli.load(config)?;
            let s = harness::compare(&cfg)?;
            let last = s.checkpoints.len() - 1;
            for c in &s.curves {
                let mean = c.mean_error(last).map_or("-".into(), |e| format!("{e:.5}"));
                println!("{}: mean error {mean} at step {}", c.kind.name(), s.checkpoints[last]);
            }
            println!("outputs in {}", cfg.run.output_dir.display());
            if s.curves.iter().flat_map(|c| &c.reports).any(|r| r.diverged_at.is_some()) {
                eprintln!("error: at least one chain diverged");
                return Ok(ExitCode::from(2));
            }
        }
        Command::Oracle { config } => {
            let cfg = cli.load(config)?;
            let s = harness::oracle_report(&cfg)?;
            println!("original barrier {:.4}", s.original_barrier);
            println!("flattened barrier {:.4}", s.flattened_barrier);
            println!(
                "mean-field root: {} iterations, residual {:.3e}",
                s.root.iterations, s.root.residual
            );
            println!(
                "stability: max ratio {:.4}, negative fraction {}",
                s.stability.max_ratio, s.stability.negative_fraction
            );
            println!("outputs in {}", cfg.run.output_dir.display());
        }
        Command::FlatHist { run_dir } => {
            for (name, h) in harness::flat_histogram_dir(run_dir)? {
                println!(
                    "{name}: {} covered regions, max/min {:.4}, cv {:.4}",
                    h.covered.len(),
                    h.max_min_ratio,
                    h.cv
                );
            }
            println!("wrote {}", run_dir.join("flat_hist.csv").display());
        }
    }
    Ok(ExitCode::SUCCESS)
}
