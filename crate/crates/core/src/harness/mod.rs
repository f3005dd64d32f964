//! Experiment orchestration: configuration, seeded multi-chain runs, the estimator
//! comparison, oracle reports and flat-histogram summaries. Every output is a CSV file
//! with a one-line header, written next to a `config.txt` echo of the resolved config.

mod compare;
pub mod config;
mod flat;
mod oracle_report;
mod run;

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

pub use compare::{compare, compare_checkpoints, CompareSummary, MethodCurve};
pub use config::{ExperimentConfig, RawConfig};
pub use flat::{flat_histogram_dir, flat_histogram_report, FlatHistogram};
pub use oracle_report::{oracle_report, OracleSummary};
pub use run::{run, simulate, RunSummary, SeedReport};

use crate::error::Result;
use crate::theta::ThetaEstimate;

pub const CONFIG_ECHO: &str = "config.txt";

type CsvOut = csv::Writer<BufWriter<File>>;

fn csv_writer(path: &Path, header: &[String]) -> Result<CsvOut> {
    let file = File::create(path)?;
    let mut w = csv::WriterBuilder::new().from_writer(BufWriter::new(file));
    w.write_record(header).map_err(csv_err)?;
    Ok(w)
}

fn csv_err(e: csv::Error) -> crate::error::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => io.into(),
        other => crate::error::Error::InvalidInput(format!("csv: {other:?}")),
    }
}

fn write_echo(dir: &Path, cfg: &ExperimentConfig) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(CONFIG_ECHO), cfg.raw.echo())?;
    Ok(())
}

/// Shortest representation that parses back to the same `f64`.
fn fmt(v: f64) -> String {
    format!("{v}")
}

fn fmt_opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// FNV-1a over the bit patterns of `θ`, as 16 hex digits.
pub fn theta_hash(theta: &[f64]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in theta {
        for b in v.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    format!("{h:016x}")
}

/// Indices (0-based) of the fewest regions whose `θ★` mass reaches `fraction`.
pub fn top_mass_regions(theta_star: &ThetaEstimate<f64>, fraction: f64) -> Vec<usize> {
    let v = theta_star.values();
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|a, b| v[*b].total_cmp(&v[*a]).then(a.cmp(b)));
    let mut acc = 0.0;
    let mut out = Vec::new();
    for i in idx {
        out.push(i);
        acc += v[i];
        if acc >= fraction {
            break;
        }
    }
    out.sort_unstable();
    out
}

/// `Σ_{i ∈ regions} |a(i) - b(i)|`.
pub fn l1_on(a: &ThetaEstimate<f64>, b: &ThetaEstimate<f64>, regions: &[usize]) -> f64 {
    regions.iter().map(|&i| (a.values()[i] - b.values()[i]).abs()).sum()
}
