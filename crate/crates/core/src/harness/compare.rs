use std::path::Path;

use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::run::{drive_chain, error_norm, plan_for, prepare, ChainOutputs, SeedReport, Snapshot};
use super::{csv_err, csv_writer, fmt, fmt_opt, write_echo};
use crate::dynamics::KernelKind;
use crate::error::{Error, Result};

/// Error curve of one method across seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodCurve {
    pub kind: KernelKind,
    /// `errors[c][s]`: estimator error at checkpoint `c` for seed `s`; `None` after a divergence.
    pub errors: Vec<Vec<Option<f64>>>,
    pub reports: Vec<SeedReport>,
}

impl MethodCurve {
    /// Mean over the seeds that reached checkpoint `c`.
    pub fn mean_error(&self, c: usize) -> Option<f64> {
        let v: Vec<f64> = self.errors[c].iter().flatten().copied().collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Final weighted-estimator errors per seed.
    pub fn final_errors(&self, reference: &[f64]) -> Vec<Option<f64>> {
        self.reports
            .iter()
            .map(|r| error_norm(r.weighted_estimate.as_deref(), Some(reference)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareSummary {
    pub checkpoints: Vec<u64>,
    pub seeds: Vec<u64>,
    pub reference_mean: Vec<f64>,
    pub curves: Vec<MethodCurve>,
}

impl CompareSummary {
    pub fn curve(&self, kind: KernelKind) -> Option<&MethodCurve> {
        self.curves.iter().find(|c| c.kind == kind)
    }
}

/// `count` log-spaced steps from `first` to `last` inclusive, rounded and deduplicated.
pub fn compare_checkpoints(first: u64, last: u64, count: usize) -> Vec<u64> {
    if first >= last || count <= 1 {
        return vec![last];
    }
    let (a, b) = ((first as f64).ln(), (last as f64).ln());
    let mut out: Vec<u64> = (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp().round() as u64)
        .map(|c| c.clamp(first, last))
        .collect();
    *out.last_mut().expect("count > 1") = last;
    out.dedup();
    out
}

/// Windowed weighted estimate over steps `(lo.step, hi.step]`.
fn window_estimate(lo: &Snapshot, hi: &Snapshot) -> Option<Vec<f64>> {
    let w = hi.weight - lo.weight;
    (hi.count > lo.count && w > 0.0)
        .then(|| hi.weighted.iter().zip(&lo.weighted).map(|(a, b)| (a - b) / w).collect())
}

/// Runs every configured method on the same seeds and tracks the weighted-estimator error
/// at log-spaced checkpoints. At checkpoint `c` the estimate uses steps after `⌊burn_in·c⌋`.
/// Writes `compare.csv`, `compare_final.csv` and the config echo to `cfg.run.output_dir`.
pub fn compare(cfg: &ExperimentConfig) -> Result<CompareSummary> {
    let methods = &cfg.compare.methods;
    for (i, m) in methods.iter().enumerate() {
        if methods[..i].contains(m) {
            return Err(Error::InvalidConfig(format!("method `{}` listed twice", m.name())));
        }
    }
    let prep = prepare(cfg, methods)?;
    let reference = prep
        .target
        .reference_mean()
        .ok_or_else(|| Error::InvalidConfig("compare needs a target with a known mean".into()))?;
    let checkpoints = compare_checkpoints(cfg.compare.first_checkpoint, cfg.run.steps, cfg.compare.checkpoints);
    let window_start = |c: u64| (cfg.run.burn_in * c as f64).floor() as u64;
    let mut snaps: Vec<u64> = checkpoints.iter().flat_map(|&c| [window_start(c), c]).collect();
    snaps.sort_unstable();
    snaps.dedup();

    let plans = methods
        .iter()
        .map(|&k| plan_for(cfg, &prep, k))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, u64)> = (0..methods.len())
        .flat_map(|mi| cfg.run.seeds.iter().map(move |&s| (mi, s)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(mi, seed)| {
            let out = ChainOutputs {
                trajectory: None,
                theta: None,
                snapshots: snaps.clone(),
            };
            drive_chain(&plans[mi], seed, out)
        })
        .collect::<Result<Vec<_>>>()?;

    let n_seeds = cfg.run.seeds.len();
    let mut curves = Vec::with_capacity(methods.len());
    let mut it = results.into_iter();
    for &kind in methods {
        let mut errors = vec![Vec::with_capacity(n_seeds); checkpoints.len()];
        let mut reports = Vec::with_capacity(n_seeds);
        for _ in 0..n_seeds {
            let (report, taken) = it.next().expect("one result per job");
            let at = |step: u64| taken.iter().find(|s| s.step == step);
            for (ci, &c) in checkpoints.iter().enumerate() {
                let err = match (at(window_start(c)), at(c)) {
                    (Some(lo), Some(hi)) => error_norm(window_estimate(lo, hi).as_deref(), Some(&reference)),
                    _ => None,
                };
                errors[ci].push(err);
            }
            reports.push(report);
        }
        curves.push(MethodCurve { kind, errors, reports });
    }
    let summary = CompareSummary {
        checkpoints,
        seeds: cfg.run.seeds.clone(),
        reference_mean: reference,
        curves,
    };
    let dir = &cfg.run.output_dir;
    write_echo(dir, cfg)?;
    write_curves(&dir.join("compare.csv"), &summary)?;
    write_final(&dir.join("compare_final.csv"), &summary)?;
    Ok(summary)
}

pub(crate) const COMPARE_HEADER: [&str; 6] =
    ["method", "checkpoint", "mean_abs_error", "min_abs_error", "max_abs_error", "seeds"];

fn write_curves(path: &Path, s: &CompareSummary) -> Result<()> {
    let mut w = csv_writer(path, &COMPARE_HEADER.map(String::from))?;
    for curve in &s.curves {
        for (ci, c) in s.checkpoints.iter().enumerate() {
            let v: Vec<f64> = curve.errors[ci].iter().flatten().copied().collect();
            let min = v.iter().copied().reduce(f64::min);
            let max = v.iter().copied().reduce(f64::max);
            w.write_record([
                curve.kind.name().to_string(),
                c.to_string(),
                fmt_opt(curve.mean_error(ci)),
                fmt_opt(min),
                fmt_opt(max),
                v.len().to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub(crate) const COMPARE_FINAL_HEADER: [&str; 4] = ["seed", "method", "estimate", "abs_error"];

fn write_final(path: &Path, s: &CompareSummary) -> Result<()> {
    let mut w = csv_writer(path, &COMPARE_FINAL_HEADER.map(String::from))?;
    for curve in &s.curves {
        let errs = curve.final_errors(&s.reference_mean);
        for (r, e) in curve.reports.iter().zip(errs) {
            w.write_record([
                r.seed.to_string(),
                curve.kind.name().to_string(),
                fmt_opt(r.weighted_estimate.as_ref().map(|v| fmt(v[0]))),
                fmt_opt(e),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}
