use std::path::Path;

use super::config::ExperimentConfig;
use super::{csv_err, csv_writer, fmt, CONFIG_ECHO};
use crate::error::{Error, Result};

/// Visit counts restricted to the regions with non-negligible `θ★` mass.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatHistogram {
    /// 1-based regions with `θ★(i) > mass_floor`.
    pub covered: Vec<usize>,
    pub counts: Vec<u64>,
    /// `max/min` of the covered counts; infinite when some covered region was never visited.
    pub max_min_ratio: f64,
    /// Coefficient of variation of the covered counts.
    pub cv: f64,
}

pub fn flat_histogram_report(visits: &[u64], theta_star: &[f64], mass_floor: f64) -> Result<FlatHistogram> {
    if visits.len() != theta_star.len() {
        return Err(Error::InvalidInput("visits and θ★ lengths differ".into()));
    }
    let covered: Vec<usize> = (0..visits.len())
        .filter(|&i| theta_star[i] > mass_floor)
        .map(|i| i + 1)
        .collect();
    if covered.is_empty() {
        return Err(Error::InvalidInput(format!("no region has θ★ above {mass_floor}")));
    }
    let counts: Vec<u64> = covered.iter().map(|&i| visits[i - 1]).collect();
    let max = *counts.iter().max().expect("nonempty") as f64;
    let min = *counts.iter().min().expect("nonempty") as f64;
    let max_min_ratio = if min > 0.0 {
        max / min
    } else if max == 0.0 {
        1.0
    } else {
        f64::INFINITY
    };
    let n = counts.len() as f64;
    let mean = counts.iter().sum::<u64>() as f64 / n;
    let var = counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / n;
    let cv = if mean > 0.0 { var.sqrt() / mean } else { 0.0 };
    Ok(FlatHistogram {
        covered,
        counts,
        max_min_ratio,
        cv,
    })
}

fn read_visits(path: &Path) -> Result<(Vec<u64>, Vec<f64>)> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let bad = |m: &str| Error::InvalidInput(format!("{}: {m}", path.display()));
    let headers = r.headers().map_err(csv_err)?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name).ok_or_else(|| bad(&format!("missing column `{name}`")));
    let (vc, tc) = (col("visits")?, col("theta_star")?);
    let mut visits = Vec::new();
    let mut star = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        visits.push(rec[vc].parse().map_err(|_| bad("bad visit count"))?);
        star.push(
            rec[tc]
                .parse()
                .map_err(|_| bad("no θ★ column values; the run target has no quadrature oracle"))?,
        );
    }
    Ok((visits, star))
}

/// Reads the config echo and every `visits_seed{S}.csv` in `run_dir`, writes `flat_hist.csv`
/// with one row per seed plus a pooled row, and returns the reports in the same order.
pub fn flat_histogram_dir(run_dir: &Path) -> Result<Vec<(String, FlatHistogram)>> {
    let cfg = ExperimentConfig::from_file(&run_dir.join(CONFIG_ECHO))?;
    let floor = cfg.flat.mass_floor;
    let mut out = Vec::new();
    let mut pooled: Option<(Vec<u64>, Vec<f64>)> = None;
    for seed in &cfg.run.seeds {
        let (visits, star) = read_visits(&run_dir.join(format!("visits_seed{seed}.csv")))?;
        out.push((seed.to_string(), flat_histogram_report(&visits, &star, floor)?));
        match pooled.as_mut() {
            Some((pv, _)) => pv.iter_mut().zip(&visits).for_each(|(a, b)| *a += b),
            None => pooled = Some((visits, star)),
        }
    }
    let (pv, ps) = pooled.expect("config has at least one seed");
    out.push(("pooled".into(), flat_histogram_report(&pv, &ps, floor)?));

    let mut w = csv_writer(
        &run_dir.join("flat_hist.csv"),
        &["seed", "covered_regions", "min_visits", "max_visits", "max_min_ratio", "cv"].map(String::from),
    )?;
    for (name, h) in &out {
        w.write_record([
            name.clone(),
            h.covered.len().to_string(),
            h.counts.iter().min().expect("nonempty").to_string(),
            h.counts.iter().max().expect("nonempty").to_string(),
            fmt(h.max_min_ratio),
            fmt(h.cv),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(out)
}
