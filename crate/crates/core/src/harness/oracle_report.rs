use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ExperimentConfig;
use super::{csv_err, csv_writer, fmt, fmt_opt, write_echo};
use crate::error::{Error, Result};
use crate::estimators::z_theta_star;
use crate::oracle::{self, FlattenedDensity, MeanFieldRoot, StabilityReport};
use crate::target::TargetKind;
use crate::theta::ThetaEstimate;

const ROOT_TOLERANCE: f64 = 1e-10;
const ROOT_MAX_ITERATIONS: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSummary {
    pub theta_star: ThetaEstimate<f64>,
    /// Zero of the mean field under the configured flattening.
    pub root: MeanFieldRoot,
    /// `ϖ_Ψθ★(X_i)`.
    pub flattened_masses: Vec<f64>,
    pub modes: (f64, f64),
    /// Barrier of `U` between the two modes.
    pub original_barrier: f64,
    /// Barrier of `-τ·log ϖ_Ψθ★`.
    pub flattened_barrier: f64,
    /// Same, with `θ` at the mean-field root.
    pub flattened_barrier_root: f64,
    pub z_theta_star: f64,
    pub stability: StabilityReport,
}

fn modes(cfg: &ExperimentConfig) -> Result<(f64, f64)> {
    if let Some(m) = cfg.oracle.barrier_modes {
        return Ok(m);
    }
    let t = cfg.target_spec()?;
    let TargetKind::GaussianMixture(mix) = &t.kind else {
        return Err(Error::InvalidConfig("barrier modes need a mixture target".into()));
    };
    let means = mix.components().iter().map(|c| c.mean[0]);
    let lo = means.clone().fold(f64::INFINITY, f64::min);
    let hi = means.fold(f64::NEG_INFINITY, f64::max);
    if !(lo < hi) {
        return Err(Error::InvalidConfig("barrier needs two distinct component means".into()));
    }
    Ok((lo, hi))
}

/// Quadrature ground truth for the configured target: `θ★`, the mean-field root, flattened
/// densities, energy barriers and the stability check. Writes `theta_star.csv`,
/// `flattened.csv`, `stability.csv`, `oracle_summary.csv` and the config echo.
pub fn oracle_report(cfg: &ExperimentConfig) -> Result<OracleSummary> {
    if !cfg.oracle_applies() {
        return Err(Error::InvalidConfig(
            "the oracle needs a one-dimensional gaussian-mixture target".into(),
        ));
    }
    let target = cfg.target_spec()?;
    let p = cfg.energy_partition()?;
    let grid = cfg.quadrature_grid(&target)?;
    let zeta = cfg.kernel.zeta;
    let mode = cfg.oracle.flattening;

    let star = oracle::theta_star(&target, &p, &grid)?;
    let root = oracle::mean_field_root(&target, &p, zeta, &grid, mode, ROOT_TOLERANCE, ROOT_MAX_ITERATIONS)?;
    let masses = oracle::flattened_region_masses(&target, &p, &star, zeta, &grid, mode)?;
    let original = oracle::flattened_density(&target, &p, &star, 0.0, &grid, mode)?;
    let flat = oracle::flattened_density(&target, &p, &star, zeta, &grid, mode)?;
    let flat_root = oracle::flattened_density(&target, &p, &root.theta, zeta, &grid, mode)?;
    let (left, right) = modes(cfg)?;
    let radius = cfg.oracle.barrier_radius;
    let barrier = |d: &FlattenedDensity| oracle::energy_barrier(&d.x, &d.energy, left, right, radius);

    let sp = cfg.stability_partition()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.oracle.stability_seed);
    let stability = oracle::stability_check(&target, &sp, zeta, &grid, cfg.oracle.stability_trials, mode, &mut rng)?;

    let summary = OracleSummary {
        z_theta_star: z_theta_star(&star, zeta),
        original_barrier: barrier(&original)?,
        flattened_barrier: barrier(&flat)?,
        flattened_barrier_root: barrier(&flat_root)?,
        modes: (left, right),
        theta_star: star,
        root,
        flattened_masses: masses,
        stability,
    };

    let dir = &cfg.run.output_dir;
    write_echo(dir, cfg)?;

    let mut w = csv_writer(
        &dir.join("theta_star.csv"),
        &["region", "lower", "upper", "theta_star", "theta_root", "flattened_mass"].map(String::from),
    )?;
    for i in 1..=p.regions() {
        w.write_record([
            i.to_string(),
            fmt(p.boundary(i - 1)),
            fmt(p.boundary(i)),
            fmt(summary.theta_star.get(i)),
            fmt(summary.root.theta.get(i)),
            fmt(summary.flattened_masses[i - 1]),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;

    let mut w = csv_writer(
        &dir.join("flattened.csv"),
        &["x", "density", "energy", "flattened_density", "flattened_energy", "root_flattened_energy"].map(String::from),
    )?;
    for i in (0..original.x.len()).step_by(cfg.oracle.output_stride) {
        w.write_record([
            fmt(original.x[i]),
            fmt(original.density[i]),
            fmt(original.energy[i]),
            fmt(flat.density[i]),
            fmt(flat.energy[i]),
            fmt(flat_root.energy[i]),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;

    let mut w = csv_writer(&dir.join("stability.csv"), &["trial", "inner_product", "ratio"].map(String::from))?;
    let st = &summary.stability;
    for (i, (s, r)) in st.inner_products.iter().zip(&st.ratios).enumerate() {
        w.write_record([(i + 1).to_string(), fmt(*s), fmt_opt(*r)]).map_err(csv_err)?;
    }
    w.flush()?;

    let mut w = csv_writer(&dir.join("oracle_summary.csv"), &["quantity", "value"].map(String::from))?;
    let rows: [(&str, String); 13] = [
        ("regions", p.regions().to_string()),
        ("zeta", fmt(zeta)),
        ("mode_left", fmt(left)),
        ("mode_right", fmt(right)),
        ("original_barrier", fmt(summary.original_barrier)),
        ("flattened_barrier", fmt(summary.flattened_barrier)),
        ("flattened_barrier_root", fmt(summary.flattened_barrier_root)),
        ("z_theta_star", fmt(summary.z_theta_star)),
        ("root_iterations", summary.root.iterations.to_string()),
        ("root_residual", fmt(summary.root.residual)),
        ("root_l1_to_theta_star", fmt(summary.root.theta.l1_distance(&summary.theta_star))),
        ("stability_max_ratio", fmt(st.max_ratio)),
        ("stability_negative_fraction", fmt(st.negative_fraction)),
    ];
    for (k, v) in rows {
        w.write_record([k.to_string(), v]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_on_small_grid() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::from_text(&format!(
            "oracle.points = 20001\noracle.stability_trials = 5\noracle.output_stride = 100\nrun.output_dir = {}\n",
            dir.path().display()
        ))
        .unwrap();
        let s = oracle_report(&cfg).unwrap();
        assert_eq!(s.modes, (-6.0, 4.0));
        assert!((s.original_barrier - 12.0).abs() < 1.0, "{}", s.original_barrier);
        assert!(s.flattened_barrier < s.original_barrier);
        assert!((s.flattened_masses.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for f in ["theta_star.csv", "flattened.csv", "stability.csv", "oracle_summary.csv", "config.txt"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let flat = std::fs::read_to_string(dir.path().join("flattened.csv")).unwrap();
        assert_eq!(flat.lines().count(), 1 + 201);
    }

    #[test]
    fn regression_target_rejected() {
        let cfg = ExperimentConfig::from_text(
            "target.kind = subsampled-regression\ntarget.dimension = 2\nrun.x0 = 0, 0\n",
        )
        .unwrap();
        assert!(matches!(oracle_report(&cfg), Err(Error::InvalidConfig(_))));
    }
}
