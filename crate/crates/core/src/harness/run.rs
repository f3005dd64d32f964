use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::{csv_err, csv_writer, fmt, fmt_opt, l1_on, theta_hash, top_mass_regions, write_echo, CsvOut};
use crate::dynamics::{Chain, ChainState, KernelConfig, KernelKind};
use crate::error::{Error, Result};
use crate::estimators::{CompensatedSum, WeightedAccumulator};
use crate::oracle;
use crate::partition::EnergyPartition;
use crate::target::TargetSpec;
use crate::theta::{StepSchedule, ThetaEstimate};

/// Outcome of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedReport {
    pub seed: u64,
    pub kind: KernelKind,
    /// Steps completed; less than the configured count only after a divergence.
    pub steps: u64,
    pub diverged_at: Option<u64>,
    pub theta: ThetaEstimate<f64>,
    pub final_x: Vec<f64>,
    /// Post-burn-in visits per region, by `J̃`.
    pub visits: Vec<u64>,
    /// Post-burn-in samples.
    pub samples: u64,
    /// Weighted-average estimate of the mean, per coordinate.
    pub weighted_estimate: Option<Vec<f64>>,
    pub plain_estimate: Option<Vec<f64>>,
    pub min_multiplier: f64,
    pub first_negative_multiplier_step: Option<u64>,
    /// SA updates in which the positivity floor fired.
    pub clamp_events: u64,
}

/// Result of [`run`] or [`simulate`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub seeds: Vec<SeedReport>,
    pub theta_star: Option<ThetaEstimate<f64>>,
    pub reference_mean: Option<Vec<f64>>,
}

impl RunSummary {
    pub fn any_diverged(&self) -> bool {
        self.seeds.iter().any(|s| s.diverged_at.is_some())
    }

    /// `‖estimate - reference‖₂` per seed for the weighted estimator.
    pub fn weighted_errors(&self) -> Vec<Option<f64>> {
        self.seeds
            .iter()
            .map(|s| error_norm(s.weighted_estimate.as_deref(), self.reference_mean.as_deref()))
            .collect()
    }

    pub fn plain_errors(&self) -> Vec<Option<f64>> {
        self.seeds
            .iter()
            .map(|s| error_norm(s.plain_estimate.as_deref(), self.reference_mean.as_deref()))
            .collect()
    }

    /// L1 distance between the final `θ` and `θ★` over the regions holding 99% of the mass.
    pub fn theta_l1_mass99(&self) -> Vec<Option<f64>> {
        let Some(star) = &self.theta_star else {
            return vec![None; self.seeds.len()];
        };
        let keep = top_mass_regions(star, 0.99);
        self.seeds.iter().map(|s| Some(l1_on(&s.theta, star, &keep))).collect()
    }
}

pub(crate) fn error_norm(est: Option<&[f64]>, reference: Option<&[f64]>) -> Option<f64> {
    let (e, r) = (est?, reference?);
    Some(e.iter().zip(r).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
}

/// Cumulative sums up to `step`, used for windowed estimates.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Snapshot {
    pub step: u64,
    pub weighted: Vec<f64>,
    pub weight: f64,
    pub plain: Vec<f64>,
    pub count: u64,
}

pub(crate) struct ChainPlan<'a> {
    pub target: &'a TargetSpec<f64>,
    pub partition: &'a EnergyPartition<f64>,
    pub kernel: KernelConfig<f64>,
    pub schedule: StepSchedule<f64>,
    pub rho: f64,
    pub theta0: ThetaEstimate<f64>,
    pub x0: Vec<f64>,
    pub steps: u64,
    pub burn_in: u64,
    pub thinning: u64,
    pub theta_thinning: u64,
}

pub(crate) struct ChainOutputs {
    pub trajectory: Option<CsvOut>,
    pub theta: Option<CsvOut>,
    /// Sorted steps at which to record cumulative sums.
    pub snapshots: Vec<u64>,
}

pub(crate) fn trajectory_header(d: usize) -> Vec<String> {
    let mut h = vec!["step".to_string()];
    if d == 1 {
        h.push("x".into());
    } else {
        h.extend((1..=d).map(|i| format!("x{i}")));
    }
    for c in [
        "energy_scaled",
        "j_tilde",
        "multiplier",
        "theta_j",
        "importance_weight",
        "theta_hash",
        "weighted_estimate",
    ] {
        h.push(c.into());
    }
    h
}

pub(crate) fn theta_header(m: usize) -> Vec<String> {
    let mut h = vec!["step".to_string()];
    h.extend((1..=m).map(|i| format!("theta_{i}")));
    h
}

fn theta_row(step: u64, theta: &ThetaEstimate<f64>) -> Vec<String> {
    let mut row = vec![step.to_string()];
    row.extend(theta.values().iter().map(|v| fmt(*v)));
    row
}

pub(crate) fn drive_chain(plan: &ChainPlan<'_>, seed: u64, mut out: ChainOutputs) -> Result<(SeedReport, Vec<Snapshot>)> {
    let d = plan.x0.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let initial = ChainState::for_kernel(plan.x0.clone(), plan.kernel.kind);
    let mut chain = Chain::new(
        plan.target,
        plan.partition,
        plan.kernel,
        plan.schedule,
        plan.rho,
        initial,
        plan.theta0.clone(),
    )?;

    let mut post: Vec<WeightedAccumulator<f64>> = vec![WeightedAccumulator::new(); d];
    let mut post_plain: Vec<CompensatedSum<f64>> = vec![CompensatedSum::new(); d];
    let mut cum: Vec<WeightedAccumulator<f64>> = vec![WeightedAccumulator::new(); d];
    let mut cum_plain: Vec<CompensatedSum<f64>> = vec![CompensatedSum::new(); d];
    let mut cum_count = 0u64;
    let mut snapshots = Vec::with_capacity(out.snapshots.len());
    let mut next_snap = 0usize;
    let mut visits = vec![0u64; plan.partition.regions()];
    let mut samples = 0u64;
    let mut min_multiplier = f64::INFINITY;
    let mut first_negative = None;
    let mut clamp_events = 0u64;
    let mut diverged_at = None;
    let record_cum = !out.snapshots.is_empty();

    if let Some(w) = out.theta.as_mut() {
        w.write_record(theta_row(0, chain.theta())).map_err(csv_err)?;
    }
    // Snapshots requested at step 0 are empty.
    while next_snap < out.snapshots.len() && out.snapshots[next_snap] == 0 {
        snapshots.push(Snapshot {
            step: 0,
            weighted: vec![0.0; d],
            weight: 0.0,
            plain: vec![0.0; d],
            count: 0,
        });
        next_snap += 1;
    }

    for _ in 0..plan.steps {
        let rec = match chain.advance(&mut rng) {
            Ok(r) => r,
            Err(Error::Divergence { step }) => {
                diverged_at = Some(step);
                break;
            }
            Err(e) => return Err(e),
        };
        let k = rec.step;
        if rec.multiplier < min_multiplier {
            min_multiplier = rec.multiplier;
        }
        if first_negative.is_none() && rec.multiplier < 0.0 {
            first_negative = Some(k);
        }
        clamp_events += rec.clamped as u64;
        if k > plan.burn_in {
            samples += 1;
            visits[rec.j_tilde - 1] += 1;
            for (i, xi) in rec.x.iter().enumerate() {
                post[i].accumulate(*xi, rec.importance_weight)?;
                post_plain[i].add(*xi);
            }
        }
        if record_cum {
            cum_count += 1;
            for (i, xi) in rec.x.iter().enumerate() {
                cum[i].accumulate(*xi, rec.importance_weight)?;
                cum_plain[i].add(*xi);
            }
            while next_snap < out.snapshots.len() && out.snapshots[next_snap] == k {
                snapshots.push(Snapshot {
                    step: k,
                    weighted: cum.iter().map(|a| a.weighted_sum()).collect(),
                    weight: cum[0].weight_sum(),
                    plain: cum_plain.iter().map(|s| s.value()).collect(),
                    count: cum_count,
                });
                next_snap += 1;
            }
        }
        if let Some(w) = out.trajectory.as_mut() {
            if k % plan.thinning == 0 {
                let mut row = vec![k.to_string()];
                row.extend(rec.x.iter().map(|v| fmt(*v)));
                row.push(fmt(rec.energy_scaled));
                row.push(rec.j_tilde.to_string());
                row.push(fmt(rec.multiplier));
                row.push(fmt(rec.theta_j));
                row.push(fmt(rec.importance_weight));
                row.push(theta_hash(chain.theta().values()));
                row.push(fmt_opt(post[0].estimate()));
                w.write_record(&row).map_err(csv_err)?;
            }
        }
        if let Some(w) = out.theta.as_mut() {
            if k % plan.theta_thinning == 0 || k == plan.steps {
                w.write_record(theta_row(k, chain.theta())).map_err(csv_err)?;
            }
        }
    }
    for w in [out.trajectory.as_mut(), out.theta.as_mut()].into_iter().flatten() {
        w.flush()?;
    }
    let (state, theta) = chain.into_parts();
    let weighted_estimate = post.iter().map(|a| a.estimate()).collect::<Option<Vec<_>>>();
    let plain_estimate = (samples > 0).then(|| post_plain.iter().map(|s| s.value() / samples as f64).collect());
    let report = SeedReport {
        seed,
        kind: plan.kernel.kind,
        steps: diverged_at.map_or(state.k, |d| d - 1),
        diverged_at,
        theta,
        final_x: state.x,
        visits,
        samples,
        weighted_estimate,
        plain_estimate,
        min_multiplier,
        first_negative_multiplier_step: first_negative,
        clamp_events,
    };
    Ok((report, snapshots))
}

pub(crate) struct Prepared {
    pub target: TargetSpec<f64>,
    pub partition: EnergyPartition<f64>,
    pub schedule: StepSchedule<f64>,
    pub theta_star: Option<ThetaEstimate<f64>>,
}

pub(crate) fn prepare(cfg: &ExperimentConfig, kinds: &[KernelKind]) -> Result<Prepared> {
    let target = cfg.target_spec()?;
    let partition = cfg.energy_partition()?;
    let schedule = cfg.step_schedule()?;
    let theta_star = if cfg.oracle_applies() {
        let grid = cfg.quadrature_grid(&target)?;
        Some(oracle::theta_star(&target, &partition, &grid)?)
    } else {
        None
    };
    if kinds.contains(&KernelKind::Ksgld) && theta_star.is_none() {
        return Err(Error::InvalidConfig(
            "ksgld needs the quadrature θ★, which exists only for one-dimensional mixtures".into(),
        ));
    }
    Ok(Prepared {
        target,
        partition,
        schedule,
        theta_star,
    })
}

pub(crate) fn plan_for<'a>(cfg: &ExperimentConfig, prep: &'a Prepared, kind: KernelKind) -> Result<ChainPlan<'a>> {
    let m = prep.partition.regions();
    let theta0 = match kind {
        KernelKind::Ksgld => prep.theta_star.clone().expect("checked in prepare"),
        _ => ThetaEstimate::uniform(m),
    };
    Ok(ChainPlan {
        target: &prep.target,
        partition: &prep.partition,
        kernel: cfg.kernel_config_for(kind)?,
        schedule: prep.schedule,
        rho: cfg.schedule.rho,
        theta0,
        x0: cfg.run.x0.clone(),
        steps: cfg.run.steps,
        burn_in: cfg.run.burn_in_steps(),
        thinning: cfg.run.thinning,
        theta_thinning: cfg.run.theta_thinning,
    })
}

fn execute(cfg: &ExperimentConfig, dir: Option<&Path>) -> Result<RunSummary> {
    let kind = cfg.kernel.kind;
    let prep = prepare(cfg, &[kind])?;
    let plan = plan_for(cfg, &prep, kind)?;
    if let Some(dir) = dir {
        write_echo(dir, cfg)?;
    }
    let d = plan.x0.len();
    let m = prep.partition.regions();
    let seeds: Vec<SeedReport> = cfg
        .run
        .seeds
        .par_iter()
        .map(|&seed| {
            let outputs = match dir {
                Some(dir) => ChainOutputs {
                    trajectory: Some(csv_writer(
                        &dir.join(format!("trajectory_seed{seed}.csv")),
                        &trajectory_header(d),
                    )?),
                    theta: Some(csv_writer(&dir.join(format!("theta_seed{seed}.csv")), &theta_header(m))?),
                    snapshots: Vec::new(),
                },
                None => ChainOutputs {
                    trajectory: None,
                    theta: None,
                    snapshots: Vec::new(),
                },
            };
            drive_chain(&plan, seed, outputs).map(|r| r.0)
        })
        .collect::<Result<_>>()?;
    let summary = RunSummary {
        seeds,
        theta_star: prep.theta_star.clone(),
        reference_mean: prep.target.reference_mean(),
    };
    if let Some(dir) = dir {
        for s in &summary.seeds {
            write_visits(&dir.join(format!("visits_seed{}.csv", s.seed)), &prep.partition, s, summary.theta_star.as_ref())?;
        }
        write_summary(&dir.join("summary.csv"), &summary)?;
    }
    Ok(summary)
}

/// Runs one chain per seed and writes every output under `cfg.run.output_dir`.
///
/// A diverging chain stops early and is flagged in `summary.csv`; the other chains finish.
pub fn run(cfg: &ExperimentConfig) -> Result<RunSummary> {
    execute(cfg, Some(&cfg.run.output_dir))
}

/// Same chains as [`run`] without touching the filesystem.
pub fn simulate(cfg: &ExperimentConfig) -> Result<RunSummary> {
    execute(cfg, None)
}

pub(crate) const VISITS_HEADER: [&str; 6] = ["region", "lower", "upper", "visits", "theta_final", "theta_star"];

fn write_visits(
    path: &Path,
    p: &EnergyPartition<f64>,
    s: &SeedReport,
    star: Option<&ThetaEstimate<f64>>,
) -> Result<()> {
    let mut w = csv_writer(path, &VISITS_HEADER.map(String::from))?;
    for i in 1..=p.regions() {
        w.write_record([
            i.to_string(),
            fmt(p.boundary(i - 1)),
            fmt(p.boundary(i)),
            s.visits[i - 1].to_string(),
            fmt(s.theta.get(i)),
            fmt_opt(star.map(|t| t.get(i))),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) const SUMMARY_HEADER: [&str; 16] = [
    "seed",
    "kernel",
    "steps",
    "diverged_at",
    "samples",
    "theta_l1",
    "theta_l1_mass99",
    "theta_l2",
    "weighted_estimate",
    "weighted_error",
    "plain_estimate",
    "plain_error",
    "min_multiplier",
    "first_negative_multiplier_step",
    "clamp_events",
    "theta_hash",
];

fn write_summary(path: &Path, summary: &RunSummary) -> Result<()> {
    let mut w = csv_writer(path, &SUMMARY_HEADER.map(String::from))?;
    let l1_99 = summary.theta_l1_mass99();
    let werr = summary.weighted_errors();
    let perr = summary.plain_errors();
    for (i, s) in summary.seeds.iter().enumerate() {
        let star = summary.theta_star.as_ref();
        w.write_record([
            s.seed.to_string(),
            s.kind.name().to_string(),
            s.steps.to_string(),
            fmt_opt(s.diverged_at),
            s.samples.to_string(),
            fmt_opt(star.map(|t| s.theta.l1_distance(t))),
            fmt_opt(l1_99[i]),
            fmt_opt(star.map(|t| s.theta.l2_distance(t))),
            fmt_opt(s.weighted_estimate.as_ref().map(|v| v[0])),
            fmt_opt(werr[i]),
            fmt_opt(s.plain_estimate.as_ref().map(|v| v[0])),
            fmt_opt(perr[i]),
            fmt(s.min_multiplier),
            fmt_opt(s.first_negative_multiplier_step),
            s.clamp_events.to_string(),
            theta_hash(s.theta.values()),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
