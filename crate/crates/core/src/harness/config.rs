//! Flat `key = value` experiment configuration.
//!
//! One assignment per line, `#` starts a comment, keys are dotted (`kernel.zeta`). Every
//! key has a default (the `mixture` preset); a file only lists what it changes. Unknown
//! and repeated keys are errors. `preset = mixture-full` switches the base values before
//! the file's own keys are applied, wherever the `preset` line appears.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{KernelConfig, KernelKind, LearningRate};
use crate::error::{Error, Result};
use crate::oracle::{Flattening, QuadratureGrid};
use crate::partition::EnergyPartition;
use crate::target::{GaussianMixture, MixtureComponent, RegressionData, TargetSpec};
use crate::theta::StepSchedule;

/// `(key, default, description)` for every recognised key.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("rng", "chacha8", "random number generator; only `chacha8` (ChaCha with 8 rounds) is available"),
    ("target.kind", "gaussian-mixture", "`gaussian-mixture` or `subsampled-regression`"),
    ("target.dimension", "1", "dimension d of x"),
    ("target.weights", "0.4, 0.6", "mixture component weights (renormalized)"),
    ("target.means", "-6, 4", "mixture means, d values per component, concatenated"),
    ("target.stds", "1, 1", "mixture component standard deviations"),
    ("target.temperature", "1", "temperature τ"),
    ("target.gradient_noise_sigma", "0.1", "std of Gaussian noise added to every gradient coordinate"),
    ("target.data_size", "1000", "regression: number of data points N"),
    ("target.batch_size", "100", "regression: mini-batch size n"),
    ("target.noise_std", "1", "regression: response noise std"),
    ("target.prior_std", "1", "regression: Gaussian prior std on the weights"),
    ("target.data_seed", "0", "regression: seed of the synthetic data set"),
    ("partition.regions", "50", "number of subregions m"),
    ("partition.u1", "2.25", "first energy boundary u_1"),
    ("partition.delta_u", "1", "energy bandwidth Δu"),
    ("kernel.kind", "csgld", "`sgld`, `csgld`, `ksgld`, `sghmc` or `csghmc`"),
    ("kernel.learning_rate", "0.1", "learning rate ε (initial value when decaying)"),
    ("kernel.decay_factor", "1", "geometric learning-rate decay factor"),
    ("kernel.decay_every", "0", "steps between decays; 0 keeps ε constant"),
    ("kernel.zeta", "0.75", "flattening exponent ζ"),
    ("kernel.momentum", "0.9", "momentum β for `sghmc`/`csghmc`; ignored otherwise"),
    ("schedule.a", "1", "SA step size ω_k = a/(k^alpha + b)"),
    ("schedule.alpha", "0.6", "SA step-size exponent, in (0.5, 1]"),
    ("schedule.b", "100", "SA step-size offset"),
    ("schedule.rho", "0", "prior-count regularizer ρ; 0 disables it"),
    ("run.steps", "1000000", "iterations per chain"),
    ("run.thinning", "100", "trajectory row every this many steps"),
    ("run.theta_thinning", "10000", "θ trace row every this many steps"),
    ("run.burn_in", "0.1", "fraction of steps excluded from estimators and visit counts"),
    ("run.seeds", "0..5", "comma-separated seeds and half-open ranges `a..b`; one chain each"),
    ("run.x0", "0", "initial point, d values"),
    ("run.output_dir", "out/mixture", "directory for CSV outputs"),
    ("oracle.lo", "auto", "left end of the quadrature grid; `auto` covers 12σ√τ past every mean"),
    ("oracle.hi", "auto", "right end of the quadrature grid"),
    ("oracle.points", "200001", "quadrature grid points"),
    ("oracle.output_stride", "20", "write every this many grid points to flattened.csv"),
    ("oracle.flattening", "interpolated", "`interpolated` or `piecewise-constant` Ψ in the mean field"),
    ("oracle.stability_regions", "10", "m for the stability check (same u_1 and Δu)"),
    ("oracle.stability_trials", "100", "random simplex points in the stability check"),
    ("oracle.stability_seed", "0", "seed for the stability check"),
    ("oracle.barrier_modes", "auto", "two x positions for the barrier report; `auto` uses the outermost means"),
    ("oracle.barrier_radius", "1", "mode neighbourhood radius for the barrier report"),
    ("compare.methods", "sgld, csgld, ksgld", "kernels run by `compare`"),
    ("compare.checkpoints", "20", "log-spaced checkpoints"),
    ("compare.first_checkpoint", "1000", "first checkpoint step"),
    ("flat.mass_floor", "1e-3", "regions with θ★ above this count as covered"),
    ("preset", "mixture", "`mixture` (10^6 steps) or `mixture-full` (10^7 steps, 10 seeds)"),
];

pub const PRESETS: &[&str] = &["mixture", "mixture-full"];

fn preset_values(name: &str) -> Option<&'static [(&'static str, &'static str)]> {
    match name {
        "mixture" => Some(&[]),
        "mixture-full" => Some(&[
            ("run.steps", "10000000"),
            ("run.thinning", "1000"),
            ("run.theta_thinning", "100000"),
            ("run.seeds", "0..10"),
            ("run.output_dir", "out/mixture-full"),
        ]),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    value: String,
    /// Source line, 0 for defaults and overrides.
    line: usize,
}

/// Raw key/value view, the source of the config echo.
#[derive(Debug, Clone, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, Entry>,
}

impl RawConfig {
    pub fn defaults() -> Self {
        let entries = KEYS
            .iter()
            .map(|(k, v, _)| (k.to_string(), Entry { value: v.to_string(), line: 0 }))
            .collect();
        Self { entries }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut assigned: BTreeMap<String, Entry> = BTreeMap::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw_line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::ConfigParse {
                line,
                key: content.to_string(),
                message: "expected `key = value`".into(),
            })?;
            let key = key.trim();
            let value = value.trim();
            if !KEYS.iter().any(|(k, _, _)| *k == key) {
                return Err(Error::ConfigParse {
                    line,
                    key: key.into(),
                    message: "unknown key".into(),
                });
            }
            if value.is_empty() {
                return Err(Error::ConfigParse {
                    line,
                    key: key.into(),
                    message: "missing value".into(),
                });
            }
            if let Some(prev) = assigned.get(key) {
                return Err(Error::ConfigParse {
                    line,
                    key: key.into(),
                    message: format!("duplicate key, first set on line {}", prev.line),
                });
            }
            assigned.insert(key.into(), Entry { value: value.into(), line });
        }
        let mut cfg = Self::defaults();
        if let Some(p) = assigned.get("preset") {
            let values = preset_values(&p.value).ok_or_else(|| Error::ConfigParse {
                line: p.line,
                key: "preset".into(),
                message: format!("unknown preset `{}`; expected one of {}", p.value, PRESETS.join(", ")),
            })?;
            for (k, v) in values {
                cfg.set(k, *v);
            }
        }
        cfg.entries.extend(assigned);
        Ok(cfg)
    }

    pub fn preset(name: &str) -> Result<Self> {
        Self::parse(&format!("preset = {name}"))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.value.as_str())
    }

    /// Overrides a value; `key` must be a recognised key.
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        assert!(KEYS.iter().any(|(k, _, _)| *k == key), "unknown config key {key}");
        self.entries.insert(key.into(), Entry { value: value.into(), line: 0 });
    }

    /// Every key in sorted order, one `key = value` per line; parses back to the same config.
    pub fn echo(&self) -> String {
        let mut out = String::from("# resolved configuration\n");
        for (k, e) in &self.entries {
            let _ = writeln!(out, "{k} = {}", e.value);
        }
        out
    }

    fn err(&self, key: &str, message: impl Into<String>) -> Error {
        Error::ConfigParse {
            line: self.entries.get(key).map_or(0, |e| e.line),
            key: key.into(),
            message: message.into(),
        }
    }

    fn str(&self, key: &str) -> &str {
        self.get(key).expect("every key has a default")
    }

    fn f64(&self, key: &str) -> Result<f64> {
        let s = self.str(key);
        let v: f64 = s.parse().map_err(|_| self.err(key, format!("`{s}` is not a number")))?;
        if !v.is_finite() {
            return Err(self.err(key, "value must be finite"));
        }
        Ok(v)
    }

    fn u64(&self, key: &str) -> Result<u64> {
        let s = self.str(key);
        let s_clean = s.replace('_', "");
        if let Ok(v) = s_clean.parse::<u64>() {
            return Ok(v);
        }
        // Accept integral floats such as 1e6.
        match s_clean.parse::<f64>() {
            Ok(f) if f >= 0.0 && f.fract() == 0.0 && f < 1.8e19 => Ok(f as u64),
            _ => Err(self.err(key, format!("`{s}` is not a nonnegative integer"))),
        }
    }

    fn usize(&self, key: &str) -> Result<usize> {
        self.u64(key).map(|v| v as usize)
    }

    fn f64_list(&self, key: &str) -> Result<Vec<f64>> {
        self.str(key)
            .split(',')
            .map(|t| {
                let t = t.trim();
                t.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| self.err(key, format!("`{t}` is not a finite number")))
            })
            .collect()
    }

    fn f64_or_auto(&self, key: &str) -> Result<Option<f64>> {
        if self.str(key) == "auto" {
            Ok(None)
        } else {
            self.f64(key).map(Some)
        }
    }

    fn seeds(&self, key: &str) -> Result<Vec<u64>> {
        let mut out = Vec::new();
        for tok in self.str(key).split(',') {
            let tok = tok.trim();
            let bad = || self.err(key, format!("`{tok}` is not a seed or a range `a..b`"));
            if let Some((a, b)) = tok.split_once("..") {
                let a: u64 = a.trim().parse().map_err(|_| bad())?;
                let b: u64 = b.trim().parse().map_err(|_| bad())?;
                if b <= a {
                    return Err(self.err(key, format!("empty range `{tok}`")));
                }
                out.extend(a..b);
            } else {
                out.push(tok.parse().map_err(|_| bad())?);
            }
        }
        let mut sorted = out.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(self.err(key, "seeds must be distinct"));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetChoice {
    GaussianMixture,
    SubsampledRegression,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetSection {
    pub kind: TargetChoice,
    pub dimension: usize,
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub temperature: f64,
    pub gradient_noise_sigma: f64,
    pub data_size: usize,
    pub batch_size: usize,
    pub noise_std: f64,
    pub prior_std: f64,
    pub data_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionSection {
    pub regions: usize,
    pub u1: f64,
    pub delta_u: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSection {
    pub kind: KernelKind,
    pub learning_rate: f64,
    pub decay_factor: f64,
    pub decay_every: u64,
    pub zeta: f64,
    pub momentum: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleSection {
    pub a: f64,
    pub alpha: f64,
    pub b: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSection {
    pub steps: u64,
    pub thinning: u64,
    pub theta_thinning: u64,
    pub burn_in: f64,
    pub seeds: Vec<u64>,
    pub x0: Vec<f64>,
    pub output_dir: PathBuf,
}

impl RunSection {
    /// Steps `1..=burn_in_steps()` are excluded from estimators.
    pub fn burn_in_steps(&self) -> u64 {
        (self.burn_in * self.steps as f64).floor() as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSection {
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub points: usize,
    pub output_stride: usize,
    pub flattening: Flattening,
    pub stability_regions: usize,
    pub stability_trials: usize,
    pub stability_seed: u64,
    pub barrier_modes: Option<(f64, f64)>,
    pub barrier_radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareSection {
    pub methods: Vec<KernelKind>,
    pub checkpoints: usize,
    pub first_checkpoint: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlatSection {
    pub mass_floor: f64,
}

/// Validated experiment configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub raw: RawConfig,
    pub target: TargetSection,
    pub partition: PartitionSection,
    pub kernel: KernelSection,
    pub schedule: ScheduleSection,
    pub run: RunSection,
    pub oracle: OracleSection,
    pub compare: CompareSection,
    pub flat: FlatSection,
}

impl ExperimentConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_raw(RawConfig::parse(text)?)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn preset(name: &str) -> Result<Self> {
        Self::from_raw(RawConfig::preset(name)?)
    }

    pub fn from_raw(raw: RawConfig) -> Result<Self> {
        if raw.str("rng") != "chacha8" {
            return Err(raw.err("rng", "only `chacha8` is supported"));
        }
        let kind = match raw.str("target.kind") {
            "gaussian-mixture" => TargetChoice::GaussianMixture,
            "subsampled-regression" => TargetChoice::SubsampledRegression,
            other => return Err(raw.err("target.kind", format!("unknown target `{other}`"))),
        };
        let target = TargetSection {
            kind,
            dimension: raw.usize("target.dimension")?,
            weights: raw.f64_list("target.weights")?,
            means: raw.f64_list("target.means")?,
            stds: raw.f64_list("target.stds")?,
            temperature: raw.f64("target.temperature")?,
            gradient_noise_sigma: raw.f64("target.gradient_noise_sigma")?,
            data_size: raw.usize("target.data_size")?,
            batch_size: raw.usize("target.batch_size")?,
            noise_std: raw.f64("target.noise_std")?,
            prior_std: raw.f64("target.prior_std")?,
            data_seed: raw.u64("target.data_seed")?,
        };
        let partition = PartitionSection {
            regions: raw.usize("partition.regions")?,
            u1: raw.f64("partition.u1")?,
            delta_u: raw.f64("partition.delta_u")?,
        };
        let kernel_kind = |key: &str, s: &str| {
            KernelKind::parse(s).ok_or_else(|| raw.err(key, format!("unknown kernel `{s}`")))
        };
        let kernel = KernelSection {
            kind: kernel_kind("kernel.kind", raw.str("kernel.kind"))?,
            learning_rate: raw.f64("kernel.learning_rate")?,
            decay_factor: raw.f64("kernel.decay_factor")?,
            decay_every: raw.u64("kernel.decay_every")?,
            zeta: raw.f64("kernel.zeta")?,
            momentum: raw.f64("kernel.momentum")?,
        };
        let schedule = ScheduleSection {
            a: raw.f64("schedule.a")?,
            alpha: raw.f64("schedule.alpha")?,
            b: raw.f64("schedule.b")?,
            rho: raw.f64("schedule.rho")?,
        };
        let run = RunSection {
            steps: raw.u64("run.steps")?,
            thinning: raw.u64("run.thinning")?,
            theta_thinning: raw.u64("run.theta_thinning")?,
            burn_in: raw.f64("run.burn_in")?,
            seeds: raw.seeds("run.seeds")?,
            x0: raw.f64_list("run.x0")?,
            output_dir: PathBuf::from(raw.str("run.output_dir")),
        };
        let flattening = match raw.str("oracle.flattening") {
            "interpolated" => Flattening::Interpolated,
            "piecewise-constant" => Flattening::PiecewiseConstant,
            other => return Err(raw.err("oracle.flattening", format!("unknown flattening `{other}`"))),
        };
        let barrier_modes = if raw.str("oracle.barrier_modes") == "auto" {
            None
        } else {
            match raw.f64_list("oracle.barrier_modes")?.as_slice() {
                [a, b] if a < b => Some((*a, *b)),
                _ => return Err(raw.err("oracle.barrier_modes", "expected two increasing positions")),
            }
        };
        let oracle = OracleSection {
            lo: raw.f64_or_auto("oracle.lo")?,
            hi: raw.f64_or_auto("oracle.hi")?,
            points: raw.usize("oracle.points")?,
            output_stride: raw.usize("oracle.output_stride")?,
            flattening,
            stability_regions: raw.usize("oracle.stability_regions")?,
            stability_trials: raw.usize("oracle.stability_trials")?,
            stability_seed: raw.u64("oracle.stability_seed")?,
            barrier_modes,
            barrier_radius: raw.f64("oracle.barrier_radius")?,
        };
        let methods = raw
            .str("compare.methods")
            .split(',')
            .map(|s| kernel_kind("compare.methods", s.trim()))
            .collect::<Result<Vec<_>>>()?;
        let compare = CompareSection {
            methods,
            checkpoints: raw.usize("compare.checkpoints")?,
            first_checkpoint: raw.u64("compare.first_checkpoint")?,
        };
        let flat = FlatSection {
            mass_floor: raw.f64("flat.mass_floor")?,
        };
        let cfg = Self {
            raw,
            target,
            partition,
            kernel,
            schedule,
            run,
            oracle,
            compare,
            flat,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        let raw = &self.raw;
        let t = &self.target;
        if t.dimension == 0 {
            return Err(raw.err("target.dimension", "must be positive"));
        }
        if t.kind == TargetChoice::GaussianMixture {
            let k = t.weights.len();
            if t.stds.len() != k {
                return Err(raw.err("target.stds", format!("expected {k} values, one per weight")));
            }
            if t.means.len() != k * t.dimension {
                return Err(raw.err("target.means", format!("expected {} values", k * t.dimension)));
            }
        }
        if self.run.x0.len() != t.dimension {
            return Err(raw.err("run.x0", format!("expected {} values", t.dimension)));
        }
        let r = &self.run;
        if r.steps == 0 {
            return Err(raw.err("run.steps", "must be positive"));
        }
        if r.thinning == 0 || r.thinning > r.steps {
            return Err(raw.err("run.thinning", "must lie in 1..=run.steps"));
        }
        if r.theta_thinning == 0 {
            return Err(raw.err("run.theta_thinning", "must be positive"));
        }
        if !(0.0..1.0).contains(&r.burn_in) {
            return Err(raw.err("run.burn_in", "must lie in [0, 1)"));
        }
        if self.kernel.decay_every > 0 && !(self.kernel.decay_factor > 0.0 && self.kernel.decay_factor <= 1.0) {
            return Err(raw.err("kernel.decay_factor", "must lie in (0, 1]"));
        }
        let sc = &self.schedule;
        if !(sc.alpha > 0.5 && sc.alpha <= 1.0) {
            return Err(raw.err("schedule.alpha", "must lie in (0.5, 1]"));
        }
        if !(sc.b >= 0.0) {
            return Err(raw.err("schedule.b", "must be nonnegative"));
        }
        if self.schedule.rho < 0.0 {
            return Err(raw.err("schedule.rho", "must be nonnegative"));
        }
        if self.oracle.output_stride == 0 {
            return Err(raw.err("oracle.output_stride", "must be positive"));
        }
        if self.compare.methods.is_empty() {
            return Err(raw.err("compare.methods", "needs at least one kernel"));
        }
        if self.compare.checkpoints == 0 || self.compare.first_checkpoint == 0 {
            return Err(raw.err("compare.checkpoints", "checkpoint count and first checkpoint must be positive"));
        }
        if !(self.flat.mass_floor >= 0.0) {
            return Err(raw.err("flat.mass_floor", "must be nonnegative"));
        }
        // Surface domain-level validation errors with their key.
        self.target_spec()?;
        self.energy_partition()?;
        self.kernel_config()?;
        self.step_schedule()?;
        Ok(())
    }

    fn rewrap(&self, key: &str, e: Error) -> Error {
        match e {
            Error::InvalidInput(m) | Error::InvalidConfig(m) => self.raw.err(key, m),
            other => other,
        }
    }

    pub fn target_spec(&self) -> Result<TargetSpec<f64>> {
        let t = &self.target;
        match t.kind {
            TargetChoice::GaussianMixture => {
                let d = t.dimension;
                let comps = t
                    .weights
                    .iter()
                    .zip(&t.stds)
                    .enumerate()
                    .map(|(k, (w, s))| MixtureComponent {
                        weight: *w,
                        mean: t.means[k * d..(k + 1) * d].to_vec(),
                        std: *s,
                    })
                    .collect();
                let mix = GaussianMixture::new(comps).map_err(|e| self.rewrap("target.weights", e))?;
                TargetSpec::mixture(mix, t.temperature, t.gradient_noise_sigma)
                    .map_err(|e| self.rewrap("target.temperature", e))
            }
            TargetChoice::SubsampledRegression => {
                let mut rng = ChaCha8Rng::seed_from_u64(t.data_seed);
                let data = RegressionData::synthetic(t.data_size, t.dimension, t.noise_std, t.prior_std, &mut rng)
                    .map_err(|e| self.rewrap("target.data_size", e))?;
                TargetSpec::regression(data, t.batch_size, t.temperature, t.gradient_noise_sigma)
                    .map_err(|e| self.rewrap("target.batch_size", e))
            }
        }
    }

    pub fn energy_partition(&self) -> Result<EnergyPartition<f64>> {
        let p = &self.partition;
        EnergyPartition::new(p.regions, p.u1, p.delta_u).map_err(|e| self.rewrap("partition.regions", e))
    }

    pub fn stability_partition(&self) -> Result<EnergyPartition<f64>> {
        let p = &self.partition;
        EnergyPartition::new(self.oracle.stability_regions, p.u1, p.delta_u)
            .map_err(|e| self.rewrap("oracle.stability_regions", e))
    }

    pub fn learning_rate(&self) -> LearningRate<f64> {
        let k = &self.kernel;
        if k.decay_every == 0 {
            LearningRate::Constant(k.learning_rate)
        } else {
            LearningRate::GeometricDecay {
                initial: k.learning_rate,
                factor: k.decay_factor,
                every: k.decay_every,
            }
        }
    }

    pub fn kernel_config(&self) -> Result<KernelConfig<f64>> {
        self.kernel_config_for(self.kernel.kind)
    }

    /// Kernel settings with the kind replaced, as used by `compare`.
    pub fn kernel_config_for(&self, kind: KernelKind) -> Result<KernelConfig<f64>> {
        let k = &self.kernel;
        let cfg = KernelConfig {
            kind,
            learning_rate: self.learning_rate(),
            zeta: k.zeta,
            momentum: if kind.uses_momentum() { k.momentum } else { 0.0 },
            temperature: self.target.temperature,
        };
        cfg.validate().map_err(|e| self.rewrap("kernel.kind", e))?;
        Ok(cfg)
    }

    pub fn step_schedule(&self) -> Result<StepSchedule<f64>> {
        let s = &self.schedule;
        StepSchedule::new(s.a, s.alpha, s.b).map_err(|e| self.rewrap("schedule.a", e))
    }

    pub fn quadrature_grid(&self, target: &TargetSpec<f64>) -> Result<QuadratureGrid> {
        let auto = QuadratureGrid::covering(target, self.oracle.points)?;
        QuadratureGrid::new(
            self.oracle.lo.unwrap_or(auto.lo),
            self.oracle.hi.unwrap_or(auto.hi),
            self.oracle.points,
        )
    }

    /// The oracle applies to one-dimensional mixtures only.
    pub fn oracle_applies(&self) -> bool {
        self.target.kind == TargetChoice::GaussianMixture && self.target.dimension == 1
    }

    pub fn with_seeds(mut self, seeds: &[u64]) -> Result<Self> {
        let text = seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(", ");
        self.raw.set("run.seeds", text);
        Self::from_raw(self.raw)
    }

    pub fn with_steps(mut self, steps: u64) -> Result<Self> {
        self.raw.set("run.steps", steps.to_string());
        let thin = self.run.thinning.min(steps);
        self.raw.set("run.thinning", thin.to_string());
        Self::from_raw(self.raw)
    }

    pub fn with_output_dir(mut self, dir: &Path) -> Result<Self> {
        self.raw.set("run.output_dir", dir.display().to_string());
        Self::from_raw(self.raw)
    }

    /// Sets any key by name, revalidating the whole config.
    pub fn with_value(mut self, key: &str, value: &str) -> Result<Self> {
        if !KEYS.iter().any(|(k, _, _)| *k == key) {
            return Err(Error::ConfigParse {
                line: 0,
                key: key.into(),
                message: "unknown key".into(),
            });
        }
        self.raw.set(key, value);
        Self::from_raw(self.raw)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_mixture_experiment() {
        let c = ExperimentConfig::from_text("").unwrap();
        assert_eq!(c.partition.regions, 50);
        assert_eq!(c.kernel.kind, KernelKind::Csgld);
        assert_eq!(c.kernel.zeta, 0.75);
        assert_eq!(c.run.steps, 1_000_000);
        assert_eq!(c.run.seeds, vec![0, 1, 2, 3, 4]);
        assert_eq!(c.run.burn_in_steps(), 100_000);
        let t = c.target_spec().unwrap();
        assert_eq!(t, TargetSpec::bimodal_reference());
    }

    #[test]
    fn comments_blank_lines_and_overrides() {
        let text = "# header\n\nkernel.zeta = 1   # flat histogram\nrun.seeds = 3, 7..9\nrun.steps = 1e4\n";
        let c = ExperimentConfig::from_text(text).unwrap();
        assert_eq!(c.kernel.zeta, 1.0);
        assert_eq!(c.run.seeds, vec![3, 7, 8]);
        assert_eq!(c.run.steps, 10_000);
    }

    #[test]
    fn unknown_key_reports_line() {
        let err = ExperimentConfig::from_text("kernel.zeta = 1\nkernel.zeda = 2\n").unwrap_err();
        match err {
            Error::ConfigParse { line, key, .. } => {
                assert_eq!(line, 2);
                assert_eq!(key, "kernel.zeda");
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn duplicate_key_rejected() {
        let err = ExperimentConfig::from_text("run.steps = 10\nrun.steps = 20\n").unwrap_err();
        assert!(matches!(err, Error::ConfigParse { line: 2, .. }), "{err}");
    }

    #[test]
    fn bad_values_carry_key_and_line() {
        for (text, key) in [
            ("\nrun.steps = lots\n", "run.steps"),
            ("\nkernel.kind = mala\n", "kernel.kind"),
            ("\nrun.seeds = 1, 1\n", "run.seeds"),
            ("\nrun.burn_in = 1\n", "run.burn_in"),
            ("\nschedule.alpha = 0.4\n", "schedule.alpha"),
            ("\ntarget.temperature = 0\n", "target.temperature"),
            ("\nrun.x0 = 0, 1\n", "run.x0"),
            ("\nmissing equals\n", "missing equals"),
        ] {
            match ExperimentConfig::from_text(text).unwrap_err() {
                Error::ConfigParse { key: k, .. } => assert_eq!(k, key, "{text}"),
                other => panic!("{text}: {other}"),
            }
        }
    }

    #[test]
    fn echo_round_trips() {
        let c = ExperimentConfig::from_text("kernel.zeta = 0.5\nrun.seeds = 0..3\npreset = mixture-full\n").unwrap();
        assert_eq!(c.run.steps, 10_000_000);
        let again = ExperimentConfig::from_text(&c.raw.echo()).unwrap();
        assert_eq!(again.run, c.run);
        assert_eq!(again.kernel, c.kernel);
        assert_eq!(again.raw.echo(), c.raw.echo());
    }

    #[test]
    fn file_values_beat_the_preset() {
        let c = ExperimentConfig::from_text("run.steps = 5000\npreset = mixture-full\n").unwrap();
        assert_eq!(c.run.steps, 5000);
        assert_eq!(c.run.seeds.len(), 10);
        assert!(ExperimentConfig::from_text("preset = huge\n").is_err());
    }

    #[test]
    fn overrides_revalidate() {
        let c = ExperimentConfig::preset("mixture").unwrap();
        let c = c.with_steps(50).unwrap();
        assert_eq!(c.run.thinning, 50);
        let c = c.with_seeds(&[9]).unwrap();
        assert_eq!(c.run.seeds, vec![9]);
        assert!(c.clone().with_value("kernel.momentum", "1.5").is_ok());
        assert!(c.with_value("kernel.kind", "sghmc").unwrap().with_value("kernel.momentum", "1.5").is_err());
    }

    #[test]
    fn regression_target_builds() {
        let c = ExperimentConfig::from_text(
            "target.kind = subsampled-regression\ntarget.dimension = 3\ntarget.data_size = 50\ntarget.batch_size = 10\nrun.x0 = 0, 0, 0\n",
        )
        .unwrap();
        let t = c.target_spec().unwrap();
        assert_eq!(t.dimension(), 3);
        assert_eq!(t.data_size(), 50);
        assert!(!c.oracle_applies());
    }
}
