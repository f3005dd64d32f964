//! Sampling kernels: SGLD, CSGLD, KSGLD (CSGLD with `θ` frozen), SGHMC and CSGHMC.
//!
//! Langevin kernels move
//! `x' = x - ε·(N/n)·mult·∇Ũ(x) + √(2τε)·e`,
//! momentum kernels move
//! `v' = β·v - ε·(N/n)·mult·∇Ũ(x) + √(2τε(1-β))·e`, `x' = x + v'`,
//! where `mult` is 1 for the plain kernels and the partition's gradient multiplier for the
//! contour kernels. Within one step the stochastic oracle draws its randomness first and the
//! Langevin noise `e` second, so kernels sharing a seed consume identical random streams.

use rand::Rng;

use crate::error::{invalid_input, Error, Result};
use crate::partition::EnergyPartition;
use crate::scalar::{all_finite, Real};
use crate::target::{GradientEval, TargetSpec};
use crate::theta::{StepSchedule, ThetaEstimate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelKind {
    Sgld,
    Csgld,
    /// CSGLD with `θ` fixed at a supplied estimate (normally the oracle `θ★`).
    Ksgld,
    Sghmc,
    Csghmc,
}

impl KernelKind {
    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Sgld => "sgld",
            KernelKind::Csgld => "csgld",
            KernelKind::Ksgld => "ksgld",
            KernelKind::Sghmc => "sghmc",
            KernelKind::Csghmc => "csghmc",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "sgld" => KernelKind::Sgld,
            "csgld" => KernelKind::Csgld,
            "ksgld" => KernelKind::Ksgld,
            "sghmc" => KernelKind::Sghmc,
            "csghmc" => KernelKind::Csghmc,
            _ => return None,
        })
    }

    pub fn uses_momentum(self) -> bool {
        matches!(self, KernelKind::Sghmc | KernelKind::Csghmc)
    }

    /// The gradient is scaled by the partition multiplier.
    pub fn is_contour(self) -> bool {
        matches!(self, KernelKind::Csgld | KernelKind::Ksgld | KernelKind::Csghmc)
    }

    /// `θ` is updated by stochastic approximation after every move.
    pub fn adapts_theta(self) -> bool {
        matches!(self, KernelKind::Csgld | KernelKind::Csghmc)
    }
}

/// Learning rate `ε_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LearningRate<T> {
    Constant(T),
    /// `ε_k = initial · factor^⌊(k-1)/every⌋`, an annealing hook (off unless configured).
    GeometricDecay { initial: T, factor: T, every: u64 },
}

impl<T: Real> LearningRate<T> {
    #[inline]
    pub fn at(&self, k: u64) -> T {
        match *self {
            LearningRate::Constant(e) => e,
            LearningRate::GeometricDecay {
                initial,
                factor,
                every,
            } => {
                let epochs = (k.max(1) - 1) / every.max(1);
                initial * factor.powi(epochs.min(i32::MAX as u64) as i32)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            LearningRate::Constant(e) => {
                if !(e >= T::zero()) || !e.is_finite() {
                    return Err(invalid_input("learning rate must be nonnegative"));
                }
            }
            LearningRate::GeometricDecay {
                initial,
                factor,
                every,
            } => {
                if !(initial >= T::zero()) || !initial.is_finite() {
                    return Err(invalid_input("learning rate must be nonnegative"));
                }
                if !(factor > T::zero() && factor <= T::one()) {
                    return Err(invalid_input("decay factor must lie in (0, 1]"));
                }
                if every == 0 {
                    return Err(invalid_input("decay interval must be positive"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConfig<T> {
    pub kind: KernelKind,
    pub learning_rate: LearningRate<T>,
    pub zeta: T,
    /// `β` in `[0, 1)`; ignored by the Langevin kernels.
    pub momentum: T,
    /// `τ`. Zero gives the deterministic (optimization) limit.
    pub temperature: T,
}

impl<T: Real> KernelConfig<T> {
    pub fn new(kind: KernelKind, learning_rate: T, zeta: T, temperature: T) -> Result<Self> {
        let cfg = Self {
            kind,
            learning_rate: LearningRate::Constant(learning_rate),
            zeta,
            momentum: T::zero(),
            temperature,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_momentum(mut self, beta: T) -> Result<Self> {
        self.momentum = beta;
        self.validate()?;
        Ok(self)
    }

    pub fn with_kind(mut self, kind: KernelKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.learning_rate.validate()?;
        if !(self.zeta >= T::zero()) || !self.zeta.is_finite() {
            return Err(invalid_input("zeta must be nonnegative"));
        }
        if !(self.momentum >= T::zero() && self.momentum < T::one()) {
            return Err(invalid_input("momentum must lie in [0, 1)"));
        }
        if !(self.temperature >= T::zero()) || !self.temperature.is_finite() {
            return Err(invalid_input("temperature must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainState<T> {
    pub x: Vec<T>,
    /// Present iff the kernel is a momentum variant.
    pub v: Option<Vec<T>>,
    pub k: u64,
}

impl<T: Real> ChainState<T> {
    pub fn new(x: Vec<T>) -> Self {
        Self { x, v: None, k: 0 }
    }

    /// Starts at `x` with zero momentum.
    pub fn with_momentum(x: Vec<T>) -> Self {
        let v = vec![T::zero(); x.len()];
        Self { x, v: Some(v), k: 0 }
    }

    pub fn for_kernel(x: Vec<T>, kind: KernelKind) -> Self {
        if kind.uses_momentum() {
            Self::with_momentum(x)
        } else {
            Self::new(x)
        }
    }
}

/// What one move reports besides the new state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo<T> {
    /// `J̃` of the point the gradient was taken at.
    pub j_tilde: usize,
    pub multiplier: T,
}

fn check_kind(cfg_kind: KernelKind, allowed: &[KernelKind], op: &str) -> Result<()> {
    if allowed.contains(&cfg_kind) {
        Ok(())
    } else {
        Err(invalid_input(format!("{op} called with a {} kernel", cfg_kind.name())))
    }
}

/// Applies one move in place given a precomputed oracle output and multiplier.
fn move_state<T: Real, R: Rng + ?Sized>(
    state: &mut ChainState<T>,
    eval: &GradientEval<T>,
    scale: T,
    multiplier: T,
    cfg: &KernelConfig<T>,
    rng: &mut R,
) -> Result<()> {
    let step = state.k + 1;
    let eps = cfg.learning_rate.at(step);
    let drift = eps * scale * multiplier;
    let two = T::lit(2.0);
    match (&mut state.v, cfg.kind.uses_momentum()) {
        (Some(v), true) => {
            let beta = cfg.momentum;
            let sd = (two * cfg.temperature * eps * (T::one() - beta)).sqrt();
            for ((xi, vi), gi) in state.x.iter_mut().zip(v.iter_mut()).zip(&eval.grad) {
                *vi = beta * *vi - drift * *gi + sd * T::standard_normal(rng);
                *xi += *vi;
            }
        }
        (None, false) => {
            let sd = (two * cfg.temperature * eps).sqrt();
            for (xi, gi) in state.x.iter_mut().zip(&eval.grad) {
                *xi = *xi - drift * *gi + sd * T::standard_normal(rng);
            }
        }
        (Some(_), false) => return Err(invalid_input("Langevin kernel given a state with momentum")),
        (None, true) => return Err(invalid_input("momentum kernel given a state without momentum")),
    }
    state.k = step;
    let finite = all_finite(&state.x) && state.v.as_deref().is_none_or(all_finite);
    if finite {
        Ok(())
    } else {
        Err(Error::Divergence { step })
    }
}

fn plain_step<T: Real, R: Rng + ?Sized>(
    state: &ChainState<T>,
    target: &TargetSpec<T>,
    cfg: &KernelConfig<T>,
    rng: &mut R,
) -> Result<ChainState<T>> {
    let eval = target.stochastic_gradient(&state.x, rng)?;
    let mut next = state.clone();
    move_state(&mut next, &eval, target.scale(), T::one(), cfg, rng)?;
    Ok(next)
}

fn contour_step<T: Real, R: Rng + ?Sized>(
    state: &ChainState<T>,
    theta: &ThetaEstimate<T>,
    partition: &EnergyPartition<T>,
    target: &TargetSpec<T>,
    cfg: &KernelConfig<T>,
    rng: &mut R,
) -> Result<(ChainState<T>, StepInfo<T>)> {
    let eval = target.stochastic_gradient(&state.x, rng)?;
    let j_tilde = partition.stochastic_index(&eval)?;
    let multiplier = partition.grad_multiplier(theta, j_tilde, cfg.zeta, cfg.temperature)?;
    let mut next = state.clone();
    move_state(&mut next, &eval, target.scale(), multiplier, cfg, rng)?;
    Ok((next, StepInfo { j_tilde, multiplier }))
}

pub fn sgld_step<T: Real, R: Rng + ?Sized>(
    state: &ChainState<T>,
    target: &TargetSpec<T>,
    cfg: &KernelConfig<T>,
    rng: &mut R,
) -> Result<ChainState<T>> {
    check_kind(cfg.kind, &[KernelKind::Sgld], "sgld_step")?;
    plain_step(state, target, cfg, rng)
}

/// One CSGLD move using `θ_k`; the returned `J̃` and multiplier are those of the current point.
pub fn csgld_step<T: Real, R: Rng + ?Sized>(
    state: &ChainState<T>,
    theta: &ThetaEstimate<T>,
    partition: &EnergyPartition<T>,
    target: &TargetSpec<T>,
    cfg: &KernelConfig<T>,
    rng: &mut R,
) -> Result<(ChainState<T>, StepInfo<T>)> {
    check_kind(cfg.kind, &[KernelKind::Csgld, KernelKind::Ksgld], "csgld_step")?;
    contour_step(state, theta, partition, target, cfg, rng)
}

/// CSGLD move with `θ` held at `theta_star`; shares the CSGLD code path.
pub fn ksgld_step<T: Real, R: Rng + ?Sized>(
    state: &ChainState<T>,
    theta_star: &ThetaEstimate<T>,
    partition: &EnergyPartition<T>,
    target: &TargetSpec<T>,
    cfg: &KernelConfig<T>,
    rng: &mut R,
) -> Result<(ChainState<T>, StepInfo<T>)> {
    check_kind(cfg.kind, &[KernelKind::Csgld, KernelKind::Ksgld], "ksgld_step")?;
    contour_step(state, theta_star, partition, target, cfg, rng)
}

pub fn sghmc_step<T: Real, R: Rng + ?Sized>(
    state: &ChainState<T>,
    target: &TargetSpec<T>,
    cfg: &KernelConfig<T>,
    rng: &mut R,
) -> Result<ChainState<T>> {
    check_kind(cfg.kind, &[KernelKind::Sghmc], "sghmc_step")?;
    plain_step(state, target, cfg, rng)
}

pub fn csghmc_step<T: Real, R: Rng + ?Sized>(
    state: &ChainState<T>,
    theta: &ThetaEstimate<T>,
    partition: &EnergyPartition<T>,
    target: &TargetSpec<T>,
    cfg: &KernelConfig<T>,
    rng: &mut R,
) -> Result<(ChainState<T>, StepInfo<T>)> {
    check_kind(cfg.kind, &[KernelKind::Csghmc], "csghmc_step")?;
    contour_step(state, theta, partition, target, cfg, rng)
}

/// Per-step trajectory row produced by [`Chain::advance`].
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord<T> {
    /// `k` such that this row describes `x_k`.
    pub step: u64,
    pub x: Vec<T>,
    /// `(N/n)·Ũ(x_k)` from the mini-batch also used for the next gradient.
    pub energy_scaled: T,
    /// `J̃(x_k)`.
    pub j_tilde: usize,
    /// Multiplier applied in the move that produced `x_k`.
    pub multiplier: T,
    /// `θ_k(J̃(x_k))`, after the SA update for adaptive kernels.
    pub theta_j: T,
    /// `θ_k(J̃(x_k))^ζ`; 1 for the plain kernels.
    pub importance_weight: T,
    /// The positivity floor was enforced during this step's SA update.
    pub clamped: bool,
}

pub trait RecordSink<T> {
    fn accept(&mut self, record: &StepRecord<T>) -> Result<()>;
}

impl<T: Clone> RecordSink<T> for Vec<StepRecord<T>> {
    fn accept(&mut self, record: &StepRecord<T>) -> Result<()> {
        self.push(record.clone());
        Ok(())
    }
}

/// Discards every record.
pub struct NullSink;

impl<T> RecordSink<T> for NullSink {
    fn accept(&mut self, _: &StepRecord<T>) -> Result<()> {
        Ok(())
    }
}

/// Adapts a closure into a sink.
pub struct FnSink<F>(pub F);

impl<T, F: FnMut(&StepRecord<T>) -> Result<()>> RecordSink<T> for FnSink<F> {
    fn accept(&mut self, record: &StepRecord<T>) -> Result<()> {
        (self.0)(record)
    }
}

/// Forwards only rows whose step is a multiple of `every`.
pub struct Thinned<S> {
    pub inner: S,
    pub every: u64,
}

impl<T, S: RecordSink<T>> RecordSink<T> for Thinned<S> {
    fn accept(&mut self, record: &StepRecord<T>) -> Result<()> {
        if record.step.is_multiple_of(self.every.max(1)) {
            self.inner.accept(record)
        } else {
            Ok(())
        }
    }
}

/// A running chain: state, `θ`, and the cached oracle output at the current point.
///
/// Each iteration follows the adaptive ordering: move `x_k → x_{k+1}` using `θ_k`, draw the
/// mini-batch at `x_{k+1}` (its energy gives `J̃(x_{k+1})`, its gradient drives the next
/// move), then update `θ_{k+1}` with `ω_{k+1}`.
pub struct Chain<'a, T> {
    target: &'a TargetSpec<T>,
    partition: &'a EnergyPartition<T>,
    kernel: KernelConfig<T>,
    schedule: StepSchedule<T>,
    rho: T,
    state: ChainState<T>,
    theta: ThetaEstimate<T>,
    pending: Option<GradientEval<T>>,
}

impl<'a, T: Real> Chain<'a, T> {
    pub fn new(
        target: &'a TargetSpec<T>,
        partition: &'a EnergyPartition<T>,
        kernel: KernelConfig<T>,
        schedule: StepSchedule<T>,
        rho: T,
        initial: ChainState<T>,
        theta0: ThetaEstimate<T>,
    ) -> Result<Self> {
        kernel.validate()?;
        if initial.x.len() != target.dimension() {
            return Err(invalid_input("initial point has the wrong dimension"));
        }
        if initial.v.is_some() != kernel.kind.uses_momentum() {
            return Err(invalid_input(format!(
                "initial state momentum does not match the {} kernel",
                kernel.kind.name()
            )));
        }
        if theta0.len() != partition.regions() {
            return Err(invalid_input("theta and partition sizes differ"));
        }
        if !(rho >= T::zero()) {
            return Err(invalid_input("rho must be nonnegative"));
        }
        Ok(Self {
            target,
            partition,
            kernel,
            schedule,
            rho,
            state: initial,
            theta: theta0,
            pending: None,
        })
    }

    pub fn state(&self) -> &ChainState<T> {
        &self.state
    }

    pub fn theta(&self) -> &ThetaEstimate<T> {
        &self.theta
    }

    pub fn into_parts(self) -> (ChainState<T>, ThetaEstimate<T>) {
        (self.state, self.theta)
    }

    /// One full iteration; returns the record describing the new point.
    pub fn advance<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<StepRecord<T>> {
        let kind = self.kernel.kind;
        let eval = match self.pending.take() {
            Some(e) => e,
            None => self.target.stochastic_gradient(&self.state.x, rng)?,
        };
        let multiplier = if kind.is_contour() {
            let j = self.partition.index_of(eval.energy_scaled)?;
            self.partition
                .multiplier_unchecked(&self.theta, j, self.kernel.zeta, self.kernel.temperature)
        } else {
            T::one()
        };
        move_state(&mut self.state, &eval, self.target.scale(), multiplier, &self.kernel, rng)?;

        let next = self.target.stochastic_gradient(&self.state.x, rng)?;
        // A finite point can still overflow the energy or its gradient.
        if !next.energy_scaled.is_finite() || !all_finite(&next.grad) {
            return Err(Error::Divergence { step: self.state.k });
        }
        let j_tilde = self.partition.index_of(next.energy_scaled)?;
        let mut clamped = false;
        if kind.adapts_theta() {
            let omega = self.schedule.step_size(self.state.k);
            clamped = self.theta.apply_regularized_update(j_tilde, omega, self.kernel.zeta, self.rho)?;
        }
        let theta_j = self.theta.get(j_tilde);
        let importance_weight = if kind.is_contour() {
            theta_j.powf(self.kernel.zeta)
        } else {
            T::one()
        };
        let record = StepRecord {
            step: self.state.k,
            x: self.state.x.clone(),
            energy_scaled: next.energy_scaled,
            j_tilde,
            multiplier,
            theta_j,
            importance_weight,
            clamped,
        };
        self.pending = Some(next);
        Ok(record)
    }

    /// Runs `steps` iterations, handing every record to `sink`.
    pub fn run<R: Rng + ?Sized, S: RecordSink<T>>(&mut self, steps: u64, rng: &mut R, sink: &mut S) -> Result<()> {
        for _ in 0..steps {
            let rec = self.advance(rng)?;
            sink.accept(&rec)?;
        }
        Ok(())
    }
}

/// Runs the adaptive loop for `steps` iterations, emitting one record every `thinning` steps.
#[allow(clippy::too_many_arguments)]
pub fn csgld_iterate<T: Real, R: Rng + ?Sized, S: RecordSink<T>>(
    initial: ChainState<T>,
    theta0: ThetaEstimate<T>,
    steps: u64,
    thinning: u64,
    target: &TargetSpec<T>,
    partition: &EnergyPartition<T>,
    kernel: &KernelConfig<T>,
    schedule: &StepSchedule<T>,
    rho: T,
    rng: &mut R,
    sink: &mut S,
) -> Result<(ChainState<T>, ThetaEstimate<T>)> {
    if steps == 0 || thinning == 0 {
        return Err(invalid_input("steps and thinning must be positive"));
    }
    let mut chain = Chain::new(target, partition, *kernel, *schedule, rho, initial, theta0)?;
    let mut thinned = Thinned { inner: sink, every: thinning };
    chain.run(steps, rng, &mut thinned)?;
    Ok(chain.into_parts())
}

impl<T, S: RecordSink<T> + ?Sized> RecordSink<T> for &mut S {
    fn accept(&mut self, record: &StepRecord<T>) -> Result<()> {
        (**self).accept(record)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::target::{GaussianMixture, MixtureComponent};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn standard_normal_target(noise: f64) -> TargetSpec<f64> {
        let mix = GaussianMixture::new(vec![MixtureComponent {
            weight: 1.0,
            mean: vec![0.0],
            std: 1.0,
        }])
        .unwrap();
        TargetSpec::mixture(mix, 1.0, noise).unwrap()
    }

    fn partition() -> EnergyPartition<f64> {
        EnergyPartition::new(50, 2.0, 1.0).unwrap()
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let t = TargetSpec::<f64>::bimodal_reference();
        let cfg = KernelConfig::new(KernelKind::Sgld, 0.0, 0.0, 1.0).unwrap();
        let s = ChainState::new(vec![1.7]);
        let next = sgld_step(&s, &t, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(next.x, s.x);
        assert_eq!(next.k, 1);
    }

    #[test]
    fn zero_temperature_is_gradient_descent() {
        let t = standard_normal_target(0.0);
        let cfg = KernelConfig::new(KernelKind::Sgld, 0.1, 0.0, 0.0).unwrap();
        let s = ChainState::new(vec![3.0]);
        let next = sgld_step(&s, &t, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!((next.x[0] - 0.9 * 3.0).abs() < 1e-15);
    }

    #[test]
    fn wrong_kernel_kind_rejected() {
        let t = TargetSpec::<f64>::bimodal_reference();
        let cfg = KernelConfig::new(KernelKind::Csgld, 0.1, 0.75, 1.0).unwrap();
        let s = ChainState::new(vec![0.0]);
        assert!(sgld_step(&s, &t, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).is_err());
        let with_v = ChainState::with_momentum(vec![0.0]);
        let cfg = KernelConfig::new(KernelKind::Sgld, 0.1, 0.75, 1.0).unwrap();
        assert!(sgld_step(&with_v, &t, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).is_err());
    }

    #[test]
    fn uniform_theta_csgld_matches_sgld_bitwise() {
        let t = TargetSpec::<f64>::bimodal_reference();
        let p = partition();
        let theta = ThetaEstimate::uniform(50);
        let sg = KernelConfig::new(KernelKind::Sgld, 0.1, 0.75, 1.0).unwrap();
        let cs = sg.with_kind(KernelKind::Csgld);
        let mut a = ChainState::new(vec![0.3]);
        let mut b = a.clone();
        let mut ra = ChaCha8Rng::seed_from_u64(5);
        let mut rb = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            a = sgld_step(&a, &t, &sg, &mut ra).unwrap();
            let (nb, info) = csgld_step(&b, &theta, &p, &t, &cs, &mut rb).unwrap();
            assert_eq!(info.multiplier, 1.0);
            b = nb;
            assert_eq!(a.x[0].to_bits(), b.x[0].to_bits());
        }
    }

    #[test]
    fn frozen_theta_csgld_matches_ksgld() {
        let t = TargetSpec::<f64>::bimodal_reference();
        let p = partition();
        let theta = ThetaEstimate::from_weights((1..=50).map(|i| (-0.3 * i as f64).exp()).collect()).unwrap();
        let cs = KernelConfig::new(KernelKind::Csgld, 0.1, 0.75, 1.0).unwrap();
        let ks = cs.with_kind(KernelKind::Ksgld);
        let frozen = StepSchedule::new(0.0, 0.6, 100.0).unwrap();
        let x0 = ChainState::new(vec![-2.0]);
        let mut a = Chain::new(&t, &p, cs, frozen, 0.0, x0.clone(), theta.clone()).unwrap();
        let mut b = Chain::new(&t, &p, ks, StepSchedule::reference(), 0.0, x0, theta.clone()).unwrap();
        let mut ra = ChaCha8Rng::seed_from_u64(8);
        let mut rb = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..2000 {
            let (ra_, rb_) = (a.advance(&mut ra).unwrap(), b.advance(&mut rb).unwrap());
            assert_eq!(ra_, rb_);
        }
        assert_eq!(a.theta(), &theta);
    }

    #[test]
    fn region_one_multiplier_is_one() {
        let t = TargetSpec::<f64>::bimodal_reference();
        let p = partition();
        let theta = ThetaEstimate::from_weights((1..=50).map(|i| 1.0 / i as f64).collect()).unwrap();
        let cfg = KernelConfig::new(KernelKind::Csgld, 0.1, 0.75, 1.0).unwrap();
        let s = ChainState::new(vec![4.0]);
        let (_, info) = csgld_step(&s, &theta, &p, &t, &cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(info.j_tilde, 1);
        assert_eq!(info.multiplier, 1.0);
    }

    #[test]
    fn negative_multiplier_moves_uphill() {
        let mut t = TargetSpec::<f64>::bimodal_reference();
        t.gradient_noise_sigma = 0.0;
        let p = partition();
        // U(6) ≈ 3.43 lies in region 3; θ(3) ≪ θ(2) makes the bracket negative.
        let mut w = vec![1e-3; 50];
        w[1] = 0.9;
        let theta = ThetaEstimate::from_weights(w).unwrap();
        let cs = KernelConfig::new(KernelKind::Csgld, 0.01, 0.75, 1.0).unwrap();
        let sg = cs.with_kind(KernelKind::Sgld);
        let s = ChainState::new(vec![6.0]);
        let (next, info) = csgld_step(&s, &theta, &p, &t, &cs, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let plain = sgld_step(&s, &t, &sg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(info.j_tilde, 3);
        assert!(info.multiplier < 0.0);
        // Same noise draw, so the difference isolates the drift terms.
        let g = t.energy_and_gradient(&s.x).unwrap().1[0];
        assert!(g > 0.0);
        let drift = next.x[0] - plain.x[0] - 0.01 * g;
        assert!((drift + 0.01 * info.multiplier * g).abs() < 1e-12);
        assert!(drift > 0.0);
    }

    #[test]
    fn momentum_zero_learning_rate_decays() {
        let t = TargetSpec::<f64>::bimodal_reference();
        let cfg = KernelConfig::new(KernelKind::Sghmc, 0.0, 0.0, 1.0)
            .unwrap()
            .with_momentum(0.9)
            .unwrap();
        let s = ChainState {
            x: vec![1.0],
            v: Some(vec![2.0]),
            k: 0,
        };
        let next = sghmc_step(&s, &t, &cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let v = next.v.as_ref().unwrap()[0];
        assert!((v - 1.8).abs() < 1e-15);
        assert!((next.x[0] - 2.8).abs() < 1e-15);
    }

    #[test]
    fn momentum_zero_beta_matches_langevin() {
        let t = TargetSpec::<f64>::bimodal_reference();
        let p = partition();
        let theta = ThetaEstimate::from_weights((1..=50).map(|i| (-(i as f64)).exp()).collect()).unwrap();
        let lang = KernelConfig::new(KernelKind::Csgld, 0.1, 0.75, 1.0).unwrap();
        let hmc = lang.with_kind(KernelKind::Csghmc);
        let mut a = ChainState::new(vec![0.5]);
        let mut b = ChainState::with_momentum(vec![0.5]);
        let mut ra = ChaCha8Rng::seed_from_u64(8);
        let mut rb = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            a = csgld_step(&a, &theta, &p, &t, &lang, &mut ra).unwrap().0;
            b = csghmc_step(&b, &theta, &p, &t, &hmc, &mut rb).unwrap().0;
            assert!((a.x[0] - b.x[0]).abs() < 1e-9 * (1.0 + a.x[0].abs()));
        }
    }

    #[test]
    fn divergence_reports_step() {
        let t = standard_normal_target(0.0);
        // ε = 3 makes x ← -2x until the arithmetic overflows.
        let cfg = KernelConfig::new(KernelKind::Sgld, 3.0, 0.0, 0.0).unwrap();
        let mut s = ChainState::new(vec![1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = loop {
            match sgld_step(&s, &t, &cfg, &mut rng) {
                Ok(n) => s = n,
                Err(e) => break e,
            }
        };
        assert!(s.k > 100);
        match err {
            Error::Divergence { step } => assert_eq!(step, s.k + 1),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn iterate_thinning_and_simplex() {
        let t = TargetSpec::<f64>::bimodal_reference();
        let p = partition();
        let cfg = KernelConfig::new(KernelKind::Csgld, 0.1, 0.75, 1.0).unwrap();
        let mut rows = Vec::new();
        let (state, theta) = csgld_iterate(
            ChainState::new(vec![0.0]),
            ThetaEstimate::uniform(50),
            100,
            10,
            &t,
            &p,
            &cfg,
            &StepSchedule::reference(),
            0.0,
            &mut ChaCha8Rng::seed_from_u64(4),
            &mut rows,
        )
        .unwrap();
        assert_eq!(rows.len(), 10);
        assert_eq!(rows.last().unwrap().step, 100);
        assert_eq!(state.k, 100);
        assert!((theta.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_iteration_updates_theta_once() {
        let t = TargetSpec::<f64>::bimodal_reference();
        let p = partition();
        let cfg = KernelConfig::new(KernelKind::Csgld, 0.1, 0.75, 1.0).unwrap();
        let sched = StepSchedule::reference();
        let theta0 = ThetaEstimate::uniform(50);
        let mut rows = Vec::new();
        let (state, theta) = csgld_iterate(
            ChainState::new(vec![0.0]),
            theta0.clone(),
            1,
            1,
            &t,
            &p,
            &cfg,
            &sched,
            0.0,
            &mut ChaCha8Rng::seed_from_u64(4),
            &mut rows,
        )
        .unwrap();
        let j = rows[0].j_tilde;
        assert_eq!(j, p.index_of(t.energy(&state.x).unwrap()).unwrap());
        let expect = theta0.sa_update(j, sched.step_size(1), 0.75).unwrap();
        assert_eq!(theta, expect);
    }
}
