//! Energy functions `U(x)` with `π(x) ∝ exp(-U(x)/τ)` and their stochastic oracles.
//!
//! Two desk-scale targets are built in: an isotropic Gaussian mixture (exact
//! energy, optionally noisy gradients) and a synthetic Bayesian linear
//! regression whose energy is a sum over `N` data points, so mini-batch
//! subsampling and the `N/n` rescaling are exercised for real.
//!
//! Injected gradient noise is parameterised by its standard deviation: a
//! per-coordinate variance of 0.01 corresponds to `gradient_noise_sigma = 0.1`.

use rand::Rng;

use crate::error::{invalid_input, Result};
use crate::scalar::{all_finite, Real};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureComponent<T> {
    pub weight: T,
    pub mean: Vec<T>,
    pub std: T,
}

/// Mixture of isotropic Gaussians; `U(x) = -log p(x)` with `p` the normalized mixture pdf.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture<T> {
    components: Vec<MixtureComponent<T>>,
    dimension: usize,
}

impl<T: Real> GaussianMixture<T> {
    /// Weights must be positive; they are renormalized to sum to one.
    pub fn new(mut components: Vec<MixtureComponent<T>>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| invalid_input("mixture needs at least one component"))?;
        let dimension = first.mean.len();
        if dimension == 0 {
            return Err(invalid_input("mixture component has empty mean"));
        }
        let mut total = T::zero();
        for (k, c) in components.iter().enumerate() {
            if c.mean.len() != dimension {
                return Err(invalid_input(format!(
                    "component {k} has dimension {}, expected {dimension}",
                    c.mean.len()
                )));
            }
            if !(c.weight > T::zero()) || !c.weight.is_finite() {
                return Err(invalid_input(format!("component {k} weight must be positive")));
            }
            if !(c.std > T::zero()) || !c.std.is_finite() {
                return Err(invalid_input(format!("component {k} std must be positive")));
            }
            if !all_finite(&c.mean) {
                return Err(invalid_input(format!("component {k} mean is not finite")));
            }
            total += c.weight;
        }
        for c in components.iter_mut() {
            c.weight /= total;
        }
        Ok(Self {
            components,
            dimension,
        })
    }

    /// `0.4·N(-6, 1) + 0.6·N(4, 1)`, the one-dimensional bimodal benchmark.
    pub fn bimodal_reference() -> Self {
        Self::new(vec![
            MixtureComponent {
                weight: T::lit(0.4),
                mean: vec![T::lit(-6.0)],
                std: T::one(),
            },
            MixtureComponent {
                weight: T::lit(0.6),
                mean: vec![T::lit(4.0)],
                std: T::one(),
            },
        ])
        .expect("reference mixture is valid")
    }

    pub fn components(&self) -> &[MixtureComponent<T>] {
        &self.components
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Mixture mean `Σ_k w_k μ_k`.
    pub fn mean(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.dimension];
        for c in &self.components {
            for (o, m) in out.iter_mut().zip(&c.mean) {
                *o += c.weight * *m;
            }
        }
        out
    }

    fn log_term(&self, c: &MixtureComponent<T>, x: &[T]) -> T {
        let d = T::lit(self.dimension as f64);
        let sq: T = x
            .iter()
            .zip(&c.mean)
            .map(|(xi, mi)| (*xi - *mi) * (*xi - *mi))
            .sum();
        c.weight.ln() - sq / (T::lit(2.0) * c.std * c.std) - d * c.std.ln() - d * T::lit(0.5 * LN_2PI)
    }

    fn max_log_term(&self, x: &[T]) -> T {
        self.components
            .iter()
            .map(|c| self.log_term(c, x))
            .fold(T::neg_infinity(), T::max)
    }

    /// `U(x) = -log p(x)`, evaluated with log-sum-exp so it stays finite far in the tails.
    pub fn energy(&self, x: &[T]) -> T {
        let top = self.max_log_term(x);
        let s: T = self
            .components
            .iter()
            .map(|c| (self.log_term(c, x) - top).exp())
            .sum();
        -(top + s.ln())
    }

    /// Energy and exact gradient `∇U(x) = Σ_k r_k(x) (x - μ_k)/σ_k²`.
    pub fn energy_and_gradient(&self, x: &[T]) -> (T, Vec<T>) {
        let top = self.max_log_term(x);
        let mut s = T::zero();
        let mut grad = vec![T::zero(); self.dimension];
        for c in &self.components {
            let r = (self.log_term(c, x) - top).exp();
            s += r;
            let inv_var = (c.std * c.std).recip();
            for ((g, xi), mi) in grad.iter_mut().zip(x).zip(&c.mean) {
                *g += r * (*xi - *mi) * inv_var;
            }
        }
        for g in grad.iter_mut() {
            *g /= s;
        }
        (-(top + s.ln()), grad)
    }
}

/// Synthetic Bayesian linear regression `y_i = w·z_i + noise`, Gaussian prior on `w`.
///
/// `U(w) = Σ_i (y_i - w·z_i)² / (2σ²) + ‖w‖² / (2σ_p²)`. A mini-batch `B` of size `n`
/// yields `Ũ(w) = Σ_{i∈B} ℓ_i(w) + (n/N)·prior(w)`, so `(N/n)·Ũ` is unbiased for `U`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionData<T> {
    features: Vec<T>,
    responses: Vec<T>,
    dimension: usize,
    noise_std: T,
    prior_std: T,
}

impl<T: Real> RegressionData<T> {
    /// `features` is row-major `N × d`.
    pub fn new(
        features: Vec<T>,
        responses: Vec<T>,
        dimension: usize,
        noise_std: T,
        prior_std: T,
    ) -> Result<Self> {
        if dimension == 0 || responses.is_empty() {
            return Err(invalid_input("regression data must be non-empty"));
        }
        if features.len() != responses.len() * dimension {
            return Err(invalid_input(format!(
                "feature matrix has {} entries, expected {}×{dimension}",
                features.len(),
                responses.len()
            )));
        }
        if !(noise_std > T::zero()) || !(prior_std > T::zero()) {
            return Err(invalid_input("noise and prior std must be positive"));
        }
        if !all_finite(&features) || !all_finite(&responses) {
            return Err(invalid_input("regression data contains non-finite values"));
        }
        Ok(Self {
            features,
            responses,
            dimension,
            noise_std,
            prior_std,
        })
    }

    /// Features `z_i ~ N(0, I)`, true weights `w* ~ N(0, I)`, responses `w*·z_i + σ·ε_i`.
    pub fn synthetic<R: Rng + ?Sized>(
        data_size: usize,
        dimension: usize,
        noise_std: T,
        prior_std: T,
        rng: &mut R,
    ) -> Result<Self> {
        if data_size == 0 || dimension == 0 {
            return Err(invalid_input("data size and dimension must be positive"));
        }
        let truth: Vec<T> = (0..dimension).map(|_| T::standard_normal(rng)).collect();
        let mut features = Vec::with_capacity(data_size * dimension);
        let mut responses = Vec::with_capacity(data_size);
        for _ in 0..data_size {
            let row: Vec<T> = (0..dimension).map(|_| T::standard_normal(rng)).collect();
            let dot: T = row.iter().zip(&truth).map(|(a, b)| *a * *b).sum();
            responses.push(dot + noise_std * T::standard_normal(rng));
            features.extend(row);
        }
        Self::new(features, responses, dimension, noise_std, prior_std)
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    fn row(&self, i: usize) -> &[T] {
        &self.features[i * self.dimension..(i + 1) * self.dimension]
    }

    fn residual(&self, w: &[T], i: usize) -> T {
        let dot: T = self.row(i).iter().zip(w).map(|(a, b)| *a * *b).sum();
        self.responses[i] - dot
    }

    fn prior_energy(&self, w: &[T]) -> T {
        let sq: T = w.iter().map(|v| *v * *v).sum();
        sq / (T::lit(2.0) * self.prior_std * self.prior_std)
    }

    /// Data term plus `prior_fraction` times the prior term, over the given rows.
    fn partial(&self, w: &[T], rows: impl Iterator<Item = usize>, prior_fraction: T) -> (T, Vec<T>) {
        let inv_var = (self.noise_std * self.noise_std).recip();
        let mut energy = T::zero();
        let mut grad = vec![T::zero(); self.dimension];
        for i in rows {
            let r = self.residual(w, i);
            energy += r * r * T::lit(0.5) * inv_var;
            for (g, z) in grad.iter_mut().zip(self.row(i)) {
                *g -= r * *z * inv_var;
            }
        }
        energy += prior_fraction * self.prior_energy(w);
        let prior_inv_var = (self.prior_std * self.prior_std).recip();
        for (g, wi) in grad.iter_mut().zip(w) {
            *g += prior_fraction * *wi * prior_inv_var;
        }
        (energy, grad)
    }

    /// Closed-form posterior mean at τ = 1 (tempering leaves the mean unchanged).
    pub fn posterior_mean(&self) -> Vec<f64> {
        use nalgebra::{DMatrix, DVector};
        let d = self.dimension;
        let n = self.len();
        let z = DMatrix::from_fn(n, d, |i, j| self.features[i * d + j].to_f64_lossy());
        let y = DVector::from_fn(n, |i, _| self.responses[i].to_f64_lossy());
        let s2 = self.noise_std.to_f64_lossy().powi(2);
        let p2 = self.prior_std.to_f64_lossy().powi(2);
        let precision = z.transpose() * &z / s2 + DMatrix::identity(d, d) / p2;
        let rhs = z.transpose() * y / s2;
        let mean = precision
            .cholesky()
            .expect("posterior precision is positive definite")
            .solve(&rhs);
        mean.iter().copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TargetKind<T> {
    GaussianMixture(GaussianMixture<T>),
    SubsampledRegression(RegressionData<T>),
}

/// A target density together with the stochastic-gradient oracle settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSpec<T> {
    pub kind: TargetKind<T>,
    pub temperature: T,
    pub batch_size: usize,
    pub gradient_noise_sigma: T,
}

/// One call of the stochastic oracle at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEval<T> {
    /// `∇Ũ(x)`, already including any injected noise.
    pub grad: Vec<T>,
    /// `Ũ(x)`.
    pub energy_stochastic: T,
    /// `(N/n)·Ũ(x)`.
    pub energy_scaled: T,
}

impl<T: Real> TargetSpec<T> {
    pub fn mixture(mixture: GaussianMixture<T>, temperature: T, gradient_noise_sigma: T) -> Result<Self> {
        let spec = Self {
            kind: TargetKind::GaussianMixture(mixture),
            temperature,
            batch_size: 1,
            gradient_noise_sigma,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn regression(
        data: RegressionData<T>,
        batch_size: usize,
        temperature: T,
        gradient_noise_sigma: T,
    ) -> Result<Self> {
        let spec = Self {
            kind: TargetKind::SubsampledRegression(data),
            temperature,
            batch_size,
            gradient_noise_sigma,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// The bimodal mixture at τ = 1 with gradient noise std 0.1.
    pub fn bimodal_reference() -> Self {
        Self::mixture(GaussianMixture::bimodal_reference(), T::one(), T::lit(0.1))
            .expect("reference target is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > T::zero()) || !self.temperature.is_finite() {
            return Err(invalid_input("temperature must be positive"));
        }
        if !(self.gradient_noise_sigma >= T::zero()) || !self.gradient_noise_sigma.is_finite() {
            return Err(invalid_input("gradient noise sigma must be nonnegative"));
        }
        if self.batch_size == 0 || self.batch_size > self.data_size() {
            return Err(invalid_input(format!(
                "batch size {} must lie in 1..={}",
                self.batch_size,
                self.data_size()
            )));
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        match &self.kind {
            TargetKind::GaussianMixture(m) => m.dimension(),
            TargetKind::SubsampledRegression(r) => r.dimension(),
        }
    }

    /// `N`; 1 for analytic targets.
    pub fn data_size(&self) -> usize {
        match &self.kind {
            TargetKind::GaussianMixture(_) => 1,
            TargetKind::SubsampledRegression(r) => r.len(),
        }
    }

    /// The `N/n` factor.
    pub fn scale(&self) -> T {
        T::lit(self.data_size() as f64) / T::lit(self.batch_size as f64)
    }

    fn check_point(&self, x: &[T]) -> Result<()> {
        if x.len() != self.dimension() {
            return Err(invalid_input(format!(
                "point has length {}, target dimension is {}",
                x.len(),
                self.dimension()
            )));
        }
        if !all_finite(x) {
            return Err(invalid_input("point has non-finite coordinates"));
        }
        Ok(())
    }

    /// Full-data energy `U(x)`.
    pub fn energy(&self, x: &[T]) -> Result<T> {
        self.check_point(x)?;
        Ok(match &self.kind {
            TargetKind::GaussianMixture(m) => m.energy(x),
            TargetKind::SubsampledRegression(r) => r.partial(x, 0..r.len(), T::one()).0,
        })
    }

    /// Full-data energy and exact gradient, no injected noise.
    pub fn energy_and_gradient(&self, x: &[T]) -> Result<(T, Vec<T>)> {
        self.check_point(x)?;
        Ok(match &self.kind {
            TargetKind::GaussianMixture(m) => m.energy_and_gradient(x),
            TargetKind::SubsampledRegression(r) => r.partial(x, 0..r.len(), T::one()),
        })
    }

    /// Noise-free oracle output on an explicit mini-batch (ignored for analytic targets).
    ///
    /// Batch indices are summed in the order given; `stochastic_gradient` passes them sorted.
    pub fn batch_eval(&self, x: &[T], batch: &[usize]) -> Result<GradientEval<T>> {
        self.check_point(x)?;
        match &self.kind {
            TargetKind::GaussianMixture(m) => {
                let (energy, grad) = m.energy_and_gradient(x);
                Ok(GradientEval {
                    grad,
                    energy_stochastic: energy,
                    energy_scaled: energy,
                })
            }
            TargetKind::SubsampledRegression(r) => {
                if batch.len() != self.batch_size {
                    return Err(invalid_input(format!(
                        "batch has {} rows, expected {}",
                        batch.len(),
                        self.batch_size
                    )));
                }
                if let Some(bad) = batch.iter().find(|&&i| i >= r.len()) {
                    return Err(invalid_input(format!("batch index {bad} out of range")));
                }
                let fraction = T::lit(self.batch_size as f64) / T::lit(r.len() as f64);
                let (energy, grad) = r.partial(x, batch.iter().copied(), fraction);
                Ok(GradientEval {
                    grad,
                    energy_stochastic: energy,
                    energy_scaled: self.scale() * energy,
                })
            }
        }
    }

    /// Draw a mini-batch (without replacement) and evaluate the stochastic oracle.
    ///
    /// Gaussian noise with std `gradient_noise_sigma` is added to every gradient coordinate;
    /// energies are never perturbed.
    pub fn stochastic_gradient<R: Rng + ?Sized>(&self, x: &[T], rng: &mut R) -> Result<GradientEval<T>> {
        let mut eval = match &self.kind {
            TargetKind::GaussianMixture(_) => self.batch_eval(x, &[])?,
            TargetKind::SubsampledRegression(r) => {
                let mut batch = rand::seq::index::sample(rng, r.len(), self.batch_size).into_vec();
                batch.sort_unstable();
                self.batch_eval(x, &batch)?
            }
        };
        if self.gradient_noise_sigma > T::zero() {
            for g in eval.grad.iter_mut() {
                *g += self.gradient_noise_sigma * T::standard_normal(rng);
            }
        }
        Ok(eval)
    }

    /// Exact posterior mean when available in closed form.
    pub fn reference_mean(&self) -> Option<Vec<f64>> {
        match &self.kind {
            TargetKind::GaussianMixture(m) if self.temperature == T::one() => {
                Some(m.mean().into_iter().map(Real::to_f64_lossy).collect())
            }
            TargetKind::GaussianMixture(_) => None,
            TargetKind::SubsampledRegression(r) => Some(r.posterior_mean()),
        }
    }
}
