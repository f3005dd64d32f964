//! The simplex estimate `θ` of subregion probabilities and its stochastic-approximation update.

use crate::error::{invalid_input, Error, Result};
use crate::scalar::Real;

/// Smallest value any component of `θ` may take.
pub const POSITIVITY_FLOOR: f64 = 1e-12;

/// Tolerance on `Σθ(i) = 1` accepted by [`ThetaEstimate::from_values`].
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// A point in the interior of the probability simplex, stored in the plain domain.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaEstimate<T> {
    values: Vec<T>,
}

impl<T: Real> ThetaEstimate<T> {
    /// `θ_0(i) = 1/m`.
    pub fn uniform(m: usize) -> Self {
        assert!(m > 0, "theta needs at least one component");
        let v = T::one() / T::lit(m as f64);
        Self { values: vec![v; m] }
    }

    /// Accepts a vector already on the simplex (to within [`SIMPLEX_TOLERANCE`]).
    pub fn from_values(values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid_input("theta needs at least one component"));
        }
        if let Some(i) = values.iter().position(|v| !(*v > T::zero()) || !v.is_finite()) {
            return Err(Error::InvalidState(format!(
                "theta component {} is not a positive finite number",
                i + 1
            )));
        }
        let sum: T = values.iter().copied().sum();
        if (sum - T::one()).abs() > T::lit(SIMPLEX_TOLERANCE) {
            return Err(Error::InvalidState(format!("theta sums to {sum}, not 1")));
        }
        Ok(Self { values })
    }

    /// Normalizes nonnegative weights onto the simplex, flooring at [`POSITIVITY_FLOOR`].
    pub fn from_weights(weights: Vec<T>) -> Result<Self> {
        if weights.is_empty() {
            return Err(invalid_input("theta needs at least one component"));
        }
        if weights.iter().any(|w| !(*w >= T::zero()) || !w.is_finite()) {
            return Err(invalid_input("weights must be nonnegative and finite"));
        }
        let total: T = weights.iter().copied().sum();
        if !(total > T::zero()) {
            return Err(invalid_input("weights sum to zero"));
        }
        let mut theta = Self {
            values: weights.into_iter().map(|w| w / total).collect(),
        };
        theta.enforce_floor();
        Ok(theta)
    }

    /// No validation; for tests exercising invalid states.
    #[doc(hidden)]
    pub fn from_raw_unchecked(values: Vec<T>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `θ(j)`, 1-based.
    #[inline]
    pub fn get(&self, j: usize) -> T {
        self.values[j - 1]
    }

    #[inline]
    pub fn ln(&self, j: usize) -> T {
        self.values[j - 1].ln()
    }

    pub fn sum(&self) -> T {
        self.values.iter().copied().sum()
    }

    /// Dynamic importance weight `θ(j)^ζ`.
    #[inline]
    pub fn importance_weight(&self, j: usize, zeta: T) -> T {
        self.get(j).powf(zeta)
    }

    /// Returns true when some component had to be lifted to the floor.
    fn enforce_floor(&mut self) -> bool {
        let floor = T::lit(POSITIVITY_FLOOR);
        let mut clamped = false;
        for v in self.values.iter_mut() {
            if !(*v >= floor) {
                *v = floor;
                clamped = true;
            }
        }
        if clamped {
            let total = self.sum();
            for v in self.values.iter_mut() {
                *v /= total;
            }
        }
        clamped
    }

    fn check_step(&self, j: usize, omega: T, zeta: T) -> Result<()> {
        if j == 0 || j > self.len() {
            return Err(invalid_input(format!("region index {j} outside 1..={}", self.len())));
        }
        if !(omega >= T::zero() && omega < T::one()) {
            return Err(invalid_input(format!("step size {omega} outside [0, 1)")));
        }
        if !(zeta >= T::zero()) || !zeta.is_finite() {
            return Err(invalid_input("zeta must be nonnegative"));
        }
        Ok(())
    }

    /// `H̃_i = θ(j)^ζ (1_{i=j} - θ(i))`, the increment direction of one SA step.
    pub fn random_field(&self, j: usize, zeta: T) -> Result<Vec<T>> {
        if j == 0 || j > self.len() {
            return Err(invalid_input(format!("region index {j} outside 1..={}", self.len())));
        }
        let g = self.importance_weight(j, zeta);
        Ok(self
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| g * (indicator::<T>(i + 1 == j) - *v))
            .collect())
    }

    /// In-place `θ(i) += ω θ(j)^ζ (1_{i=j} - θ(i))`.
    ///
    /// The update preserves `Σθ = 1` algebraically. Returns true if the positivity floor had to
    /// be enforced afterwards (which renormalizes).
    pub fn apply_update(&mut self, j: usize, omega: T, zeta: T) -> Result<bool> {
        self.check_step(j, omega, zeta)?;
        let step = omega * self.importance_weight(j, zeta);
        for (i, v) in self.values.iter_mut().enumerate() {
            *v += step * (indicator::<T>(i + 1 == j) - *v);
        }
        Ok(self.enforce_floor())
    }

    pub fn sa_update(&self, j: usize, omega: T, zeta: T) -> Result<Self> {
        let mut next = self.clone();
        next.apply_update(j, omega, zeta)?;
        Ok(next)
    }

    /// Update with a decaying prior count:
    /// `θ(i) += ω (θ(j)^ζ + ω ρ 1_{i≥j}) (1_{i=j} - θ(i))`, then renormalized.
    ///
    /// The extra term moves mass by `O(ω²)` and does not preserve the simplex sum when `j > 1`,
    /// hence the renormalization. With `ρ = 0` this is exactly [`Self::apply_update`].
    pub fn apply_regularized_update(&mut self, j: usize, omega: T, zeta: T, rho: T) -> Result<bool> {
        if !(rho >= T::zero()) || !rho.is_finite() {
            return Err(invalid_input("rho must be nonnegative"));
        }
        if rho == T::zero() {
            return self.apply_update(j, omega, zeta);
        }
        self.check_step(j, omega, zeta)?;
        let g = self.importance_weight(j, zeta);
        for (i, v) in self.values.iter_mut().enumerate() {
            let prior = if i + 1 >= j { omega * rho } else { T::zero() };
            *v += omega * (g + prior) * (indicator::<T>(i + 1 == j) - *v);
        }
        let clamped = self.enforce_floor();
        if !clamped {
            let total = self.sum();
            for v in self.values.iter_mut() {
                *v /= total;
            }
        }
        Ok(clamped)
    }

    pub fn sa_update_regularized(&self, j: usize, omega: T, zeta: T, rho: T) -> Result<Self> {
        let mut next = self.clone();
        next.apply_regularized_update(j, omega, zeta, rho)?;
        Ok(next)
    }

    pub fn l1_distance(&self, other: &Self) -> T {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (*a - *b).abs())
            .sum()
    }

    pub fn l2_distance(&self, other: &Self) -> T {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (*a - *b) * (*a - *b))
            .sum::<T>()
            .sqrt()
    }
}

#[inline]
fn indicator<T: Real>(b: bool) -> T {
    if b {
        T::one()
    } else {
        T::zero()
    }
}

/// Robbins–Monro step sizes `ω_k = A / (k^α + B)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSchedule<T> {
    a: T,
    alpha: T,
    b: T,
}

impl<T: Real> StepSchedule<T> {
    /// `A = 0` is accepted and freezes `θ`. `ω_1 = A/(1+B)` must be below one.
    pub fn new(a: T, alpha: T, b: T) -> Result<Self> {
        if !(a >= T::zero()) || !a.is_finite() {
            return Err(invalid_input("schedule A must be nonnegative"));
        }
        if !(alpha > T::lit(0.5) && alpha <= T::one()) {
            return Err(invalid_input(format!("schedule alpha {alpha} outside (0.5, 1]")));
        }
        if !(b >= T::zero()) || !b.is_finite() {
            return Err(invalid_input("schedule B must be nonnegative"));
        }
        let s = Self { a, alpha, b };
        if !(s.step_size(1) < T::one()) {
            return Err(invalid_input("first step size A/(1+B) must be below 1"));
        }
        Ok(s)
    }

    /// `ω_k = 1/(k^0.6 + 100)`.
    pub fn reference() -> Self {
        Self::new(T::one(), T::lit(0.6), T::lit(100.0)).expect("reference schedule is valid")
    }

    pub fn a(&self) -> T {
        self.a
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn b(&self) -> T {
        self.b
    }

    #[inline]
    pub fn step_size(&self, k: u64) -> T {
        let k = T::lit(k.max(1) as f64);
        self.a / (k.powf(self.alpha) + self.b)
    }
}
