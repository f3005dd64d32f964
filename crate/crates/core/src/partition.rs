//! Energy-space partition `X_1, …, X_m` and the interpolated weight function `Ψ_θ`.
//!
//! Region `i` holds the points whose energy satisfies `u_{i-1} < U(x) ≤ u_i`, with
//! `u_0 = -∞`, `u_m = +∞` and uniform spacing `u_i = u_1 + (i-1)·Δu`. Region indices are
//! 1-based throughout the public API.

use crate::error::{invalid_input, Error, Result};
use crate::scalar::Real;
use crate::target::GradientEval;
use crate::theta::ThetaEstimate;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyPartition<T> {
    m: usize,
    u1: T,
    delta_u: T,
}

impl<T: Real> EnergyPartition<T> {
    pub fn new(m: usize, u1: T, delta_u: T) -> Result<Self> {
        if m == 0 {
            return Err(invalid_input("partition needs at least one region"));
        }
        if !u1.is_finite() {
            return Err(invalid_input("first boundary must be finite"));
        }
        if !(delta_u > T::zero()) || !delta_u.is_finite() {
            return Err(invalid_input("bandwidth must be positive"));
        }
        let p = Self { m, u1, delta_u };
        // Boundaries must stay strictly increasing at this precision.
        if m > 2 && !(p.boundary(m - 1) > p.boundary(m - 2)) {
            return Err(invalid_input("bandwidth too small for the boundary magnitude"));
        }
        Ok(p)
    }

    pub fn regions(&self) -> usize {
        self.m
    }

    pub fn first_boundary(&self) -> T {
        self.u1
    }

    pub fn bandwidth(&self) -> T {
        self.delta_u
    }

    /// `u_i` for `0 ≤ i ≤ m`, with `u_0 = -∞` and `u_m = +∞`.
    pub fn boundary(&self, i: usize) -> T {
        if i == 0 {
            T::neg_infinity()
        } else if i >= self.m {
            T::infinity()
        } else {
            self.u1 + T::lit((i - 1) as f64) * self.delta_u
        }
    }

    /// `J(u)`: the unique `j` with `u_{j-1} < u ≤ u_j`.
    pub fn index_of(&self, energy: T) -> Result<usize> {
        if !energy.is_finite() {
            return Err(invalid_input("energy must be finite"));
        }
        Ok(self.index_unchecked(energy))
    }

    pub(crate) fn index_unchecked(&self, energy: T) -> usize {
        let m = self.m;
        let steps = ((energy - self.u1) / self.delta_u).ceil();
        let mut j = if steps < T::zero() {
            1
        } else {
            // +1 shift: `energy ≤ u1` is region 1.
            (steps.to_f64_lossy().min((m + 1) as f64) as usize + 1).min(m)
        };
        // Repair rounding in the division so membership agrees with `boundary()`.
        while j < m && energy > self.boundary(j) {
            j += 1;
        }
        while j > 1 && energy <= self.boundary(j - 1) {
            j -= 1;
        }
        j
    }

    /// `J̃(x)`: region of the rescaled mini-batch energy `(N/n)·Ũ(x)`.
    pub fn stochastic_index(&self, eval: &GradientEval<T>) -> Result<usize> {
        self.index_of(eval.energy_scaled)
    }

    fn check_theta(&self, theta: &ThetaEstimate<T>) -> Result<()> {
        if theta.len() != self.m {
            return Err(invalid_input(format!(
                "theta has {} components, partition has {} regions",
                theta.len(),
                self.m
            )));
        }
        if let Some(bad) = theta.values().iter().position(|v| !(*v > T::zero())) {
            return Err(Error::InvalidState(format!(
                "theta component {} is not strictly positive",
                bad + 1
            )));
        }
        Ok(())
    }

    /// `Ψ_θ(u)`: log-linear interpolation from `θ(i-1)` at `u_{i-1}` to `θ(i)` at `u_i`.
    ///
    /// `θ(0) := θ(1)`, so `Ψ` is constant on region 1; past `u_{m-1}` the interpolation
    /// runs over one more bandwidth and then stays at `θ(m)`.
    pub fn psi(&self, theta: &ThetaEstimate<T>, u: T) -> Result<T> {
        self.check_theta(theta)?;
        if !u.is_finite() {
            return Err(invalid_input("energy must be finite"));
        }
        Ok(self.psi_unchecked(theta, u))
    }

    pub(crate) fn psi_unchecked(&self, theta: &ThetaEstimate<T>, u: T) -> T {
        self.ln_psi_unchecked(theta, u).exp()
    }

    pub(crate) fn ln_psi_unchecked(&self, theta: &ThetaEstimate<T>, u: T) -> T {
        let j = self.index_unchecked(u);
        if j == 1 {
            return theta.ln(1);
        }
        let lower = self.boundary(j - 1);
        let t = ((u - lower) / self.delta_u).min(T::one());
        let lo = theta.ln(j - 1);
        lo + (theta.ln(j) - lo) * t
    }

    /// The bracket `1 + ζτ·(log θ(j) - log θ((j-1)∨1))/Δu` scaling `∇Ũ`. Negative values push
    /// the sampler uphill.
    pub fn grad_multiplier(&self, theta: &ThetaEstimate<T>, j: usize, zeta: T, tau: T) -> Result<T> {
        if j == 0 || j > self.m {
            return Err(invalid_input(format!("region index {j} outside 1..={}", self.m)));
        }
        self.check_theta(theta)?;
        Ok(self.multiplier_unchecked(theta, j, zeta, tau))
    }

    #[inline]
    pub(crate) fn multiplier_unchecked(&self, theta: &ThetaEstimate<T>, j: usize, zeta: T, tau: T) -> T {
        let prev = if j > 1 { j - 1 } else { 1 };
        T::one() + zeta * tau * (theta.ln(j) - theta.ln(prev)) / self.delta_u
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p50() -> EnergyPartition<f64> {
        EnergyPartition::new(50, 1.0, 1.0).unwrap()
    }

    #[test]
    fn index_examples() {
        let p = p50();
        assert_eq!(p.index_of(0.5).unwrap(), 1);
        assert_eq!(p.index_of(1.0).unwrap(), 1);
        assert_eq!(p.index_of(3.0).unwrap(), 3);
        assert_eq!(p.index_of(3.0 + 1e-12).unwrap(), 4);
        assert_eq!(p.index_of(1e6).unwrap(), 50);
        assert_eq!(p.index_of(-1e300).unwrap(), 1);
        assert_eq!(p.index_of(49.0).unwrap(), 49);
        assert_eq!(p.index_of(49.5).unwrap(), 50);
        assert!(p.index_of(f64::NAN).is_err());
        assert!(p.index_of(f64::INFINITY).is_err());
    }

    #[test]
    fn index_respects_boundaries_with_awkward_bandwidth() {
        let p = EnergyPartition::<f64>::new(40, -3.3, 0.1).unwrap();
        for i in 1..40 {
            let b = p.boundary(i);
            assert_eq!(p.index_of(b).unwrap(), i, "boundary {i}");
            assert_eq!(p.index_of(b.next_up()).unwrap(), i + 1);
        }
    }

    #[test]
    fn single_region_partition() {
        let p = EnergyPartition::new(1, 0.0, 1.0).unwrap();
        assert_eq!(p.index_of(-5.0).unwrap(), 1);
        assert_eq!(p.index_of(5.0).unwrap(), 1);
        let th = ThetaEstimate::uniform(1);
        assert_eq!(p.grad_multiplier(&th, 1, 0.75, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn psi_examples() {
        let p = EnergyPartition::new(3, 0.0, 1.0).unwrap();
        let th = ThetaEstimate::from_values(vec![0.5, 0.25, 0.25]).unwrap();
        // Region 2 is (0, 1]; midway is 0.5.
        let v = p.psi(&th, 0.5).unwrap();
        assert!((v - 0.5 / 2f64.sqrt()).abs() < 1e-12);
        assert!((v - 0.35355).abs() < 1e-5);
        assert!((p.psi(&th, 1.0).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(p.psi(&th, -4.0).unwrap(), 0.5);
        assert!((p.psi(&th, 100.0).unwrap() - 0.25).abs() < 1e-15);

        let uni = ThetaEstimate::uniform(3);
        for u in [-2.0, 0.3, 1.7, 9.0] {
            assert!((p.psi(&uni, u).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn psi_rejects_nonpositive_theta() {
        let p = EnergyPartition::new(2, 0.0, 1.0).unwrap();
        let th = ThetaEstimate::from_raw_unchecked(vec![1.0, 0.0]);
        assert!(matches!(p.psi(&th, 0.5), Err(Error::InvalidState(_))));
    }

    #[test]
    fn multiplier_examples() {
        let p = EnergyPartition::new(3, 0.0, 1.0).unwrap();
        let th = ThetaEstimate::from_values(vec![0.1, 0.2, 0.7]).unwrap();
        let m = p.grad_multiplier(&th, 2, 0.75, 1.0).unwrap();
        assert!((m - (1.0 + 0.75 * 2f64.ln())).abs() < 1e-12);
        assert!((m - 1.5199).abs() < 1e-4);
        assert_eq!(p.grad_multiplier(&th, 1, 0.75, 1.0).unwrap(), 1.0);
        let uni = ThetaEstimate::uniform(3);
        for j in 1..=3 {
            assert_eq!(p.grad_multiplier(&uni, j, 3.0, 2.0).unwrap(), 1.0);
        }
        assert!(p.grad_multiplier(&th, 0, 0.75, 1.0).is_err());
        assert!(p.grad_multiplier(&th, 4, 0.75, 1.0).is_err());
    }

    fn random_theta() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.01f64..1.0, 6)
    }

    proptest! {
        #[test]
        fn psi_continuous_at_boundaries(raw in random_theta()) {
            let th = ThetaEstimate::from_weights(raw).unwrap();
            let p = EnergyPartition::<f64>::new(6, 0.0, 1.0).unwrap();
            for i in 1..6 {
                let b = p.boundary(i);
                let left = p.psi(&th, b - 1e-9).unwrap();
                let at = p.psi(&th, b).unwrap();
                prop_assert!((left - at).abs() < 1e-6 * th.get(i));
                prop_assert!((at - th.get(i)).abs() < 1e-12);
            }
        }

        #[test]
        fn psi_between_neighbours(raw in random_theta(), frac in 0.0f64..1.0) {
            let th = ThetaEstimate::from_weights(raw).unwrap();
            let p = EnergyPartition::<f64>::new(6, 0.0, 1.0).unwrap();
            for i in 2..=6 {
                let u = p.boundary(i - 1) + frac;
                let v = p.psi(&th, u).unwrap();
                let (a, b) = (th.get(i - 1), th.get(i));
                prop_assert!(v >= a.min(b) * (1.0 - 1e-12) && v <= a.max(b) * (1.0 + 1e-12));
            }
        }

        #[test]
        fn log_slope_matches_multiplier(raw in random_theta(), frac in 0.1f64..0.9, zeta in 0.0f64..3.0) {
            let th = ThetaEstimate::from_weights(raw).unwrap();
            let p = EnergyPartition::<f64>::new(6, 0.0, 1.0).unwrap();
            let h = 1e-5;
            for j in 1..=5 {
                let u = p.boundary(j - 1).max(-1.0) + frac;
                let slope = (p.psi(&th, u + h).unwrap().ln() - p.psi(&th, u - h).unwrap().ln()) / (2.0 * h);
                let prev = if j > 1 { j - 1 } else { 1 };
                let exact = th.get(j).ln() - th.get(prev).ln();
                prop_assert!((slope - exact).abs() < 1e-6);
                let mult = p.grad_multiplier(&th, j, zeta, 1.0).unwrap();
                prop_assert!((mult - (1.0 + zeta * slope)).abs() < 1e-8);
            }
        }
    }
}
