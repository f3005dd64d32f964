//! Plain and importance-weighted averaging estimators.
//!
//! The weighted estimator is `Σ θ_k(J̃(x_k))^ζ f(x_k) / Σ θ_k(J̃(x_k))^ζ`, where each weight
//! is the snapshot carried by the record for `x_k`.

use crate::error::{invalid_input, Result};
use crate::scalar::Real;
use crate::theta::ThetaEstimate;

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum<T> {
    sum: T,
    comp: T,
}

impl<T: Real> CompensatedSum<T> {
    pub fn new() -> Self {
        Self {
            sum: T::zero(),
            comp: T::zero(),
        }
    }

    #[inline]
    pub fn add(&mut self, v: T) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &Self) {
        self.add(other.sum);
        self.add(other.comp);
    }

    #[inline]
    pub fn value(&self) -> T {
        self.sum + self.comp
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WeightedAccumulator<T> {
    weighted_sum: CompensatedSum<T>,
    weight_sum: CompensatedSum<T>,
    count: u64,
}

impl<T: Real> WeightedAccumulator<T> {
    pub fn new() -> Self {
        Self {
            weighted_sum: CompensatedSum::new(),
            weight_sum: CompensatedSum::new(),
            count: 0,
        }
    }

    pub fn accumulate(&mut self, f_value: T, theta_weight: T) -> Result<()> {
        if !(theta_weight > T::zero()) || !theta_weight.is_finite() {
            return Err(invalid_input(format!("weight must be positive and finite, got {theta_weight}")));
        }
        if !f_value.is_finite() {
            return Err(invalid_input("f value must be finite"));
        }
        self.weighted_sum.add(theta_weight * f_value);
        self.weight_sum.add(theta_weight);
        self.count += 1;
        Ok(())
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn weighted_sum(&self) -> T {
        self.weighted_sum.value()
    }

    pub fn weight_sum(&self) -> T {
        self.weight_sum.value()
    }

    /// `None` before the first sample.
    pub fn estimate(&self) -> Option<T> {
        if self.count == 0 {
            None
        } else {
            Some(self.weighted_sum.value() / self.weight_sum.value())
        }
    }

    /// Pools another chain's sums.
    pub fn merge(&mut self, other: &Self) {
        self.weighted_sum.merge(&other.weighted_sum);
        self.weight_sum.merge(&other.weight_sum);
        self.count += other.count;
    }
}

pub fn plain_average<T: Real>(values: &[T]) -> Result<T> {
    if values.is_empty() {
        return Err(invalid_input("cannot average an empty sequence"));
    }
    let mut s = CompensatedSum::new();
    for &v in values {
        s.add(v);
    }
    Ok(s.value() / T::lit(values.len() as f64))
}

/// `Z_θ★ = Σ_i θ★(i)^{1-ζ}`.
pub fn z_theta_star<T: Real>(theta_star: &ThetaEstimate<T>, zeta: T) -> T {
    let e = T::one() - zeta;
    let mut s = CompensatedSum::new();
    for &v in theta_star.values() {
        s.add(v.powf(e));
    }
    s.value()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_examples() {
        let mut a = WeightedAccumulator::<f64>::new();
        assert_eq!(a.estimate(), None);
        a.accumulate(3.0, 0.2).unwrap();
        assert!((a.estimate().unwrap() - 3.0).abs() < 1e-15);

        let mut b = WeightedAccumulator::<f64>::new();
        b.accumulate(0.0, 1.0).unwrap();
        b.accumulate(10.0, 3.0).unwrap();
        assert!((b.estimate().unwrap() - 7.5).abs() < 1e-15);
        assert_eq!(b.count(), 2);
    }

    #[test]
    fn rejects_bad_weights() {
        let mut a = WeightedAccumulator::<f64>::new();
        assert!(a.accumulate(1.0, 0.0).is_err());
        assert!(a.accumulate(1.0, -1.0).is_err());
        assert!(a.accumulate(1.0, f64::NAN).is_err());
        assert_eq!(a.count(), 0);
    }

    #[test]
    fn plain_average_examples() {
        assert_eq!(plain_average(&[1.0, 2.0, 3.0]).unwrap(), 2.0);
        assert_eq!(plain_average(&[4.25; 17]).unwrap(), 4.25);
        assert!(plain_average::<f64>(&[]).is_err());
    }

    #[test]
    fn z_examples() {
        let th = ThetaEstimate::from_values(vec![0.75, 0.25]).unwrap();
        let z = z_theta_star(&th, 0.5);
        assert!((z - (0.75f64.sqrt() + 0.5)).abs() < 1e-15);
        assert!((z - 1.3660).abs() < 1e-4);
        let th = ThetaEstimate::<f64>::from_weights(vec![0.1, 0.3, 0.2, 0.4]).unwrap();
        assert!((z_theta_star(&th, 1.0) - 4.0).abs() < 1e-15);
        assert!((z_theta_star(&th, 0.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn compensation_recovers_small_terms() {
        let mut s = CompensatedSum::new();
        s.add(1e16);
        for _ in 0..1000 {
            s.add(1.0);
        }
        s.add(-1e16);
        assert_eq!(s.value(), 1000.0);
    }

    proptest! {
        #[test]
        fn unit_weights_match_plain_average(v in prop::collection::vec(-1e3f64..1e3, 1..200)) {
            let mut a = WeightedAccumulator::new();
            for &x in &v {
                a.accumulate(x, 1.0).unwrap();
            }
            let p = plain_average(&v).unwrap();
            prop_assert!((a.estimate().unwrap() - p).abs() < 1e-12 * (1.0 + p.abs()));
        }

        #[test]
        fn equal_weights_match_plain_average(v in prop::collection::vec(-1e3f64..1e3, 1..200), w in 1e-6f64..10.0) {
            let mut a = WeightedAccumulator::new();
            for &x in &v {
                a.accumulate(x, w).unwrap();
            }
            let p = plain_average(&v).unwrap();
            prop_assert!((a.estimate().unwrap() - p).abs() < 1e-10 * (1.0 + p.abs()));
        }

        #[test]
        fn translation_equivariance(
            pts in prop::collection::vec((-50.0f64..50.0, 1e-8f64..1.0), 1..100),
            c in -100.0f64..100.0,
        ) {
            let mut a = WeightedAccumulator::new();
            let mut b = WeightedAccumulator::<f64>::new();
            for &(f, w) in &pts {
                a.accumulate(f, w).unwrap();
                b.accumulate(f + c, w).unwrap();
            }
            let (ea, eb) = (a.estimate().unwrap(), b.estimate().unwrap());
            prop_assert!((eb - ea - c).abs() < 1e-9 * (1.0 + ea.abs() + c.abs()));
        }

        #[test]
        fn merge_equals_sequential(
            left in prop::collection::vec((-10.0f64..10.0, 1e-3f64..1.0), 0..50),
            right in prop::collection::vec((-10.0f64..10.0, 1e-3f64..1.0), 1..50),
        ) {
            let mut all = WeightedAccumulator::new();
            let mut l = WeightedAccumulator::new();
            let mut r = WeightedAccumulator::new();
            for &(f, w) in &left { all.accumulate(f, w).unwrap(); l.accumulate(f, w).unwrap(); }
            for &(f, w) in &right { all.accumulate(f, w).unwrap(); r.accumulate(f, w).unwrap(); }
            l.merge(&r);
            prop_assert_eq!(l.count(), all.count());
            prop_assert!((l.estimate().unwrap() - all.estimate().unwrap()).abs() < 1e-12);
        }
    }
}
