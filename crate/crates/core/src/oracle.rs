//! Quadrature ground truth for one-dimensional mixture targets.
//!
//! Integrals over a subregion `X_i` are computed with the composite trapezoid rule on a
//! uniform grid. Grid cells whose end points fall in different subregions are split by
//! bisection until each piece lies in a single subregion, so region masses converge at
//! the trapezoid rate instead of the first-order rate of naive binning.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use statrs::function::erf::erfc;

use crate::error::{invalid_input, Error, Result};
use crate::partition::EnergyPartition;
use crate::target::{TargetKind, TargetSpec};
use crate::theta::ThetaEstimate;

/// Largest π mass allowed outside the grid.
pub const TAIL_MASS_TOLERANCE: f64 = 1e-10;

const MIN_POINTS: usize = 1000;
const MAX_BISECTION_DEPTH: u32 = 40;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureGrid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl QuadratureGrid {
    pub fn new(lo: f64, hi: f64, points: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidGrid(format!("need finite lo < hi, got [{lo}, {hi}]")));
        }
        if points < MIN_POINTS {
            return Err(Error::InvalidGrid(format!("need at least {MIN_POINTS} points, got {points}")));
        }
        Ok(Self { lo, hi, points })
    }

    /// Covers every component mean by `12·σ·√τ` on both sides.
    pub fn covering(target: &TargetSpec<f64>, points: usize) -> Result<Self> {
        let mix = mixture_1d(target)?;
        let spread = target.temperature.sqrt() * 12.0;
        let lo = mix.iter().map(|c| c.1 - spread * c.2).fold(f64::INFINITY, f64::min);
        let hi = mix.iter().map(|c| c.1 + spread * c.2).fold(f64::NEG_INFINITY, f64::max);
        Self::new(lo, hi, points)
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.points - 1) as f64
    }

    /// Grid abscissae, computed as `lo + i·h` so the last point is `hi` up to rounding.
    pub fn abscissae(&self) -> Vec<f64> {
        let h = self.spacing();
        let mut xs: Vec<f64> = (0..self.points).map(|i| self.lo + i as f64 * h).collect();
        *xs.last_mut().expect("grid is nonempty") = self.hi;
        xs
    }

    pub fn doubled(&self) -> Self {
        Self {
            points: 2 * self.points - 1,
            ..*self
        }
    }
}

/// `(weight, mean, std)` per component.
fn mixture_1d(target: &TargetSpec<f64>) -> Result<Vec<(f64, f64, f64)>> {
    match &target.kind {
        TargetKind::GaussianMixture(m) if m.dimension() == 1 => {
            Ok(m.components().iter().map(|c| (c.weight, c.mean[0], c.std)).collect())
        }
        _ => Err(invalid_input("the quadrature oracle supports one-dimensional mixture targets only")),
    }
}

/// Quadrature nodes for region integrals, built once per target, partition and grid.
struct Profile {
    xs: Vec<f64>,
    us: Vec<f64>,
    /// `(region, U, coefficient)`: `∫_{X_i} e^{-(U-U_min)/τ} g(U) dx ≈ Σ coef·g(U)` over the
    /// nodes of region `i`.
    nodes: Vec<(usize, f64, f64)>,
    regions: usize,
}

impl Profile {
    fn build(target: &TargetSpec<f64>, p: &EnergyPartition<f64>, grid: &QuadratureGrid) -> Result<Self> {
        let comps = mixture_1d(target)?;
        let xs = grid.abscissae();
        let us = xs
            .iter()
            .map(|x| target.energy(&[*x]))
            .collect::<Result<Vec<_>>>()?;
        let u_min = us.iter().copied().fold(f64::INFINITY, f64::min);
        let tau = target.temperature;
        let weight = |u: f64| (-(u - u_min) / tau).exp();
        check_tails(target, &comps, grid, &xs, &us, u_min)?;

        let mut nodes = Vec::with_capacity(xs.len() * 2);
        let energy = |x: f64| target.energy(&[x]).expect("finite abscissa");
        for i in 0..xs.len() - 1 {
            let a = (xs[i], us[i]);
            let b = (xs[i + 1], us[i + 1]);
            split_cell(p, &energy, &weight, &mut nodes, a, b, 0);
        }
        Ok(Self {
            xs,
            us,
            nodes,
            regions: p.regions(),
        })
    }

    /// Per-region `∫_{X_i} exp(-(U-U_min)/τ)·g(U) dx`, with `g` continuous in `U`.
    fn region_integrals(&self, g: impl Fn(usize, f64) -> f64) -> Vec<f64> {
        let mut acc = vec![0.0; self.regions];
        for &(j, u, c) in &self.nodes {
            acc[j - 1] += c * g(j, u);
        }
        acc
    }
}

/// Trapezoid on `[a, b]`, bisected until both ends lie in one region.
fn split_cell(
    p: &EnergyPartition<f64>,
    energy: &dyn Fn(f64) -> f64,
    weight: &dyn Fn(f64) -> f64,
    nodes: &mut Vec<(usize, f64, f64)>,
    a: (f64, f64),
    b: (f64, f64),
    depth: u32,
) {
    let ja = p.index_unchecked(a.1);
    let jb = p.index_unchecked(b.1);
    if ja == jb || depth >= MAX_BISECTION_DEPTH {
        let half = 0.5 * (b.0 - a.0);
        nodes.push((ja, a.1, half * weight(a.1)));
        nodes.push((jb, b.1, half * weight(b.1)));
        return;
    }
    let xm = 0.5 * (a.0 + b.0);
    let mid = (xm, energy(xm));
    split_cell(p, energy, weight, nodes, a, mid, depth + 1);
    split_cell(p, energy, weight, nodes, mid, b, depth + 1);
}

fn check_tails(
    target: &TargetSpec<f64>,
    comps: &[(f64, f64, f64)],
    grid: &QuadratureGrid,
    xs: &[f64],
    us: &[f64],
    u_min: f64,
) -> Result<()> {
    let tau = target.temperature;
    let mu_lo = comps.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    let mu_hi = comps.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
    if grid.lo > mu_lo || grid.hi < mu_hi {
        return Err(Error::InvalidGrid("grid must contain every component mean".into()));
    }
    let q = |z: f64| 0.5 * erfc(z / std::f64::consts::SQRT_2);
    // Tail mass in the units of the grid weights, i.e. multiplied by exp(U_min/τ).
    let tail = if tau == 1.0 {
        let s: f64 = comps
            .iter()
            .map(|&(w, m, sd)| w * (q((m - grid.lo) / sd) + q((grid.hi - m) / sd)))
            .sum();
        s * u_min.exp()
    } else {
        // Beyond the outermost mean p(x) ≤ φ(z)/σ_min with z = |x - μ_edge|/σ_max, so
        // p^{1/τ} is bounded by a Gaussian of std σ_max·√τ.
        let s_max = comps.iter().map(|c| c.2).fold(0.0, f64::max);
        let s_min = comps.iter().map(|c| c.2).fold(f64::INFINITY, f64::min);
        let coef = ((2.0 * std::f64::consts::PI).sqrt() * s_min).powf(-1.0 / tau)
            * s_max
            * (2.0 * std::f64::consts::PI * tau).sqrt();
        let st = tau.sqrt();
        let lo_z = (mu_lo - grid.lo) / s_max / st;
        let hi_z = (grid.hi - mu_hi) / s_max / st;
        coef * (q(lo_z) + q(hi_z)) * (u_min / tau).exp()
    };
    let inside = trapezoid(xs, |i| (-(us[i] - u_min) / tau).exp());
    let frac = tail / (inside + tail);
    if !(frac < TAIL_MASS_TOLERANCE) {
        return Err(Error::InvalidGrid(format!(
            "mass outside [{}, {}] is {frac:.3e}, above {TAIL_MASS_TOLERANCE:e}",
            grid.lo, grid.hi
        )));
    }
    Ok(())
}

fn trapezoid(xs: &[f64], f: impl Fn(usize) -> f64) -> f64 {
    let mut s = 0.0;
    for i in 0..xs.len() - 1 {
        s += 0.5 * (xs[i + 1] - xs[i]) * (f(i) + f(i + 1));
    }
    s
}

/// `θ★(i) = ∫_{X_i} π(x) dx`, floored and renormalized.
pub fn theta_star(
    target: &TargetSpec<f64>,
    p: &EnergyPartition<f64>,
    grid: &QuadratureGrid,
) -> Result<ThetaEstimate<f64>> {
    let prof = Profile::build(target, p, grid)?;
    ThetaEstimate::from_weights(prof.region_integrals(|_, _| 1.0))
}

/// How `Ψ` enters the flattened density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Flattening {
    /// `π/Ψ_θ(U)^ζ`, what the sampler actually targets.
    #[default]
    Interpolated,
    /// `π/θ(J(x))^ζ`, the piecewise-constant idealization.
    PiecewiseConstant,
}

/// `-ζ·log Ψ(U)` for an energy `u` lying in region `j`.
fn ln_flat_factor(
    p: &EnergyPartition<f64>,
    theta: &ThetaEstimate<f64>,
    zeta: f64,
    mode: Flattening,
    j: usize,
    u: f64,
) -> f64 {
    match mode {
        Flattening::Interpolated => -zeta * p.ln_psi_unchecked(theta, u),
        Flattening::PiecewiseConstant => -zeta * theta.ln(j),
    }
}

fn check_theta(p: &EnergyPartition<f64>, theta: &ThetaEstimate<f64>, zeta: f64) -> Result<()> {
    if theta.len() != p.regions() {
        return Err(invalid_input("theta and partition sizes differ"));
    }
    if theta.values().iter().any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidState("theta must be strictly positive".into()));
    }
    if !(zeta >= 0.0) || !zeta.is_finite() {
        return Err(invalid_input("zeta must be nonnegative"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlattenedDensity {
    pub x: Vec<f64>,
    /// `ϖ(x)`, normalized so its trapezoid integral over the grid is 1.
    pub density: Vec<f64>,
    /// `-τ·log ϖ(x)`.
    pub energy: Vec<f64>,
}

pub fn flattened_density(
    target: &TargetSpec<f64>,
    p: &EnergyPartition<f64>,
    theta: &ThetaEstimate<f64>,
    zeta: f64,
    grid: &QuadratureGrid,
    mode: Flattening,
) -> Result<FlattenedDensity> {
    check_theta(p, theta, zeta)?;
    let prof = Profile::build(target, p, grid)?;
    let tau = target.temperature;
    let log_unnorm: Vec<f64> = prof
        .us
        .iter()
        .map(|&u| -u / tau + ln_flat_factor(p, theta, zeta, mode, p.index_unchecked(u), u))
        .collect();
    let top = log_unnorm.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let shifted: Vec<f64> = log_unnorm.iter().map(|l| (l - top).exp()).collect();
    let z = trapezoid(&prof.xs, |i| shifted[i]);
    let ln_z = z.ln();
    let density = shifted.iter().map(|s| s / z).collect();
    let energy = log_unnorm.iter().map(|l| -tau * (l - top - ln_z)).collect();
    Ok(FlattenedDensity {
        x: prof.xs,
        density,
        energy,
    })
}

/// `ϖ(X_i)`: mass of each subregion under the flattened density.
pub fn flattened_region_masses(
    target: &TargetSpec<f64>,
    p: &EnergyPartition<f64>,
    theta: &ThetaEstimate<f64>,
    zeta: f64,
    grid: &QuadratureGrid,
    mode: Flattening,
) -> Result<Vec<f64>> {
    check_theta(p, theta, zeta)?;
    let prof = Profile::build(target, p, grid)?;
    Ok(flattened_masses_on(&prof, p, theta, zeta, mode))
}

fn flattened_masses_on(
    prof: &Profile,
    p: &EnergyPartition<f64>,
    theta: &ThetaEstimate<f64>,
    zeta: f64,
    mode: Flattening,
) -> Vec<f64> {
    // Shift the log factor so the integrand peaks near 1.
    let shift = (1..=p.regions())
        .map(|j| -zeta * theta.ln(j))
        .fold(f64::NEG_INFINITY, f64::max);
    let raw = prof.region_integrals(|j, u| (ln_flat_factor(p, theta, zeta, mode, j, u) - shift).exp());
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|r| r / total).collect()
}

fn mean_field_from_masses(theta: &ThetaEstimate<f64>, zeta: f64, masses: &[f64]) -> Vec<f64> {
    let g: Vec<f64> = theta
        .values()
        .iter()
        .zip(masses)
        .map(|(t, w)| t.powf(zeta) * w)
        .collect();
    let s: f64 = g.iter().sum();
    g.iter().zip(theta.values()).map(|(gi, t)| gi - t * s).collect()
}

/// `h_i(θ) = θ(i)^ζ·ϖ(X_i) - θ(i)·Σ_j θ(j)^ζ·ϖ(X_j)`, the expected random field under `ϖ_Ψθ`.
pub fn mean_field(
    target: &TargetSpec<f64>,
    p: &EnergyPartition<f64>,
    theta: &ThetaEstimate<f64>,
    zeta: f64,
    grid: &QuadratureGrid,
    mode: Flattening,
) -> Result<Vec<f64>> {
    let masses = flattened_region_masses(target, p, theta, zeta, grid, mode)?;
    Ok(mean_field_from_masses(theta, zeta, &masses))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldRoot {
    pub theta: ThetaEstimate<f64>,
    pub iterations: usize,
    /// `‖h(θ)‖_∞` at the returned point.
    pub residual: f64,
}

/// Zero of the mean field, found by integrating `dθ/dt = h(θ)` with normalized Euler steps.
///
/// Under [`Flattening::PiecewiseConstant`] the zero is `θ★`; under the interpolated
/// flattening it is the point the adaptive sampler actually settles at.
pub fn mean_field_root(
    target: &TargetSpec<f64>,
    p: &EnergyPartition<f64>,
    zeta: f64,
    grid: &QuadratureGrid,
    mode: Flattening,
    tolerance: f64,
    max_iterations: usize,
) -> Result<MeanFieldRoot> {
    let prof = Profile::build(target, p, grid)?;
    let mut theta = ThetaEstimate::from_weights(prof.region_integrals(|_, _| 1.0))?;
    check_theta(p, &theta, zeta)?;
    let mut residual = f64::INFINITY;
    for it in 0..max_iterations {
        let masses = flattened_masses_on(&prof, p, &theta, zeta, mode);
        let h = mean_field_from_masses(&theta, zeta, &masses);
        residual = h.iter().fold(0.0, |a, v| a.max(v.abs()));
        if residual < tolerance {
            return Ok(MeanFieldRoot {
                theta,
                iterations: it,
                residual,
            });
        }
        let s: f64 = theta.values().iter().zip(&masses).map(|(t, w)| t.powf(zeta) * w).sum();
        // θ + ½·h/S, a convex combination of θ and the normalized `θ^ζ ϖ`.
        let next: Vec<f64> = theta.values().iter().zip(&h).map(|(t, hi)| t + 0.5 * hi / s).collect();
        theta = ThetaEstimate::from_weights(next)?;
    }
    Ok(MeanFieldRoot {
        theta,
        iterations: max_iterations,
        residual,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub trials: usize,
    /// `θ★` used for the inner products.
    pub theta_star: ThetaEstimate<f64>,
    /// `s(θ) = ⟨h(θ), θ - θ★⟩` per trial.
    pub inner_products: Vec<f64>,
    /// `r(θ) = s(θ)/‖θ - θ★‖²` per trial; `None` when `θ = θ★`.
    pub ratios: Vec<Option<f64>>,
    pub max_inner_product: f64,
    pub max_ratio: f64,
    pub negative_fraction: f64,
    /// Sampled points with `s(θ) ≥ 0`.
    pub failures: Vec<ThetaEstimate<f64>>,
}

/// Samples `θ ~ Dirichlet(1, …, 1)` (floored) and evaluates the stability inner product.
pub fn stability_check<R: Rng + ?Sized>(
    target: &TargetSpec<f64>,
    p: &EnergyPartition<f64>,
    zeta: f64,
    grid: &QuadratureGrid,
    trials: usize,
    mode: Flattening,
    rng: &mut R,
) -> Result<StabilityReport> {
    if trials == 0 {
        return Err(invalid_input("stability check needs at least one trial"));
    }
    let prof = Profile::build(target, p, grid)?;
    let star = ThetaEstimate::from_weights(prof.region_integrals(|_, _| 1.0))?;
    check_theta(p, &star, zeta)?;
    let m = p.regions();
    let mut inner_products = Vec::with_capacity(trials);
    let mut ratios = Vec::with_capacity(trials);
    let mut failures = Vec::new();
    for _ in 0..trials {
        let draw: Vec<f64> = (0..m).map(|_| Exp1.sample(rng)).collect();
        let theta = ThetaEstimate::from_weights(draw)?;
        let masses = flattened_masses_on(&prof, p, &theta, zeta, mode);
        let h = mean_field_from_masses(&theta, zeta, &masses);
        let diff: Vec<f64> = theta.values().iter().zip(star.values()).map(|(a, b)| a - b).collect();
        let s: f64 = h.iter().zip(&diff).map(|(a, b)| a * b).sum();
        let n2: f64 = diff.iter().map(|d| d * d).sum();
        inner_products.push(s);
        ratios.push(if n2 > 0.0 { Some(s / n2) } else { None });
        if !(s < 0.0) && n2 > 0.0 {
            failures.push(theta);
        }
    }
    let max_inner_product = inner_products.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let max_ratio = ratios.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    let negative = inner_products.iter().filter(|s| **s < 0.0).count();
    Ok(StabilityReport {
        trials,
        theta_star: star,
        inner_products,
        ratios,
        max_inner_product,
        max_ratio,
        negative_fraction: negative as f64 / trials as f64,
        failures,
    })
}

/// Barrier between two modes of a 1-D energy profile: the maximum over `[left, right]`
/// minus the lower of the two minima within `radius` of each mode.
pub fn energy_barrier(x: &[f64], energy: &[f64], left: f64, right: f64, radius: f64) -> Result<f64> {
    if x.len() != energy.len() || x.is_empty() {
        return Err(invalid_input("abscissae and energies must be nonempty and of equal length"));
    }
    if !(left < right) || !(radius >= 0.0) {
        return Err(invalid_input("need left < right and a nonnegative radius"));
    }
    let over = |lo: f64, hi: f64, f: fn(f64, f64) -> f64, init: f64| {
        x.iter()
            .zip(energy)
            .filter(|(xi, _)| **xi >= lo && **xi <= hi)
            .map(|(_, e)| *e)
            .fold(init, f)
    };
    let peak = over(left, right, f64::max, f64::NEG_INFINITY);
    let well_l = over(left - radius, left + radius, f64::min, f64::INFINITY);
    let well_r = over(right - radius, right + radius, f64::min, f64::INFINITY);
    if !(peak.is_finite() && well_l.is_finite() && well_r.is_finite()) {
        return Err(invalid_input("grid does not cover the requested modes"));
    }
    Ok(peak - well_l.min(well_r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::target::{GaussianMixture, MixtureComponent};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mixture() -> TargetSpec<f64> {
        TargetSpec::bimodal_reference()
    }

    fn grid(points: usize) -> QuadratureGrid {
        QuadratureGrid::new(-20.0, 18.0, points).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(QuadratureGrid::new(0.0, 1.0, 999).is_err());
        assert!(QuadratureGrid::new(1.0, 0.0, 2000).is_err());
        let g = QuadratureGrid::new(-1.0, 1.0, 1001).unwrap();
        assert_eq!(g.abscissae().len(), 1001);
        assert_eq!(g.doubled().points, 2001);
        assert!((g.spacing() - 0.002).abs() < 1e-15);
    }

    #[test]
    fn narrow_grid_fails_tail_check() {
        let p = EnergyPartition::new(5, 2.0, 1.0).unwrap();
        let g = QuadratureGrid::new(-8.0, 6.0, 10_001).unwrap();
        assert!(matches!(theta_star(&mixture(), &p, &g), Err(Error::InvalidGrid(_))));
        let hot = TargetSpec::mixture(GaussianMixture::bimodal_reference(), 25.0, 0.0).unwrap();
        assert!(matches!(theta_star(&hot, &p, &grid(10_001)), Err(Error::InvalidGrid(_))));
        let g = QuadratureGrid::covering(&hot, 10_001).unwrap();
        assert!(theta_star(&hot, &p, &g).is_ok());
    }

    #[test]
    fn single_region_is_everything() {
        let p = EnergyPartition::new(1, 0.0, 1.0).unwrap();
        let th = theta_star(&mixture(), &p, &grid(10_001)).unwrap();
        assert_eq!(th.values(), &[1.0]);
    }

    #[test]
    fn two_region_split_matches_closed_form() {
        // Below U = 5 the set is two intervals around the modes; compare with the normal cdf.
        let t = mixture();
        let p = EnergyPartition::new(2, 5.0, 1.0).unwrap();
        let th = theta_star(&t, &p, &grid(200_001)).unwrap();
        assert!((th.sum() - 1.0).abs() < 1e-12);
        // Find the four crossing points by bisection on the exact energy.
        let root = |mut a: f64, mut b: f64| {
            let f = |x: f64| t.energy(&[x]).unwrap() - 5.0;
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if (f(a) > 0.0) == (f(m) > 0.0) {
                    a = m;
                } else {
                    b = m;
                }
            }
            0.5 * (a + b)
        };
        let cuts = [root(-10.0, -6.0), root(-6.0, -1.0), root(-1.0, 4.0), root(4.0, 10.0)];
        let cdf = |x: f64, m: f64| 1.0 - 0.5 * erfc((x - m) / std::f64::consts::SQRT_2);
        let mass = |a: f64, b: f64| 0.4 * (cdf(b, -6.0) - cdf(a, -6.0)) + 0.6 * (cdf(b, 4.0) - cdf(a, 4.0));
        let inner = mass(cuts[0], cuts[1]) + mass(cuts[2], cuts[3]);
        assert!((th.get(1) - inner).abs() < 1e-9, "{} vs {inner}", th.get(1));
    }

    #[test]
    fn theta_star_converges_on_doubling() {
        let t = mixture();
        let p = EnergyPartition::new(50, 2.0, 1.0).unwrap();
        let g = grid(100_001);
        let a = theta_star(&t, &p, &g).unwrap();
        let b = theta_star(&t, &p, &g.doubled()).unwrap();
        let linf = a.values().iter().zip(b.values()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        assert!(linf < 1e-8, "{linf}");
        assert!((b.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn theta_star_decays_with_energy() {
        let t = mixture();
        let p = EnergyPartition::new(50, 2.0, 1.0).unwrap();
        let th = theta_star(&t, &p, &grid(100_001)).unwrap();
        // Mass in the first regions dominates and falls off quickly past the mode wells.
        for i in 3..20 {
            assert!(th.get(i + 1) < th.get(i), "region {i}");
        }
        assert!(th.get(20) < 1e-6);
    }

    #[test]
    fn flattened_density_reductions() {
        let t = mixture();
        let p = EnergyPartition::new(50, 2.0, 1.0).unwrap();
        let g = grid(20_001);
        let star = theta_star(&t, &p, &g).unwrap();
        let pi = flattened_density(&t, &p, &ThetaEstimate::uniform(50), 0.75, &g, Flattening::Interpolated).unwrap();
        let z0 = flattened_density(&t, &p, &star, 0.0, &g, Flattening::Interpolated).unwrap();
        for i in (0..g.points).step_by(97) {
            let exact = (-t.energy(&[pi.x[i]]).unwrap()).exp();
            assert!((pi.density[i] - exact).abs() < 1e-10);
            assert!((z0.density[i] - exact).abs() < 1e-10);
        }
    }

    #[test]
    fn barrier_shrinks_under_flattening() {
        let t = mixture();
        let p = EnergyPartition::new(50, 2.0, 1.0).unwrap();
        let g = grid(40_001);
        let star = theta_star(&t, &p, &g).unwrap();
        let orig = flattened_density(&t, &p, &star, 0.0, &g, Flattening::Interpolated).unwrap();
        let b0 = energy_barrier(&orig.x, &orig.energy, -6.0, 4.0, 1.0).unwrap();
        assert!((b0 - 12.0).abs() < 1.0, "{b0}");
        let flat = flattened_density(&t, &p, &star, 0.75, &g, Flattening::Interpolated).unwrap();
        let b1 = energy_barrier(&flat.x, &flat.energy, -6.0, 4.0, 1.0).unwrap();
        assert!(b1 < 0.5 * b0, "{b1}");
    }

    #[test]
    fn mean_field_sums_to_zero() {
        let t = mixture();
        let p = EnergyPartition::new(10, 2.0, 1.0).unwrap();
        let g = grid(20_001);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for mode in [Flattening::Interpolated, Flattening::PiecewiseConstant] {
            for _ in 0..5 {
                let th = ThetaEstimate::from_weights((0..10).map(|_| Exp1.sample(&mut rng)).collect()).unwrap();
                let h = mean_field(&t, &p, &th, 0.75, &g, mode).unwrap();
                assert!(h.iter().sum::<f64>().abs() < 1e-10);
            }
        }
    }

    #[test]
    fn mean_field_at_zeta_zero_is_closed_form() {
        let t = mixture();
        let p = EnergyPartition::new(10, 2.0, 1.0).unwrap();
        let g = grid(20_001);
        let star = theta_star(&t, &p, &g).unwrap();
        let th = ThetaEstimate::from_weights((1..=10).map(|i| i as f64).collect()).unwrap();
        let h = mean_field(&t, &p, &th, 0.0, &g, Flattening::Interpolated).unwrap();
        for ((hi, s), t) in h.iter().zip(star.values()).zip(th.values()) {
            assert!((hi - (s - t)).abs() < 1e-8);
        }
    }

    #[test]
    fn piecewise_mean_field_vanishes_at_theta_star() {
        let t = mixture();
        let p = EnergyPartition::new(20, 2.0, 1.0).unwrap();
        let g = grid(20_001);
        let star = theta_star(&t, &p, &g).unwrap();
        for zeta in [0.5, 0.75, 1.0] {
            let h = mean_field(&t, &p, &star, zeta, &g, Flattening::PiecewiseConstant).unwrap();
            assert!(h.iter().all(|v| v.abs() < 1e-9), "{h:?}");
        }
    }

    #[test]
    fn symmetric_two_region_target() {
        let mix = GaussianMixture::new(vec![
            MixtureComponent { weight: 0.5, mean: vec![-3.0], std: 1.0 },
            MixtureComponent { weight: 0.5, mean: vec![3.0], std: 1.0 },
        ])
        .unwrap();
        let t = TargetSpec::mixture(mix, 1.0, 0.0).unwrap();
        let p = EnergyPartition::new(2, 2.5, 1.0).unwrap();
        let g = QuadratureGrid::new(-16.0, 16.0, 40_001).unwrap();
        let star = theta_star(&t, &p, &g).unwrap();
        // Pick the boundary so both regions carry half the mass, then h(½, ½) = 0.
        let (mut lo, mut hi) = (1.0, 6.0);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            let pm = EnergyPartition::new(2, mid, 1.0).unwrap();
            if theta_star(&t, &pm, &g).unwrap().get(1) < 0.5 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!(star.get(1) > 0.0);
        let pm = EnergyPartition::new(2, 0.5 * (lo + hi), 1.0).unwrap();
        let half = ThetaEstimate::uniform(2);
        for mode in [Flattening::Interpolated, Flattening::PiecewiseConstant] {
            let h = mean_field(&t, &pm, &half, 1.0, &g, mode).unwrap();
            assert!(h.iter().all(|v| v.abs() < 1e-9), "{h:?}");
        }
    }

    #[test]
    fn stability_at_zeta_zero_has_unit_ratio() {
        let t = mixture();
        let p = EnergyPartition::new(10, 2.0, 1.0).unwrap();
        let rep = stability_check(&t, &p, 0.0, &grid(20_001), 20, Flattening::Interpolated, &mut ChaCha8Rng::seed_from_u64(1))
            .unwrap();
        for r in rep.ratios.iter().flatten() {
            assert!((r + 1.0).abs() < 1e-6, "{r}");
        }
        assert_eq!(rep.negative_fraction, 1.0);
        assert!(rep.failures.is_empty());
    }

    #[test]
    fn mean_field_root_piecewise_is_theta_star() {
        let t = mixture();
        let p = EnergyPartition::new(10, 2.0, 1.0).unwrap();
        let g = grid(20_001);
        let star = theta_star(&t, &p, &g).unwrap();
        let root = mean_field_root(&t, &p, 0.75, &g, Flattening::PiecewiseConstant, 1e-13, 10).unwrap();
        assert!(root.theta.l1_distance(&star) < 1e-10);
        let interp = mean_field_root(&t, &p, 0.75, &g, Flattening::Interpolated, 1e-12, 20_000).unwrap();
        assert!(interp.residual < 1e-12, "{}", interp.residual);
    }

    #[test]
    fn regression_target_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let data = crate::target::RegressionData::synthetic(20, 1, 0.5, 1.0, &mut rng).unwrap();
        let t = TargetSpec::regression(data, 5, 1.0, 0.0).unwrap();
        let p = EnergyPartition::new(3, 0.0, 1.0).unwrap();
        assert!(theta_star(&t, &p, &grid(2000)).is_err());
    }
}
