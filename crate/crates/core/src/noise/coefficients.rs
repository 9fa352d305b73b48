use std::fmt;
use std::sync::Arc;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use super::measure::{LevyComponent, LevyMeasureModel};
use super::quadrature::{integrate_vec, Interval};
use crate::spectral::{ComplexField, GridSpec};
use crate::{Error, Real, Result};

/// Absolute tolerance of the pointwise identity checks.
pub const HYPOTHESIS_TOLERANCE: f64 = 1e-10;

type ScalarFn = Arc<dyn Fn(f64) -> Complex<f64> + Send + Sync>;

/// User-supplied coefficient pair; derivatives come from central
/// differences.
#[derive(Clone)]
pub struct CustomCoefficients {
    pub name: String,
    pub g: ScalarFn,
    pub h: ScalarFn,
}

impl fmt::Debug for CustomCoefficients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomCoefficients")
            .field("name", &self.name)
            .finish_non_exhaustive()
    }
}

/// Registry of coefficient pairs `(g, h)`.
#[derive(Clone, Debug)]
pub enum CoefficientFamily {
    /// `g = h = 0`.
    Zero,
    /// `g(ξ) = i(e^{iθ₀ξ} - 1)`, `h(ξ) = i(cos(θ₀ξ) - 1)`: `|1 - ig| = 1`, so
    /// jumps are pure phase rotations.
    PhaseRotation { theta0: f64 },
    /// `g(ξ) = sin ξ`, `h(ξ) = ξ - (i/2) sin²ξ`: mass is conserved in mean
    /// only.
    SineMean,
    /// `g(ξ) = c₁ξ`, `h(ξ) = c₂ξ`.
    Linear { c1: f64, c2: f64 },
    Custom(CustomCoefficients),
}

impl CoefficientFamily {
    pub fn name(&self) -> String {
        match self {
            Self::Zero => "zero".into(),
            Self::PhaseRotation { .. } => "phase-rotation".into(),
            Self::SineMean => "sine-mean".into(),
            Self::Linear { .. } => "linear".into(),
            Self::Custom(c) => c.name.clone(),
        }
    }

    /// Linear-growth constants `(C_g, C_h)` valid on all of ℝ.
    fn default_growth(&self) -> (f64, f64) {
        match *self {
            Self::Zero => (0.0, 0.0),
            // |e^{iθ}-1| ≤ |θ|, 1 - cos θ ≤ min(2, θ²/2) ≤ |θ|
            Self::PhaseRotation { theta0 } => (theta0.abs(), theta0.abs()),
            // |h|² = ξ² + sin⁴ξ/4 ≤ 5ξ²/4, |h'|² = 1 + sin²ξ cos²ξ ≤ 5/4
            Self::SineMean => (1.0, 1.25f64.sqrt()),
            Self::Linear { c1, c2 } => (c1.abs(), c2.abs()),
            Self::Custom(_) => (f64::INFINITY, f64::INFINITY),
        }
    }
}

/// The coefficient functions `g`, `h` with their declared growth constants.
#[derive(Clone, Debug)]
pub struct NoiseCoefficients {
    family: CoefficientFamily,
    growth_g: f64,
    growth_h: f64,
}

impl NoiseCoefficients {
    pub fn new(family: CoefficientFamily) -> Result<Self> {
        let (growth_g, growth_h) = family.default_growth();
        Self::with_growth(family, growth_g, growth_h)
    }

    pub fn with_growth(family: CoefficientFamily, growth_g: f64, growth_h: f64) -> Result<Self> {
        let c = Self {
            family,
            growth_g,
            growth_h,
        };
        let (g0, h0) = (c.g(0.0), c.h(0.0));
        if g0 != Complex::new(0.0, 0.0) || h0 != Complex::new(0.0, 0.0) {
            return Err(Error::Config(format!(
                "coefficients must vanish at zero, got g(0) = {g0}, h(0) = {h0}"
            )));
        }
        Ok(c)
    }

    pub fn zero() -> Self {
        Self::new(CoefficientFamily::Zero).expect("zero coefficients are valid")
    }

    pub fn family(&self) -> &CoefficientFamily {
        &self.family
    }

    pub fn name(&self) -> String {
        self.family.name()
    }

    pub fn growth_constants(&self) -> (f64, f64) {
        (self.growth_g, self.growth_h)
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.family, CoefficientFamily::Zero)
    }

    pub fn g(&self, xi: f64) -> Complex<f64> {
        match &self.family {
            CoefficientFamily::Zero => Complex::new(0.0, 0.0),
            CoefficientFamily::PhaseRotation { theta0 } => {
                let (s, c) = (theta0 * xi).sin_cos();
                // i(e^{iθ} - 1) = -sin θ + i(cos θ - 1)
                Complex::new(-s, c - 1.0)
            }
            CoefficientFamily::SineMean => Complex::new(xi.sin(), 0.0),
            CoefficientFamily::Linear { c1, .. } => Complex::new(c1 * xi, 0.0),
            CoefficientFamily::Custom(c) => (c.g)(xi),
        }
    }

    pub fn h(&self, xi: f64) -> Complex<f64> {
        match &self.family {
            CoefficientFamily::Zero => Complex::new(0.0, 0.0),
            CoefficientFamily::PhaseRotation { theta0 } => {
                Complex::new(0.0, (theta0 * xi).cos() - 1.0)
            }
            CoefficientFamily::SineMean => Complex::new(xi, -0.5 * xi.sin().powi(2)),
            CoefficientFamily::Linear { c2, .. } => Complex::new(c2 * xi, 0.0),
            CoefficientFamily::Custom(c) => (c.h)(xi),
        }
    }

    pub fn dg(&self, xi: f64) -> Complex<f64> {
        match &self.family {
            CoefficientFamily::Zero => Complex::new(0.0, 0.0),
            CoefficientFamily::PhaseRotation { theta0 } => {
                let (s, c) = (theta0 * xi).sin_cos();
                Complex::new(-theta0 * c, -theta0 * s)
            }
            CoefficientFamily::SineMean => Complex::new(xi.cos(), 0.0),
            CoefficientFamily::Linear { c1, .. } => Complex::new(*c1, 0.0),
            CoefficientFamily::Custom(_) => central_difference(|x| self.g(x), xi),
        }
    }

    pub fn dh(&self, xi: f64) -> Complex<f64> {
        match &self.family {
            CoefficientFamily::Zero => Complex::new(0.0, 0.0),
            CoefficientFamily::PhaseRotation { theta0 } => {
                Complex::new(0.0, -theta0 * (theta0 * xi).sin())
            }
            CoefficientFamily::SineMean => Complex::new(1.0, -xi.sin() * xi.cos()),
            CoefficientFamily::Linear { c2, .. } => Complex::new(*c2, 0.0),
            CoefficientFamily::Custom(_) => central_difference(|x| self.h(x), xi),
        }
    }

    /// Nemytskii lift `G(z)(x) = g(z(x))` as a field.
    pub fn lift_g<T: Real>(&self, grid: &GridSpec, z: &[T]) -> ComplexField<T> {
        lift(grid, z, |x| self.g(x))
    }

    pub fn lift_h<T: Real>(&self, grid: &GridSpec, z: &[T]) -> ComplexField<T> {
        lift(grid, z, |x| self.h(x))
    }
}

fn lift<T: Real>(grid: &GridSpec, z: &[T], f: impl Fn(f64) -> Complex<f64>) -> ComplexField<T> {
    let values = z
        .iter()
        .map(|&v| {
            let c = f(v.as_f64());
            Complex::new(T::of(c.re), T::of(c.im))
        })
        .collect();
    ComplexField::from_raw(*grid, values)
}

fn central_difference(f: impl Fn(f64) -> Complex<f64>, xi: f64) -> Complex<f64> {
    let step = 1e-6 * xi.abs().max(1.0);
    (f(xi + step) - f(xi - step)) / (2.0 * step)
}

/// `z_ν(x) = ∫ g(z(x)) ν(dz)` and `h_ν(x) = ∫ h(z(x)) ν(dz)`: exact sums for
/// atoms, quadrature over the amplitude for parametric components.
pub fn compensator_fields<T: Real>(
    measure: &LevyMeasureModel<T>,
    coeffs: &NoiseCoefficients,
    grid: &GridSpec,
) -> Result<(ComplexField<T>, ComplexField<T>)> {
    if !measure.is_finite_activity() {
        return Err(Error::InfiniteActivity);
    }
    if let Some(g) = measure.grid() {
        if g != grid {
            return Err(Error::GridMismatch("measure and solver grids differ".into()));
        }
    }
    let n = grid.len();
    // interleaved [g.re, g.im, h.re, h.im] per grid point
    let mut acc = vec![0.0f64; 4 * n];
    if !coeffs.is_zero() {
        for c in measure.components() {
            match c {
                LevyComponent::Atom { rate, mark } => {
                    for (slot, &z) in acc.chunks_exact_mut(4).zip(mark.samples()) {
                        add_weighted(slot, coeffs, z.as_f64(), *rate);
                    }
                }
                LevyComponent::Amplitude {
                    base,
                    density,
                    a_min,
                    a_max,
                } => {
                    let samples: Vec<f64> = base.samples().iter().map(|v| v.as_f64()).collect();
                    let part = integrate_vec(Interval::new(*a_min, *a_max), 4 * n, |a, w, out| {
                        let weight = w * density.eval(a);
                        for (slot, &z) in out.chunks_exact_mut(4).zip(&samples) {
                            add_weighted(slot, coeffs, a * z, weight);
                        }
                    })?;
                    for (x, p) in acc.iter_mut().zip(part) {
                        *x += p;
                    }
                }
            }
        }
    }
    let (zg, zh): (Vec<_>, Vec<_>) = acc
        .chunks_exact(4)
        .map(|s| {
            (
                Complex::new(T::of(s[0]), T::of(s[1])),
                Complex::new(T::of(s[2]), T::of(s[3])),
            )
        })
        .unzip();
    Ok((ComplexField::new(*grid, zg)?, ComplexField::new(*grid, zh)?))
}

fn add_weighted(slot: &mut [f64], coeffs: &NoiseCoefficients, xi: f64, weight: f64) {
    let g = coeffs.g(xi);
    let h = coeffs.h(xi);
    slot[0] += weight * g.re;
    slot[1] += weight * g.im;
    slot[2] += weight * h.re;
    slot[3] += weight * h.im;
}

/// Evenly spaced sample points `lo..=hi`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRange {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl SampleRange {
    pub fn new(lo: f64, hi: f64, count: usize) -> Self {
        Self { lo, hi, count }
    }

    /// `[-r, r]` with `r` the largest mark norm of the measure (or 1 for
    /// an empty measure).
    pub fn covering<T: Real>(measure: &LevyMeasureModel<T>, count: usize) -> Self {
        let r = measure.max_mark_norm();
        let r = if r > 0.0 { r } else { 1.0 };
        Self::new(-r, r, count)
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        let n = self.count.max(2);
        (0..n).map(move |i| self.lo + (self.hi - self.lo) * i as f64 / (n - 1) as f64)
    }
}

/// Outcome of one pointwise check over the sampled range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub holds: bool,
    /// Sample point with the largest violation.
    pub worst_xi: f64,
    /// Largest violation (0 when the identity holds exactly).
    pub worst_violation: f64,
}

impl CheckOutcome {
    fn from_violations(points: impl Iterator<Item = (f64, f64)>) -> Self {
        let (worst_xi, worst_violation) = points.fold((0.0, 0.0), |best, p| {
            if p.1 > best.1 || p.1.is_nan() {
                p
            } else {
                best
            }
        });
        Self {
            holds: worst_violation <= HYPOTHESIS_TOLERANCE,
            worst_xi,
            worst_violation,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub coefficients: String,
    pub range: SampleRange,
    /// `|g|, |h| ≤ C|ξ|` and `|g'|, |h'| ≤ C max(1, |ξ|)` with the declared
    /// constants, checked on the sampled range only.
    pub linear_growth: CheckOutcome,
    /// `Im g = Im h` and `|1 - ig| = 1`: mass is conserved along every path.
    pub pathwise_mass: CheckOutcome,
    /// `2 Im h + |g|² = 0`: mass is conserved in mean.
    pub mean_mass: CheckOutcome,
}

pub fn check_hypotheses(coeffs: &NoiseCoefficients, range: SampleRange) -> HypothesisReport {
    let (cg, ch) = coeffs.growth_constants();
    let growth = CheckOutcome::from_violations(range.points().map(|xi| {
        let lin = cg * xi.abs();
        let der = cg * xi.abs().max(1.0);
        let linh = ch * xi.abs();
        let derh = ch * xi.abs().max(1.0);
        let v = [
            coeffs.g(xi).norm() - lin,
            coeffs.dg(xi).norm() - der,
            coeffs.h(xi).norm() - linh,
            coeffs.dh(xi).norm() - derh,
        ]
        .into_iter()
        .fold(0.0f64, f64::max);
        (xi, v)
    }));
    let pathwise = CheckOutcome::from_violations(range.points().map(|xi| {
        let g = coeffs.g(xi);
        let h = coeffs.h(xi);
        let jump = (Complex::new(1.0, 0.0) - Complex::<f64>::i() * g).norm();
        (xi, (g.im - h.im).abs().max((jump - 1.0).abs()))
    }));
    let mean = CheckOutcome::from_violations(range.points().map(|xi| {
        let g = coeffs.g(xi);
        (xi, (2.0 * coeffs.h(xi).im + g.norm_sqr()).abs())
    }));
    HypothesisReport {
        coefficients: coeffs.name(),
        range,
        linear_growth: growth,
        pathwise_mass: pathwise,
        mean_mass: mean,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{AmplitudeDensity, MarkFunction};
    use proptest::prelude::*;

    fn range() -> SampleRange {
        SampleRange::new(-3.0, 3.0, 1201)
    }

    #[test]
    fn phase_rotation_conserves_mass_pathwise_and_in_mean() {
        let c = NoiseCoefficients::new(CoefficientFamily::PhaseRotation { theta0: 1.0 }).unwrap();
        let r = check_hypotheses(&c, range());
        assert!(r.pathwise_mass.holds && r.mean_mass.holds && r.linear_growth.holds, "{r:?}");
    }

    #[test]
    fn sine_mean_conserves_only_in_mean() {
        let c = NoiseCoefficients::new(CoefficientFamily::SineMean).unwrap();
        let r = check_hypotheses(&c, range());
        assert!(!r.pathwise_mass.holds);
        assert!(r.mean_mass.holds);
        assert!(r.linear_growth.holds, "{r:?}");
    }

    #[test]
    fn linear_family_conserves_nothing() {
        let c = NoiseCoefficients::new(CoefficientFamily::Linear { c1: 1.0, c2: 1.0 }).unwrap();
        let r = check_hypotheses(&c, range());
        assert!(!r.pathwise_mass.holds && !r.mean_mass.holds);
        // 2 Im h + |g|² = ξ², worst at the range edge
        assert_eq!(r.mean_mass.worst_xi.abs(), 3.0);
        assert!((r.mean_mass.worst_violation - 9.0).abs() < 1e-12);
    }

    #[test]
    fn zero_family_passes_everything() {
        let r = check_hypotheses(&NoiseCoefficients::zero(), range());
        assert!(r.pathwise_mass.holds && r.mean_mass.holds && r.linear_growth.holds);
    }

    #[test]
    fn understated_growth_constant_is_caught() {
        let c = NoiseCoefficients::with_growth(CoefficientFamily::SineMean, 0.5, 2.0).unwrap();
        assert!(!check_hypotheses(&c, range()).linear_growth.holds);
    }

    #[test]
    fn custom_coefficients_must_vanish_at_zero() {
        let bad = CustomCoefficients {
            name: "shifted".into(),
            g: Arc::new(|x| Complex::new(x + 1.0, 0.0)),
            h: Arc::new(|_| Complex::new(0.0, 0.0)),
        };
        assert!(NoiseCoefficients::new(CoefficientFamily::Custom(bad)).is_err());
        let ok = CustomCoefficients {
            name: "cubic".into(),
            g: Arc::new(|x| Complex::new(x * x * x, 0.0)),
            h: Arc::new(|x| Complex::new(0.0, x)),
        };
        let c = NoiseCoefficients::with_growth(CoefficientFamily::Custom(ok), 30.0, 1.0).unwrap();
        assert!((c.dg(2.0).re - 12.0).abs() < 1e-6);
        assert!((c.dh(0.3).im - 1.0).abs() < 1e-8);
    }

    #[test]
    fn closed_form_derivatives_match_differences() {
        for fam in [
            CoefficientFamily::PhaseRotation { theta0: 1.3 },
            CoefficientFamily::SineMean,
            CoefficientFamily::Linear { c1: 0.7, c2: -2.0 },
        ] {
            let c = NoiseCoefficients::new(fam).unwrap();
            for xi in [-1.7, -0.2, 0.0, 0.9, 2.4] {
                assert!((c.dg(xi) - central_difference(|x| c.g(x), xi)).norm() < 1e-8);
                assert!((c.dh(xi) - central_difference(|x| c.h(x), xi)).norm() < 1e-8);
            }
        }
    }

    fn grid() -> GridSpec {
        GridSpec::new(1, 32, 6.0).unwrap()
    }

    #[test]
    fn compensator_single_atom() {
        let z = MarkFunction::<f64>::gaussian_bump(grid(), 0.8, &[0.0], 1.0).unwrap();
        let nu = LevyMeasureModel::atomic(vec![(2.0, z.clone())]).unwrap();
        let c = NoiseCoefficients::new(CoefficientFamily::PhaseRotation { theta0: 1.0 }).unwrap();
        let (zg, zh) = compensator_fields(&nu, &c, &grid()).unwrap();
        for (idx, &v) in z.samples().iter().enumerate() {
            assert_eq!(zg.values()[idx], c.g(v) * 2.0);
            assert_eq!(zh.values()[idx], c.h(v) * 2.0);
        }
    }

    #[test]
    fn compensator_vanishes_for_zero_coefficients() {
        let z = MarkFunction::<f64>::gaussian_bump(grid(), 0.8, &[0.0], 1.0).unwrap();
        let nu = LevyMeasureModel::atomic(vec![(2.0, z)]).unwrap();
        let (zg, zh) = compensator_fields(&nu, &NoiseCoefficients::zero(), &grid()).unwrap();
        assert!(zg.values().iter().chain(zh.values()).all(|v| v.norm() == 0.0));
    }

    #[test]
    fn compensator_of_linear_g_is_linear_in_the_atoms() {
        let z1 = MarkFunction::<f64>::gaussian_bump(grid(), 0.8, &[1.0], 1.0).unwrap();
        let z2 = MarkFunction::<f64>::gaussian_bump(grid(), -0.3, &[-2.0], 0.5).unwrap();
        let nu = LevyMeasureModel::atomic(vec![(1.5, z1.clone()), (0.25, z2.clone())]).unwrap();
        let c = NoiseCoefficients::new(CoefficientFamily::Linear { c1: 1.0, c2: 0.0 }).unwrap();
        let (zg, _) = compensator_fields(&nu, &c, &grid()).unwrap();
        for idx in 0..grid().len() {
            let direct = 1.5 * z1.samples()[idx] + 0.25 * z2.samples()[idx];
            assert!((zg.values()[idx].re - direct).abs() < 1e-14);
        }
    }

    #[test]
    fn compensator_of_amplitude_family_matches_closed_form() {
        // g(ξ) = ξ, uniform density on [0.2, 1]: z_ν = z(x)·∫a da = 0.48 z(x)
        let z = MarkFunction::<f64>::gaussian_bump(grid(), 1.0, &[0.0], 1.0).unwrap();
        let nu = LevyMeasureModel::parametric(z.clone(), AmplitudeDensity::Uniform { height: 1.0 }, 0.2, 1.0).unwrap();
        let c = NoiseCoefficients::new(CoefficientFamily::Linear { c1: 1.0, c2: 0.0 }).unwrap();
        let (zg, _) = compensator_fields(&nu, &c, &grid()).unwrap();
        for (idx, &v) in z.samples().iter().enumerate() {
            assert!((zg.values()[idx].re - 0.48 * v).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn phase_rotation_passes_for_every_angle(theta0 in -4.0f64..4.0) {
            let c = NoiseCoefficients::new(CoefficientFamily::PhaseRotation { theta0 }).unwrap();
            let r = check_hypotheses(&c, SampleRange::new(-2.0, 2.0, 401));
            prop_assert!(r.pathwise_mass.holds && r.mean_mass.holds && r.linear_growth.holds);
        }
    }
}
