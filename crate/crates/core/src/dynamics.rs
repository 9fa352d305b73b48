//! The constructive solver: Strang-split deterministic flow between jump
//! times, pointwise multiplicative jumps, gluing, and a mild-form residual.
//!
//! Sign conventions: between jumps the field solves
//! `∂_t u = -iΔu + iλ|u|^{α-1}u - iVu` with the complex potential
//! `V = ∫h ν - ∫g ν`, and a jump with mark `Y` maps `u ↦ u·(1 - i g(Y))`.

use std::io::Write;

use num_complex::Complex;
use num_traits::{Float, Zero};
use serde::{Deserialize, Serialize};

use crate::noise::{
    CompoundPoissonPath, JumpMark, LevyNoiseModel, MarkFunction, NoiseCoefficients, PathSampler,
    StreamSeed, TruncationSpec,
};
use crate::observables::{ObservableSeries, Probe, DEFAULT_GAMMA};
use crate::spectral::{boundary_mass_fraction, ComplexField, FourierMultiplier, GridSpec, Transform};
use crate::{Error, Real, Result};

/// Default bound on the fraction of mass allowed in the outermost grid cells.
pub const DEFAULT_BOUNDARY_THRESHOLD: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig<T> {
    pub lambda: T,
    pub alpha: T,
    pub horizon: T,
    pub dt: T,
    /// Record observables every `record_stride` steps (and at the horizon).
    pub record_stride: usize,
    pub truncation: TruncationSpec,
    pub boundary_threshold: f64,
    /// Lifts the `λ > 0`, `α ≥ 1` restrictions, for unit tests.
    pub permissive: bool,
    /// Keep the full field at every recorded time (needed by the mild
    /// residual).
    pub record_fields: bool,
    /// Fractional Sobolev index tracked in the observable series.
    pub gamma: f64,
}

impl<T: Real> SolverConfig<T> {
    pub fn new(lambda: T, alpha: T, horizon: T, dt: T) -> Self {
        Self {
            lambda,
            alpha,
            horizon,
            dt,
            record_stride: 1,
            truncation: TruncationSpec::none(),
            boundary_threshold: DEFAULT_BOUNDARY_THRESHOLD,
            permissive: false,
            record_fields: false,
            gamma: DEFAULT_GAMMA,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.permissive {
            if !(self.lambda > T::zero()) {
                return Err(Error::Config(format!(
                    "lambda must be positive (defocusing), got {}",
                    self.lambda
                )));
            }
            if !(self.alpha >= T::one()) {
                return Err(Error::Config(format!("alpha must be >= 1, got {}", self.alpha)));
            }
        }
        if !(self.lambda.is_finite() && self.alpha.is_finite()) {
            return Err(Error::Config("lambda and alpha must be finite".into()));
        }
        if !(self.dt > T::zero() && self.dt <= self.horizon && self.horizon.is_finite()) {
            return Err(Error::Config(format!(
                "need 0 < dt <= T, got dt = {}, T = {}",
                self.dt, self.horizon
            )));
        }
        if self.record_stride == 0 {
            return Err(Error::Config("record_stride must be at least 1".into()));
        }
        if !(self.boundary_threshold > 0.0) {
            return Err(Error::Config("boundary_threshold must be positive".into()));
        }
        Ok(())
    }

    /// Number of base steps covering `[0, T]`.
    pub fn steps(&self) -> usize {
        let ratio = (self.horizon / self.dt).as_f64();
        // guards against 1000.0000000000001 turning into an extra sliver step
        ((ratio * (1.0 - 1e-12)).ceil() as usize).max(1)
    }

    /// `k·dt`, clamped to the horizon for the last step.
    pub fn grid_time(&self, k: usize) -> T {
        if k >= self.steps() {
            self.horizon
        } else {
            self.dt * T::of(k as f64)
        }
    }
}

fn nonlinear_phase_in_place<T: Real>(u: &mut [Complex<T>], lambda: T, alpha: T, dt: T) {
    if lambda.is_zero() || dt.is_zero() {
        return;
    }
    let scale = lambda * dt;
    let floor = T::of(1e-300).max(T::min_positive_value());
    if alpha == T::of(3.0) {
        for v in u.iter_mut() {
            let (s, c) = (scale * v.norm_sqr()).sin_cos();
            *v *= Complex::new(c, s);
        }
    } else if alpha == T::one() {
        let (s, c) = scale.sin_cos();
        let phase = Complex::new(c, s);
        for v in u.iter_mut() {
            *v *= phase;
        }
    } else {
        let power = alpha - T::one();
        for v in u.iter_mut() {
            let m = v.norm().max(floor);
            let (s, c) = (scale * m.powf(power)).sin_cos();
            *v *= Complex::new(c, s);
        }
    }
}

/// `e^{-iV dt}` pointwise.
fn potential_factors<T: Real>(potential: &[Complex<T>], dt: T) -> Vec<Complex<T>> {
    potential
        .iter()
        .map(|v| {
            let growth = (v.im * dt).exp();
            let (s, c) = (v.re * dt).sin_cos();
            Complex::new(growth * c, -growth * s)
        })
        .collect()
}

/// Exact flow of `∂_t u = iλ|u|^{α-1}u` over `dt`: a pointwise phase
/// rotation, so `|u|` is unchanged.
pub fn nonlinear_phase_step<T: Real>(u: &ComplexField<T>, lambda: T, alpha: T, dt: T) -> ComplexField<T> {
    let mut out = u.clone();
    nonlinear_phase_in_place(out.values_mut(), lambda, alpha, dt);
    out
}

/// Exact flow of `∂_t u = -iVu` over `dt`.
pub fn potential_step<T: Real>(u: &ComplexField<T>, potential: &ComplexField<T>, dt: T) -> Result<ComplexField<T>> {
    potential.ensure_same_grid(u.grid())?;
    let mut out = u.clone();
    for (v, f) in out.values_mut().iter_mut().zip(potential_factors(potential.values(), dt)) {
        *v *= f;
    }
    Ok(out)
}

/// `u ↦ u·(1 - i g(Y))` pointwise.
pub fn apply_jump<T: Real>(
    u: &ComplexField<T>,
    mark: &MarkFunction<T>,
    coeffs: &NoiseCoefficients,
) -> Result<ComplexField<T>> {
    mark.grid().eq(u.grid()).then_some(()).ok_or_else(|| {
        Error::GridMismatch("mark and field live on different grids".into())
    })?;
    let mut out = u.clone();
    jump_in_place(out.values_mut(), mark.samples().iter().copied(), coeffs);
    Ok(out)
}

fn jump_in_place<T: Real>(u: &mut [Complex<T>], marks: impl Iterator<Item = T>, coeffs: &NoiseCoefficients) {
    if coeffs.is_zero() {
        return;
    }
    for (v, y) in u.iter_mut().zip(marks) {
        let g = coeffs.g(y.as_f64());
        // 1 - i g = (1 + Im g) - i Re g
        *v *= Complex::new(T::of(1.0 + g.im), T::of(-g.re));
    }
}

fn apply_jump_mark<T: Real>(u: &mut [Complex<T>], mark: &JumpMark<T>, coeffs: &NoiseCoefficients) {
    let a = mark.amplitude();
    if a == T::one() {
        jump_in_place(u, mark.profile().samples().iter().copied(), coeffs);
    } else {
        // same rounding as `MarkFunction::scaled`
        jump_in_place(u, mark.profile().samples().iter().map(|&z| z * a), coeffs);
    }
}

/// One Strang step `P(h/2) N(h/2) L(h) N(h/2) P(h/2)` with cached factors
/// for the base step.
#[derive(Clone)]
struct Stepper<T: Real> {
    grid: GridSpec,
    transform: Transform<T>,
    lambda: T,
    alpha: T,
    dt: T,
    potential: Option<Vec<Complex<T>>>,
    linear: Vec<Complex<T>>,
    half_potential: Option<Vec<Complex<T>>>,
}

impl<T: Real> Stepper<T> {
    fn new(grid: GridSpec, lambda: T, alpha: T, dt: T, potential: &ComplexField<T>) -> Self {
        let potential = potential
            .values()
            .iter()
            .any(|v| !v.is_zero())
            .then(|| potential.values().to_vec());
        let half_potential = potential
            .as_deref()
            .map(|v| potential_factors(v, dt * T::of(0.5)));
        Self {
            grid,
            transform: Transform::new(grid),
            lambda,
            alpha,
            dt,
            linear: FourierMultiplier::<T>::free_group(grid, dt.as_f64()).symbol().to_vec(),
            potential,
            half_potential,
        }
    }

    fn step(&self, u: &mut [Complex<T>], h: T) {
        if h.is_zero() {
            return;
        }
        let cached = h == self.dt;
        let half = h * T::of(0.5);
        let half_potential = match (&self.potential, cached) {
            (None, _) => None,
            (Some(_), true) => self.half_potential.clone(),
            (Some(v), false) => Some(potential_factors(v, half)),
        };
        let apply_potential = |u: &mut [Complex<T>]| {
            if let Some(f) = &half_potential {
                for (v, m) in u.iter_mut().zip(f) {
                    *v *= m;
                }
            }
        };
        apply_potential(u);
        nonlinear_phase_in_place(u, self.lambda, self.alpha, half);
        self.transform.forward(u);
        if cached {
            for (v, m) in u.iter_mut().zip(&self.linear) {
                *v *= m;
            }
        } else {
            FourierMultiplier::<T>::free_group(self.grid, h.as_f64()).apply_to_spectrum(u);
        }
        self.transform.inverse(u);
        nonlinear_phase_in_place(u, self.lambda, self.alpha, half);
        apply_potential(u);
    }
}

fn check_boundary<T: Real>(u: &ComplexField<T>, time: f64, threshold: f64) -> Result<()> {
    let fraction = boundary_mass_fraction(u).as_f64();
    if fraction.is_nan() || !u.is_finite() {
        return Err(Error::InvalidState(format!("field became non-finite at t = {time}")));
    }
    if fraction > threshold {
        return Err(Error::BoundaryMass {
            time,
            fraction,
            threshold,
        });
    }
    Ok(())
}

/// Deterministic flow over a duration `tau` with potential `V`: substeps of
/// `cfg.dt`, the last one shortened to land exactly on `tau`. Negative `tau`
/// runs the flow backwards.
pub fn between_jump_evolve<T: Real>(
    u: &ComplexField<T>,
    potential: &ComplexField<T>,
    cfg: &SolverConfig<T>,
    tau: T,
) -> Result<ComplexField<T>> {
    u.ensure_valid()?;
    potential.ensure_same_grid(u.grid())?;
    if !(cfg.dt > T::zero()) {
        return Err(Error::Config("dt must be positive".into()));
    }
    let grid = *u.grid();
    let sign = if tau < T::zero() { -T::one() } else { T::one() };
    let length = Float::abs(tau);
    let stepper = Stepper::new(grid, cfg.lambda, cfg.alpha, cfg.dt * sign, potential);
    let mut out = u.clone();
    let mut done = T::zero();
    while done < length {
        let h = cfg.dt.min(length - done);
        let h = if (length - done - h) <= cfg.dt * T::of(1e-12) { length - done } else { h };
        stepper.step(out.values_mut(), h * sign);
        done += h;
        check_boundary(&out, (done * sign).as_f64(), cfg.boundary_threshold)?;
    }
    Ok(out)
}

/// Field immediately before and after one jump.
#[derive(Clone, Debug, PartialEq)]
pub struct JumpSnapshot<T> {
    pub time: T,
    pub mark: JumpMark<T>,
    pub pre: ComplexField<T>,
    pub post: ComplexField<T>,
}

/// A solved trajectory. Recorded values at a jump time are post-jump.
#[derive(Clone, Debug)]
pub struct PathRecord<T> {
    times: Vec<f64>,
    fields: Option<Vec<ComplexField<T>>>,
    series: ObservableSeries,
    path: CompoundPoissonPath<T>,
    snapshots: Vec<JumpSnapshot<T>>,
    initial: ComplexField<T>,
    terminal: ComplexField<T>,
}

impl<T: Real> PathRecord<T> {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn fields(&self) -> Option<&[ComplexField<T>]> {
        self.fields.as_deref()
    }

    pub fn series(&self) -> &ObservableSeries {
        &self.series
    }

    pub fn path(&self) -> &CompoundPoissonPath<T> {
        &self.path
    }

    pub fn snapshots(&self) -> &[JumpSnapshot<T>] {
        &self.snapshots
    }

    pub fn initial(&self) -> &ComplexField<T> {
        &self.initial
    }

    pub fn terminal(&self) -> &ComplexField<T> {
        &self.terminal
    }

    /// Index of the recorded time equal to `t` (up to 1e-12 relative).
    pub fn time_index(&self, t: f64) -> Result<usize> {
        let tol = 1e-12 * t.abs().max(1.0);
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= tol)
            .ok_or(Error::NotRecorded(t))
    }

    /// Stored field at a recorded time; needs `record_fields`.
    pub fn field_at(&self, t: f64) -> Result<&ComplexField<T>> {
        let idx = self.time_index(t)?;
        match &self.fields {
            Some(f) => Ok(&f[idx]),
            None if idx + 1 == self.times.len() => Ok(&self.terminal),
            None if idx == 0 => Ok(&self.initial),
            None => Err(Error::Config("fields were not recorded; enable record_fields".into())),
        }
    }

    /// Observable rows as CSV.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        self.series.write_csv(out)
    }
}

/// Pre-processed solver for one noise model and configuration: the
/// compensator potential is computed once and reused across paths.
#[derive(Clone)]
pub struct Solver<T: Real> {
    cfg: SolverConfig<T>,
    grid: GridSpec,
    coefficients: NoiseCoefficients,
    potential: ComplexField<T>,
    stepper: Stepper<T>,
    probe: Probe<T>,
}

impl<T: Real> Solver<T> {
    /// `noise` must already have finite activity.
    pub fn new(grid: GridSpec, noise: &LevyNoiseModel<T>, cfg: &SolverConfig<T>) -> Result<Self> {
        cfg.validate()?;
        let potential = noise.potential(&grid)?;
        Ok(Self {
            stepper: Stepper::new(grid, cfg.lambda, cfg.alpha, cfg.dt, &potential),
            probe: Probe::new(grid, cfg.lambda, cfg.alpha, cfg.gamma),
            cfg: cfg.clone(),
            grid,
            coefficients: noise.coefficients.clone(),
            potential,
        })
    }

    pub fn config(&self) -> &SolverConfig<T> {
        &self.cfg
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// `V = h_ν - z_ν`.
    pub fn potential(&self) -> &ComplexField<T> {
        &self.potential
    }

    /// Glues the deterministic flow between the jumps of `path` with the jump
    /// maps. Steps sit on the global lattice `k·dt`; a step containing jump
    /// times is split exactly at them.
    pub fn solve(&self, u0: &ComplexField<T>, path: &CompoundPoissonPath<T>) -> Result<PathRecord<T>> {
        let cfg = &self.cfg;
        u0.ensure_same_grid(&self.grid)?;
        u0.ensure_valid()?;
        let horizon_tol = T::of(1e-12) * cfg.horizon.max(T::one());
        if Float::abs(path.horizon() - cfg.horizon) > horizon_tol {
            return Err(Error::Config(format!(
                "path horizon {} differs from solver horizon {}",
                path.horizon(),
                cfg.horizon
            )));
        }
        check_boundary(u0, 0.0, cfg.boundary_threshold)?;

        let steps = cfg.steps();
        let mut series = ObservableSeries::new(cfg.gamma);
        let mut times = vec![0.0];
        let mut fields = cfg.record_fields.then(|| vec![u0.clone()]);
        series.push(self.probe.measure(0.0, u0));

        let mut u = u0.clone();
        let mut snapshots = Vec::with_capacity(path.jump_count());
        let mut jumps = path.jumps().iter().peekable();
        let mut now = T::zero();
        for k in 1..=steps {
            let end = cfg.grid_time(k);
            while let Some(jump) = jumps.next_if(|j| j.time <= end) {
                self.stepper.step(u.values_mut(), jump.time - now);
                now = jump.time;
                let pre = u.clone();
                apply_jump_mark(u.values_mut(), &jump.mark, &self.coefficients);
                check_boundary(&u, now.as_f64(), cfg.boundary_threshold)?;
                snapshots.push(JumpSnapshot {
                    time: now,
                    mark: jump.mark.clone(),
                    pre,
                    post: u.clone(),
                });
            }
            self.stepper.step(u.values_mut(), end - now);
            now = end;
            check_boundary(&u, now.as_f64(), cfg.boundary_threshold)?;
            if k % cfg.record_stride == 0 || k == steps {
                let t = now.as_f64();
                times.push(t);
                series.push(self.probe.measure(t, &u));
                if let Some(f) = fields.as_mut() {
                    f.push(u.clone());
                }
            }
        }
        Ok(PathRecord {
            times,
            fields,
            series,
            path: path.clone(),
            snapshots,
            initial: u0.clone(),
            terminal: u,
        })
    }

    /// Relative `L²` distance between the recorded `u(t)` and the right side
    /// of the mild (Duhamel) form evaluated from the record:
    ///
    /// `T(t)u₀ + ∫₀ᵗ T(t-s)[iλ|u|^{α-1}u - iVu](s) ds - i Σ_{T_n ≤ t} T(t-T_n)[u(T_n⁻) g(Y_n)]`.
    ///
    /// The time integral uses the left-point (predictable) rule on the
    /// recorded times plus the jump times, so the residual is first order in
    /// the record spacing.
    pub fn mild_residual(&self, record: &PathRecord<T>, t: f64) -> Result<f64> {
        let idx = record.time_index(t)?;
        let target = record.field_at(t)?;
        if idx == 0 {
            return Ok(0.0);
        }
        let fields = record
            .fields()
            .ok_or_else(|| Error::Config("mild residual needs record_fields".into()))?;
        let grid = self.grid;
        let t_end = record.times()[idx];

        // quadrature nodes (time, field), right-continuous
        let mut nodes: Vec<(f64, &ComplexField<T>)> = record.times()[..=idx]
            .iter()
            .copied()
            .zip(fields.iter())
            .collect();
        let tol = 1e-12 * t_end.max(1.0);
        for snap in record.snapshots() {
            let s = snap.time.as_f64();
            if s <= t_end + tol && !nodes.iter().any(|(r, _)| (r - s).abs() <= tol) {
                nodes.push((s, &snap.post));
            }
        }
        nodes.sort_by(|a, b| a.0.total_cmp(&b.0));

        let transform = Transform::<T>::new(grid);
        let propagate_into = |acc: &mut [Complex<T>], mut data: Vec<Complex<T>>, lag: f64, weight: Complex<T>| {
            transform.forward(&mut data);
            for (idx, (a, v)) in acc.iter_mut().zip(data).enumerate() {
                let (s, c) = (grid.wavenumber_sq(idx) * lag).sin_cos();
                *a += v * Complex::new(T::of(c), T::of(s)) * weight;
            }
        };

        let mut acc = vec![Complex::<T>::zero(); grid.len()];
        propagate_into(&mut acc, record.initial().values().to_vec(), t_end, Complex::new(T::one(), T::zero()));

        let lambda = self.cfg.lambda;
        let alpha = self.cfg.alpha;
        let floor = T::of(1e-300).max(T::min_positive_value());
        let i = Complex::new(T::zero(), T::one());
        for w in nodes.windows(2) {
            let (s, u) = w[0];
            let width = w[1].0 - s;
            if width <= 0.0 {
                continue;
            }
            let drift: Vec<Complex<T>> = u
                .values()
                .iter()
                .zip(self.potential.values())
                .map(|(&v, &pot)| {
                    let m = v.norm().max(floor);
                    let nl = if alpha == T::of(3.0) { v.norm_sqr() } else { m.powf(alpha - T::one()) };
                    i * v * (Complex::new(lambda * nl, T::zero()) - pot)
                })
                .collect();
            propagate_into(&mut acc, drift, t_end - s, Complex::new(T::of(width), T::zero()));
        }
        for snap in record.snapshots() {
            let s = snap.time.as_f64();
            if s > t_end + tol {
                break;
            }
            let mut jump = snap.pre.values().to_vec();
            let a = snap.mark.amplitude();
            for (v, &z) in jump.iter_mut().zip(snap.mark.profile().samples()) {
                let g = self.coefficients.g((z * a).as_f64());
                *v *= Complex::new(T::of(g.re), T::of(g.im));
            }
            propagate_into(&mut acc, jump, t_end - s, -i);
        }
        transform.inverse(&mut acc);
        let rhs = ComplexField::from_raw(grid, acc);
        let norm = crate::spectral::lp_norm(target, 2.0)?.as_f64();
        let diff = rhs.l2_distance(target)?.as_f64();
        Ok(if norm > 0.0 { diff / norm } else { diff })
    }
}

/// Solves one path with the compensator computed from `noise`.
pub fn solve_path<T: Real>(
    u0: &ComplexField<T>,
    noise: &LevyNoiseModel<T>,
    path: &CompoundPoissonPath<T>,
    cfg: &SolverConfig<T>,
) -> Result<PathRecord<T>> {
    Solver::new(*u0.grid(), noise, cfg)?.solve(u0, path)
}

/// Solution driven by `ν` restricted to `|z|_∞ > ε`. The jumps are sampled
/// at the finer level `finest ≤ ε` and filtered up, so runs at different
/// levels sharing `finest` and `seed` see nested jump sets.
pub fn solve_truncated<T: Real>(
    u0: &ComplexField<T>,
    noise: &LevyNoiseModel<T>,
    trunc: &TruncationSpec,
    finest: &TruncationSpec,
    seed: StreamSeed,
    cfg: &SolverConfig<T>,
) -> Result<PathRecord<T>> {
    if finest.epsilon() > trunc.epsilon() {
        return Err(Error::Config(format!(
            "sampling level {} is coarser than the truncation level {}",
            finest.epsilon(),
            trunc.epsilon()
        )));
    }
    let fine = noise.measure.restrict(finest);
    let path = PathSampler::new(&fine)?
        .with_truncation(finest.epsilon())
        .sample(cfg.horizon, seed)
        .filter_above(trunc.epsilon());
    solve_path(u0, &noise.restrict(trunc), &path, cfg)
}

/// Free-function form of [`Solver::mild_residual`].
pub fn mild_residual<T: Real>(
    record: &PathRecord<T>,
    noise: &LevyNoiseModel<T>,
    cfg: &SolverConfig<T>,
    t: f64,
) -> Result<f64> {
    Solver::new(*record.initial().grid(), noise, cfg)?.mild_residual(record, t)
}

/// Errors of the deterministic flow at `dt` and `dt/2` against a `dt/8`
/// reference.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelfConvergence {
    pub dt: f64,
    pub error_dt: f64,
    pub error_half: f64,
    pub ratio: f64,
    pub order: f64,
}

pub fn strang_self_convergence<T: Real>(
    u0: &ComplexField<T>,
    potential: &ComplexField<T>,
    cfg: &SolverConfig<T>,
) -> Result<SelfConvergence> {
    let run = |dt: T| {
        let mut c = cfg.clone();
        c.dt = dt;
        between_jump_evolve(u0, potential, &c, cfg.horizon)
    };
    let reference = run(cfg.dt / T::of(8.0))?;
    let error_dt = run(cfg.dt)?.l2_distance(&reference)?.as_f64();
    let error_half = run(cfg.dt / T::of(2.0))?.l2_distance(&reference)?.as_f64();
    let ratio = error_dt / error_half;
    Ok(SelfConvergence {
        dt: cfg.dt.as_f64(),
        error_dt,
        error_half,
        ratio,
        order: ratio.log2(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{CoefficientFamily, Jump, LevyMeasureModel};
    use crate::observables::mass;
    use crate::spectral::{free_propagate, lp_norm};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn grid() -> GridSpec {
        GridSpec::new(1, 128, 16.0).unwrap()
    }

    fn gaussian(grid: GridSpec) -> ComplexField<f64> {
        ComplexField::from_fn(grid, |x| Complex::new((-0.5 * x[0] * x[0]).exp(), 0.3 * (-x[0] * x[0]).exp()))
    }

    fn relative(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    fn cfg(lambda: f64, horizon: f64, dt: f64) -> SolverConfig<f64> {
        let mut c = SolverConfig::new(lambda, 3.0, horizon, dt);
        c.permissive = true;
        c
    }

    fn atoms(grid: GridSpec) -> LevyMeasureModel<f64> {
        LevyMeasureModel::atomic(vec![
            (2.0, MarkFunction::gaussian_bump(grid, 0.5, &[-2.0], 1.0).unwrap()),
            (1.0, MarkFunction::gaussian_bump(grid, -0.3, &[0.0], 2.0).unwrap()),
            (1.5, MarkFunction::gaussian_bump(grid, 0.8, &[1.5], 0.5).unwrap()),
        ])
        .unwrap()
    }

    #[test]
    fn config_validation() {
        let mut c = SolverConfig::new(1.0, 3.0, 1.0, 1e-3);
        assert!(c.validate().is_ok());
        c.lambda = -1.0;
        assert!(c.validate().is_err());
        c.permissive = true;
        assert!(c.validate().is_ok());
        c.dt = 2.0;
        assert!(c.validate().is_err());
        c.dt = 0.0;
        assert!(c.validate().is_err());
        let c = SolverConfig::new(1.0, 0.5, 1.0, 1e-3);
        assert!(c.validate().is_err());
        assert_eq!(SolverConfig::new(1.0, 3.0, 1.0, 1e-3).steps(), 1000);
        assert_eq!(SolverConfig::new(1.0, 3.0, 0.3, 0.1).steps(), 3);
        assert_eq!(SolverConfig::new(1.0, 3.0, 1.0, 0.3).steps(), 4);
    }

    #[test]
    fn nonlinear_step_examples() {
        let u = gaussian(grid());
        assert_eq!(nonlinear_phase_step(&u, 0.0, 3.0, 0.1), u);
        let one = ComplexField::from_fn(grid(), |_| Complex::new(1.0, 0.0));
        let r = nonlinear_phase_step(&one, 1.0, 3.0, 0.1);
        for v in r.values() {
            assert!((v.arg() - 0.1).abs() < 1e-15);
            assert!((v.norm() - 1.0).abs() < 1e-15);
        }
        for alpha in [1.0, 2.5, 3.0, 5.0] {
            let r = nonlinear_phase_step(&u, 1.7, alpha, 0.05);
            let (a, b) = (lp_norm(&r, 2.0).unwrap(), lp_norm(&u, 2.0).unwrap());
            assert!(relative(a, b) < 1e-14);
        }
        // sub-linear exponents are floored at zeros
        let z = ComplexField::<f64>::zeros(grid());
        assert!(nonlinear_phase_step(&z, 1.0, 0.5, 0.1).is_finite());
    }

    #[test]
    fn potential_step_examples() {
        let u = gaussian(grid());
        let zero = ComplexField::zeros(grid());
        assert_eq!(potential_step(&u, &zero, 0.1).unwrap(), u);
        let real = ComplexField::from_fn(grid(), |x| Complex::new(x[0].sin(), 0.0));
        let r = potential_step(&u, &real, 0.1).unwrap();
        assert!(relative(mass(&r), mass(&u)) < 1e-14);
        let damping = ComplexField::from_fn(grid(), |_| Complex::new(0.0, -0.7));
        let r = potential_step(&u, &damping, 0.2).unwrap();
        assert!(relative(mass(&r), mass(&u) * (-2.0 * 0.7 * 0.2f64).exp()) < 1e-12);
        let other = ComplexField::zeros(GridSpec::new(1, 64, 16.0).unwrap());
        assert!(matches!(potential_step(&u, &other, 0.1), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn free_flow_equals_free_group() {
        let u = gaussian(grid());
        let zero = ComplexField::zeros(grid());
        let out = between_jump_evolve(&u, &zero, &cfg(0.0, 1.0, 0.013), 0.7).unwrap();
        let exact = free_propagate(&u, 0.7).unwrap();
        assert!(out.l2_distance(&exact).unwrap() / lp_norm(&exact, 2.0).unwrap() < 1e-11);
        assert_eq!(between_jump_evolve(&u, &zero, &cfg(1.0, 1.0, 0.01), 0.0).unwrap(), u);
    }

    #[test]
    fn strang_is_second_order() {
        let g = GridSpec::new(1, 256, 16.0).unwrap();
        let u0 = ComplexField::from_fn(g, |x| Complex::new(1.0 / x[0].cosh(), 0.0));
        let zero = ComplexField::zeros(g);
        let r = strang_self_convergence(&u0, &zero, &cfg(1.0, 1.0, 0.02)).unwrap();
        assert!((3.0..=5.0).contains(&r.ratio), "{r:?}");
    }

    #[test]
    fn flow_is_time_reversible_with_real_potential() {
        let g = grid();
        let u0 = gaussian(g);
        let v = ComplexField::from_fn(g, |x| Complex::new(0.2 * (-x[0] * x[0] / 4.0).exp(), 0.0));
        let c = cfg(1.0, 1.0, 1e-3);
        let fwd = between_jump_evolve(&u0, &v, &c, 0.5).unwrap();
        let back = between_jump_evolve(&fwd, &v, &c, -0.5).unwrap();
        assert!(back.l2_distance(&u0).unwrap() / lp_norm(&u0, 2.0).unwrap() < 1e-9);
    }

    #[test]
    fn substep_matches_the_drift() {
        // (S(dt)u - u)/dt → -iΔu + iλ|u|²u - iVu
        let g = GridSpec::new(1, 128, 12.0).unwrap();
        let u0 = gaussian(g);
        let v = ComplexField::from_fn(g, |x| Complex::new(0.3 * (-x[0] * x[0]).exp(), -0.1));
        let lambda = 1.3;
        let mut spec = u0.spectrum();
        for (idx, s) in spec.iter_mut().enumerate() {
            // -iΔ ↦ i|κ|²
            *s *= Complex::new(0.0, g.wavenumber_sq(idx));
        }
        let lin = ComplexField::from_spectrum(g, spec).unwrap();
        let rhs: Vec<Complex<f64>> = u0
            .values()
            .iter()
            .zip(lin.values())
            .zip(v.values())
            .map(|((&u, &l), &pot)| l + Complex::<f64>::i() * lambda * u.norm_sqr() * u - Complex::<f64>::i() * pot * u)
            .collect();
        let err = |dt: f64| {
            let out = between_jump_evolve(&u0, &v, &cfg(lambda, 1.0, dt), dt).unwrap();
            out.values()
                .iter()
                .zip(u0.values())
                .zip(&rhs)
                .map(|((a, b), r)| ((a - b) / dt - r).norm())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(1e-4), err(5e-5));
        assert!(e1 < 1e-2, "{e1}");
        assert!((e1 / e2 - 2.0).abs() < 0.2, "{e1} {e2}");
    }

    #[test]
    fn jump_examples() {
        let g = grid();
        let u = gaussian(g);
        let y = MarkFunction::gaussian_bump(g, 0.7, &[0.5], 1.0).unwrap();
        assert_eq!(apply_jump(&u, &y, &NoiseCoefficients::zero()).unwrap(), u);
        for theta0 in [0.3, 1.0, 2.7] {
            let c = NoiseCoefficients::new(CoefficientFamily::PhaseRotation { theta0 }).unwrap();
            let r = apply_jump(&u, &y, &c).unwrap();
            assert!(relative(mass(&r), mass(&u)) < 1e-13);
        }
        let lin = NoiseCoefficients::new(CoefficientFamily::Linear { c1: 1.0, c2: 0.0 }).unwrap();
        let c = 0.4;
        let flat = MarkFunction::from_fn(g, |_| c).unwrap();
        let r = apply_jump(&u, &flat, &lin).unwrap();
        assert!(relative(mass(&r), mass(&u) * (1.0 + c * c)) < 1e-13);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn jump_mass_identity(seed in 0u64..1000, amp in -2.0f64..2.0, c1 in -2.0f64..2.0) {
            let g = GridSpec::new(1, 64, 8.0).unwrap();
            let u = ComplexField::from_fn(g, |x| {
                let s = seed as f64;
                Complex::new((x[0] * 0.37 * s).sin() + 1.1, (x[0] + s).cos())
            });
            let y = MarkFunction::gaussian_bump(g, amp, &[0.3], 1.2).unwrap();
            let coeffs = NoiseCoefficients::new(CoefficientFamily::Linear { c1, c2: 0.0 }).unwrap();
            let r = apply_jump(&u, &y, &coeffs).unwrap();
            let weighted: f64 = u.values().iter().zip(y.samples())
                .map(|(v, &z)| (Complex::new(1.0, 0.0) - Complex::<f64>::i() * coeffs.g(z)).norm_sqr() * v.norm_sqr())
                .sum::<f64>() * g.cell_volume();
            prop_assert!(((mass(&r) / mass(&u)) - weighted / mass(&u)).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_path_free_flow() {
        let g = grid();
        let u0 = gaussian(g);
        let c = cfg(0.0, 1.0, 1e-2);
        let rec = solve_path(&u0, &LevyNoiseModel::silent(), &CompoundPoissonPath::empty(1.0), &c).unwrap();
        let exact = free_propagate(&u0, 1.0).unwrap();
        assert!(rec.terminal().l2_distance(&exact).unwrap() < 1e-11);
        assert_eq!(rec.times().len(), 101);
        assert_eq!(*rec.times().last().unwrap(), 1.0);
    }

    #[test]
    fn phase_rotation_conserves_mass_on_every_record() {
        let g = grid();
        let u0 = gaussian(g);
        let noise = LevyNoiseModel::new(
            atoms(g),
            NoiseCoefficients::new(CoefficientFamily::PhaseRotation { theta0: 1.0 }).unwrap(),
        );
        let c = SolverConfig::new(1.0, 3.0, 1.0, 1e-3);
        for seed in 0..3 {
            let path = crate::noise::sample_path(&noise.measure, 1.0, seed).unwrap();
            let rec = solve_path(&u0, &noise, &path, &c).unwrap();
            let m0 = mass(&u0);
            assert!(rec.series().max_relative_mass_drift(m0) < 1e-10);
            assert_eq!(rec.snapshots().len(), path.jump_count());
        }
    }

    #[test]
    fn single_jump_scales_mass() {
        let g = grid();
        let u0 = gaussian(g);
        let c0 = 0.6;
        let flat = Arc::new(MarkFunction::from_fn(g, |_| c0).unwrap());
        let coeffs = NoiseCoefficients::new(CoefficientFamily::Linear { c1: 1.0, c2: 0.0 }).unwrap();
        let path = CompoundPoissonPath::from_jumps(
            1.0,
            vec![Jump {
                time: 0.5,
                mark: JumpMark::new(flat, 1.0),
            }],
        )
        .unwrap();
        // drift-free model with the same jump factor
        let noise = LevyNoiseModel::new(LevyMeasureModel::empty(), coeffs.clone());
        let rec = solve_path(&u0, &noise, &path, &cfg(0.0, 1.0, 1e-2)).unwrap();
        assert!(relative(mass(rec.terminal()), mass(&u0) * (1.0 + c0 * c0)) < 1e-10);
        let snap = &rec.snapshots()[0];
        let mark = snap.mark.to_mark();
        assert_eq!(apply_jump(&snap.pre, &mark, &coeffs).unwrap(), snap.post);
    }

    #[test]
    fn jumps_between_grid_points_are_hit_exactly() {
        let g = grid();
        let u0 = gaussian(g);
        let mark = Arc::new(MarkFunction::gaussian_bump(g, 0.5, &[0.0], 1.0).unwrap());
        let jumps = [0.0123, 0.0124, 0.5, 1.0]
            .into_iter()
            .map(|t| Jump {
                time: t,
                mark: JumpMark::new(Arc::clone(&mark), 1.0),
            })
            .collect();
        let path = CompoundPoissonPath::from_jumps(1.0, jumps).unwrap();
        let noise = LevyNoiseModel::new(
            atoms(g),
            NoiseCoefficients::new(CoefficientFamily::SineMean).unwrap(),
        );
        let rec = solve_path(&u0, &noise, &path, &SolverConfig::new(1.0, 3.0, 1.0, 0.01)).unwrap();
        let times: Vec<f64> = rec.snapshots().iter().map(|s| s.time).collect();
        assert_eq!(times, vec![0.0123, 0.0124, 0.5, 1.0]);
        // the record at T is post-jump
        assert_eq!(rec.snapshots()[3].post, *rec.terminal());
    }

    #[test]
    fn boundary_mass_aborts() {
        let g = GridSpec::new(1, 64, 4.0).unwrap();
        let u0 = ComplexField::from_fn(g, |x| Complex::new((-0.5 * x[0] * x[0]).exp(), 0.0));
        let mut c = cfg(0.0, 2.0, 0.01);
        c.boundary_threshold = 1e-8;
        let err = solve_path(&u0, &LevyNoiseModel::silent(), &CompoundPoissonPath::empty(2.0), &c).unwrap_err();
        assert!(matches!(err, Error::BoundaryMass { .. }), "{err}");
        assert!(err.is_numerical_abort());
    }

    #[test]
    fn truncated_runs_are_deterministic_and_nested() {
        let g = grid();
        let u0 = gaussian(g);
        let noise = LevyNoiseModel::new(
            atoms(g),
            NoiseCoefficients::new(CoefficientFamily::PhaseRotation { theta0: 1.0 }).unwrap(),
        );
        let c = SolverConfig::new(1.0, 3.0, 0.5, 1e-2);
        let finest = TruncationSpec::new(0.1).unwrap();
        let coarse = TruncationSpec::new(0.6).unwrap();
        let seed = StreamSeed::new(7, 3);
        let a = solve_truncated(&u0, &noise, &coarse, &finest, seed, &c).unwrap();
        let b = solve_truncated(&u0, &noise, &coarse, &finest, seed, &c).unwrap();
        assert_eq!(a.terminal(), b.terminal());
        assert_eq!(a.series(), b.series());
        let fine = solve_truncated(&u0, &noise, &finest, &finest, seed, &c).unwrap();
        let fine_times = fine.path().times();
        assert!(a.path().times().iter().all(|t| fine_times.contains(t)));
        // above every atom: plain NLS
        let none = solve_truncated(&u0, &noise, &TruncationSpec::new(1.0).unwrap(), &finest, seed, &c).unwrap();
        assert_eq!(none.path().jump_count(), 0);
        let plain = solve_path(&u0, &LevyNoiseModel::silent(), &CompoundPoissonPath::empty(0.5), &c).unwrap();
        assert_eq!(none.terminal(), plain.terminal());
    }

    #[test]
    fn mild_residual_trivial_cases() {
        let g = grid();
        let u0 = gaussian(g);
        let mut c = cfg(0.0, 0.5, 1e-2);
        c.record_fields = true;
        let silent = LevyNoiseModel::silent();
        let rec = solve_path(&u0, &silent, &CompoundPoissonPath::empty(0.5), &c).unwrap();
        assert!(mild_residual(&rec, &silent, &c, 0.0).unwrap() < 1e-13);
        for &t in rec.times() {
            assert!(mild_residual(&rec, &silent, &c, t).unwrap() <= 1e-11);
        }
        assert!(matches!(mild_residual(&rec, &silent, &c, 0.123), Err(Error::NotRecorded(_))));
    }

    #[test]
    fn mild_residual_is_first_order() {
        let g = grid();
        let u0 = gaussian(g);
        let noise = LevyNoiseModel::new(
            atoms(g),
            NoiseCoefficients::new(CoefficientFamily::SineMean).unwrap(),
        );
        let path = crate::noise::sample_path(&noise.measure, 0.5, 11).unwrap();
        assert!(path.jump_count() > 0);
        let res = |dt: f64| {
            let mut c = SolverConfig::new(1.0, 3.0, 0.5, dt);
            c.record_fields = true;
            let rec = solve_path(&u0, &noise, &path, &c).unwrap();
            mild_residual(&rec, &noise, &c, 0.5).unwrap()
        };
        let (r1, r2) = (res(4e-3), res(2e-3));
        assert!((1.5..=2.5).contains(&(r1 / r2)), "{r1} {r2}");
    }

    #[test]
    fn single_precision_solver_runs() {
        let g = GridSpec::new(1, 64, 12.0).unwrap();
        let u0 = ComplexField::<f32>::from_fn(g, |x| Complex::new((-0.5 * x[0] * x[0]).exp() as f32, 0.0));
        let noise = LevyNoiseModel::<f32>::silent();
        let mut c = SolverConfig::<f32>::new(1.0, 3.0, 0.5, 0.01);
        c.boundary_threshold = 1e-4;
        let rec = solve_path(&u0, &noise, &CompoundPoissonPath::empty(0.5), &c).unwrap();
        let m0 = rec.series().mass()[0];
        assert!(rec.series().max_relative_mass_drift(m0) < 1e-5);
    }
}
