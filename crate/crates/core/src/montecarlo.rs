//! Seeded ensembles and the convergence studies built on them.
//!
//! Path `k` of every ensemble draws its jumps from stream `(root, k)`. Paths
//! run on the rayon pool; results are collected in path order and reduced
//! sequentially, so summaries are bit-reproducible regardless of thread
//! count.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{PathRecord, Solver, SolverConfig};
use crate::noise::{CompoundPoissonPath, LevyNoiseModel, PathSampler, StreamSeed, TruncationSpec};
use crate::observables::{mass, ObservableSeries};
use crate::spectral::ComplexField;
use crate::{Error, Real, Result};

/// Differences below this are treated as exact agreement.
pub const IDENTICAL: f64 = 1e-11;
/// Accepted window for observed Strang orders.
pub const ORDER_WINDOW: (f64, f64) = (1.6, 2.4);
/// Accepted window for mild-residual halving ratios.
pub const RESIDUAL_WINDOW: (f64, f64) = (1.5, 2.5);

#[derive(Clone, Debug)]
pub struct EnsembleConfig<T: Real> {
    pub paths: usize,
    pub root_seed: u64,
    pub solver: SolverConfig<T>,
    pub noise: LevyNoiseModel<T>,
    pub initial: ComplexField<T>,
    /// Strictly decreasing `ε` levels for the truncation study.
    pub truncation_levels: Vec<f64>,
    /// Strictly decreasing step sizes for the `dt` study.
    pub dt_levels: Vec<T>,
    /// Sample once at the finest level and filter upwards.
    pub coupled: bool,
}

impl<T: Real> EnsembleConfig<T> {
    pub fn new(initial: ComplexField<T>, noise: LevyNoiseModel<T>, solver: SolverConfig<T>, paths: usize, root_seed: u64) -> Self {
        Self {
            paths,
            root_seed,
            solver,
            noise,
            initial,
            truncation_levels: Vec::new(),
            dt_levels: Vec::new(),
            coupled: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.paths == 0 {
            return Err(Error::Config("ensemble needs at least one path".into()));
        }
        if !self.truncation_levels.windows(2).all(|w| w[0] > w[1]) {
            return Err(Error::Config("truncation levels must be strictly decreasing".into()));
        }
        if self.truncation_levels.iter().any(|e| !(*e >= 0.0 && e.is_finite())) {
            return Err(Error::Config("truncation levels must be finite and >= 0".into()));
        }
        if !self.dt_levels.windows(2).all(|w| w[0] > w[1]) {
            return Err(Error::Config("dt levels must be strictly decreasing".into()));
        }
        self.solver.validate()
    }

    pub fn seed(&self, path: usize) -> StreamSeed {
        StreamSeed::new(self.root_seed, path as u64)
    }
}

/// Sample mean with its spread.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Statistic {
    pub mean: f64,
    pub variance: f64,
    /// `sd / √M`.
    pub stderr: f64,
    pub count: usize,
}

impl Statistic {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self::default();
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let variance = if n > 1 {
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self {
            mean,
            variance,
            stderr: (variance / n as f64).sqrt(),
            count: n,
        }
    }

    /// `|mean - target| ≤ k·stderr`, with a roundoff allowance for
    /// zero-variance samples.
    pub fn consistent_with(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.stderr + 1e-12 * target.abs().max(1e-300)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathDiagnostics {
    pub index: usize,
    pub jumps: usize,
    pub terminal_mass: f64,
    pub sup_mass: f64,
    pub sup_hamiltonian: f64,
    pub sup_virial: f64,
    /// Least-squares slope of mass against time.
    pub mass_slope: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathFailure {
    pub index: usize,
    pub numerical: bool,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub paths: usize,
    pub root_seed: u64,
    /// Some paths aborted; statistics cover the rest.
    pub partial: bool,
    pub failures: Vec<PathFailure>,
    pub initial_mass: f64,
    pub times: Vec<f64>,
    pub mass_mean: Vec<f64>,
    pub mass_variance: Vec<f64>,
    pub mass_stderr: Vec<f64>,
    /// Ensemble means of per-path suprema (`E sup`, not `sup E`).
    pub sup_mass: Statistic,
    pub sup_hamiltonian: Statistic,
    pub sup_virial: Statistic,
    pub jump_count: Statistic,
    /// `ρT` of the driving measure.
    pub expected_jumps: f64,
    pub mass_slope: Statistic,
    /// Max over paths and recorded times of `|mass - mass(u₀)| / mass(u₀)`.
    pub max_relative_mass_drift: f64,
    pub per_path: Vec<PathDiagnostics>,
}

impl EnsembleSummary {
    /// Every per-time mean mass lies within `k` standard errors of `mass(u₀)`.
    pub fn mean_mass_conserved(&self, k: f64) -> bool {
        self.mass_mean.iter().zip(&self.mass_stderr).all(|(m, se)| {
            (m - self.initial_mass).abs() <= k * se + 1e-12 * self.initial_mass
        })
    }

    /// The mean per-path mass slope is indistinguishable from zero at `k`σ.
    pub fn mass_drift_unsigned(&self, k: f64) -> bool {
        self.mass_slope.mean.abs() <= k * self.mass_slope.stderr + 1e-12 * self.initial_mass
    }

    /// Mean jump count within `k·√(ρT/M)` of `ρT`.
    pub fn jump_count_consistent(&self, k: f64) -> bool {
        let m = self.jump_count.count.max(1) as f64;
        (self.jump_count.mean - self.expected_jumps).abs() <= k * (self.expected_jumps / m).sqrt()
    }

    /// Per-time mass statistics as CSV.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::CRLF)
            .from_writer(out);
        w.write_record(["t", "mass_mean", "mass_variance", "mass_stderr"])?;
        for i in 0..self.times.len() {
            w.serialize((self.times[i], self.mass_mean[i], self.mass_variance[i], self.mass_stderr[i]))?;
        }
        w.flush()?;
        Ok(())
    }
}

fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    if x.len() < 2 {
        return 0.0;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

fn failure(index: usize, e: &Error) -> PathFailure {
    PathFailure {
        index,
        numerical: e.is_numerical_abort(),
        message: e.to_string(),
    }
}

/// Solves `M` independent paths and aggregates their observables.
pub fn run_ensemble<T: Real>(cfg: &EnsembleConfig<T>) -> Result<EnsembleSummary> {
    cfg.validate()?;
    let noise = cfg.noise.restrict(&cfg.solver.truncation);
    let grid = *cfg.initial.grid();
    let mut solver_cfg = cfg.solver.clone();
    solver_cfg.record_fields = false;
    let solver = Solver::new(grid, &noise, &solver_cfg)?;
    let sampler = PathSampler::new(&noise.measure)?.with_truncation(cfg.solver.truncation.epsilon());
    let horizon = cfg.solver.horizon;

    let outcomes: Vec<(usize, Result<ObservableSeries>)> = (0..cfg.paths)
        .into_par_iter()
        .map(|k| {
            let path = sampler.sample(horizon, cfg.seed(k));
            let jumps = path.jump_count();
            (jumps, solver.solve(&cfg.initial, &path).map(|r| r.series().clone()))
        })
        .collect();

    let initial_mass = mass(&cfg.initial).as_f64();
    let mut failures = Vec::new();
    let mut per_path = Vec::new();
    let mut series = Vec::new();
    let mut jump_counts = Vec::with_capacity(cfg.paths);
    for (index, (jumps, outcome)) in outcomes.into_iter().enumerate() {
        jump_counts.push(jumps as f64);
        match outcome {
            Ok(s) => {
                let sup = s.suprema();
                per_path.push(PathDiagnostics {
                    index,
                    jumps,
                    terminal_mass: s.samples().last().map_or(initial_mass, |x| x.mass),
                    sup_mass: sup.mass,
                    sup_hamiltonian: sup.hamiltonian,
                    sup_virial: sup.virial,
                    mass_slope: slope(&s.times(), &s.mass()),
                });
                series.push(s);
            }
            Err(e) => failures.push(failure(index, &e)),
        }
    }
    if series.is_empty() {
        let first = failures.first().map(|f| f.message.clone()).unwrap_or_default();
        return Err(Error::InvalidState(format!("every path aborted; first failure: {first}")));
    }

    let times = series[0].times();
    let mut mass_mean = Vec::with_capacity(times.len());
    let mut mass_variance = Vec::with_capacity(times.len());
    let mut mass_stderr = Vec::with_capacity(times.len());
    let mut column = Vec::with_capacity(series.len());
    for i in 0..times.len() {
        column.clear();
        column.extend(series.iter().map(|s| s.samples()[i].mass));
        let st = Statistic::of(&column);
        mass_mean.push(st.mean);
        mass_variance.push(st.variance);
        mass_stderr.push(st.stderr);
    }
    let max_relative_mass_drift = series
        .iter()
        .map(|s| s.max_relative_mass_drift(initial_mass))
        .fold(0.0, f64::max);
    let pick = |f: fn(&PathDiagnostics) -> f64| Statistic::of(&per_path.iter().map(f).collect::<Vec<_>>());
    Ok(EnsembleSummary {
        paths: cfg.paths,
        root_seed: cfg.root_seed,
        partial: !failures.is_empty(),
        failures,
        initial_mass,
        times,
        mass_mean,
        mass_variance,
        mass_stderr,
        sup_mass: pick(|p| p.sup_mass),
        sup_hamiltonian: pick(|p| p.sup_hamiltonian),
        sup_virial: pick(|p| p.sup_virial),
        mass_slope: pick(|p| p.mass_slope),
        jump_count: Statistic::of(&jump_counts),
        expected_jumps: sampler.total_rate() * horizon.as_f64(),
        max_relative_mass_drift,
        per_path,
    })
}

/// Per-level ensemble statistics of a convergence study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub level: f64,
    pub jumps: Statistic,
    pub sup_mass: Statistic,
    pub sup_hamiltonian: Statistic,
    pub sup_virial: Statistic,
    pub max_relative_mass_drift: f64,
}

/// Ceilings over all levels of the ensemble-mean suprema.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Caps {
    pub mass: f64,
    pub hamiltonian: f64,
    pub virial: f64,
}

impl Caps {
    /// Largest relative change of any cap against `other`.
    pub fn relative_change(&self, other: &Caps) -> f64 {
        [
            (self.mass, other.mass),
            (self.hamiltonian, other.hamiltonian),
            (self.virial, other.virial),
        ]
        .into_iter()
        .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(1e-300))
        .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    /// `"truncation"` or `"dt"`.
    pub study: String,
    pub note: String,
    pub paths: usize,
    pub levels: Vec<f64>,
    /// Consecutive-level differences, one per pair of levels.
    pub differences: Vec<Statistic>,
    /// Observed orders from consecutive differences (`dt` study only).
    pub orders: Vec<f64>,
    pub level_stats: Vec<LevelStats>,
    pub caps: Caps,
    pub strictly_decreasing: bool,
    /// All differences are at roundoff: the levels coincide.
    pub identical: bool,
    pub passed: bool,
    pub failures: Vec<PathFailure>,
}

fn level_stats(level: f64, jumps: &[f64], series: &[&ObservableSeries], initial_mass: f64) -> LevelStats {
    let col = |f: fn(&ObservableSeries) -> f64| Statistic::of(&series.iter().map(|s| f(s)).collect::<Vec<_>>());
    LevelStats {
        level,
        jumps: Statistic::of(jumps),
        sup_mass: col(|s| s.suprema().mass),
        sup_hamiltonian: col(|s| s.suprema().hamiltonian),
        sup_virial: col(|s| s.suprema().virial),
        max_relative_mass_drift: series
            .iter()
            .map(|s| s.max_relative_mass_drift(initial_mass))
            .fold(0.0, f64::max),
    }
}

fn caps(stats: &[LevelStats]) -> Caps {
    stats.iter().fold(
        Caps {
            mass: 0.0,
            hamiltonian: 0.0,
            virial: 0.0,
        },
        |c, s| Caps {
            mass: c.mass.max(s.sup_mass.mean),
            hamiltonian: c.hamiltonian.max(s.sup_hamiltonian.mean),
            virial: c.virial.max(s.sup_virial.mean),
        },
    )
}

/// `sup_t ‖a(t) - b(t)‖_{L²}` over the shared recorded times.
fn sup_distance<T: Real>(a: &PathRecord<T>, b: &PathRecord<T>) -> Result<f64> {
    let (fa, fb) = match (a.fields(), b.fields()) {
        (Some(x), Some(y)) => (x, y),
        _ => return Err(Error::Config("sup distance needs recorded fields".into())),
    };
    fa.iter()
        .zip(fb)
        .map(|(x, y)| x.l2_distance(y).map(|d| d.as_f64()))
        .try_fold(0.0f64, |m, d| d.map(|d| m.max(d)))
}

/// Coupled truncation study: `D_j = E sup_t ‖u_{ε_j}(t) - u_{ε_{j+1}}(t)‖`.
///
/// Each path is sampled once at the finest level and filtered up, so the
/// differences measure the effect of the small jumps alone. The Cauchy
/// behaviour of `D_j` is an observable proxy for tightness of the truncated
/// solutions, not a certificate of it.
pub fn truncation_study<T: Real>(cfg: &EnsembleConfig<T>) -> Result<ConvergenceReport> {
    cfg.validate()?;
    if !cfg.coupled {
        return Err(Error::Config(
            "truncation study needs coupled sampling; uncoupled differences are dominated by sampling noise".into(),
        ));
    }
    let levels = &cfg.truncation_levels;
    if levels.len() < 3 {
        return Err(Error::Config("truncation study needs at least three levels".into()));
    }
    let grid = *cfg.initial.grid();
    let finest = TruncationSpec::new(*levels.last().unwrap())?;
    let sampler = PathSampler::new(&cfg.noise.measure.restrict(&finest))?.with_truncation(finest.epsilon());
    let mut solver_cfg = cfg.solver.clone();
    solver_cfg.record_fields = true;
    let solvers = levels
        .iter()
        .map(|&eps| {
            let noise = cfg.noise.restrict(&TruncationSpec::new(eps)?);
            let mut c = solver_cfg.clone();
            c.truncation = TruncationSpec::new(eps)?;
            Solver::new(grid, &noise, &c)
        })
        .collect::<Result<Vec<_>>>()?;
    let horizon = cfg.solver.horizon;

    let outcomes: Vec<PathResult> = (0..cfg.paths)
        .into_par_iter()
        .map(|k| {
            let fine = sampler.sample(horizon, cfg.seed(k));
            let mut records = Vec::with_capacity(levels.len());
            for (solver, &eps) in solvers.iter().zip(levels) {
                let path = fine.filter_above(eps);
                records.push(solver.solve(&cfg.initial, &path)?);
            }
            let diffs = records
                .windows(2)
                .map(|w| sup_distance(&w[0], &w[1]))
                .collect::<Result<Vec<_>>>()?;
            let jumps = records.iter().map(|r| r.path().jump_count()).collect();
            let series = records.into_iter().map(|r| r.series().clone()).collect();
            Ok((diffs, jumps, series))
        })
        .collect();

    summarize(
        "truncation",
        "coupled-truncation Cauchy differences D_j = E sup_t |u_j - u_{j+1}|_{L2}; an observable proxy for tightness, not a proof of it",
        cfg,
        levels.clone(),
        outcomes,
        |d| {
            let strictly = d.windows(2).all(|w| w[0].mean > w[1].mean);
            (Vec::new(), strictly)
        },
    )
}

/// Per path: distances between consecutive levels, jump counts and series
/// per level.
type PathResult = Result<(Vec<f64>, Vec<usize>, Vec<ObservableSeries>)>;

fn summarize<T: Real>(
    study: &str,
    note: &str,
    cfg: &EnsembleConfig<T>,
    levels: Vec<f64>,
    outcomes: Vec<PathResult>,
    judge: impl Fn(&[Statistic]) -> (Vec<f64>, bool),
) -> Result<ConvergenceReport> {
    let initial_mass = mass(&cfg.initial).as_f64();
    let mut failures = Vec::new();
    let mut ok = Vec::new();
    for (index, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(v) => ok.push(v),
            Err(e) => failures.push(failure(index, &e)),
        }
    }
    if ok.is_empty() {
        let first = failures.first().map(|f| f.message.clone()).unwrap_or_default();
        return Err(Error::InvalidState(format!("every path aborted; first failure: {first}")));
    }
    let pairs = levels.len() - 1;
    let differences: Vec<Statistic> = (0..pairs)
        .map(|j| Statistic::of(&ok.iter().map(|(d, _, _)| d[j]).collect::<Vec<_>>()))
        .collect();
    let level_stats: Vec<LevelStats> = levels
        .iter()
        .enumerate()
        .map(|(j, &level)| {
            let jumps: Vec<f64> = ok.iter().map(|(_, n, _)| n[j] as f64).collect();
            let series: Vec<&ObservableSeries> = ok.iter().map(|(_, _, s)| &s[j]).collect();
            level_stats(level, &jumps, &series, initial_mass)
        })
        .collect();
    let identical = differences.iter().all(|d| d.mean <= IDENTICAL);
    let (orders, judged) = judge(&differences);
    let strictly_decreasing = differences.windows(2).all(|w| w[0].mean > w[1].mean);
    Ok(ConvergenceReport {
        study: study.into(),
        note: note.into(),
        paths: cfg.paths,
        levels,
        differences,
        orders,
        caps: caps(&level_stats),
        level_stats,
        strictly_decreasing,
        identical,
        passed: failures.is_empty() && (identical || judged),
        failures,
    })
}

/// Reuses each path's jumps across the `dt` levels and measures the
/// terminal-field differences between consecutive levels.
pub fn dt_study<T: Real>(cfg: &EnsembleConfig<T>) -> Result<ConvergenceReport> {
    cfg.validate()?;
    let dts = &cfg.dt_levels;
    if dts.len() < 3 {
        return Err(Error::Config("dt study needs at least three levels".into()));
    }
    let grid = *cfg.initial.grid();
    let noise = cfg.noise.restrict(&cfg.solver.truncation);
    let sampler = PathSampler::new(&noise.measure)?.with_truncation(cfg.solver.truncation.epsilon());
    let solvers = dts
        .iter()
        .map(|&dt| {
            let mut c = cfg.solver.clone();
            c.dt = dt;
            c.record_fields = false;
            Solver::new(grid, &noise, &c)
        })
        .collect::<Result<Vec<_>>>()?;
    let horizon = cfg.solver.horizon;

    let outcomes: Vec<_> = (0..cfg.paths)
        .into_par_iter()
        .map(|k| {
            let path = sampler.sample(horizon, cfg.seed(k));
            let records = solvers
                .iter()
                .map(|s| s.solve(&cfg.initial, &path))
                .collect::<Result<Vec<_>>>()?;
            let diffs = records
                .windows(2)
                .map(|w| w[0].terminal().l2_distance(w[1].terminal()).map(|d| d.as_f64()))
                .collect::<Result<Vec<_>>>()?;
            let jumps = vec![path.jump_count(); records.len()];
            let series = records.into_iter().map(|r| r.series().clone()).collect();
            Ok((diffs, jumps, series))
        })
        .collect();

    let levels: Vec<f64> = dts.iter().map(|d| d.as_f64()).collect();
    let steps: Vec<f64> = levels.windows(2).map(|w| (w[0] / w[1]).ln()).collect();
    summarize(
        "dt",
        "terminal-field differences between consecutive dt levels on shared jump paths; order = ln(d_j/d_{j+1}) / ln(dt_j/dt_{j+1})",
        cfg,
        levels.clone(),
        outcomes,
        |d| {
            let orders: Vec<f64> = d
                .windows(2)
                .zip(&steps)
                .map(|(w, s)| (w[0].mean / w[1].mean).ln() / s)
                .collect();
            let ok = orders.iter().all(|o| (ORDER_WINDOW.0..=ORDER_WINDOW.1).contains(o));
            (orders, ok)
        },
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualPath {
    pub index: usize,
    pub jumps: usize,
    /// Mild residual at `T`, one per `dt` level.
    pub residuals: Vec<f64>,
    /// `r(dt_j) / r(dt_{j+1})`.
    pub ratios: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub dt_levels: Vec<f64>,
    pub horizon: f64,
    pub paths: Vec<ResidualPath>,
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// Every first-halving ratio lies in the accepted window.
    pub passed: bool,
    pub failures: Vec<PathFailure>,
}

/// Mild-form residual at `T` for each path at each `dt` level (defaults to
/// `dt, dt/2, dt/4` when no levels are configured).
pub fn mild_residual_study<T: Real>(cfg: &EnsembleConfig<T>) -> Result<ResidualReport> {
    cfg.validate()?;
    let dts: Vec<T> = if cfg.dt_levels.len() >= 2 {
        cfg.dt_levels.clone()
    } else {
        let dt = cfg.solver.dt;
        vec![dt, dt / T::of(2.0), dt / T::of(4.0)]
    };
    let grid = *cfg.initial.grid();
    let noise = cfg.noise.restrict(&cfg.solver.truncation);
    let sampler = PathSampler::new(&noise.measure)?.with_truncation(cfg.solver.truncation.epsilon());
    let solvers = dts
        .iter()
        .map(|&dt| {
            let mut c = cfg.solver.clone();
            c.dt = dt;
            c.record_fields = true;
            Solver::new(grid, &noise, &c)
        })
        .collect::<Result<Vec<_>>>()?;
    let horizon = cfg.solver.horizon;
    let t_end = horizon.as_f64();

    let outcomes: Vec<Result<ResidualPath>> = (0..cfg.paths)
        .into_par_iter()
        .map(|k| {
            let path: CompoundPoissonPath<T> = sampler.sample(horizon, cfg.seed(k));
            let residuals = solvers
                .iter()
                .map(|s| {
                    let record = s.solve(&cfg.initial, &path)?;
                    s.mild_residual(&record, t_end)
                })
                .collect::<Result<Vec<_>>>()?;
            let ratios = residuals.windows(2).map(|w| w[0] / w[1]).collect();
            Ok(ResidualPath {
                index: k,
                jumps: path.jump_count(),
                residuals,
                ratios,
            })
        })
        .collect();

    let mut paths = Vec::new();
    let mut failures = Vec::new();
    for (index, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(p) => paths.push(p),
            Err(e) => failures.push(failure(index, &e)),
        }
    }
    let first: Vec<f64> = paths.iter().map(|p| p.ratios[0]).collect();
    let min_ratio = first.iter().copied().fold(f64::INFINITY, f64::min);
    let max_ratio = first.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(ResidualReport {
        dt_levels: dts.iter().map(|d| d.as_f64()).collect(),
        horizon: t_end,
        passed: failures.is_empty()
            && !paths.is_empty()
            && first.iter().all(|r| (RESIDUAL_WINDOW.0..=RESIDUAL_WINDOW.1).contains(r)),
        min_ratio,
        max_ratio,
        paths,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{
        sample_path, AmplitudeDensity, CoefficientFamily, LevyMeasureModel, MarkFunction, NoiseCoefficients,
    };
    use crate::GridSpec;
    use num_complex::Complex;

    fn grid() -> GridSpec {
        GridSpec::new(1, 128, 16.0).unwrap()
    }

    fn u0() -> ComplexField<f64> {
        ComplexField::from_fn(grid(), |x| Complex::new((-0.5 * x[0] * x[0]).exp(), 0.0))
    }

    fn atoms() -> LevyMeasureModel<f64> {
        LevyMeasureModel::atomic(vec![
            (2.0, MarkFunction::gaussian_bump(grid(), 0.5, &[-2.0], 1.0).unwrap()),
            (1.5, MarkFunction::gaussian_bump(grid(), 0.8, &[1.5], 0.5).unwrap()),
        ])
        .unwrap()
    }

    fn ensemble(family: CoefficientFamily, lambda: f64, paths: usize) -> EnsembleConfig<f64> {
        let noise = LevyNoiseModel::new(atoms(), NoiseCoefficients::new(family).unwrap());
        let mut solver = SolverConfig::new(lambda, 3.0, 0.5, 1e-2);
        solver.permissive = true;
        EnsembleConfig::new(u0(), noise, solver, paths, 17)
    }

    #[test]
    fn statistic_basics() {
        let s = Statistic::of(&[1.0, 2.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.variance, 1.0);
        assert!((s.stderr - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
        let one = Statistic::of(&[4.0]);
        assert_eq!((one.mean, one.variance, one.stderr), (4.0, 0.0, 0.0));
    }

    #[test]
    fn single_path_summary_is_that_path() {
        let cfg = ensemble(CoefficientFamily::SineMean, 1.0, 1);
        let summary = run_ensemble(&cfg).unwrap();
        let path = sample_path(&cfg.noise.measure, 0.5, cfg.seed(0)).unwrap();
        let rec = crate::dynamics::solve_path(&cfg.initial, &cfg.noise, &path, &cfg.solver).unwrap();
        assert_eq!(summary.mass_mean, rec.series().mass());
        assert!(summary.mass_variance.iter().all(|&v| v == 0.0));
        assert_eq!(summary.sup_hamiltonian.mean, rec.series().suprema().hamiltonian);
        assert_eq!(summary.jump_count.mean, path.jump_count() as f64);
    }

    #[test]
    fn free_flow_ensemble_has_constant_mass() {
        let cfg = ensemble(CoefficientFamily::Zero, 0.0, 6);
        let s = run_ensemble(&cfg).unwrap();
        for (m, v) in s.mass_mean.iter().zip(&s.mass_variance) {
            assert!((m - s.initial_mass).abs() < 1e-12 * s.initial_mass);
            assert!(*v < 1e-12);
        }
    }

    #[test]
    fn ensembles_are_reproducible() {
        let cfg = ensemble(CoefficientFamily::SineMean, 1.0, 8);
        assert_eq!(run_ensemble(&cfg).unwrap(), run_ensemble(&cfg).unwrap());
    }

    #[test]
    fn ensemble_config_validation() {
        let mut cfg = ensemble(CoefficientFamily::Zero, 1.0, 0);
        assert!(cfg.validate().is_err());
        cfg.paths = 2;
        cfg.truncation_levels = vec![0.1, 0.2];
        assert!(cfg.validate().is_err());
        cfg.truncation_levels = vec![0.2, 0.1];
        cfg.dt_levels = vec![0.01, 0.01];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn truncation_study_degenerate_levels() {
        // every atom is above the largest level: all levels see the same jumps
        let mut cfg = ensemble(CoefficientFamily::PhaseRotation { theta0: 1.0 }, 1.0, 4);
        cfg.truncation_levels = vec![0.4, 0.2, 0.1];
        let r = truncation_study(&cfg).unwrap();
        assert!(r.differences.iter().all(|d| d.mean <= 1e-12), "{r:?}");
        assert!(r.identical && r.passed);
        // a single atom below the smallest level: no jumps at any level
        let small = LevyMeasureModel::atomic(vec![(3.0, MarkFunction::gaussian_bump(grid(), 0.05, &[0.0], 1.0).unwrap())]).unwrap();
        cfg.noise.measure = small;
        let r = truncation_study(&cfg).unwrap();
        assert!(r.level_stats.iter().all(|l| l.jumps.mean == 0.0));
        assert!(r.differences.iter().all(|d| d.mean == 0.0));
        cfg.coupled = false;
        assert!(truncation_study(&cfg).is_err());
    }

    #[test]
    fn truncation_study_on_power_law_measure() {
        let base = MarkFunction::gaussian_bump(grid(), 1.0, &[0.0], 1.0).unwrap();
        let measure = LevyMeasureModel::parametric(
            base,
            AmplitudeDensity::PowerLaw {
                scale: 1.0,
                exponent: 1.5,
            },
            0.0,
            1.0,
        )
        .unwrap();
        let noise = LevyNoiseModel::new(
            measure,
            NoiseCoefficients::new(CoefficientFamily::PhaseRotation { theta0: 1.0 }).unwrap(),
        );
        let mut solver = SolverConfig::new(1.0, 3.0, 0.5, 1e-2);
        solver.record_stride = 5;
        let mut cfg = EnsembleConfig::new(u0(), noise, solver, 8, 3);
        cfg.truncation_levels = vec![0.4, 0.2, 0.1];
        let r = truncation_study(&cfg).unwrap();
        assert!(r.differences.iter().all(|d| d.mean.is_finite() && d.mean > 0.0));
        // finer levels carry at least as many jumps
        assert!(r.level_stats.windows(2).all(|w| w[0].jumps.mean <= w[1].jumps.mean));
        assert!(r.level_stats.iter().all(|l| l.max_relative_mass_drift < 1e-10));
    }

    #[test]
    fn dt_study_free_flow_is_exact() {
        let mut cfg = ensemble(CoefficientFamily::Zero, 0.0, 2);
        cfg.dt_levels = vec![0.05, 0.025, 0.0125];
        let r = dt_study(&cfg).unwrap();
        assert!(r.differences.iter().all(|d| d.mean <= 1e-11));
        assert!(r.passed && r.identical);
    }

    #[test]
    fn dt_study_conserves_mass_at_every_level() {
        let mut cfg = ensemble(CoefficientFamily::PhaseRotation { theta0: 1.0 }, 1.0, 3);
        cfg.dt_levels = vec![0.02, 0.01, 0.005];
        let r = dt_study(&cfg).unwrap();
        assert!(r.level_stats.iter().all(|l| l.max_relative_mass_drift < 1e-10));
        assert_eq!(r.orders.len(), 1);
    }
}
