use serde::Serialize;
use snls::analysis::{dispersive_decay_check, lp_exponent, DecayReport};
use snls::dynamics::Solver;
use snls::montecarlo::{self, EnsembleSummary, PathDiagnostics};
use snls::noise::{HypothesisReport, LevyConstants, PathSampler, StreamSeed};
use snls::observables::ObservableSample;
use snls::spectral::write_field;

use crate::config::{Hypothesis, RunConfig};
use crate::output::RunDir;
use crate::{Common, Failure};

/// Along-path mass tolerance when the coefficients conserve it exactly.
pub const PATHWISE_MASS_TOLERANCE: f64 = 1e-10;

pub type Handler = fn(&RunConfig, &RunDir) -> Result<(), Failure>;

/// Loads the config, applies the flag overrides, creates the run directory
/// and hands both to `run`.
pub fn execute(command: &str, common: &Common, run: Handler) -> Result<(), Failure> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output.dir = out.clone();
    }
    let dir = RunDir::create(&cfg.output.dir, command, &cfg)?;
    // reports are written even when the run then fails an invariant
    println!("run directory: {}", dir.path().display());
    run(&cfg, &dir)
}

fn invariant(ok: bool, msg: impl FnOnce() -> String) -> Result<(), Failure> {
    if ok {
        Ok(())
    } else {
        Err(Failure::Invariant(msg()))
    }
}

/// Whether the configured coefficients conserve mass pathwise / in mean, as
/// decided by the classifier on the configured range.
fn conservation(cfg: &RunConfig) -> Result<(bool, bool), Failure> {
    let r = snls::noise::check_hypotheses(&cfg.coefficients()?, cfg.sample_range()?);
    Ok((r.pathwise_mass.holds, r.mean_mass.holds))
}

#[derive(Serialize)]
struct JumpRow {
    t: f64,
    amplitude: f64,
    sup_norm: f64,
}

#[derive(Serialize)]
struct SimulateReport {
    seed: u64,
    jumps: usize,
    records: usize,
    initial_mass: f64,
    terminal_mass: f64,
    max_relative_mass_drift: f64,
    pathwise_mass_expected: bool,
    terminal: ObservableSample,
    sup_hamiltonian: f64,
    sup_virial: f64,
    dumps: Vec<String>,
}

pub fn simulate(cfg: &RunConfig, dir: &RunDir) -> Result<(), Failure> {
    let grid = cfg.grid_spec()?;
    let u0 = cfg.initial(grid)?;
    let mut solver_cfg = cfg.solver()?;
    solver_cfg.record_fields = !cfg.output.dump_times.is_empty();
    let noise = cfg.noise(grid)?.restrict(&solver_cfg.truncation);
    let sampler = PathSampler::new(&noise.measure)
        .map_err(|e| Failure::Config(format!("[noise]: {e}; set [solver].truncation > 0")))?
        .with_truncation(solver_cfg.truncation.epsilon());
    let path = sampler.sample(solver_cfg.horizon, StreamSeed::new(cfg.seed, 0));
    let solver = Solver::new(grid, &noise, &solver_cfg)?;
    let record = solver.solve(&u0, &path)?;

    let mut dumps = Vec::new();
    for &t in &cfg.output.dump_times {
        let field = record
            .field_at(t)
            .map_err(|e| Failure::Config(format!("[output].dump_times: {e}")))?;
        let name = format!("field-t{t}.bin");
        dir.write_with(&name, |w| write_field(w, field))?;
        dumps.push(name);
    }
    dir.write_with("series.csv", |w| record.write_csv(w))?;
    dir.write_with("jumps.csv", |w| {
        let mut csv = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(w);
        for j in path.jumps() {
            csv.serialize(JumpRow {
                t: j.time,
                amplitude: j.mark.amplitude(),
                sup_norm: j.mark.sup_norm(),
            })?;
        }
        csv.flush()?;
        Ok(())
    })?;

    let series = record.series();
    let initial_mass = series.samples()[0].mass;
    let drift = series.max_relative_mass_drift(initial_mass);
    let (pathwise, _) = conservation(cfg)?;
    let sup = series.suprema();
    let terminal = *series.samples().last().expect("at least the initial record");
    dir.write_json(
        "summary.json",
        &SimulateReport {
            seed: cfg.seed,
            jumps: path.jump_count(),
            records: series.len(),
            initial_mass,
            terminal_mass: terminal.mass,
            max_relative_mass_drift: drift,
            pathwise_mass_expected: pathwise,
            terminal,
            sup_hamiltonian: sup.hamiltonian,
            sup_virial: sup.virial,
            dumps,
        },
    )?;
    println!(
        "simulate: {} jumps, {} records, max relative mass drift {drift:.3e}",
        path.jump_count(),
        series.len()
    );
    invariant(!pathwise || drift <= PATHWISE_MASS_TOLERANCE, || {
        format!("coefficients conserve mass pathwise but the drift is {drift:e} > {PATHWISE_MASS_TOLERANCE:e}")
    })
}

#[derive(Clone, Copy, Serialize)]
struct EnsembleChecks {
    sigma: f64,
    pathwise_mass_expected: bool,
    mean_mass_expected: bool,
    pathwise_mass: bool,
    mean_mass: bool,
    mass_drift_unsigned: bool,
    jump_count: bool,
}

#[derive(Serialize)]
struct EnsembleReport<'a> {
    checks: EnsembleChecks,
    summary: &'a EnsembleSummary,
}

pub fn ensemble(cfg: &RunConfig, dir: &RunDir) -> Result<(), Failure> {
    let ens = cfg.ensemble()?;
    let s = montecarlo::run_ensemble(&ens)?;
    let (pathwise_expected, mean_expected) = conservation(cfg)?;
    let k = cfg.ensemble.sigma;
    let checks = EnsembleChecks {
        sigma: k,
        pathwise_mass_expected: pathwise_expected,
        mean_mass_expected: mean_expected,
        pathwise_mass: s.max_relative_mass_drift <= PATHWISE_MASS_TOLERANCE,
        mean_mass: s.mean_mass_conserved(k),
        mass_drift_unsigned: s.mass_drift_unsigned(k),
        jump_count: s.jump_count_consistent(k),
    };
    dir.write_with("mass.csv", |w| s.write_csv(w))?;
    if cfg.ensemble.per_path_csv {
        dir.write_with("paths.csv", |w| {
            let mut csv = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(w);
            for p in &s.per_path {
                csv.serialize::<&PathDiagnostics>(p)?;
            }
            csv.flush()?;
            Ok(())
        })?;
    }
    dir.write_json("ensemble.json", &EnsembleReport { checks, summary: &s })?;
    println!(
        "ensemble: {} paths ({} failed), E sup H = {:.6}, E sup virial = {:.6}, mean jumps {:.3} (expected {:.3})",
        s.paths,
        s.failures.len(),
        s.sup_hamiltonian.mean,
        s.sup_virial.mean,
        s.jump_count.mean,
        s.expected_jumps
    );
    // only conservation laws the coefficients promise are judged
    let judged = |expected: bool, ok: bool| if expected { verdict(ok) } else { "not expected" };
    println!(
        "  pathwise mass {} (max drift {:.3e}), mean mass within {k} stderr {}, drift unsigned {}",
        judged(pathwise_expected, checks.pathwise_mass),
        s.max_relative_mass_drift,
        judged(mean_expected, checks.mean_mass),
        judged(mean_expected, checks.mass_drift_unsigned)
    );
    if s.partial {
        return Err(Failure::Numerical(format!(
            "{} of {} paths aborted; first: {}",
            s.failures.len(),
            s.paths,
            s.failures[0].message
        )));
    }
    invariant(!pathwise_expected || checks.pathwise_mass, || {
        format!("pathwise mass drift {:e} exceeds {PATHWISE_MASS_TOLERANCE:e}", s.max_relative_mass_drift)
    })?;
    invariant(!mean_expected || (checks.mean_mass && checks.mass_drift_unsigned), || {
        format!("mean mass departs from {} by more than {k} standard errors", s.initial_mass)
    })
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAILED"
    }
}

#[derive(Serialize)]
struct HypothesesReport {
    #[serde(flatten)]
    report: HypothesisReport,
    growth_constants: [f64; 2],
    levy_constants: LevyConstants,
    required: Vec<Hypothesis>,
    passed: bool,
}

pub fn verify_hypotheses(cfg: &RunConfig, dir: &RunDir) -> Result<(), Failure> {
    let grid = cfg.grid_spec()?;
    let coeffs = cfg.coefficients()?;
    let report = snls::noise::check_hypotheses(&coeffs, cfg.sample_range()?);
    let constants = cfg.measure(grid)?.levy_constants();
    let holds = |h: &Hypothesis| match h {
        Hypothesis::LinearGrowth => report.linear_growth.holds,
        Hypothesis::PathwiseMass => report.pathwise_mass.holds,
        Hypothesis::MeanMass => report.mean_mass.holds,
    };
    let failed: Vec<Hypothesis> = cfg.coefficients.require.iter().copied().filter(|h| !holds(h)).collect();
    let mark = |b: bool| if b { "yes" } else { "no" };
    println!("coefficients {}", report.coefficients);
    println!("  linear growth        {}", mark(report.linear_growth.holds));
    println!("  pathwise mass        {}", mark(report.pathwise_mass.holds));
    println!("  mean mass            {}", mark(report.mean_mass.holds));
    println!(
        "measure constants C0 = {:.6e}, C1 = {:.6e}, C2 = {:.6e}, C3 = {:.6e}",
        constants.c0, constants.c1, constants.c2, constants.c3
    );
    let (cg, ch) = coeffs.growth_constants();
    dir.write_json(
        "hypotheses.json",
        &HypothesesReport {
            report,
            growth_constants: [cg, ch],
            levy_constants: constants,
            required: cfg.coefficients.require.clone(),
            passed: failed.is_empty(),
        },
    )?;
    invariant(constants.all_finite(), || "a measure constant C0..C3 is infinite".into())?;
    invariant(failed.is_empty(), || format!("required hypotheses fail: {failed:?}"))
}

pub fn truncation_study(cfg: &RunConfig, dir: &RunDir) -> Result<(), Failure> {
    let r = montecarlo::truncation_study(&cfg.ensemble()?)?;
    dir.write_json("truncation.json", &r)?;
    let d: Vec<String> = r.differences.iter().map(|s| format!("{:.4e}", s.mean)).collect();
    println!("truncation study over eps = {:?}: D = [{}]", r.levels, d.join(", "));
    println!("  {}", r.note);
    if !r.failures.is_empty() {
        return Err(Failure::Numerical(format!("{} paths aborted; first: {}", r.failures.len(), r.failures[0].message)));
    }
    invariant(r.passed, || "path differences are not strictly decreasing in eps".into())
}

pub fn dt_study(cfg: &RunConfig, dir: &RunDir) -> Result<(), Failure> {
    let r = montecarlo::dt_study(&cfg.ensemble()?)?;
    dir.write_json("dt.json", &r)?;
    let d: Vec<String> = r.differences.iter().map(|s| format!("{:.4e}", s.mean)).collect();
    println!("dt study over dt = {:?}: D = [{}], orders {:?}", r.levels, d.join(", "), r.orders);
    if !r.failures.is_empty() {
        return Err(Failure::Numerical(format!("{} paths aborted; first: {}", r.failures.len(), r.failures[0].message)));
    }
    invariant(r.passed, || {
        format!("observed orders {:?} leave [{}, {}]", r.orders, montecarlo::ORDER_WINDOW.0, montecarlo::ORDER_WINDOW.1)
    })
}

#[derive(Serialize)]
struct DispersiveEntry {
    #[serde(with = "lp_exponent")]
    p: f64,
    passed: bool,
    report: DecayReport,
}

#[derive(Serialize)]
struct DispersiveReport {
    exponent_tolerance: f64,
    ratio_tolerance: f64,
    entries: Vec<DispersiveEntry>,
    passed: bool,
}

pub fn dispersive_test(cfg: &RunConfig, dir: &RunDir) -> Result<(), Failure> {
    let a = &cfg.analysis;
    let phi = cfg.initial(cfg.grid_spec()?)?;
    let times = a.sample_times();
    let mut entries = Vec::new();
    for &p in &a.p {
        let report = dispersive_decay_check(&phi, p, &times)?;
        let passed = report.passes(a.exponent_tolerance, a.ratio_tolerance);
        println!(
            "p = {p}: fitted exponent {:.4} (theory {:.4}) over {} times, ratio spread {:.2e} -> {}",
            // + 0.0 turns the -0 of p = 2 into 0
            report.fitted_exponent + 0.0,
            report.theoretical_exponent + 0.0,
            report.times.len(),
            report.ratio_spread(),
            verdict(passed)
        );
        entries.push(DispersiveEntry { p, passed, report });
    }
    let passed = entries.iter().all(|e| e.passed);
    dir.write_json(
        "dispersive.json",
        &DispersiveReport {
            exponent_tolerance: a.exponent_tolerance,
            ratio_tolerance: a.ratio_tolerance,
            entries,
            passed,
        },
    )?;
    invariant(passed, || "a fitted decay exponent misses its tolerance".into())
}

pub fn mild_residual(cfg: &RunConfig, dir: &RunDir) -> Result<(), Failure> {
    let r = montecarlo::mild_residual_study(&cfg.ensemble()?)?;
    dir.write_json("mild_residual.json", &r)?;
    println!(
        "mild residual at T = {} over dt = {:?}: halving ratios in [{:.3}, {:.3}] across {} paths",
        r.horizon,
        r.dt_levels,
        r.min_ratio,
        r.max_ratio,
        r.paths.len()
    );
    if !r.failures.is_empty() {
        return Err(Failure::Numerical(format!("{} paths aborted; first: {}", r.failures.len(), r.failures[0].message)));
    }
    invariant(r.passed, || {
        format!(
            "halving ratios [{:.3}, {:.3}] leave [{}, {}]",
            r.min_ratio,
            r.max_ratio,
            montecarlo::RESIDUAL_WINDOW.0,
            montecarlo::RESIDUAL_WINDOW.1
        )
    })
}
