//! TOML run configuration. Every section rejects unknown keys; defaults are
//! filled in on load so the echoed effective config is self-contained.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use snls::analysis::{log_spaced, lp_exponent};
use snls::dynamics::SolverConfig;
use snls::montecarlo::EnsembleConfig;
use snls::noise::{
    AmplitudeDensity, CoefficientFamily, LevyMeasureModel, LevyNoiseModel, MarkFunction, NoiseCoefficients,
    SampleRange, TruncationSpec,
};
use snls::spectral::{read_field, ComplexField};
use snls::{Field, GridSpec};

use crate::Failure;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Root of every random stream in the run.
    #[serde(default)]
    pub seed: u64,
    pub grid: GridSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub coefficients: CoefficientSection,
    #[serde(default)]
    pub ensemble: EnsembleSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "one")]
    pub dim: usize,
    pub points: usize,
    pub half_width: f64,
    #[serde(default)]
    pub initial: InitialData,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialData {
    /// `amp · exp(-|x - center|² / (2 width²))`
    Gaussian {
        #[serde(default = "unit")]
        amp: f64,
        #[serde(default = "unit")]
        width: f64,
        #[serde(default)]
        center: Vec<f64>,
    },
    /// `amp · sech(|x - center| / width)`
    Sech {
        #[serde(default = "unit")]
        amp: f64,
        #[serde(default = "unit")]
        width: f64,
        #[serde(default)]
        center: Vec<f64>,
    },
    /// Binary field dump.
    File { path: PathBuf },
}

impl Default for InitialData {
    fn default() -> Self {
        InitialData::Gaussian {
            amp: 1.0,
            width: 1.0,
            center: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub lambda: f64,
    pub alpha: f64,
    pub horizon: f64,
    pub dt: f64,
    pub record_stride: usize,
    pub boundary_threshold: f64,
    /// Small-jump cut-off used by simulate/ensemble runs.
    pub truncation: f64,
    pub gamma: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let c = SolverConfig::new(1.0, 3.0, 1.0, 1e-3);
        Self {
            lambda: c.lambda,
            alpha: c.alpha,
            horizon: c.horizon,
            dt: c.dt,
            record_stride: c.record_stride,
            boundary_threshold: c.boundary_threshold,
            truncation: 0.0,
            gamma: c.gamma,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(default)]
    pub atoms: Vec<Atom>,
    #[serde(default)]
    pub amplitude: Option<AmplitudeFamily>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Atom {
    pub rate: f64,
    pub profile: Profile,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Profile {
    GaussianBump {
        amp: f64,
        #[serde(default)]
        center: Vec<f64>,
        #[serde(default = "unit")]
        width: f64,
    },
    /// Real part of a binary field dump.
    File { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmplitudeFamily {
    pub base: Profile,
    pub density: Density,
    #[serde(default)]
    pub a_min: f64,
    #[serde(default = "unit")]
    pub a_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Density {
    Uniform { height: f64 },
    PowerLaw { scale: f64, exponent: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSection {
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c2: Option<f64>,
    /// Hypotheses verify-hypotheses must confirm.
    #[serde(default)]
    pub require: Vec<Hypothesis>,
    #[serde(default = "xi_range")]
    pub xi_range: [f64; 2],
    #[serde(default = "xi_samples")]
    pub xi_samples: usize,
}

impl Default for CoefficientSection {
    fn default() -> Self {
        Self {
            family: "zero".into(),
            theta0: None,
            c1: None,
            c2: None,
            require: Vec::new(),
            xi_range: xi_range(),
            xi_samples: xi_samples(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Hypothesis {
    LinearGrowth,
    PathwiseMass,
    MeanMass,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSection {
    pub paths: usize,
    pub truncation_levels: Vec<f64>,
    pub dt_levels: Vec<f64>,
    pub coupled: bool,
    /// Width, in standard errors, of the statistical acceptance bands.
    pub sigma: f64,
    /// Write one CSV row per path.
    pub per_path_csv: bool,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        Self {
            paths: 200,
            truncation_levels: Vec::new(),
            dt_levels: Vec::new(),
            coupled: true,
            sigma: 3.0,
            per_path_csv: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    /// Lebesgue exponents; `"inf"` for the sup-norm.
    #[serde(with = "lp_exponent::list")]
    pub p: Vec<f64>,
    /// Explicit times; when empty, `count` log-spaced times on `[t_min, t_max]`.
    pub times: Vec<f64>,
    pub t_min: f64,
    pub t_max: f64,
    pub count: usize,
    pub exponent_tolerance: f64,
    pub ratio_tolerance: f64,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            p: vec![f64::INFINITY, 4.0, 2.0],
            times: Vec::new(),
            t_min: 0.5,
            t_max: 4.0,
            count: 16,
            exponent_tolerance: 0.05,
            ratio_tolerance: 1e-11,
        }
    }
}

impl AnalysisSection {
    pub fn sample_times(&self) -> Vec<f64> {
        if self.times.is_empty() {
            log_spaced(self.t_min, self.t_max, self.count)
        } else {
            self.times.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Times at which simulate dumps the full field; must be recorded times.
    pub dump_times: Vec<f64>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("runs"),
            dump_times: Vec::new(),
        }
    }
}

fn one() -> usize {
    1
}

fn unit() -> f64 {
    1.0
}

fn xi_range() -> [f64; 2] {
    [-5.0, 5.0]
}

fn xi_samples() -> usize {
    2001
}

fn config_error(msg: impl Into<String>) -> Failure {
    Failure::Config(msg.into())
}

impl RunConfig {
    /// Parses `path`; file references are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        cfg.fill_defaults();
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let InitialData::File { path } = &mut self.grid.initial {
            fix(path);
        }
        for atom in &mut self.noise.atoms {
            if let Profile::File { path } = &mut atom.profile {
                fix(path);
            }
        }
        if let Some(AmplitudeFamily {
            base: Profile::File { path },
            ..
        }) = &mut self.noise.amplitude
        {
            fix(path);
        }
    }

    /// Writes the implicit centers (the origin) and family parameters out.
    fn fill_defaults(&mut self) {
        let d = self.grid.dim;
        let origin = |c: &mut Vec<f64>| {
            if c.is_empty() {
                *c = vec![0.0; d];
            }
        };
        match &mut self.grid.initial {
            InitialData::Gaussian { center, .. } | InitialData::Sech { center, .. } => origin(center),
            InitialData::File { .. } => {}
        }
        for atom in &mut self.noise.atoms {
            if let Profile::GaussianBump { center, .. } = &mut atom.profile {
                origin(center);
            }
        }
        if let Some(AmplitudeFamily {
            base: Profile::GaussianBump { center, .. },
            ..
        }) = &mut self.noise.amplitude
        {
            origin(center);
        }
        let c = &mut self.coefficients;
        match c.family.as_str() {
            "phase-rotation" => {
                c.theta0.get_or_insert(1.0);
            }
            "linear" => {
                c.c1.get_or_insert(1.0);
                c.c2.get_or_insert(1.0);
            }
            _ => {}
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn grid_spec(&self) -> Result<GridSpec, Failure> {
        GridSpec::new(self.grid.dim, self.grid.points, self.grid.half_width)
            .map_err(|e| config_error(format!("[grid]: {e}")))
    }

    pub fn initial(&self, grid: GridSpec) -> Result<Field, Failure> {
        let radius = |x: &[f64], c: &[f64]| -> f64 {
            x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
        };
        let check_center = |c: &[f64]| {
            if c.len() == grid.dim() {
                Ok(())
            } else {
                Err(config_error(format!(
                    "[grid.initial].center has {} coordinates, grid has dimension {}",
                    c.len(),
                    grid.dim()
                )))
            }
        };
        match &self.grid.initial {
            InitialData::Gaussian { amp, width, center } => {
                check_center(center)?;
                Ok(ComplexField::from_fn(grid, |x| {
                    let r = radius(x, center) / width;
                    (amp * (-0.5 * r * r).exp()).into()
                }))
            }
            InitialData::Sech { amp, width, center } => {
                check_center(center)?;
                Ok(ComplexField::from_fn(grid, |x| (amp / (radius(x, center) / width).cosh()).into()))
            }
            InitialData::File { path } => {
                let field = load_field(path, "[grid.initial]")?;
                field
                    .ensure_same_grid(&grid)
                    .map_err(|e| config_error(format!("[grid.initial] {}: {e}", path.display())))?;
                Ok(field)
            }
        }
    }

    pub fn coefficients(&self) -> Result<NoiseCoefficients, Failure> {
        let c = &self.coefficients;
        let need = |v: Option<f64>, key: &str| {
            v.ok_or_else(|| config_error(format!("[coefficients].{key} is required for family {:?}", c.family)))
        };
        let family = match c.family.as_str() {
            "zero" => CoefficientFamily::Zero,
            "phase-rotation" => CoefficientFamily::PhaseRotation {
                theta0: need(c.theta0, "theta0")?,
            },
            "sine-mean" => CoefficientFamily::SineMean,
            "linear" => CoefficientFamily::Linear {
                c1: need(c.c1, "c1")?,
                c2: need(c.c2, "c2")?,
            },
            other => {
                return Err(config_error(format!(
                    "[coefficients].family: unknown family {other:?}; expected zero, phase-rotation, sine-mean or linear"
                )))
            }
        };
        NoiseCoefficients::new(family).map_err(|e| config_error(format!("[coefficients]: {e}")))
    }

    pub fn sample_range(&self) -> Result<SampleRange, Failure> {
        let c = &self.coefficients;
        let [lo, hi] = c.xi_range;
        if !(lo < hi && lo.is_finite() && hi.is_finite()) || c.xi_samples < 2 {
            return Err(config_error(
                "[coefficients]: xi_range must be an increasing finite pair and xi_samples >= 2",
            ));
        }
        Ok(SampleRange::new(lo, hi, c.xi_samples))
    }

    fn profile(&self, grid: GridSpec, p: &Profile, at: &str) -> Result<MarkFunction<f64>, Failure> {
        match p {
            Profile::GaussianBump { amp, center, width } => MarkFunction::gaussian_bump(grid, *amp, center, *width)
                .map_err(|e| config_error(format!("{at}: {e}"))),
            Profile::File { path } => {
                let field = load_field(path, at)?;
                field
                    .ensure_same_grid(&grid)
                    .map_err(|e| config_error(format!("{at} {}: {e}", path.display())))?;
                MarkFunction::from_field(&field).map_err(|e| config_error(format!("{at}: {e}")))
            }
        }
    }

    pub fn measure(&self, grid: GridSpec) -> Result<LevyMeasureModel<f64>, Failure> {
        let mut atoms = Vec::with_capacity(self.noise.atoms.len());
        for (i, atom) in self.noise.atoms.iter().enumerate() {
            atoms.push((atom.rate, self.profile(grid, &atom.profile, &format!("[[noise.atoms]] #{}", i + 1))?));
        }
        let mut measure =
            LevyMeasureModel::atomic(atoms).map_err(|e| config_error(format!("[[noise.atoms]]: {e}")))?;
        if let Some(fam) = &self.noise.amplitude {
            let base = self.profile(grid, &fam.base, "[noise.amplitude].base")?;
            let density = match fam.density {
                Density::Uniform { height } => AmplitudeDensity::Uniform { height },
                Density::PowerLaw { scale, exponent } => AmplitudeDensity::PowerLaw { scale, exponent },
            };
            let family = LevyMeasureModel::parametric(base, density, fam.a_min, fam.a_max)
                .map_err(|e| config_error(format!("[noise.amplitude]: {e}")))?;
            measure = measure
                .concat(&family)
                .map_err(|e| config_error(format!("[noise]: {e}")))?;
        }
        Ok(measure)
    }

    pub fn noise(&self, grid: GridSpec) -> Result<LevyNoiseModel<f64>, Failure> {
        Ok(LevyNoiseModel::new(self.measure(grid)?, self.coefficients()?))
    }

    pub fn solver(&self) -> Result<SolverConfig<f64>, Failure> {
        let s = &self.solver;
        let mut c = SolverConfig::new(s.lambda, s.alpha, s.horizon, s.dt);
        c.record_stride = s.record_stride;
        c.boundary_threshold = s.boundary_threshold;
        c.gamma = s.gamma;
        c.truncation = TruncationSpec::new(s.truncation).map_err(|e| config_error(format!("[solver].truncation: {e}")))?;
        c.validate().map_err(|e| config_error(format!("[solver]: {e}")))?;
        Ok(c)
    }

    pub fn ensemble(&self) -> Result<EnsembleConfig<f64>, Failure> {
        let grid = self.grid_spec()?;
        let e = &self.ensemble;
        let mut cfg = EnsembleConfig::new(self.initial(grid)?, self.noise(grid)?, self.solver()?, e.paths, self.seed);
        cfg.truncation_levels = e.truncation_levels.clone();
        cfg.dt_levels = e.dt_levels.clone();
        cfg.coupled = e.coupled;
        cfg.validate().map_err(|err| config_error(format!("[ensemble]: {err}")))?;
        if !(e.sigma > 0.0) {
            return Err(config_error("[ensemble].sigma must be positive"));
        }
        Ok(cfg)
    }
}

fn load_field(path: &Path, at: &str) -> Result<Field, Failure> {
    let file = std::fs::File::open(path).map_err(|e| config_error(format!("{at}: cannot open {}: {e}", path.display())))?;
    read_field(std::io::BufReader::new(file)).map_err(|e| config_error(format!("{at} {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, toml::de::Error> {
        toml::from_str(text)
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let mut cfg = parse("[grid]\npoints = 64\nhalf_width = 8.0\n").unwrap();
        cfg.fill_defaults();
        assert_eq!(cfg.solver.dt, 1e-3);
        assert_eq!(cfg.coefficients.family, "zero");
        assert_eq!(cfg.ensemble.sigma, 3.0);
        assert_eq!(
            cfg.grid.initial,
            InitialData::Gaussian {
                amp: 1.0,
                width: 1.0,
                center: vec![0.0]
            }
        );
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let err = parse("[grid]\npoints = 64\nhalf_width = 8.0\n[solver]\nlambda = 1.0\nalpha = 3.0\nhorizon = 1.0\ndt = 0.01\nrecord_stride = 1\nboundary_threshold = 1e-8\ntruncation = 0.0\ngamma = 0.9\ntolerence = 1\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("tolerence"), "{err}");
        assert!(err.contains("line 13"), "{err}");
        assert!(parse("seed = 1\nbogus = 2\n[grid]\npoints = 8\nhalf_width = 1.0\n").is_err());
        assert!(parse("[grid]\npoints = 8\nhalf_width = 1.0\n[[noise.atoms]]\nrate = 1.0\nprofile = { kind = \"gaussian-bump\", amp = 1.0, widht = 1.0 }\n").is_err());
    }

    #[test]
    fn effective_config_round_trips() {
        let text = r#"
seed = 5
[grid]
points = 64
half_width = 8.0
[grid.initial]
kind = "sech"
[[noise.atoms]]
rate = 2.0
profile = { kind = "gaussian-bump", amp = 0.5, center = [1.0], width = 1.0 }
[noise.amplitude]
base = { kind = "gaussian-bump", amp = 1.0 }
density = { kind = "power-law", scale = 1.0, exponent = 1.5 }
[coefficients]
family = "phase-rotation"
require = ["pathwise-mass", "mean-mass"]
[analysis]
p = ["inf", 4]
"#;
        let mut cfg = parse(text).unwrap();
        cfg.fill_defaults();
        assert_eq!(cfg.coefficients.theta0, Some(1.0));
        assert_eq!(cfg.analysis.p, vec![f64::INFINITY, 4.0]);
        let text = cfg.to_toml();
        let again = parse(&text).unwrap_or_else(|e| panic!("{e}\n{text}"));
        assert_eq!(again, cfg);
    }

    #[test]
    fn unknown_family_names_the_key() {
        let mut cfg = parse("[grid]\npoints = 8\nhalf_width = 1.0\n[coefficients]\nfamily = \"quadratic\"\n").unwrap();
        cfg.fill_defaults();
        let Err(Failure::Config(msg)) = cfg.coefficients() else {
            panic!("expected a config error")
        };
        assert!(msg.contains("[coefficients].family"), "{msg}");
    }
}
