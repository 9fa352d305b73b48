use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::mark::MarkFunction;
use super::quadrature::{integrate, Interval};
use crate::spectral::GridSpec;
use crate::{Error, Real, Result};

/// Density `ρ(a)` of the amplitude in `a · z_base`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AmplitudeDensity {
    /// `ρ(a) = height`.
    Uniform { height: f64 },
    /// `ρ(a) = scale · a^{-exponent}`; stable-like for `exponent > 1`.
    PowerLaw { scale: f64, exponent: f64 },
}

impl AmplitudeDensity {
    pub fn eval(&self, a: f64) -> f64 {
        match *self {
            Self::Uniform { height } => height,
            Self::PowerLaw { scale, exponent } => scale * a.powf(-exponent),
        }
    }

    /// Whether `∫_0 ρ(a) da` converges.
    pub fn integrable_at_zero(&self) -> bool {
        match *self {
            Self::Uniform { .. } => true,
            Self::PowerLaw { exponent, .. } => exponent < 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::Uniform { height } => height.is_finite() && height >= 0.0,
            Self::PowerLaw { scale, exponent } => {
                scale.is_finite() && scale >= 0.0 && exponent.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid amplitude density {self:?}")))
        }
    }
}

/// One piece of a Lévy measure on the mark space.
#[derive(Clone, Debug, PartialEq)]
pub enum LevyComponent<T> {
    /// Point mass: mark `z` arrives at `rate` events per unit time.
    Atom { rate: f64, mark: Arc<MarkFunction<T>> },
    /// Marks `a · base` with intensity `ρ(a) da` for `a ∈ [a_min, a_max]`.
    Amplitude {
        base: Arc<MarkFunction<T>>,
        density: AmplitudeDensity,
        a_min: f64,
        a_max: f64,
    },
}

impl<T: Real> LevyComponent<T> {
    pub fn grid(&self) -> &GridSpec {
        match self {
            Self::Atom { mark, .. } => mark.grid(),
            Self::Amplitude { base, .. } => base.grid(),
        }
    }

    pub fn is_finite_activity(&self) -> bool {
        match self {
            Self::Atom { .. } => true,
            Self::Amplitude { density, a_min, .. } => *a_min > 0.0 || density.integrable_at_zero(),
        }
    }

    pub fn rate(&self) -> Result<f64> {
        match self {
            Self::Atom { rate, .. } => Ok(*rate),
            Self::Amplitude {
                density,
                a_min,
                a_max,
                ..
            } => {
                if !self.is_finite_activity() {
                    return Err(Error::InfiniteActivity);
                }
                integrate(Interval::new(*a_min, *a_max), |a| density.eval(a))
            }
        }
    }

    /// Largest mark sup-norm in the support.
    pub fn max_mark_norm(&self) -> f64 {
        match self {
            Self::Atom { mark, .. } => mark.sup_norm().as_f64(),
            Self::Amplitude { base, a_max, .. } => a_max * base.sup_norm().as_f64(),
        }
    }

    /// `∫ a^m ρ(a) da` over the support (`m = 0` for atoms gives the rate).
    fn amplitude_moment(&self, m: i32) -> f64 {
        match self {
            Self::Atom { rate, .. } => *rate,
            Self::Amplitude {
                density,
                a_min,
                a_max,
                ..
            } => integrate(Interval::new(*a_min, *a_max), |a| a.powi(m) * density.eval(a))
                .unwrap_or(f64::INFINITY),
        }
    }
}

/// A Lévy measure `ν` as a sum of components.
#[derive(Clone, Debug, PartialEq)]
pub struct LevyMeasureModel<T> {
    components: Vec<LevyComponent<T>>,
}

/// Small-jump cut-off, measured in the mark sup-norm.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct TruncationSpec {
    epsilon: f64,
}

impl TruncationSpec {
    pub fn new(epsilon: f64) -> Result<Self> {
        if epsilon.is_nan() || epsilon < 0.0 {
            return Err(Error::Domain(format!("truncation level must be >= 0, got {epsilon}")));
        }
        Ok(Self { epsilon })
    }

    pub fn none() -> Self {
        Self { epsilon: 0.0 }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

/// `C_0 … C_3` of the measure; non-finite entries flag a violated
/// integrability condition.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LevyConstants {
    /// `∫ |z|²_∞ ν(dz)`
    pub c0: f64,
    /// `∫ |z|²_{W^1_∞} ν(dz)`
    pub c1: f64,
    /// `∫ sup_x |x|²|z(x)|² ν(dz)`
    pub c2: f64,
    /// `∫ |z|⁴_∞ ν(dz)`
    pub c3: f64,
}

impl LevyConstants {
    pub fn all_finite(&self) -> bool {
        [self.c0, self.c1, self.c2, self.c3].iter().all(|c| c.is_finite())
    }
}

impl std::ops::Add for LevyConstants {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            c0: self.c0 + o.c0,
            c1: self.c1 + o.c1,
            c2: self.c2 + o.c2,
            c3: self.c3 + o.c3,
        }
    }
}

impl<T: Real> LevyMeasureModel<T> {
    pub fn empty() -> Self {
        Self {
            components: Vec::new(),
        }
    }

    pub fn from_components(components: Vec<LevyComponent<T>>) -> Result<Self> {
        let model = Self { components };
        model.validate()?;
        Ok(model)
    }

    /// Finite list of atoms `(rate, mark)`.
    pub fn atomic(atoms: Vec<(f64, MarkFunction<T>)>) -> Result<Self> {
        Self::from_components(
            atoms
                .into_iter()
                .map(|(rate, mark)| LevyComponent::Atom {
                    rate,
                    mark: Arc::new(mark),
                })
                .collect(),
        )
    }

    /// Amplitude family `a · base`, `a ∈ [a_min, a_max]`, intensity `ρ(a) da`.
    pub fn parametric(
        base: MarkFunction<T>,
        density: AmplitudeDensity,
        a_min: f64,
        a_max: f64,
    ) -> Result<Self> {
        Self::from_components(vec![LevyComponent::Amplitude {
            base: Arc::new(base),
            density,
            a_min,
            a_max,
        }])
    }

    fn validate(&self) -> Result<()> {
        let mut grid: Option<&GridSpec> = None;
        for c in &self.components {
            match c {
                LevyComponent::Atom { rate, .. } => {
                    if !(rate.is_finite() && *rate > 0.0) {
                        return Err(Error::Config(format!("atom rates must be positive, got {rate}")));
                    }
                }
                LevyComponent::Amplitude {
                    density,
                    a_min,
                    a_max,
                    ..
                } => {
                    density.validate()?;
                    if !(a_min.is_finite() && a_max.is_finite() && *a_min >= 0.0 && a_max > a_min) {
                        return Err(Error::Config(format!(
                            "amplitude interval must satisfy 0 <= a_min < a_max, got [{a_min}, {a_max}]"
                        )));
                    }
                }
            }
            match grid {
                Some(g) if g != c.grid() => {
                    return Err(Error::GridMismatch("measure components live on different grids".into()))
                }
                _ => grid = Some(c.grid()),
            }
        }
        Ok(())
    }

    pub fn components(&self) -> &[LevyComponent<T>] {
        &self.components
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn grid(&self) -> Option<&GridSpec> {
        self.components.first().map(LevyComponent::grid)
    }

    pub fn is_finite_activity(&self) -> bool {
        self.components.iter().all(LevyComponent::is_finite_activity)
    }

    /// Sum of the two measures.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        let mut components = self.components.clone();
        components.extend(other.components.iter().cloned());
        Self::from_components(components)
    }

    /// `ν(· ∖ B(ε))`: drops every mark with `|z|_∞ ≤ ε`. `ε = 0` is the
    /// identity.
    pub fn restrict(&self, trunc: &TruncationSpec) -> Self {
        let eps = trunc.epsilon();
        if eps == 0.0 {
            return self.clone();
        }
        let components = self
            .components
            .iter()
            .filter_map(|c| match c {
                LevyComponent::Atom { mark, .. } => {
                    (mark.sup_norm().as_f64() > eps).then(|| c.clone())
                }
                LevyComponent::Amplitude {
                    base,
                    density,
                    a_min,
                    a_max,
                } => {
                    let norm = base.sup_norm().as_f64();
                    if norm == 0.0 {
                        return None;
                    }
                    let lo = a_min.max(eps / norm);
                    (lo < *a_max).then(|| LevyComponent::Amplitude {
                        base: Arc::clone(base),
                        density: *density,
                        a_min: lo,
                        a_max: *a_max,
                    })
                }
            })
            .collect();
        Self { components }
    }

    /// `ρ = ν(Z)`, events per unit time.
    pub fn total_rate(&self) -> Result<f64> {
        self.components.iter().map(LevyComponent::rate).sum()
    }

    /// Largest `|z|_∞` over the support, i.e. the range of mark values the
    /// coefficient functions are evaluated on.
    pub fn max_mark_norm(&self) -> f64 {
        self.components
            .iter()
            .map(LevyComponent::max_mark_norm)
            .fold(0.0, f64::max)
    }

    pub fn levy_constants(&self) -> LevyConstants {
        self.components
            .iter()
            .map(|c| {
                let (sup, w1, weighted, m2, m4) = match c {
                    LevyComponent::Atom { mark, rate } => (
                        mark.sup_norm().as_f64(),
                        mark.w1_norm().as_f64(),
                        mark.weighted_sup().as_f64(),
                        *rate,
                        *rate,
                    ),
                    LevyComponent::Amplitude { base, .. } => (
                        base.sup_norm().as_f64(),
                        base.w1_norm().as_f64(),
                        base.weighted_sup().as_f64(),
                        c.amplitude_moment(2),
                        c.amplitude_moment(4),
                    ),
                };
                LevyConstants {
                    c0: sup * sup * m2,
                    c1: w1 * w1 * m2,
                    c2: weighted * weighted * m2,
                    c3: sup.powi(4) * m4,
                }
            })
            .fold(LevyConstants::default(), |a, b| a + b)
    }
}

/// Free-function form of [`LevyMeasureModel::restrict`].
pub fn restrict<T: Real>(model: &LevyMeasureModel<T>, trunc: &TruncationSpec) -> LevyMeasureModel<T> {
    model.restrict(trunc)
}
