use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::mark::MarkFunction;
use super::measure::{AmplitudeDensity, LevyComponent, LevyMeasureModel};
use super::quadrature::{gauss_legendre, Interval, PANEL_NODES};
use crate::{Error, Real, Result};

/// Random stream `(root, stream)`: path `k` of an ensemble draws from stream
/// `k` of the generator seeded with `root`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamSeed {
    pub root: u64,
    pub stream: u64,
}

impl StreamSeed {
    pub fn new(root: u64, stream: u64) -> Self {
        Self { root, stream }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.root);
        rng.set_stream(self.stream);
        rng
    }
}

impl From<u64> for StreamSeed {
    fn from(root: u64) -> Self {
        Self { root, stream: 0 }
    }
}

/// Mark of one jump: a shared profile times an amplitude.
#[derive(Clone, Debug, PartialEq)]
pub struct JumpMark<T> {
    profile: Arc<MarkFunction<T>>,
    amplitude: T,
}

impl<T: Real> JumpMark<T> {
    pub fn new(profile: Arc<MarkFunction<T>>, amplitude: T) -> Self {
        Self { profile, amplitude }
    }

    pub fn amplitude(&self) -> T {
        self.amplitude
    }

    pub fn profile(&self) -> &MarkFunction<T> {
        &self.profile
    }

    /// `|Y|_∞`.
    pub fn sup_norm(&self) -> f64 {
        num_traits::Float::abs(self.amplitude).as_f64() * self.profile.sup_norm().as_f64()
    }

    /// The mark as a field `Y(x)`.
    pub fn to_mark(&self) -> MarkFunction<T> {
        if self.amplitude == T::one() {
            (*self.profile).clone()
        } else {
            self.profile.scaled(self.amplitude)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Jump<T> {
    pub time: T,
    pub mark: JumpMark<T>,
}

/// One realization of the compound Poisson driver on `[0, T]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CompoundPoissonPath<T> {
    horizon: T,
    jumps: Vec<Jump<T>>,
    seed: StreamSeed,
    truncation: f64,
}

impl<T: Real> CompoundPoissonPath<T> {
    pub fn empty(horizon: T) -> Self {
        Self {
            horizon,
            jumps: Vec::new(),
            seed: StreamSeed::default(),
            truncation: 0.0,
        }
    }

    /// Path with prescribed jumps; times must be strictly increasing in
    /// `(0, horizon]`.
    pub fn from_jumps(horizon: T, jumps: Vec<Jump<T>>) -> Result<Self> {
        let mut prev = T::zero();
        for j in &jumps {
            if !(j.time > prev && j.time <= horizon) {
                return Err(Error::InvalidState(format!(
                    "jump times must increase strictly inside (0, {horizon}], got {}",
                    j.time
                )));
            }
            prev = j.time;
        }
        Ok(Self {
            horizon,
            jumps,
            seed: StreamSeed::default(),
            truncation: 0.0,
        })
    }

    pub fn horizon(&self) -> T {
        self.horizon
    }

    pub fn jumps(&self) -> &[Jump<T>] {
        &self.jumps
    }

    pub fn jump_count(&self) -> usize {
        self.jumps.len()
    }

    pub fn times(&self) -> Vec<T> {
        self.jumps.iter().map(|j| j.time).collect()
    }

    pub fn seed(&self) -> StreamSeed {
        self.seed
    }

    pub fn truncation(&self) -> f64 {
        self.truncation
    }

    /// Keeps the jumps with `|Y|_∞ > ε`: the path of the same random measure
    /// restricted to a coarser truncation level.
    pub fn filter_above(&self, epsilon: f64) -> Self {
        Self {
            horizon: self.horizon,
            jumps: self
                .jumps
                .iter()
                .filter(|j| epsilon == 0.0 || j.mark.sup_norm() > epsilon)
                .cloned()
                .collect(),
            seed: self.seed,
            truncation: self.truncation.max(epsilon),
        }
    }
}

/// Inverse-CDF table for an amplitude density on `[lo, hi]`.
#[derive(Clone, Debug)]
struct AmplitudeTable {
    density: AmplitudeDensity,
    breaks: Vec<f64>,
    cumulative: Vec<f64>,
}

const TABLE_PANELS: usize = 512;

impl AmplitudeTable {
    fn new(density: AmplitudeDensity, lo: f64, hi: f64) -> Self {
        let breaks = Interval::new(lo, hi).breakpoints(TABLE_PANELS);
        let mut cumulative = vec![0.0];
        let mut acc = 0.0;
        for w in breaks.windows(2) {
            acc += panel_integral(&density, w[0], w[1]);
            cumulative.push(acc);
        }
        Self {
            density,
            breaks,
            cumulative,
        }
    }

    fn sample(&self, u: f64) -> f64 {
        let total = *self.cumulative.last().unwrap();
        let target = u * total;
        let p = self
            .cumulative
            .partition_point(|&c| c <= target)
            .clamp(1, self.breaks.len() - 1)
            - 1;
        let rest = target - self.cumulative[p];
        let (mut a, mut b) = (self.breaks[p], self.breaks[p + 1]);
        let left = a;
        for _ in 0..60 {
            let mid = 0.5 * (a + b);
            if panel_integral(&self.density, left, mid) < rest {
                a = mid;
            } else {
                b = mid;
            }
        }
        0.5 * (a + b)
    }
}

fn panel_integral(density: &AmplitudeDensity, a: f64, b: f64) -> f64 {
    thread_local! {
        static RULE: (Vec<f64>, Vec<f64>) = gauss_legendre(PANEL_NODES);
    }
    RULE.with(|(x, w)| {
        let half = 0.5 * (b - a);
        x.iter()
            .zip(w)
            .map(|(xi, wi)| wi * density.eval(a + half * (xi + 1.0)))
            .sum::<f64>()
            * half
    })
}

#[derive(Clone, Debug)]
enum SamplerComponent<T> {
    Atom(Arc<MarkFunction<T>>),
    Amplitude(Arc<MarkFunction<T>>, AmplitudeTable),
}

/// Pre-processed sampler for one finite-activity measure; reuse it across
/// the paths of an ensemble.
#[derive(Clone, Debug)]
pub struct PathSampler<T> {
    rates: Vec<f64>,
    total: f64,
    components: Vec<SamplerComponent<T>>,
    truncation: f64,
}

impl<T: Real> PathSampler<T> {
    pub fn new(model: &LevyMeasureModel<T>) -> Result<Self> {
        let mut rates = Vec::new();
        let mut components = Vec::new();
        for c in model.components() {
            rates.push(c.rate()?);
            components.push(match c {
                LevyComponent::Atom { mark, .. } => SamplerComponent::Atom(Arc::clone(mark)),
                LevyComponent::Amplitude {
                    base,
                    density,
                    a_min,
                    a_max,
                } => SamplerComponent::Amplitude(
                    Arc::clone(base),
                    AmplitudeTable::new(*density, *a_min, *a_max),
                ),
            });
        }
        let total = rates.iter().sum();
        Ok(Self {
            rates,
            total,
            components,
            truncation: 0.0,
        })
    }

    /// Records the truncation level the sampled measure corresponds to.
    pub fn with_truncation(mut self, epsilon: f64) -> Self {
        self.truncation = epsilon;
        self
    }

    pub fn total_rate(&self) -> f64 {
        self.total
    }

    /// Exponential inter-arrival times with rate `ρ`, marks i.i.d. `ν/ρ`.
    pub fn sample(&self, horizon: T, seed: StreamSeed) -> CompoundPoissonPath<T> {
        let mut path = CompoundPoissonPath::empty(horizon);
        path.seed = seed;
        path.truncation = self.truncation;
        if self.total <= 0.0 {
            return path;
        }
        let mut rng = seed.rng();
        let waiting = Exp::new(self.total).expect("positive finite rate");
        let horizon_f = horizon.as_f64();
        let mut t = 0.0;
        loop {
            t += waiting.sample(&mut rng);
            if t > horizon_f {
                break;
            }
            let pick = rng.random::<f64>() * self.total;
            let mut idx = 0;
            let mut acc = self.rates[0];
            while pick >= acc && idx + 1 < self.rates.len() {
                idx += 1;
                acc += self.rates[idx];
            }
            let mark = match &self.components[idx] {
                SamplerComponent::Atom(z) => JumpMark::new(Arc::clone(z), T::one()),
                SamplerComponent::Amplitude(base, table) => {
                    JumpMark::new(Arc::clone(base), T::of(table.sample(rng.random::<f64>())))
                }
            };
            let time = T::of(t);
            // f32 rounding can collapse neighbouring times
            if path.jumps.last().is_some_and(|j: &Jump<T>| j.time >= time) || time > horizon {
                continue;
            }
            path.jumps.push(Jump { time, mark });
        }
        path
    }
}

/// Samples one path of the compound Poisson process driven by `model`.
pub fn sample_path<T: Real>(
    model: &LevyMeasureModel<T>,
    horizon: T,
    seed: impl Into<StreamSeed>,
) -> Result<CompoundPoissonPath<T>> {
    if !(horizon > T::zero()) {
        return Err(Error::Domain(format!("horizon must be positive, got {horizon}")));
    }
    Ok(PathSampler::new(model)?.sample(horizon, seed.into()))
}
