//! Strichartz admissibility and the dispersive decay of the free group.

use serde::{Deserialize, Serialize};

use crate::spectral::{boundary_mass_fraction, free_propagate, lp_norm, ComplexField};
use crate::{Error, Real, Result};

const ADMISSIBLE_TOLERANCE: f64 = 1e-12;
/// Largest fraction of grid points the dispersed field may occupy before
/// periodic wrap-around is considered to spoil the decay.
pub const MAX_OCCUPANCY: f64 = 0.5;
/// `|u|² ≥ OCCUPANCY_LEVEL · max|u|²` counts as occupied.
pub const OCCUPANCY_LEVEL: f64 = 1e-12;
const BOUNDARY_THRESHOLD: f64 = 1e-8;

/// `(p, q)` is admissible in dimension `d` when `p` lies in the
/// dimension-dependent range and `2/q = d/2 - d/p`. Infinite exponents are
/// passed as `f64::INFINITY`.
pub fn is_admissible(p: f64, q: f64, d: u32) -> bool {
    if p.is_nan() || q.is_nan() || q < 1.0 {
        return false;
    }
    let in_range = match d {
        0 => false,
        1 => p >= 2.0,
        2 => (2.0..f64::INFINITY).contains(&p),
        _ => {
            let d = d as f64;
            p >= 2.0 && p < 2.0 * d / (d - 2.0)
        }
    };
    let d = d as f64;
    in_range && (2.0 / q - (d / 2.0 - d / p)).abs() <= ADMISSIBLE_TOLERANCE
}

/// `d(1/2 - 1/p)`, the decay rate of `|T(t)φ|_{L^p}`.
pub fn decay_rate(p: f64, d: usize) -> f64 {
    d as f64 * (0.5 - 1.0 / p)
}

/// Hölder conjugate `p' = p/(p-1)`.
pub fn conjugate_exponent(p: f64) -> f64 {
    if p.is_infinite() {
        1.0
    } else if p == 1.0 {
        f64::INFINITY
    } else {
        p / (p - 1.0)
    }
}

/// `n` logarithmically spaced points from `a` to `b` inclusive.
pub fn log_spaced(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    let (la, lb) = (a.ln(), b.ln());
    (0..n)
        .map(|i| match i {
            0 => a,
            _ if i + 1 == n => b,
            _ => (la + (lb - la) * i as f64 / (n - 1) as f64).exp(),
        })
        .collect()
}

/// Serde adapter for Lebesgue exponents: `∞` is written as the string
/// `"inf"`, and `"inf"`/`"infinity"` are accepted on input.
pub mod lp_exponent {
    use serde::{de, Deserialize, Deserializer, Serializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Text(String),
    }

    fn convert<E: de::Error>(r: Repr) -> Result<f64, E> {
        match r {
            Repr::Number(x) => Ok(x),
            Repr::Text(s) if matches!(s.to_ascii_lowercase().as_str(), "inf" | "infinity") => {
                Ok(f64::INFINITY)
            }
            Repr::Text(s) => Err(E::custom(format!("expected a number or \"inf\", got {s:?}"))),
        }
    }

    pub fn serialize<S: Serializer>(p: &f64, s: S) -> Result<S::Ok, S::Error> {
        if p.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*p)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        convert(Repr::deserialize(d)?)
    }

    /// The same for lists of exponents.
    pub mod list {
        use super::*;
        use serde::ser::SerializeSeq;

        pub fn serialize<S: Serializer>(ps: &[f64], s: S) -> Result<S::Ok, S::Error> {
            let mut seq = s.serialize_seq(Some(ps.len()))?;
            for p in ps {
                if p.is_infinite() {
                    seq.serialize_element("inf")?;
                } else {
                    seq.serialize_element(p)?;
                }
            }
            seq.end()
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            Vec::<Repr>::deserialize(d)?.into_iter().map(convert).collect()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    #[serde(with = "lp_exponent")]
    pub p: f64,
    pub d: usize,
    /// Least-squares slope of `log|T(t)φ|_{L^p}` against `log t`.
    pub fitted_exponent: f64,
    pub theoretical_exponent: f64,
    /// Times actually used, after shrinking the window.
    pub times: Vec<f64>,
    pub norms: Vec<f64>,
    /// `|T(t)φ|_{L^p} · t^{d(1/2-1/p)} / |φ|_{L^{p'}}`.
    pub ratios: Vec<f64>,
    /// Requested times dropped because the field spread over too much of
    /// the box.
    pub dropped: usize,
}

impl DecayReport {
    pub fn ratio_bound(&self) -> f64 {
        self.ratios.iter().copied().fold(0.0, f64::max)
    }

    /// Relative error of the fitted exponent.
    pub fn exponent_error(&self) -> f64 {
        if self.theoretical_exponent == 0.0 {
            self.fitted_exponent.abs()
        } else {
            ((self.fitted_exponent - self.theoretical_exponent) / self.theoretical_exponent).abs()
        }
    }

    /// Largest deviation of the ratio series from its first value.
    pub fn ratio_spread(&self) -> f64 {
        let first = self.ratios.first().copied().unwrap_or(0.0);
        self.ratios.iter().map(|r| (r - first).abs()).fold(0.0, f64::max)
    }

    /// The fitted exponent is within `rel_tol` of the theory; for `p = 2`,
    /// where the rate is zero, the ratios must instead stay within
    /// `ratio_tol` of 1.
    pub fn passes(&self, rel_tol: f64, ratio_tol: f64) -> bool {
        if self.theoretical_exponent == 0.0 {
            self.ratios.iter().all(|r| (r - 1.0).abs() <= ratio_tol)
        } else {
            self.exponent_error() <= rel_tol
        }
    }
}

fn occupancy<T: Real>(u: &ComplexField<T>) -> f64 {
    let m: Vec<f64> = u.values().iter().map(|v| v.norm_sqr().as_f64()).collect();
    let peak = m.iter().copied().fold(0.0, f64::max);
    if peak == 0.0 {
        return 0.0;
    }
    m.iter().filter(|&&x| x >= OCCUPANCY_LEVEL * peak).count() as f64 / m.len() as f64
}

fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Measures `|T(t)φ|_{L^p}` over `times` and fits its power-law decay.
/// Times (sorted ascending) at which the evolved field occupies at least
/// half the box are dropped from the end of the window.
pub fn dispersive_decay_check<T: Real>(phi: &ComplexField<T>, p: f64, times: &[f64]) -> Result<DecayReport> {
    if !(p >= 2.0) {
        return Err(Error::Domain(format!("decay check needs p >= 2, got {p}")));
    }
    if times.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
        return Err(Error::Domain("decay times must be positive and finite".into()));
    }
    let mut times = times.to_vec();
    times.sort_by(f64::total_cmp);
    let d = phi.grid().dim();
    let rate = decay_rate(p, d);
    let reference = lp_norm(phi, conjugate_exponent(p))?.as_f64();
    if reference == 0.0 {
        return Err(Error::Domain("decay check needs a nonzero field".into()));
    }
    let requested = times.len();
    let mut used = Vec::new();
    let mut norms = Vec::new();
    for &t in &times {
        let u = free_propagate(phi, T::of(t))?;
        if occupancy(&u) >= MAX_OCCUPANCY {
            break;
        }
        let fraction = boundary_mass_fraction(&u).as_f64();
        if fraction > BOUNDARY_THRESHOLD {
            return Err(Error::BoundaryMass {
                time: t,
                fraction,
                threshold: BOUNDARY_THRESHOLD,
            });
        }
        used.push(t);
        norms.push(lp_norm(&u, p)?.as_f64());
    }
    if used.len() < 3 {
        return Err(Error::Domain(format!(
            "only {} of {requested} times keep the field inside half the box; enlarge the grid",
            used.len()
        )));
    }
    let log_t: Vec<f64> = used.iter().map(|t| t.ln()).collect();
    let log_n: Vec<f64> = norms.iter().map(|n| n.ln()).collect();
    let ratios = used
        .iter()
        .zip(&norms)
        .map(|(t, n)| n * t.powf(rate) / reference)
        .collect();
    Ok(DecayReport {
        p,
        d,
        fitted_exponent: slope(&log_t, &log_n),
        theoretical_exponent: -rate,
        dropped: requested - used.len(),
        times: used,
        norms,
        ratios,
    })
}
