//! Mass, Hamiltonian and virial, and their time series along a path.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::spectral::{sobolev_norm_of_spectrum, ComplexField, GridSpec, Transform};
use crate::Real;

/// Default fractional Sobolev index tracked alongside `H¹`.
pub const DEFAULT_GAMMA: f64 = 0.9;

/// `∫|u|² dx`.
pub fn mass<T: Real>(u: &ComplexField<T>) -> T {
    let s: T = u.values().iter().map(|v| v.norm_sqr()).sum();
    s * T::of(u.grid().cell_volume())
}

/// `½ ∫|∇u|² dx`, through Parseval with the spectral derivative symbols.
pub fn kinetic<T: Real>(u: &ComplexField<T>) -> T {
    T::of(kinetic_of_spectrum(u.grid(), &u.spectrum()))
}

fn kinetic_of_spectrum<T: Real>(grid: &GridSpec, spectrum: &[num_complex::Complex<T>]) -> f64 {
    let sum: f64 = spectrum
        .iter()
        .enumerate()
        .map(|(idx, v)| {
            let ax = grid.axes(idx);
            let k2: f64 = ax[..grid.dim()]
                .iter()
                .filter(|&&k| !grid.is_nyquist(k))
                .map(|&k| grid.wavenumber(k).powi(2))
                .sum();
            k2 * v.norm_sqr().as_f64()
        })
        .sum();
    0.5 * sum * grid.cell_volume() / grid.len() as f64
}

/// `λ/(α+1) ∫|u|^{α+1} dx`.
pub fn potential<T: Real>(u: &ComplexField<T>, lambda: T, alpha: T) -> T {
    let half = T::of(0.5) * (alpha + T::one());
    let s: T = u.values().iter().map(|v| v.norm_sqr().powf(half)).sum();
    lambda / (alpha + T::one()) * s * T::of(u.grid().cell_volume())
}

pub fn hamiltonian<T: Real>(u: &ComplexField<T>, lambda: T, alpha: T) -> T {
    kinetic(u) + potential(u, lambda, alpha)
}

/// `∫|x|²|u|² dx` in box coordinates centered at the origin.
pub fn virial<T: Real>(u: &ComplexField<T>) -> T {
    let grid = u.grid();
    let s: T = u
        .values()
        .iter()
        .enumerate()
        .map(|(idx, v)| T::of(grid.radius_sq(idx)) * v.norm_sqr())
        .sum();
    s * T::of(grid.cell_volume())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservableSample {
    pub t: f64,
    pub mass: f64,
    pub kinetic: f64,
    pub potential: f64,
    pub hamiltonian: f64,
    pub virial: f64,
    pub h1_norm: f64,
    pub hgamma_norm: f64,
}

/// Evaluates every observable of a field with a single forward transform.
#[derive(Clone)]
pub struct Probe<T: Real> {
    transform: Transform<T>,
    lambda: T,
    alpha: T,
    gamma: f64,
}

impl<T: Real> Probe<T> {
    pub fn new(grid: GridSpec, lambda: T, alpha: T, gamma: f64) -> Self {
        Self {
            transform: Transform::new(grid),
            lambda,
            alpha,
            gamma,
        }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn measure(&self, t: f64, u: &ComplexField<T>) -> ObservableSample {
        let grid = u.grid();
        let mut spectrum = u.values().to_vec();
        self.transform.forward(&mut spectrum);
        let kinetic = kinetic_of_spectrum(grid, &spectrum);
        let potential = potential(u, self.lambda, self.alpha).as_f64();
        ObservableSample {
            t,
            mass: mass(u).as_f64(),
            kinetic,
            potential,
            hamiltonian: kinetic + potential,
            virial: virial(u).as_f64(),
            h1_norm: sobolev_norm_of_spectrum::<T>(grid, &spectrum, 1.0).as_f64(),
            hgamma_norm: sobolev_norm_of_spectrum::<T>(grid, &spectrum, self.gamma).as_f64(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Suprema {
    pub mass: f64,
    pub hamiltonian: f64,
    pub virial: f64,
}

/// Observables of one trajectory on a shared time axis.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ObservableSeries {
    gamma: f64,
    samples: Vec<ObservableSample>,
    suprema: Suprema,
}

impl ObservableSeries {
    pub fn new(gamma: f64) -> Self {
        Self {
            gamma,
            samples: Vec::new(),
            suprema: Suprema {
                mass: f64::NEG_INFINITY,
                hamiltonian: f64::NEG_INFINITY,
                virial: f64::NEG_INFINITY,
            },
        }
    }

    pub fn push(&mut self, s: ObservableSample) {
        self.suprema.mass = self.suprema.mass.max(s.mass);
        self.suprema.hamiltonian = self.suprema.hamiltonian.max(s.hamiltonian);
        self.suprema.virial = self.suprema.virial.max(s.virial);
        self.samples.push(s);
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn samples(&self) -> &[ObservableSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.column(|s| s.t)
    }

    pub fn mass(&self) -> Vec<f64> {
        self.column(|s| s.mass)
    }

    pub fn hamiltonian(&self) -> Vec<f64> {
        self.column(|s| s.hamiltonian)
    }

    pub fn virial(&self) -> Vec<f64> {
        self.column(|s| s.virial)
    }

    pub fn column(&self, f: impl Fn(&ObservableSample) -> f64) -> Vec<f64> {
        self.samples.iter().map(f).collect()
    }

    /// Running suprema over everything pushed so far.
    pub fn suprema(&self) -> Suprema {
        self.suprema
    }

    /// `max_t |mass(t) - reference| / reference`.
    pub fn max_relative_mass_drift(&self, reference: f64) -> f64 {
        self.samples
            .iter()
            .map(|s| (s.mass - reference).abs() / reference)
            .fold(0.0, f64::max)
    }

    /// RFC-4180 CSV with columns
    /// `t, mass, kinetic, potential, hamiltonian, virial, h1_norm, hgamma_norm`.
    pub fn write_csv<W: Write>(&self, out: W) -> crate::Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::CRLF)
            .from_writer(out);
        for s in &self.samples {
            w.serialize(s)?;
        }
        w.flush()?;
        Ok(())
    }
}
