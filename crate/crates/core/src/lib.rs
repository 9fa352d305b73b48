//! Simulation of the nonlinear Schrödinger equation driven by multiplicative
//! Lévy jump noise.
//!
//! The solver follows the constructive route for finite-activity noise: the
//! field evolves deterministically between the jump times of a compound
//! Poisson path, is multiplied pointwise by `1 - i g(Y)` at each jump, and the
//! pieces are glued together. Infinite-activity measures are handled through
//! their small-jump truncations.
//!
//! All numerical kernels are generic over the scalar type ([`Real`]); the
//! aliases at the crate root fix it to `f64`, which is what the tolerances in
//! the test-suites assume.

pub mod analysis;
pub mod dynamics;
pub mod error;
pub mod montecarlo;
pub mod noise;
pub mod observables;
pub mod scalar;
pub mod spectral;

pub use error::{Error, Result};
pub use scalar::Real;
pub use spectral::GridSpec;

/// Solution state in double precision.
pub type Field = spectral::ComplexField<f64>;
/// Solution state in single precision.
pub type Field32 = spectral::ComplexField<f32>;
pub type Multiplier = spectral::FourierMultiplier<f64>;
pub type Mark = noise::MarkFunction<f64>;
pub type Measure = noise::LevyMeasureModel<f64>;
pub type Coefficients = noise::NoiseCoefficients;
pub type NoiseModel = noise::LevyNoiseModel<f64>;
pub type Path = noise::CompoundPoissonPath<f64>;

pub type Series = observables::ObservableSeries;

pub type Config = dynamics::SolverConfig<f64>;
pub type Record = dynamics::PathRecord<f64>;
pub type Ensemble = montecarlo::EnsembleConfig<f64>;
