//! Lévy noise: marks, intensity measures, compound Poisson sampling, the
//! coefficient functions `g`, `h` and their compensators.

mod coefficients;
mod mark;
mod measure;
mod path;
pub mod quadrature;

pub use coefficients::{
    check_hypotheses, compensator_fields, CheckOutcome, CoefficientFamily, CustomCoefficients,
    HypothesisReport, NoiseCoefficients, SampleRange, HYPOTHESIS_TOLERANCE,
};
pub use mark::MarkFunction;
pub use measure::{
    restrict, AmplitudeDensity, LevyComponent, LevyConstants, LevyMeasureModel, TruncationSpec,
};
pub use path::{sample_path, CompoundPoissonPath, Jump, JumpMark, PathSampler, StreamSeed};

use crate::spectral::ComplexField;
use crate::{Real, Result};

/// Intensity measure together with the coefficient pair: everything needed
/// to drive the equation.
#[derive(Clone, Debug)]
pub struct LevyNoiseModel<T> {
    pub measure: LevyMeasureModel<T>,
    pub coefficients: NoiseCoefficients,
}

impl<T: Real> LevyNoiseModel<T> {
    pub fn new(measure: LevyMeasureModel<T>, coefficients: NoiseCoefficients) -> Self {
        Self {
            measure,
            coefficients,
        }
    }

    /// No jumps, no drift.
    pub fn silent() -> Self {
        Self::new(LevyMeasureModel::empty(), NoiseCoefficients::zero())
    }

    pub fn restrict(&self, trunc: &TruncationSpec) -> Self {
        Self::new(self.measure.restrict(trunc), self.coefficients.clone())
    }

    /// The complex potential `V = h_ν - z_ν` of the between-jump equation.
    pub fn potential(&self, grid: &crate::GridSpec) -> Result<ComplexField<T>> {
        let (z_nu, h_nu) = compensator_fields(&self.measure, &self.coefficients, grid)?;
        let values = h_nu
            .values()
            .iter()
            .zip(z_nu.values())
            .map(|(h, z)| h - z)
            .collect();
        ComplexField::new(*grid, values)
    }

    /// Report over the mark values this measure can produce.
    pub fn check_hypotheses(&self, samples: usize) -> HypothesisReport {
        check_hypotheses(&self.coefficients, SampleRange::covering(&self.measure, samples))
    }
}
