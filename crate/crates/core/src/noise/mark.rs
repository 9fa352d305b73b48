use num_complex::Complex;
use num_traits::Float;

use crate::spectral::{gradient_field, ComplexField, GridSpec};
use crate::{Error, Real, Result};

/// A real mark profile `z(x)` sampled on a grid, with the norms the Lévy
/// constants need cached at construction.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkFunction<T> {
    grid: GridSpec,
    samples: Vec<T>,
    sup: T,
    gradient_sup: T,
    weighted_sup: T,
}

impl<T: Real> MarkFunction<T> {
    pub fn new(grid: GridSpec, samples: Vec<T>) -> Result<Self> {
        if samples.len() != grid.len() {
            return Err(Error::InvalidState(format!(
                "mark has {} samples, grid needs {}",
                samples.len(),
                grid.len()
            )));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidState("mark contains non-finite samples".into()));
        }
        let (sup, gradient_sup, weighted_sup) = norms(&grid, &samples);
        Ok(Self {
            grid,
            samples,
            sup,
            gradient_sup,
            weighted_sup,
        })
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let samples = (0..grid.len())
            .map(|idx| T::of(f(&grid.position(idx)[..grid.dim()])))
            .collect();
        Self::new(grid, samples)
    }

    /// `amp · exp(-|x - center|² / (2 width²))`.
    pub fn gaussian_bump(grid: GridSpec, amp: f64, center: &[f64], width: f64) -> Result<Self> {
        if center.len() != grid.dim() {
            return Err(Error::Config(format!(
                "bump center has {} coordinates, grid has dimension {}",
                center.len(),
                grid.dim()
            )));
        }
        if !(width > 0.0) {
            return Err(Error::Config(format!("bump width must be positive, got {width}")));
        }
        Self::from_fn(grid, |x| {
            let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
            amp * (-0.5 * r2 / (width * width)).exp()
        })
    }

    /// Real part of a field, for marks loaded from field dumps.
    pub fn from_field(field: &ComplexField<T>) -> Result<Self> {
        Self::new(*field.grid(), field.values().iter().map(|v| v.re).collect())
    }

    /// `a · z`; cached norms scale by `|a|` without recomputation.
    pub fn scaled(&self, a: T) -> Self {
        let m = Float::abs(a);
        Self {
            grid: self.grid,
            samples: self.samples.iter().map(|&v| v * a).collect(),
            sup: self.sup * m,
            gradient_sup: self.gradient_sup * m,
            weighted_sup: self.weighted_sup * m,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    /// `|z|_{L^∞}`.
    pub fn sup_norm(&self) -> T {
        self.sup
    }

    /// `|∇z|_{L^∞}`, the max over axes of the spectral derivative.
    pub fn gradient_sup_norm(&self) -> T {
        self.gradient_sup
    }

    /// `|z|_{W^1_∞} = max(|z|_∞, |∇z|_∞)`.
    pub fn w1_norm(&self) -> T {
        self.sup.max(self.gradient_sup)
    }

    /// `sup_x |x|·|z(x)|`.
    pub fn weighted_sup(&self) -> T {
        self.weighted_sup
    }
}

fn norms<T: Real>(grid: &GridSpec, samples: &[T]) -> (T, T, T) {
    let sup = samples.iter().fold(T::zero(), |m, &v| m.max(Float::abs(v)));
    let weighted = samples
        .iter()
        .enumerate()
        .fold(T::zero(), |m, (idx, &v)| {
            m.max(T::of(grid.radius_sq(idx).sqrt()) * Float::abs(v))
        });
    let field = ComplexField::from_raw(
        *grid,
        samples.iter().map(|&v| Complex::new(v, T::zero())).collect(),
    );
    let gradient = gradient_field(&field).map_or(T::infinity(), |grads| {
        let g2 = (0..grid.len()).fold(T::zero(), |m, idx| {
            let s: T = grads.iter().map(|g| g.values()[idx].re.powi(2)).sum();
            m.max(s)
        });
        g2.sqrt()
    });
    (sup, gradient, weighted)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cached_norms_match_recomputation() {
        let grid = GridSpec::new(1, 256, 16.0).unwrap();
        let z = MarkFunction::<f64>::gaussian_bump(grid, 0.5, &[1.0], 1.0).unwrap();
        let (s, g, w) = norms(&grid, z.samples());
        assert!((z.sup_norm() - s).abs() < 1e-12);
        assert!((z.gradient_sup_norm() - g).abs() < 1e-12);
        assert!((z.weighted_sup() - w).abs() < 1e-12);
        assert!((z.sup_norm() - 0.5).abs() < 1e-12);
        // max |z'| of a unit-width bump is amp·e^{-1/2}
        assert!((z.gradient_sup_norm() - 0.5 * (-0.5f64).exp()).abs() < 1e-3);

        let y = z.scaled(-2.0);
        let (s, g, w) = norms(&grid, y.samples());
        assert!((y.sup_norm() - s).abs() < 1e-12);
        assert!((y.gradient_sup_norm() - g).abs() < 1e-12);
        assert!((y.weighted_sup() - w).abs() < 1e-12);
        assert_eq!(y.w1_norm(), y.sup_norm().max(y.gradient_sup_norm()));
    }

    #[test]
    fn rejects_bad_input() {
        let grid = GridSpec::new(1, 16, 1.0).unwrap();
        assert!(MarkFunction::<f64>::new(grid, vec![0.0; 15]).is_err());
        assert!(MarkFunction::<f64>::new(grid, vec![f64::NAN; 16]).is_err());
        assert!(MarkFunction::<f64>::gaussian_bump(grid, 1.0, &[0.0, 0.0], 1.0).is_err());
        assert!(MarkFunction::<f64>::gaussian_bump(grid, 1.0, &[0.0], 0.0).is_err());
    }
}
