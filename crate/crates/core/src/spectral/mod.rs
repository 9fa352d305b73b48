//! Periodic grid, discrete Fourier calculus and the free Schrödinger group.
//!
//! # Conventions
//!
//! The domain is the periodic box `[-L, L)^d` sampled at `x_j = -L + j h`,
//! `h = 2L / N`. The continuous transform is `û(ξ) = ∫ u(x) e^{-2πi x·ξ} dx`,
//! realized on the lattice `ξ_k = k / (2L)`, `k = -N/2, …, N/2 - 1`. With the
//! angular wavenumber `κ = 2πξ`:
//!
//! * `Δ` acts as multiplication by `-|κ|²`,
//! * the free group `T(t) = e^{-itΔ}` (solving `i ∂_t u - Δu = 0`) is the
//!   multiplier `e^{i|κ|² t} = e^{4π² i |ξ|² t}`,
//! * `∂_j` is the multiplier `i κ_j`, with the Nyquist mode dropped so real
//!   fields have real derivatives.
//!
//! Under this convention `u_0 = e^{-x²/2}` evolves to
//! `(1 - 2it)^{-1/2} exp(-x² / (2(1 - 2it)))`.

mod dump;
mod fft;

pub use dump::{read_field, write_field, HEADER_LEN, MAGIC};
pub use fft::Transform;

use std::f64::consts::PI;

use num_complex::Complex;
use num_traits::{Float, Zero};
use serde::{Deserialize, Serialize};

use crate::{Error, Real, Result};

#[derive(Deserialize)]
struct RawGrid {
    dim: usize,
    points: usize,
    half_width: f64,
}

impl TryFrom<RawGrid> for GridSpec {
    type Error = Error;

    fn try_from(raw: RawGrid) -> Result<Self> {
        GridSpec::new(raw.dim, raw.points, raw.half_width)
    }
}

/// Uniform periodic grid on `[-L, L)^d`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid")]
pub struct GridSpec {
    dim: usize,
    points: usize,
    half_width: f64,
}

impl GridSpec {
    pub fn new(dim: usize, points: usize, half_width: f64) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(Error::Domain(format!("dimension must be 1 or 2, got {dim}")));
        }
        if points < 8 || !points.is_power_of_two() {
            return Err(Error::Domain(format!(
                "points per axis must be a power of two >= 8, got {points}"
            )));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::Domain(format!("half-width must be positive, got {half_width}")));
        }
        Ok(Self {
            dim,
            points,
            half_width,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    /// Total number of samples, `N^d`.
    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn mesh(&self) -> f64 {
        2.0 * self.half_width / self.points as f64
    }

    /// Quadrature weight `h^d`.
    pub fn cell_volume(&self) -> f64 {
        self.mesh().powi(self.dim as i32)
    }

    /// `(2L)^d`.
    pub fn box_volume(&self) -> f64 {
        (2.0 * self.half_width).powi(self.dim as i32)
    }

    /// Coordinate of sample `j` along one axis.
    pub fn coordinate(&self, j: usize) -> f64 {
        -self.half_width + j as f64 * self.mesh()
    }

    /// Signed lattice index of DFT bin `k`, in `[-N/2, N/2)`.
    pub fn signed_index(&self, k: usize) -> i64 {
        let n = self.points as i64;
        let k = k as i64;
        if k < n / 2 {
            k
        } else {
            k - n
        }
    }

    /// Lattice frequency `ξ_k` of DFT bin `k`.
    pub fn frequency(&self, k: usize) -> f64 {
        self.signed_index(k) as f64 / (2.0 * self.half_width)
    }

    /// Angular wavenumber `κ_k = 2π ξ_k`.
    pub fn wavenumber(&self, k: usize) -> f64 {
        2.0 * PI * self.frequency(k)
    }

    pub fn is_nyquist(&self, k: usize) -> bool {
        k == self.points / 2
    }

    /// Per-axis indices of flat (row-major) index `idx`.
    pub fn axes(&self, idx: usize) -> [usize; 2] {
        if self.dim == 1 {
            [idx, 0]
        } else {
            [idx / self.points, idx % self.points]
        }
    }

    /// Physical position of flat index `idx`; unused axes are zero.
    pub fn position(&self, idx: usize) -> [f64; 2] {
        let [i, j] = self.axes(idx);
        if self.dim == 1 {
            [self.coordinate(i), 0.0]
        } else {
            [self.coordinate(i), self.coordinate(j)]
        }
    }

    pub fn radius_sq(&self, idx: usize) -> f64 {
        let [x, y] = self.position(idx);
        x * x + y * y
    }

    /// `|κ|²` at flat spectral index `idx`.
    pub fn wavenumber_sq(&self, idx: usize) -> f64 {
        let [i, j] = self.axes(idx);
        let kx = self.wavenumber(i);
        if self.dim == 1 {
            kx * kx
        } else {
            let ky = self.wavenumber(j);
            kx * kx + ky * ky
        }
    }

    /// True if `idx` lies within one mesh cell of the box boundary.
    pub fn is_boundary(&self, idx: usize) -> bool {
        let last = self.points - 1;
        self.axes(idx)[..self.dim]
            .iter()
            .any(|&a| a == 0 || a == last)
    }
}

/// Complex samples of a field on a [`GridSpec`], row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexField<T> {
    grid: GridSpec,
    values: Vec<Complex<T>>,
}

impl<T: Real> ComplexField<T> {
    pub fn new(grid: GridSpec, values: Vec<Complex<T>>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidState(format!(
                "expected {} samples, got {}",
                grid.len(),
                values.len()
            )));
        }
        let field = Self { grid, values };
        field.ensure_valid()?;
        Ok(field)
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            values: vec![Complex::zero(); grid.len()],
        }
    }

    /// Samples `f` at every grid point; `f` receives `[x]` or `[x, y]`.
    pub fn from_fn(grid: GridSpec, f: impl Fn(&[f64]) -> Complex<T>) -> Self {
        let values = (0..grid.len())
            .map(|idx| f(&grid.position(idx)[..grid.dim()]))
            .collect();
        Self { grid, values }
    }

    /// Builds a field from values assumed valid (length already checked by
    /// construction in this crate).
    pub(crate) fn from_raw(grid: GridSpec, values: Vec<Complex<T>>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[Complex<T>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex<T>> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    pub fn ensure_valid(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidState("field contains NaN or infinite samples".into()))
        }
    }

    pub fn ensure_same_grid(&self, other: &GridSpec) -> Result<()> {
        if &self.grid == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{:?} vs {:?}", self.grid, other)))
        }
    }

    /// Unnormalized DFT of the samples.
    pub fn spectrum(&self) -> Vec<Complex<T>> {
        let mut data = self.values.clone();
        Transform::new(self.grid).forward(&mut data);
        data
    }

    pub fn from_spectrum(grid: GridSpec, mut spectrum: Vec<Complex<T>>) -> Result<Self> {
        if spectrum.len() != grid.len() {
            return Err(Error::InvalidState("spectrum length does not match grid".into()));
        }
        Transform::new(grid).inverse(&mut spectrum);
        Ok(Self::from_raw(grid, spectrum))
    }

    /// Pointwise product with a constant.
    pub fn scaled(&self, c: Complex<T>) -> Self {
        Self::from_raw(self.grid, self.values.iter().map(|v| v * c).collect())
    }

    /// Discrete `‖self - other‖_{L²}`.
    pub fn l2_distance(&self, other: &Self) -> Result<T> {
        other.ensure_same_grid(&self.grid)?;
        let sum: T = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        Ok((sum * T::of(self.grid.cell_volume())).sqrt())
    }

    /// Periodic shift by `cells` mesh cells along `axis`:
    /// `result(x) = self(x - cells·h)`.
    pub fn shifted(&self, axis: usize, cells: isize) -> Self {
        let n = self.grid.points() as isize;
        let values = (0..self.grid.len())
            .map(|idx| {
                let mut ax = self.grid.axes(idx);
                ax[axis] = (ax[axis] as isize - cells).rem_euclid(n) as usize;
                let src = if self.grid.dim() == 1 {
                    ax[0]
                } else {
                    ax[0] * self.grid.points() + ax[1]
                };
                self.values[src]
            })
            .collect();
        Self::from_raw(self.grid, values)
    }
}

/// A diagonal operator in Fourier space.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierMultiplier<T> {
    grid: GridSpec,
    symbol: Vec<Complex<T>>,
}

impl<T: Real> FourierMultiplier<T> {
    pub fn new(grid: GridSpec, symbol: Vec<Complex<T>>) -> Result<Self> {
        if symbol.len() != grid.len() {
            return Err(Error::InvalidState("symbol length does not match grid".into()));
        }
        Ok(Self { grid, symbol })
    }

    /// `e^{i|κ|² t}`: the free Schrödinger group at time `t`.
    pub fn free_group(grid: GridSpec, t: f64) -> Self {
        let symbol = (0..grid.len())
            .map(|idx| {
                let (s, c) = (grid.wavenumber_sq(idx) * t).sin_cos();
                Complex::new(T::of(c), T::of(s))
            })
            .collect();
        Self { grid, symbol }
    }

    /// `(1 + |κ|²)^{s/2}`.
    pub fn sobolev_weight(grid: GridSpec, s: f64) -> Self {
        let symbol = (0..grid.len())
            .map(|idx| Complex::new(T::of((1.0 + grid.wavenumber_sq(idx)).powf(0.5 * s)), T::zero()))
            .collect();
        Self { grid, symbol }
    }

    /// `i κ_axis`, Nyquist dropped.
    pub fn derivative(grid: GridSpec, axis: usize) -> Self {
        let symbol = (0..grid.len())
            .map(|idx| {
                let k = grid.axes(idx)[axis];
                if grid.is_nyquist(k) {
                    Complex::zero()
                } else {
                    Complex::new(T::zero(), T::of(grid.wavenumber(k)))
                }
            })
            .collect();
        Self { grid, symbol }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn symbol(&self) -> &[Complex<T>] {
        &self.symbol
    }

    pub fn apply_to_spectrum(&self, spectrum: &mut [Complex<T>]) {
        for (v, m) in spectrum.iter_mut().zip(&self.symbol) {
            *v *= m;
        }
    }

    pub fn apply(&self, u: &ComplexField<T>) -> Result<ComplexField<T>> {
        u.ensure_same_grid(&self.grid)?;
        let transform = Transform::new(self.grid);
        let mut data = u.values.clone();
        transform.forward(&mut data);
        self.apply_to_spectrum(&mut data);
        transform.inverse(&mut data);
        Ok(ComplexField::from_raw(self.grid, data))
    }
}

/// `T(t) u`. The group is defined for every real `t`; `t = 0` returns `u`
/// unchanged.
pub fn free_propagate<T: Real>(u: &ComplexField<T>, t: T) -> Result<ComplexField<T>> {
    u.ensure_valid()?;
    if t.is_zero() {
        return Ok(u.clone());
    }
    FourierMultiplier::free_group(u.grid, t.as_f64()).apply(u)
}

/// Riemann-sum `L^p` norm with weight `h^d`; `p = ∞` gives the max modulus.
pub fn lp_norm<T: Real>(u: &ComplexField<T>, p: f64) -> Result<T> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::Domain(format!("L^p norm needs p >= 1, got {p}")));
    }
    u.ensure_valid()?;
    if p.is_infinite() {
        return Ok(u
            .values
            .iter()
            .map(|v| v.norm())
            .fold(T::zero(), Float::max));
    }
    let w = T::of(u.grid.cell_volume());
    if p == 2.0 {
        let s: T = u.values.iter().map(|v| v.norm_sqr()).sum();
        return Ok((s * w).sqrt());
    }
    let pt = T::of(p);
    let s: T = u.values.iter().map(|v| v.norm().powf(pt)).sum();
    Ok((s * w).powf(T::one() / pt))
}

/// `‖(1 + |κ|²)^{s/2} û‖`, normalized so that `s = 0` reproduces the `L²`
/// norm (discrete Parseval: `Σ|u|² h^d = (h^d / N^d) Σ|U|²`).
pub fn sobolev_norm<T: Real>(u: &ComplexField<T>, s: f64) -> Result<T> {
    u.ensure_valid()?;
    Ok(sobolev_norm_of_spectrum(&u.grid, &u.spectrum(), s))
}

pub(crate) fn sobolev_norm_of_spectrum<T: Real>(grid: &GridSpec, spectrum: &[Complex<T>], s: f64) -> T {
    let sum: f64 = spectrum
        .iter()
        .enumerate()
        .map(|(idx, v)| (1.0 + grid.wavenumber_sq(idx)).powf(s) * v.norm_sqr().as_f64())
        .sum();
    T::of((sum * grid.cell_volume() / grid.len() as f64).sqrt())
}

/// Spectral gradient, one field per axis.
pub fn gradient_field<T: Real>(u: &ComplexField<T>) -> Result<Vec<ComplexField<T>>> {
    u.ensure_valid()?;
    let transform = Transform::new(u.grid);
    let mut spectrum = u.values.clone();
    transform.forward(&mut spectrum);
    Ok((0..u.grid.dim())
        .map(|axis| {
            let mut d = spectrum.clone();
            FourierMultiplier::derivative(u.grid, axis).apply_to_spectrum(&mut d);
            transform.inverse(&mut d);
            ComplexField::from_raw(u.grid, d)
        })
        .collect())
}

/// Fraction of the mass sitting within one mesh cell of the box boundary.
pub fn boundary_mass_fraction<T: Real>(u: &ComplexField<T>) -> T {
    let mut edge = T::zero();
    let mut total = T::zero();
    for (idx, v) in u.values.iter().enumerate() {
        let m = v.norm_sqr();
        total += m;
        if u.grid.is_boundary(idx) {
            edge += m;
        }
    }
    if total > T::zero() {
        edge / total
    } else {
        T::zero()
    }
}
