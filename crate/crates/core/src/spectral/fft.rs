//! Cached FFT plans and the d-dimensional transforms built from them.
//!
//! Plans are shared process-wide (`Arc<dyn Fft<T>>` is `Send + Sync`);
//! scratch space is allocated per call, so transforms are safe to run from
//! many threads at once.

use std::any::{Any, TypeId};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex;
use rustfft::{Fft, FftDirection, FftPlanner};

use super::GridSpec;
use crate::Real;

type PlanKey = (TypeId, usize, bool);

fn cache() -> &'static Mutex<HashMap<PlanKey, Box<dyn Any + Send + Sync>>> {
    static PLANS: OnceLock<Mutex<HashMap<PlanKey, Box<dyn Any + Send + Sync>>>> = OnceLock::new();
    PLANS.get_or_init(|| Mutex::new(HashMap::new()))
}

pub(crate) fn plan<T: Real>(len: usize, direction: FftDirection) -> Arc<dyn Fft<T>> {
    let key = (TypeId::of::<T>(), len, direction == FftDirection::Forward);
    let mut plans = cache().lock().unwrap_or_else(|poisoned| poisoned.into_inner());
    if let Some(entry) = plans.get(&key) {
        if let Some(fft) = entry.downcast_ref::<Arc<dyn Fft<T>>>() {
            return Arc::clone(fft);
        }
    }
    let fft = FftPlanner::<T>::new().plan_fft(len, direction);
    plans.insert(key, Box::new(Arc::clone(&fft)));
    fft
}

/// A forward/inverse plan pair for one grid, for hot loops that want to skip
/// the cache lookup.
#[derive(Clone)]
pub struct Transform<T: Real> {
    grid: GridSpec,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
    scratch_len: usize,
}

impl<T: Real> Transform<T> {
    pub fn new(grid: GridSpec) -> Self {
        let forward = plan::<T>(grid.points(), FftDirection::Forward);
        let inverse = plan::<T>(grid.points(), FftDirection::Inverse);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Self {
            grid,
            forward,
            inverse,
            scratch_len,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Unnormalized forward DFT along every axis.
    pub fn forward(&self, data: &mut [Complex<T>]) {
        self.run(&*self.forward, data);
    }

    /// Inverse DFT along every axis, normalized so that
    /// `inverse(forward(u)) == u`.
    pub fn inverse(&self, data: &mut [Complex<T>]) {
        self.run(&*self.inverse, data);
        let scale = T::one() / T::of(self.grid.len() as f64);
        for v in data.iter_mut() {
            *v = v.scale(scale);
        }
    }

    fn run(&self, fft: &dyn Fft<T>, data: &mut [Complex<T>]) {
        debug_assert_eq!(data.len(), self.grid.len());
        let mut scratch = vec![Complex::new(T::zero(), T::zero()); self.scratch_len];
        // rustfft transforms each contiguous chunk of `points` entries
        fft.process_with_scratch(data, &mut scratch);
        if self.grid.dim() == 2 {
            let n = self.grid.points();
            transpose_square(data, n);
            fft.process_with_scratch(data, &mut scratch);
            transpose_square(data, n);
        }
    }
}

fn transpose_square<T: Copy>(data: &mut [T], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            data.swap(i * n + j, j * n + i);
        }
    }
}
