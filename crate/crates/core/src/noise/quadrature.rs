//! Composite Gauss–Legendre quadrature with panel doubling.

use crate::{Error, Result};

/// Nodes per panel.
pub const PANEL_NODES: usize = 8;
/// Hard cap on the total node count.
pub const MAX_NODES: usize = 1 << 14;
/// Relative change between doublings at which the rule stops refining.
pub const TARGET_CHANGE: f64 = 1e-10;
/// Largest relative change still accepted when the node cap is hit.
pub const ACCEPT_CHANGE: f64 = 1e-8;

/// Gauss–Legendre nodes and weights on `[-1, 1]`, by Newton iteration on
/// `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Integration interval. When the lower end is zero the variable is changed
/// to `a = hi·w⁴`, which smooths algebraic endpoint behaviour such as
/// `a^{1/2}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    fn graded(&self) -> bool {
        self.lo == 0.0
    }

    /// Maps the reference variable `w ∈ [0, 1]` to `(a, da/dw)`.
    fn map(&self, w: f64) -> (f64, f64) {
        if self.graded() {
            (self.hi * w.powi(4), 4.0 * self.hi * w.powi(3))
        } else {
            (self.lo + (self.hi - self.lo) * w, self.hi - self.lo)
        }
    }

    /// Panel boundaries in `a` for `panels` equal panels of `w`.
    pub fn breakpoints(&self, panels: usize) -> Vec<f64> {
        (0..=panels).map(|p| self.map(p as f64 / panels as f64).0).collect()
    }

    /// Composite rule with `panels` panels: `(nodes, weights)` in `a`.
    pub fn rule(&self, panels: usize) -> (Vec<f64>, Vec<f64>) {
        let (x, w) = gauss_legendre(PANEL_NODES);
        let width = 1.0 / panels as f64;
        let mut nodes = Vec::with_capacity(panels * PANEL_NODES);
        let mut weights = Vec::with_capacity(panels * PANEL_NODES);
        for p in 0..panels {
            let left = p as f64 * width;
            for (xi, wi) in x.iter().zip(&w) {
                let (a, jac) = self.map(left + 0.5 * width * (xi + 1.0));
                nodes.push(a);
                weights.push(0.5 * width * wi * jac);
            }
        }
        (nodes, weights)
    }
}

/// Integrates a vector-valued integrand. `accumulate(a, w, acc)` must add
/// `w·f(a)` into `acc`.
pub fn integrate_vec(
    interval: Interval,
    len: usize,
    accumulate: impl Fn(f64, f64, &mut [f64]),
) -> Result<Vec<f64>> {
    if interval.hi <= interval.lo {
        return Ok(vec![0.0; len]);
    }
    let evaluate = |panels: usize| {
        let (nodes, weights) = interval.rule(panels);
        let mut acc = vec![0.0; len];
        for (a, w) in nodes.into_iter().zip(weights) {
            accumulate(a, w, &mut acc);
        }
        acc
    };
    let mut panels = 2;
    let mut prev = evaluate(panels);
    loop {
        panels *= 2;
        let next = evaluate(panels);
        let scale = next.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let diff = next
            .iter()
            .zip(&prev)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let change = if scale > 0.0 { diff / scale } else { diff };
        if !change.is_finite() {
            return Err(Error::Quadrature {
                change,
                nodes: panels * PANEL_NODES,
            });
        }
        if change <= TARGET_CHANGE {
            return Ok(next);
        }
        if panels * PANEL_NODES >= MAX_NODES {
            return if change <= ACCEPT_CHANGE {
                Ok(next)
            } else {
                Err(Error::Quadrature {
                    change,
                    nodes: panels * PANEL_NODES,
                })
            };
        }
        prev = next;
    }
}

pub fn integrate(interval: Interval, f: impl Fn(f64) -> f64) -> Result<f64> {
    integrate_vec(interval, 1, |a, w, acc| acc[0] += w * f(a)).map(|v| v[0])
}
