//! Uniform grid on `[0, L]` with one fictitious node beyond each end, and the
//! second-order difference stencils used by the scheme.

use crate::error::{Error, Result};

pub const MIN_RESOLUTION: usize = 8;

/// Nodes `x_i = i·dx`, `i = -1..=N+1`, with `dx = L/N` so that `x_N = L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    n: usize,
    dx: f64,
    length: f64,
}

impl Grid {
    pub fn new(n: usize, length: f64) -> Result<Self> {
        if n < MIN_RESOLUTION {
            return Err(Error::ResolutionTooSmall(n));
        }
        Ok(Self::new_unchecked(n, length))
    }

    /// Same as [`Grid::new`] without the resolution guard. Only meant for
    /// small hand-checkable examples.
    pub fn new_unchecked(n: usize, length: f64) -> Self {
        Grid { n, dx: length / n as f64, length }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Position of node `i`, ghosts included (`i = -1` and `i = N+1`).
    pub fn x(&self, i: isize) -> f64 {
        if i == self.n as isize {
            self.length
        } else {
            i as f64 * self.dx
        }
    }

    /// Physical nodes `x_0..=x_N`.
    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n as isize).map(|i| self.x(i)).collect()
    }

    /// Trapezoid weights on `x_0..=x_N`.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let mut w = vec![self.dx; self.n + 1];
        w[0] *= 0.5;
        w[self.n] *= 0.5;
        w
    }

    /// Samples `f` on all nodes including both ghosts.
    pub fn sample<F: Fn(f64) -> f64>(&self, f: F) -> GhostedValues {
        let data = (-1..=self.n as isize + 1).map(|i| f(self.x(i))).collect();
        GhostedValues { data }
    }
}

/// A grid function stored on `x_{-1}..=x_{N+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct GhostedValues {
    data: Vec<f64>,
}

impl GhostedValues {
    /// Wraps `N + 3` values, ghost at `x_{-1}` first.
    pub fn from_vec(data: Vec<f64>) -> Self {
        assert!(data.len() >= 3, "a ghosted grid function needs at least 3 values");
        GhostedValues { data }
    }

    /// Number of intervals `N`.
    pub fn n(&self) -> usize {
        self.data.len() - 3
    }

    pub fn get(&self, i: isize) -> Option<f64> {
        let k = i + 1;
        if k < 0 {
            return None;
        }
        self.data.get(k as usize).copied()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// The finite-difference formulas of the scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stencil {
    /// `(z_{i+1} - z_{i-1}) / (2dx)`
    D1Central,
    /// `(3z_i - 4z_{i-1} + z_{i-2}) / (2dx)`
    D1Backward3,
    /// `(z_{i+1} - 2z_i + z_{i-1}) / dx²`
    D2,
    /// `(z_{i+2} - 2z_{i+1} + 2z_{i-1} - z_{i-2}) / (2dx³)`
    D3,
    /// `(z_{i+2} - 4z_{i+1} + 6z_i - 4z_{i-1} + z_{i-2}) / dx⁴`
    D4,
    /// One-sided third derivative on `z_{i+1}..z_{i-3}` with weights
    /// `(2, -5, 2, 4, -4) / (2dx³)`. Kept for reference: the weights do not sum
    /// to zero, so the formula is not consistent (it does not annihilate
    /// constants) and the scheme never uses it.
    D3TipUnbalanced,
    /// Consistent second-order one-sided third derivative on the same nodes,
    /// weights `(3, -10, 12, -6, 1) / (2dx³)`.
    D3TipSecondOrder,
}

impl Stencil {
    /// `(offsets, weights, power of dx in the denominator)`.
    pub fn coefficients(self) -> (&'static [isize], &'static [f64], i32) {
        match self {
            Stencil::D1Central => (&[1, -1], &[0.5, -0.5], 1),
            Stencil::D1Backward3 => (&[0, -1, -2], &[1.5, -2.0, 0.5], 1),
            Stencil::D2 => (&[1, 0, -1], &[1.0, -2.0, 1.0], 2),
            Stencil::D3 => (&[2, 1, -1, -2], &[0.5, -1.0, 1.0, -0.5], 3),
            Stencil::D4 => (&[2, 1, 0, -1, -2], &[1.0, -4.0, 6.0, -4.0, 1.0], 4),
            Stencil::D3TipUnbalanced => (&[1, 0, -1, -2, -3], &[1.0, -2.5, 1.0, 2.0, -2.0], 3),
            Stencil::D3TipSecondOrder => (&[1, 0, -1, -2, -3], &[1.5, -5.0, 6.0, -3.0, 0.5], 3),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Stencil::D1Central => "d1_central",
            Stencil::D1Backward3 => "d1_backward3",
            Stencil::D2 => "d2",
            Stencil::D3 => "d3",
            Stencil::D4 => "d4",
            Stencil::D3TipUnbalanced => "d3_tip_unbalanced",
            Stencil::D3TipSecondOrder => "d3_tip_second_order",
        }
    }
}

/// Applies `kind` at node `i` of `values`, whose spacing is `grid.dx()`.
pub fn apply_stencil(grid: &Grid, kind: Stencil, values: &GhostedValues, i: isize) -> Result<f64> {
    let (offsets, weights, power) = kind.coefficients();
    let out_of_range = || Error::IndexOutOfRange { stencil: kind.name(), index: i };
    if i < 0 || i > grid.n() as isize || values.n() != grid.n() {
        return Err(out_of_range());
    }
    let mut acc = 0.0;
    for (&o, &w) in offsets.iter().zip(weights) {
        acc += w * values.get(i + o).ok_or_else(out_of_range)?;
    }
    Ok(acc / grid.dx().powi(power))
}
