//! The shear solution operator `P_ς = (ςC̃ I − D²)⁻¹` and `J_ς = ςC̃ P_ς − I`.
//!
//! `P_ς f = s` solves `ςC̃ s − s'' = f` on `(0, L)` with `s(0) = 0` and
//! `s'(L) = 0`. These are the end conditions satisfied by the closed-form
//! Green's kernel
//!
//! ```text
//! g(x, z) = cosh(r(z − L)) sinh(r x) / (r cosh(r L)),   x ≤ z,   r = sqrt(ςC̃)
//! ```
//!
//! (symmetric in `x, z`), and they are the conditions carried by the shear
//! variable `φ²` of the beam model.
//!
//! Two independent implementations are provided:
//!
//! * [`EllipticSolver`]: the production path. A tridiagonal solve of the
//!   second-order difference operator with `s_0 = 0` and the mirror ghost
//!   `s_{N+1} = s_{N−1}` at the right end.
//! * [`SigmaKernel`]: composite-trapezoid quadrature of the kernel above.
//!
//! Grid functions are passed on all physical nodes `x_0..=x_N`. The value at
//! `x_0` of any input is irrelevant (the kernel vanishes there), and every
//! output of `P_ς` is zero at `x_0`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Discrete `L²(0, L)` inner product (trapezoid on `x_0..=x_N`).
pub fn inner(grid: &Grid, u: &[f64], v: &[f64]) -> f64 {
    let n = grid.n();
    assert_eq!(u.len(), n + 1);
    assert_eq!(v.len(), n + 1);
    let dx = grid.dx();
    let interior: f64 = (1..n).map(|i| u[i] * v[i]).sum();
    dx * (interior + 0.5 * (u[0] * v[0] + u[n] * v[n]))
}

pub fn norm(grid: &Grid, u: &[f64]) -> f64 {
    inner(grid, u, u).sqrt()
}

/// Factorised tridiagonal operator `ςC̃ I + L_h` on the unknowns `s_1..=s_N`,
/// where `L_h = −D²_h` with `s_0 = 0` and `s_{N+1} = s_{N−1}`.
///
/// `L_h` is not symmetric as a matrix but is self-adjoint and positive
/// definite in the trapezoid inner product (weights `dx, .., dx, dx/2`).
#[derive(Debug, Clone)]
pub struct EllipticSolver {
    grid: Grid,
    parameter: f64,
    // Thomas factorisation: modified super-diagonal and pivots.
    upper: Vec<f64>,
    pivots: Vec<f64>,
}

impl EllipticSolver {
    pub fn new(grid: Grid, parameter: f64) -> Result<Self> {
        if !(parameter > 0.0 && parameter.is_finite()) {
            return Err(Error::SolverSingular(format!("kernel parameter ςC̃ = {parameter} must be positive")));
        }
        Self::factor(grid, parameter)
    }

    fn factor(grid: Grid, parameter: f64) -> Result<Self> {
        let n = grid.n();
        let h2 = grid.dx() * grid.dx();
        let diag = parameter + 2.0 / h2;
        let (lower, upper) = tridiagonal_offdiagonals(n, h2);
        let mut pivots = vec![0.0; n];
        let mut modified_upper = vec![0.0; n];
        for k in 0..n {
            let prev = if k == 0 { 0.0 } else { lower[k] * modified_upper[k - 1] };
            let pivot = diag - prev;
            if pivot.abs() < f64::EPSILON * diag {
                return Err(Error::SolverSingular(format!("zero pivot at row {}", k + 1)));
            }
            pivots[k] = pivot;
            if k + 1 < n {
                modified_upper[k] = upper[k] / pivot;
            }
        }
        Ok(EllipticSolver { grid, parameter, upper: modified_upper, pivots })
    }

    /// `L_h` alone (no shift). Invertible because of the condition at `x_0`;
    /// used as the mass block of the filtered shear equation.
    pub fn neg_laplacian_solver(grid: Grid) -> Result<Self> {
        Self::factor(grid, 0.0)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn parameter(&self) -> f64 {
        self.parameter
    }

    /// Solves `(ςC̃ + L_h) s = f` for the reduced vectors (`s_1..=s_N`).
    pub fn solve_reduced(&self, f: &[f64]) -> Vec<f64> {
        let n = self.grid.n();
        assert_eq!(f.len(), n);
        let h2 = self.grid.dx() * self.grid.dx();
        let (lower, _) = tridiagonal_offdiagonals(n, h2);
        let mut y = vec![0.0; n];
        for k in 0..n {
            let prev = if k == 0 { 0.0 } else { lower[k] * y[k - 1] };
            y[k] = (f[k] - prev) / self.pivots[k];
        }
        for k in (0..n.saturating_sub(1)).rev() {
            y[k] -= self.upper[k] * y[k + 1];
        }
        y
    }

    /// `P_ς f` on `x_0..=x_N`.
    pub fn apply_p(&self, f: &[f64]) -> Vec<f64> {
        let n = self.grid.n();
        assert_eq!(f.len(), n + 1);
        let s = self.solve_reduced(&f[1..]);
        let mut out = Vec::with_capacity(n + 1);
        out.push(0.0);
        out.extend(s);
        out
    }

    /// `J_ς f = ςC̃ P_ς f − f` on `x_0..=x_N`.
    pub fn apply_j(&self, f: &[f64]) -> Vec<f64> {
        let p = self.apply_p(f);
        p.iter().zip(f).map(|(p, f)| self.parameter * p - f).collect()
    }

    /// `L_h s = −D²_h s` for reduced vectors.
    pub fn neg_laplacian_reduced(&self, s: &[f64]) -> Vec<f64> {
        neg_laplacian(&self.grid, s)
    }

    /// Residual `(ςC̃ + L_h)s − f` in the max norm, reduced vectors.
    pub fn residual_inf(&self, s: &[f64], f: &[f64]) -> f64 {
        let ls = self.neg_laplacian_reduced(s);
        ls.iter()
            .zip(s)
            .zip(f)
            .map(|((l, s), f)| (self.parameter * s + l - f).abs())
            .fold(0.0, f64::max)
    }

    /// Dense `P_h` on reduced vectors (column `j` is `P_h e_j`).
    pub fn p_matrix(&self) -> DMatrix<f64> {
        let n = self.grid.n();
        let mut p = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            let col = self.solve_reduced(&e);
            for (i, v) in col.into_iter().enumerate() {
                p[(i, j)] = v;
            }
            e[j] = 0.0;
        }
        p
    }
}

/// Sub/super diagonals of `L_h` (lower[k] couples row k to k-1, upper[k] row k to k+1).
fn tridiagonal_offdiagonals(n: usize, h2: f64) -> (Vec<f64>, Vec<f64>) {
    let mut lower = vec![-1.0 / h2; n];
    let upper = vec![-1.0 / h2; n];
    lower[0] = 0.0;
    if n >= 2 {
        lower[n - 1] = -2.0 / h2;
    }
    (lower, upper)
}

/// `L_h s = −D²_h s` on reduced vectors `s_1..=s_N` with `s_0 = 0`, `s_{N+1} = s_{N−1}`.
pub fn neg_laplacian(grid: &Grid, s: &[f64]) -> Vec<f64> {
    let n = grid.n();
    assert_eq!(s.len(), n);
    let h2 = grid.dx() * grid.dx();
    (0..n)
        .map(|k| {
            let left = if k == 0 { 0.0 } else { s[k - 1] };
            let right = if k + 1 == n { s[k - 1] } else { s[k + 1] };
            (2.0 * s[k] - left - right) / h2
        })
        .collect()
}

/// Dense `L_h` on reduced vectors.
pub fn neg_laplacian_matrix(grid: &Grid) -> DMatrix<f64> {
    let n = grid.n();
    let h2 = grid.dx() * grid.dx();
    let mut m = DMatrix::zeros(n, n);
    for k in 0..n {
        m[(k, k)] = 2.0 / h2;
        if k > 0 {
            m[(k, k - 1)] -= 1.0 / h2;
        }
        if k + 1 < n {
            m[(k, k + 1)] -= 1.0 / h2;
        } else {
            m[(k, k - 1)] -= 1.0 / h2;
        }
    }
    m
}

/// Trapezoid weights restricted to `x_1..=x_N`.
pub fn reduced_weights(grid: &Grid) -> Vec<f64> {
    let mut w = vec![grid.dx(); grid.n()];
    *w.last_mut().unwrap() *= 0.5;
    w
}

/// Quadrature of the closed-form Green's kernel.
#[derive(Debug, Clone)]
pub struct SigmaKernel {
    grid: Grid,
    parameter: f64,
    kernel: DMatrix<f64>,
    weights: Vec<f64>,
}

impl SigmaKernel {
    pub fn new(grid: Grid, parameter: f64) -> Result<Self> {
        if !(parameter > 0.0 && parameter.is_finite()) {
            return Err(Error::SolverSingular(format!("kernel parameter ςC̃ = {parameter} must be positive")));
        }
        let nodes = grid.nodes();
        let n = nodes.len();
        let kernel = DMatrix::from_fn(n, n, |i, j| green(parameter, grid.length(), nodes[i], nodes[j]));
        Ok(SigmaKernel { grid, parameter, kernel, weights: grid.trapezoid_weights() })
    }

    pub fn parameter(&self) -> f64 {
        self.parameter
    }

    /// `g(x_i, x_j)` on the physical nodes.
    pub fn kernel(&self) -> &DMatrix<f64> {
        &self.kernel
    }

    /// `(P f)(x_i) ≈ Σ_j w_j g(x_i, x_j) f(x_j)`.
    pub fn apply_p(&self, f: &[f64]) -> Vec<f64> {
        assert_eq!(f.len(), self.grid.n() + 1);
        let weighted: Vec<f64> = f.iter().zip(&self.weights).map(|(f, w)| f * w).collect();
        (0..f.len())
            .map(|i| (0..f.len()).map(|j| self.kernel[(i, j)] * weighted[j]).sum())
            .collect()
    }
}

/// Green's function of `ςC̃ − d²/dx²` with `s(0) = 0`, `s'(L) = 0`.
///
/// Written with non-positive exponents only, so it stays finite for
/// `sqrt(ςC̃)·L` in the thousands.
pub fn green(parameter: f64, length: f64, x: f64, z: f64) -> f64 {
    let r = parameter.sqrt();
    let (lo, hi) = if x <= z { (x, z) } else { (z, x) };
    // cosh(r(hi − L)) sinh(r lo) / (r cosh(rL))
    let num = (1.0 + (-2.0 * r * (length - hi)).exp()) * (-(-2.0 * r * lo).exp_m1());
    let den = 2.0 * r * (1.0 + (-2.0 * r * length).exp());
    (r * (lo - hi)).exp() * num / den
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Grid {
        Grid::new(n, 1.0).unwrap()
    }

    #[test]
    fn zero_maps_to_zero() {
        let g = grid(32);
        let zero = vec![0.0; 33];
        let solver = EllipticSolver::new(g, 4.0).unwrap();
        let kernel = SigmaKernel::new(g, 4.0).unwrap();
        assert!(solver.apply_p(&zero).iter().all(|&v| v == 0.0));
        assert!(kernel.apply_p(&zero).iter().all(|&v| v == 0.0));
        assert!(solver.apply_j(&zero).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn green_matches_direct_cosh_sinh_form() {
        let c: f64 = 3.0;
        let r = c.sqrt();
        for &(x, z) in &[(0.2, 0.7), (0.9, 0.1), (0.5, 0.5), (0.0, 0.3)] {
            let (lo, hi) = if x <= z { (x, z) } else { (z, x) };
            let direct = (r * (hi - 1.0)).cosh() * (r * lo).sinh() / (r * r.cosh());
            assert!((green(c, 1.0, x, z) - direct).abs() < 1e-14);
        }
        // stays finite for the very stiff default parameter
        let stiff = green(1.4e7, 1.0, 0.5, 0.5);
        assert!(stiff.is_finite() && stiff > 0.0);
    }

    #[test]
    fn kernel_is_symmetric_and_nonnegative() {
        let k = SigmaKernel::new(grid(40), 7.0).unwrap();
        let m = k.kernel();
        for i in 0..41 {
            for j in 0..41 {
                assert_eq!(m[(i, j)], m[(j, i)]);
                assert!(m[(i, j)] >= 0.0);
            }
        }
    }

    #[test]
    fn constant_input_has_closed_form_image() {
        // ςC̃ s − s'' = c, s(0) = 0, s'(L) = 0:
        // s = (c/ςC̃)(1 − cosh(r(x − L))/cosh(rL))
        let param: f64 = 9.0;
        let r = param.sqrt();
        let g = grid(200);
        let f = vec![2.0; 201];
        let exact: Vec<f64> =
            g.nodes().iter().map(|&x| 2.0 / param * (1.0 - (r * (x - 1.0)).cosh() / r.cosh())).collect();
        let solver = EllipticSolver::new(g, param).unwrap();
        let kernel = SigmaKernel::new(g, param).unwrap();
        for approx in [solver.apply_p(&f), kernel.apply_p(&f)] {
            let err = approx.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-4, "err {err}");
        }
    }

    #[test]
    fn j_annihilates_only_through_the_dirichlet_layer() {
        // Away from x = 0, J c ≈ 0 for constants once the boundary layer has
        // decayed; at x = 0 it equals −c.
        let param = 400.0;
        let g = grid(400);
        let solver = EllipticSolver::new(g, param).unwrap();
        let j = solver.apply_j(&vec![1.0; 401]);
        assert_eq!(j[0], -1.0);
        let r = param.sqrt();
        for (i, x) in g.nodes().iter().enumerate() {
            let exact = -(r * (x - 1.0)).cosh() / r.cosh();
            assert!((j[i] - exact).abs() < 2e-3, "node {i}");
        }
        assert!(j[400].abs() < 1e-6);
    }

    #[test]
    fn residual_is_tiny_for_random_input() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let g = grid(100);
        let solver = EllipticSolver::new(g, 12.0).unwrap();
        let f: Vec<f64> = (0..100).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s = solver.solve_reduced(&f);
        let fmax = f.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        assert!(solver.residual_inf(&s, &f) <= 1e-10 * fmax);
    }

    #[test]
    fn rejects_non_positive_parameter() {
        assert!(matches!(EllipticSolver::new(grid(10), 0.0), Err(Error::SolverSingular(_))));
        assert!(SigmaKernel::new(grid(10), -1.0).is_err());
    }

    #[test]
    fn dense_p_matches_solver_columns() {
        let g = grid(12);
        let solver = EllipticSolver::new(g, 2.5).unwrap();
        let p = solver.p_matrix();
        let l = neg_laplacian_matrix(&g);
        let prod = (l + DMatrix::identity(12, 12) * 2.5) * p;
        assert!((prod - DMatrix::identity(12, 12)).amax() < 1e-10);
    }
}
