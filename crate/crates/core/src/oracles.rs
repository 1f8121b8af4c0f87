//! Cross-checks between independent implementations.
//!
//! Each function measures one discrepancy and returns the number; the
//! thresholds live with the callers ([`oracle_suite`] and the test suites).

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::grid::Grid;
use crate::model::SemiDiscreteSystem;
use crate::sigma::{inner, norm, EllipticSolver, SigmaKernel};

/// Random smooth input: a few cosine modes with decaying random amplitudes.
pub fn smooth_input(grid: &Grid, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let l = grid.length();
    let modes: Vec<(f64, f64)> =
        (1..=5).map(|k| (rng.random_range(-1.0..1.0) / k as f64, rng.random_range(0.0..std::f64::consts::TAU))).collect();
    grid.nodes()
        .iter()
        .map(|x| {
            modes
                .iter()
                .enumerate()
                .map(|(k, (a, ph))| a * ((k + 1) as f64 * std::f64::consts::PI * x / l + ph).cos())
                .sum()
        })
        .collect()
}

fn random_nodal(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..=n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Largest relative L² gap between the quadrature and solve routes of `P`
/// over `inputs` random smooth inputs.
pub fn kernel_vs_solve(parameter: f64, n: usize, length: f64, inputs: usize, seed: u64) -> Result<f64> {
    let grid = Grid::new(n, length)?;
    let solver = EllipticSolver::new(grid, parameter)?;
    let kernel = SigmaKernel::new(grid, parameter)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..inputs {
        let f = smooth_input(&grid, &mut rng);
        let a = solver.apply_p(&f);
        let b = kernel.apply_p(&f);
        let diff: Vec<f64> = a.iter().zip(&b).map(|(a, b)| a - b).collect();
        worst = worst.max(norm(&grid, &diff) / norm(&grid, &a));
    }
    Ok(worst)
}

/// Worst `|⟨Pu, v⟩ − ⟨u, Pv⟩| / (‖u‖‖v‖)` over random nodal `u, v` that
/// vanish at `x_0`.
pub fn p_symmetry(solver: &EllipticSolver, samples: usize, seed: u64) -> f64 {
    let grid = *solver.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..samples)
        .map(|_| {
            let mut u = random_nodal(grid.n(), &mut rng);
            let mut v = random_nodal(grid.n(), &mut rng);
            u[0] = 0.0;
            v[0] = 0.0;
            let lhs = inner(&grid, &solver.apply_p(&u), &v);
            let rhs = inner(&grid, &u, &solver.apply_p(&v));
            (lhs - rhs).abs() / (norm(&grid, &u) * norm(&grid, &v))
        })
        .fold(0.0, f64::max)
}

/// `(min ⟨Pu, u⟩/‖u‖², max ⟨Ju, u⟩/‖u‖²)` over random nodal `u`.
pub fn sign_checks(solver: &EllipticSolver, samples: usize, seed: u64) -> (f64, f64) {
    let grid = *solver.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut min_p = f64::INFINITY;
    let mut max_j = f64::NEG_INFINITY;
    for _ in 0..samples {
        let mut u = random_nodal(grid.n(), &mut rng);
        u[0] = 0.0;
        let uu = inner(&grid, &u, &u);
        min_p = min_p.min(inner(&grid, &solver.apply_p(&u), &u) / uu);
        max_j = max_j.max(inner(&grid, &solver.apply_j(&u), &u) / uu);
    }
    (min_p, max_j)
}

/// Worst relative gap between `⟨Ju, u⟩` and `−ςC̃‖s_x‖² − ‖s_xx‖²` with
/// `s = Pu` (one-sided differences for `s_x` on cells, `D²` with the end
/// conditions for `s_xx`).
pub fn j_energy_identity(solver: &EllipticSolver, samples: usize, seed: u64) -> f64 {
    let grid = *solver.grid();
    let n = grid.n();
    let dx = grid.dx();
    let c = solver.parameter();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let mut u = random_nodal(n, &mut rng);
        u[0] = 0.0;
        let s = solver.apply_p(&u);
        let ju = inner(&grid, &solver.apply_j(&u), &u);
        let grad: f64 = (0..n).map(|i| dx * ((s[i + 1] - s[i]) / dx).powi(2)).sum();
        let lap = solver.neg_laplacian_reduced(&s[1..]);
        let mut lap_full = vec![0.0];
        lap_full.extend(lap);
        let direct = -c * grad - inner(&grid, &lap_full, &lap_full);
        worst = worst.max((ju - direct).abs() / ju.abs());
    }
    worst
}

/// Max-norm gap between `J w` and `P(w'')` for a test function with
/// `w(0) = 0` and `w'(L) = 0`, relative to `max |J w|`.
pub fn j_identity_error(parameter: f64, n: usize, length: f64, w: impl Fn(f64) -> f64, wxx: impl Fn(f64) -> f64) -> Result<f64> {
    let grid = Grid::new(n, length)?;
    let solver = EllipticSolver::new(grid, parameter)?;
    let nodes = grid.nodes();
    let wv: Vec<f64> = nodes.iter().map(|&x| w(x)).collect();
    let d2: Vec<f64> = nodes.iter().map(|&x| wxx(x)).collect();
    let jw = solver.apply_j(&wv);
    let pd = solver.apply_p(&d2);
    let scale = jw.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    Ok(jw.iter().zip(&pd).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale)
}

/// Worst `‖(ςC̃ + L_h)s − f‖∞ / ‖f‖∞` for random `f`.
pub fn solve_residual(solver: &EllipticSolver, samples: usize, seed: u64) -> f64 {
    let n = solver.grid().n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..samples)
        .map(|_| {
            let f: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let s = solver.solve_reduced(&f);
            solver.residual_inf(&s, &f) / f.iter().fold(0.0f64, |m, x| m.max(x.abs()))
        })
        .fold(0.0, f64::max)
}

/// Worst entrywise gap `|A z + bV − rhs(z, V)| / max|rhs|` on random packed
/// states and voltages.
pub fn generator_vs_rhs(sys: &SemiDiscreteSystem, samples: usize, seed: u64) -> f64 {
    let dense = sys.dense();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = sys.state_len();
    (0..samples)
        .map(|_| {
            let z: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let v = rng.random_range(-1.0..1.0);
            let mf = sys.rhs_packed(&z, v);
            let dz = &dense.generator * DVector::from_vec(z) + &dense.input * v;
            let scale = mf.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            mf.iter().zip(dz.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale
        })
        .fold(0.0, f64::max)
}

/// Manufactured solution of the shear problem: `s = sin(πx/(2L))` solves
/// `ςC̃ s − s'' = (ςC̃ + (π/(2L))²) s` with `s(0) = 0`, `s'(L) = 0`.
/// Returns the max-norm error of both routes `(solve, kernel)`.
pub fn manufactured_error(parameter: f64, n: usize, length: f64) -> Result<(f64, f64)> {
    let grid = Grid::new(n, length)?;
    let k = std::f64::consts::PI / (2.0 * length);
    let exact: Vec<f64> = grid.nodes().iter().map(|x| (k * x).sin()).collect();
    let f: Vec<f64> = exact.iter().map(|s| (parameter + k * k) * s).collect();
    let err = |approx: Vec<f64>| approx.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let solve = err(EllipticSolver::new(grid, parameter)?.apply_p(&f));
    let kernel = err(SigmaKernel::new(grid, parameter)?.apply_p(&f));
    Ok((solve, kernel))
}

/// `log₂(e_coarse / e_fine)` for successive halvings of `dx`.
pub fn observed_orders(errors: &[f64], resolutions: &[usize]) -> Vec<Option<f64>> {
    let mut out = vec![None];
    for k in 1..errors.len() {
        let ratio = resolutions[k] as f64 / resolutions[k - 1] as f64;
        out.push(Some((errors[k - 1] / errors[k]).ln() / ratio.ln()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manufactured_solution_converges_at_second_order() {
        let res = [25, 50, 100, 200];
        let (solve, kernel): (Vec<f64>, Vec<f64>) =
            res.iter().map(|&n| manufactured_error(9.0, n, 1.0).unwrap()).unzip();
        for errs in [solve, kernel] {
            let orders = observed_orders(&errs, &res);
            let last = orders.last().unwrap().unwrap();
            assert!((last - 2.0).abs() < 0.2, "{errs:?}");
        }
    }

    #[test]
    fn orders_of_an_exact_power_law() {
        let o = observed_orders(&[1.0, 0.25, 0.0625], &[10, 20, 40]);
        assert_eq!(o[0], None);
        assert!((o[1].unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn energy_identity_of_j() {
        let solver = EllipticSolver::new(Grid::new(64, 1.0).unwrap(), 7.0).unwrap();
        assert!(j_energy_identity(&solver, 10, 3) < 1e-10);
    }
}
