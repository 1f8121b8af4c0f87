//! Semi-discrete bending/shear system.
//!
//! Unknowns live on `x_1..=x_N` (the clamp fixes `w_0 = φ²_0 = 0`, and the
//! ghost `w_{-1} = w_1` encodes `w_x(0) = 0`). The packed state vector is
//!
//! ```text
//! [ w_1 .. w_N | v_1 .. v_N ]                  elliptic-constraint mode
//! [ w_1 .. w_N | v_1 .. v_N | φ²_1 .. φ²_N ]    viscous-filtered mode
//! ```
//!
//! where `v = ∂w/∂t*` is the velocity in the nondimensional time
//! `t* = t/A₁`.
//!
//! The spatial operators are built from three pieces:
//!
//! * the curvature `D2 w` on `x_0..x_{N−1}` (free end: `w_xx(L) = 0` in the
//!   homogeneous energy), weighted by the trapezoid rule `Ω`,
//! * the slope `G w` on `x_1..=x_N` (central differences, backward
//!   three-point formula at `x_N`),
//! * the shear operator `P_h`, `J_h = ςC̃P_h − I` from [`crate::sigma`].
//!
//! The stiffness is the Hessian of the trapezoid energy,
//! `K = Ã D2ᵀΩD2 + βγςh₂h₃B̃² Gᵀ W (−J_h) G`, so the interior rows reduce to
//! the stencils `ẅ + (Ã/m)D4 w − (K_c/m) D1 φ² = 0` and
//! `ςC̃φ² − D2 φ² + B̃ D3 w = 0`, and the boundary rows at `x = L` are the
//! natural (energy-consistent) ones.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::config::BeamCoefficients;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::sigma::{neg_laplacian, neg_laplacian_matrix, reduced_weights, EllipticSolver};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// `φ²` is a state variable, relaxed through the filtered equation
    /// `−φ̇²_xx + ςC̃φ² − φ²_xx + B̃w_xxx = 0`.
    ViscousFiltered,
    /// `φ²` is eliminated through the elliptic constraint
    /// `ςC̃φ² − φ²_xx + B̃w_xxx = 0`.
    #[default]
    EllipticConstraint,
}

impl Mode {
    pub fn state_blocks(self) -> usize {
        match self {
            Mode::ViscousFiltered => 3,
            Mode::EllipticConstraint => 2,
        }
    }
}

/// Displacement, velocity (per unit `t*`) and shear on `x_0..=x_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamState {
    pub w: Vec<f64>,
    pub wdot: Vec<f64>,
    pub phi2: Vec<f64>,
    /// Nondimensional time `t*`.
    pub time: f64,
}

impl BeamState {
    pub fn zeros(n: usize) -> Self {
        BeamState { w: vec![0.0; n + 1], wdot: vec![0.0; n + 1], phi2: vec![0.0; n + 1], time: 0.0 }
    }

    pub fn n(&self) -> usize {
        self.w.len() - 1
    }

    /// Multiplies every field (not the time) by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let s = |v: &Vec<f64>| v.iter().map(|x| c * x).collect();
        BeamState { w: s(&self.w), wdot: s(&self.wdot), phi2: s(&self.phi2), time: self.time }
    }

    pub fn check_invariants(&self) -> Result<()> {
        let n = self.n();
        if self.wdot.len() != n + 1 || self.phi2.len() != n + 1 {
            return Err(Error::Validation("state vectors must share one length".into()));
        }
        if self.w[0] != 0.0 || self.wdot[0] != 0.0 || self.phi2[0] != 0.0 {
            return Err(Error::Validation("clamped end requires w_0 = ẇ_0 = φ²_0 = 0".into()));
        }
        Ok(())
    }
}

/// Time derivative of a [`BeamState`] (all on `x_0..=x_N`).
#[derive(Debug, Clone, PartialEq)]
pub struct StateDerivative {
    pub w: Vec<f64>,
    pub wdot: Vec<f64>,
    /// `∂φ²/∂t*`. In constraint mode this is the constraint applied to the
    /// velocity with the voltage term dropped.
    pub phi2: Vec<f64>,
}

/// Scheme options that depend on the grid rather than on the material.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeOptions {
    pub mode: Mode,
    /// Numerical viscosity on `ẇ`, in unit-length coordinates. `None` gives
    /// `κ = (dx/L)/5`.
    pub kappa: Option<f64>,
    pub coupling: Coupling,
}

impl Default for SchemeOptions {
    fn default() -> Self {
        SchemeOptions { mode: Mode::EllipticConstraint, kappa: None, coupling: Coupling::Stiffening }
    }
}

/// Sign of the shear force in the bending equation of the filtered mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    /// `−K_c Gᵀ W φ²`: the shear adds stiffness, as the energy requires.
    #[default]
    Stiffening,
    /// `+K_c Gᵀ W φ²`. With this sign the lag of the filtered shear damps
    /// instead of feeding the bending motion, but the stored energy is no
    /// longer the one conserved by the open loop. Filtered mode only.
    Softening,
}

/// Assembled semi-discrete operators.
#[derive(Debug, Clone)]
pub struct SemiDiscreteSystem {
    grid: Grid,
    coeffs: BeamCoefficients,
    mode: Mode,
    kappa: f64,
    coupling_sign: f64,
    a1: f64,
    shear: EllipticSolver,
    shear_mass: EllipticSolver,
    weights: Vec<f64>,
    /// Trapezoid weights of the curvature samples on `x_0..x_{N−1}`.
    curvature_weights: Vec<f64>,
}

impl SemiDiscreteSystem {
    pub fn assemble(grid: Grid, coeffs: BeamCoefficients, options: SchemeOptions) -> Result<Self> {
        coeffs.validate()?;
        let n = grid.n();
        if n < 4 {
            return Err(Error::ResolutionTooSmall(n));
        }
        let kappa = options.kappa.unwrap_or(grid.dx() / grid.length() / 5.0);
        if !(kappa >= 0.0 && kappa.is_finite()) {
            return Err(Error::Validation(format!("kappa must be non-negative, got {kappa}")));
        }
        if options.mode == Mode::EllipticConstraint && options.coupling == Coupling::Softening {
            return Err(Error::Validation("softening coupling is only defined in the filtered mode".into()));
        }
        let coupling_sign = match options.coupling {
            Coupling::Stiffening => 1.0,
            Coupling::Softening => -1.0,
        };
        let shear = EllipticSolver::new(grid, coeffs.kernel_parameter())?;
        let shear_mass = EllipticSolver::neg_laplacian_solver(grid)
            .map_err(|e| Error::SingularMass(format!("shear mass block: {e}")))?;
        let weights = reduced_weights(&grid);
        if weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::SingularMass("non-positive lumped mass".into()));
        }
        let mut curvature_weights = vec![grid.dx(); n];
        curvature_weights[0] *= 0.5;
        Ok(SemiDiscreteSystem {
            grid,
            a1: coeffs.a1(),
            coeffs,
            mode: options.mode,
            kappa,
            coupling_sign,
            shear,
            shear_mass,
            weights,
            curvature_weights,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn coeffs(&self) -> &BeamCoefficients {
        &self.coeffs
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Time scale `A₁` (`t = A₁ t*`).
    pub fn a1(&self) -> f64 {
        self.a1
    }

    pub fn shear_solver(&self) -> &EllipticSolver {
        &self.shear
    }

    /// Lumped mass weights on `x_1..=x_N` (trapezoid, `dx/2` at the tip).
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn state_len(&self) -> usize {
        self.mode.state_blocks() * self.grid.n()
    }

    // ----- matrix-free building blocks (reduced vectors, length N) -----

    /// `D2 w` on `x_0..x_{N−1}` with `w_0 = 0`, `w_{−1} = w_1`.
    pub fn curvature(&self, w: &[f64]) -> Vec<f64> {
        let n = self.grid.n();
        let h2 = self.grid.dx().powi(2);
        let at = |i: isize| -> f64 {
            match i {
                -1 => w[0],
                0 => 0.0,
                i => w[i as usize - 1],
            }
        };
        (0..n as isize).map(|i| (at(i + 1) - 2.0 * at(i) + at(i - 1)) / h2).collect()
    }

    /// `D2ᵀ u` for `u` on `x_0..x_{N−1}`.
    fn curvature_transpose(&self, u: &[f64]) -> Vec<f64> {
        let n = self.grid.n();
        let h2 = self.grid.dx().powi(2);
        let mut out = vec![0.0; n];
        let mut add = |node: isize, value: f64| match node {
            -1 => out[0] += value,
            0 => {}
            k => out[k as usize - 1] += value,
        };
        for (i, &ui) in u.iter().enumerate() {
            let i = i as isize;
            add(i + 1, ui / h2);
            add(i, -2.0 * ui / h2);
            add(i - 1, ui / h2);
        }
        out
    }

    /// `G w`: slope on `x_1..=x_N`.
    pub fn slope(&self, w: &[f64]) -> Vec<f64> {
        let n = self.grid.n();
        let dx = self.grid.dx();
        let at = |i: usize| if i == 0 { 0.0 } else { w[i - 1] };
        let mut g: Vec<f64> = (1..n).map(|i| (at(i + 1) - at(i - 1)) / (2.0 * dx)).collect();
        g.push((3.0 * at(n) - 4.0 * at(n - 1) + at(n - 2)) / (2.0 * dx));
        g
    }

    /// `Gᵀ u`.
    fn slope_transpose(&self, u: &[f64]) -> Vec<f64> {
        let n = self.grid.n();
        let dx = self.grid.dx();
        let mut out = vec![0.0; n];
        let mut add = |node: usize, value: f64| {
            if node > 0 {
                out[node - 1] += value;
            }
        };
        for i in 1..n {
            let ui = u[i - 1] / (2.0 * dx);
            add(i + 1, ui);
            add(i - 1, -ui);
        }
        let un = u[n - 1] / (2.0 * dx);
        add(n, 3.0 * un);
        add(n - 1, -4.0 * un);
        add(n - 2, un);
        out
    }

    /// `(−J_h) g = g − ςC̃ P_h g`.
    fn neg_j(&self, g: &[f64]) -> Vec<f64> {
        let c = self.coeffs.kernel_parameter();
        let p = self.shear.solve_reduced(g);
        g.iter().zip(&p).map(|(g, p)| g - c * p).collect()
    }

    /// `P_h (e_N / W_N)`: the discrete image of a unit point source at `x = L`.
    fn tip_source_response(&self) -> Vec<f64> {
        let n = self.grid.n();
        let mut e = vec![0.0; n];
        e[n - 1] = 1.0 / self.weights[n - 1];
        self.shear.solve_reduced(&e)
    }

    /// Coefficient of `V` in `φ²` produced by the tip source: `−B₂/(βB₄)`.
    fn shear_voltage_coefficient(&self) -> f64 {
        -self.coeffs.b2 / (self.coeffs.beta * self.coeffs.b4)
    }

    /// Solves `ςC̃φ² − D²_hφ² + B̃ D²_h(G w) = −(B₂/(βB₄)) V δ_L` with
    /// `φ²_0 = 0` and the mirror condition at `x_N`. Input and output on
    /// `x_0..=x_N`.
    pub fn solve_phi_constraint(&self, w: &[f64], voltage: f64) -> Result<Vec<f64>> {
        let n = self.grid.n();
        if w.len() != n + 1 {
            return Err(Error::Validation(format!("expected {} nodes, got {}", n + 1, w.len())));
        }
        let phi = self.phi_constraint_reduced(&w[1..], voltage);
        Ok(with_clamped_node(phi))
    }

    fn phi_constraint_reduced(&self, w: &[f64], voltage: f64) -> Vec<f64> {
        let b = self.coeffs.b_tilde;
        let mut phi: Vec<f64> = self.neg_j(&self.slope(w)).into_iter().map(|v| b * v).collect();
        if voltage != 0.0 {
            let k = self.shear_voltage_coefficient() * voltage;
            for (p, s) in phi.iter_mut().zip(self.tip_source_response()) {
                *p += k * s;
            }
        }
        phi
    }

    /// The tip trace functional `Y(v) = ςh₂h₃B̃B₂ (P_h G v)_N + B₃ (G v)_N`.
    pub fn tip_trace(&self, v: &[f64]) -> f64 {
        let n = self.grid.n();
        let g = self.slope(v);
        let pg = self.shear.solve_reduced(&g);
        self.coeffs.trace_weight() * pg[n - 1] + self.coeffs.b3 * g[n - 1]
    }

    /// Elastic restoring force `−∂E/∂w` (reduced vectors), without voltage.
    fn bending_force(&self, w: &[f64]) -> Vec<f64> {
        let a = self.coeffs.a_tilde;
        let weighted: Vec<f64> =
            self.curvature(w).iter().zip(&self.curvature_weights).map(|(k, o)| a * k * o).collect();
        self.curvature_transpose(&weighted).into_iter().map(|v| -v).collect()
    }

    /// `−K_c Gᵀ W φ²`.
    fn shear_force(&self, phi: &[f64]) -> Vec<f64> {
        let kc = self.coeffs.shear_coupling();
        let weighted: Vec<f64> = phi.iter().zip(&self.weights).map(|(p, w)| kc * p * w).collect();
        self.slope_transpose(&weighted).into_iter().map(|v| -v).collect()
    }

    /// `−(κ/2) L² L_h v`.
    fn viscous_term(&self, v: &[f64]) -> Vec<f64> {
        let scale = -0.5 * self.kappa * self.grid.length().powi(2);
        neg_laplacian(&self.grid, v).into_iter().map(|x| scale * x).collect()
    }

    /// Packs a state into the reduced vector layout.
    pub fn pack(&self, state: &BeamState) -> Vec<f64> {
        let mut z = Vec::with_capacity(self.state_len());
        z.extend_from_slice(&state.w[1..]);
        z.extend_from_slice(&state.wdot[1..]);
        if self.mode == Mode::ViscousFiltered {
            z.extend_from_slice(&state.phi2[1..]);
        }
        z
    }

    /// Inverse of [`pack`](Self::pack). In constraint mode `φ²` is recovered
    /// from the constraint with the given voltage.
    pub fn unpack(&self, z: &[f64], time: f64, voltage: f64) -> BeamState {
        let n = self.grid.n();
        assert_eq!(z.len(), self.state_len());
        let w = &z[..n];
        let phi = match self.mode {
            Mode::ViscousFiltered => z[2 * n..].to_vec(),
            Mode::EllipticConstraint => self.phi_constraint_reduced(w, voltage),
        };
        BeamState {
            w: with_clamped_node(w.to_vec()),
            wdot: with_clamped_node(z[n..2 * n].to_vec()),
            phi2: with_clamped_node(phi),
            time,
        }
    }

    /// Right-hand side for a given applied voltage `V` (volts), on packed
    /// vectors. Derivatives are with respect to `t*`.
    pub fn rhs_packed(&self, z: &[f64], voltage: f64) -> Vec<f64> {
        let n = self.grid.n();
        assert_eq!(z.len(), self.state_len());
        let w = &z[..n];
        let v = &z[n..2 * n];
        let c = &self.coeffs;
        let scale = self.a1 * self.a1 / c.m;

        let mut force = self.bending_force(w);
        let mut dphi = Vec::new();
        match self.mode {
            Mode::EllipticConstraint => {
                let phi = self.phi_constraint_reduced(w, voltage);
                for (f, s) in force.iter_mut().zip(self.shear_force(&phi)) {
                    *f += s;
                }
            }
            Mode::ViscousFiltered => {
                let phi = &z[2 * n..];
                for (f, s) in force.iter_mut().zip(self.shear_force(phi)) {
                    *f += self.coupling_sign * s;
                }
                // L_h φ̇ = −(ςC̃ + L_h)φ + B̃ L_h G w − (B₂/(βB₄)) V e_N/W_N
                let lphi = neg_laplacian(&self.grid, phi);
                let lgw = neg_laplacian(&self.grid, &self.slope(w));
                let kp = c.kernel_parameter();
                let mut rhs: Vec<f64> = (0..n).map(|k| -(kp * phi[k] + lphi[k]) + c.b_tilde * lgw[k]).collect();
                rhs[n - 1] += self.shear_voltage_coefficient() * voltage / self.weights[n - 1];
                dphi = self.shear_mass.solve_reduced(&rhs);
            }
        }
        if voltage != 0.0 {
            // direct moment from the piezoelectric layer: (γB₃/B₄) V g_N
            let mut tip = vec![0.0; n];
            tip[n - 1] = c.gamma * c.b3 / c.b4 * voltage;
            for (f, t) in force.iter_mut().zip(self.slope_transpose(&tip)) {
                *f += t;
            }
        }

        let visc = self.viscous_term(v);
        let mut out = Vec::with_capacity(self.state_len());
        out.extend_from_slice(v);
        out.extend((0..n).map(|k| scale * force[k] / self.weights[k] + visc[k]));
        out.extend(dphi);
        out
    }

    /// [`rhs_packed`](Self::rhs_packed) on a [`BeamState`].
    pub fn rhs(&self, state: &BeamState, voltage: f64) -> Result<StateDerivative> {
        state.check_invariants()?;
        if state.n() != self.grid.n() {
            return Err(Error::Validation("state does not match the grid".into()));
        }
        let n = self.grid.n();
        let dz = self.rhs_packed(&self.pack(state), voltage);
        let dphi = match self.mode {
            Mode::ViscousFiltered => dz[2 * n..].to_vec(),
            Mode::EllipticConstraint => self.phi_constraint_reduced(&state.wdot[1..], 0.0),
        };
        Ok(StateDerivative {
            w: with_clamped_node(dz[..n].to_vec()),
            wdot: with_clamped_node(dz[n..2 * n].to_vec()),
            phi2: with_clamped_node(dphi),
        })
    }

    // ----- dense assembly -----

    /// Dense operators built independently of the matrix-free path.
    pub fn dense(&self) -> DenseOperators {
        DenseOperators::build(self)
    }
}

fn with_clamped_node(mut v: Vec<f64>) -> Vec<f64> {
    v.insert(0, 0.0);
    v
}

/// Dense matrices of the scheme (reduced indexing, `N × N` blocks).
#[derive(Debug, Clone)]
pub struct DenseOperators {
    /// Curvature `D2` (rows `x_0..x_{N−1}`).
    pub curvature: DMatrix<f64>,
    /// Slope `G` (rows `x_1..=x_N`).
    pub slope: DMatrix<f64>,
    /// `P_h`.
    pub shear_p: DMatrix<f64>,
    /// `L_h = −D²_h`.
    pub neg_laplacian: DMatrix<f64>,
    /// `Ã D2ᵀΩD2`.
    pub bending_stiffness: DMatrix<f64>,
    /// `βγςh₂h₃B̃² Gᵀ W (−J_h) G`.
    pub shear_stiffness: DMatrix<f64>,
    /// Trace functional row `y` with `Y(v) = yᵀv`.
    pub trace: DVector<f64>,
    /// Lumped mass weights `W`.
    pub weights: DVector<f64>,
    /// Open-loop generator `A₀` (packed layout) and voltage input `b`, so that
    /// `ż = A₀ z + b V`.
    pub generator: DMatrix<f64>,
    pub input: DVector<f64>,
    /// Energy Gram matrix on the packed layout (`E = ½ zᵀQz`); in viscous
    /// mode the `φ²` block is zero.
    pub gram: DMatrix<f64>,
}

impl DenseOperators {
    fn build(sys: &SemiDiscreteSystem) -> Self {
        let grid = sys.grid;
        let n = grid.n();
        let dx = grid.dx();
        let c = &sys.coeffs;

        let mut d2 = DMatrix::zeros(n, n);
        for i in 0..n {
            // node i uses i-1, i, i+1 ; column j ↔ node j+1
            let mut put = |node: isize, value: f64| match node {
                -1 => d2[(i, 0)] += value,
                0 => {}
                k => d2[(i, k as usize - 1)] += value,
            };
            let i_node = i as isize;
            put(i_node - 1, 1.0 / (dx * dx));
            put(i_node, -2.0 / (dx * dx));
            put(i_node + 1, 1.0 / (dx * dx));
        }

        let mut g = DMatrix::zeros(n, n);
        for row in 0..n - 1 {
            let node = row + 1;
            g[(row, node)] += 0.5 / dx; // w_{node+1}
            if node >= 2 {
                g[(row, node - 2)] -= 0.5 / dx; // w_{node-1}
            }
        }
        g[(n - 1, n - 1)] += 1.5 / dx;
        g[(n - 1, n - 2)] -= 2.0 / dx;
        g[(n - 1, n - 3)] += 0.5 / dx;

        let p = sys.shear.p_matrix();
        let lh = neg_laplacian_matrix(&grid);
        let w = DVector::from_vec(sys.weights.clone());
        let omega = DMatrix::from_diagonal(&DVector::from_vec(sys.curvature_weights.clone()));
        let wd = DMatrix::from_diagonal(&w);

        let bending = d2.transpose() * &omega * &d2 * c.a_tilde;
        let kp = c.kernel_parameter();
        let neg_j = DMatrix::identity(n, n) - &p * kp;
        let shear = g.transpose() * &wd * &neg_j * &g * (c.shear_coupling() * c.b_tilde);

        let mut e_tip = DVector::zeros(n);
        e_tip[n - 1] = 1.0;
        let tip_slope = g.row(n - 1).transpose();
        let trace = (g.transpose() * p.transpose() * &e_tip) * c.trace_weight() + &tip_slope * c.b3;

        let scale = sys.a1 * sys.a1 / c.m;
        let winv = DMatrix::from_diagonal(&w.map(|x| 1.0 / x));
        let visc = &lh * (-0.5 * sys.kappa * grid.length().powi(2));
        let blocks = sys.mode.state_blocks();
        let dim = blocks * n;
        let mut a0 = DMatrix::zeros(dim, dim);
        let mut input = DVector::zeros(dim);
        a0.view_mut((0, n), (n, n)).copy_from(&DMatrix::identity(n, n));
        a0.view_mut((n, n), (n, n)).copy_from(&visc);

        match sys.mode {
            Mode::EllipticConstraint => {
                let k = &bending + &shear;
                a0.view_mut((n, 0), (n, n)).copy_from(&(&winv * k * (-scale)));
                let f = &winv * &trace * (scale * c.gamma / c.b4);
                input.rows_mut(n, n).copy_from(&f);
            }
            Mode::ViscousFiltered => {
                a0.view_mut((n, 0), (n, n)).copy_from(&(&winv * &bending * (-scale)));
                let coupling = &winv * g.transpose() * &wd * (-scale * c.shear_coupling() * sys.coupling_sign);
                a0.view_mut((n, 2 * n), (n, n)).copy_from(&coupling);
                let f = &winv * &tip_slope * (scale * c.gamma * c.b3 / c.b4);
                input.rows_mut(n, n).copy_from(&f);

                let lh_inv = lh.clone().try_inverse().expect("L_h is invertible");
                // φ̇ = −φ − ςC̃ L_h⁻¹ φ + B̃ G w − (B₂/(βB₄)) V L_h⁻¹ e_N / W_N
                let phi_phi = -DMatrix::identity(n, n) - &lh_inv * kp;
                a0.view_mut((2 * n, 2 * n), (n, n)).copy_from(&phi_phi);
                a0.view_mut((2 * n, 0), (n, n)).copy_from(&(&g * c.b_tilde));
                let src = lh_inv.column(n - 1) * (sys.shear_voltage_coefficient() / sys.weights[n - 1]);
                input.rows_mut(2 * n, n).copy_from(&src);
            }
        }

        let mut gram = DMatrix::zeros(dim, dim);
        let kin = &wd * (c.m / (sys.a1 * sys.a1));
        let pot = match sys.mode {
            Mode::EllipticConstraint => &bending + &shear,
            // The filtered mode has no quadratic energy in φ²; the
            // diagnostic energy is that of the constraint.
            Mode::ViscousFiltered => &bending + &shear,
        };
        gram.view_mut((0, 0), (n, n)).copy_from(&pot);
        gram.view_mut((n, n), (n, n)).copy_from(&kin);

        DenseOperators {
            curvature: d2,
            slope: g,
            shear_p: p,
            neg_laplacian: lh,
            bending_stiffness: bending,
            shear_stiffness: shear,
            trace,
            weights: w,
            generator: a0,
            input,
            gram,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{derive_coefficients, CoefficientOverrides};

    /// Moderate coefficients where every term is visible at small N.
    pub(crate) fn moderate() -> BeamCoefficients {
        derive_coefficients(
            None,
            &CoefficientOverrides {
                m: Some(2.0),
                a_tilde: Some(3.0),
                b_tilde: Some(1.5),
                c_tilde: Some(2.0),
                sigma: Some(4.0),
                b2: Some(0.7),
                b3: Some(0.4),
                b4: Some(1.3),
                beta: Some(2.0),
                gamma: Some(0.5),
                h2: Some(0.3),
                h3: Some(0.6),
                length: Some(1.0),
                ..Default::default()
            },
        )
        .unwrap()
    }

    fn system(n: usize, mode: Mode, kappa: Option<f64>) -> SemiDiscreteSystem {
        let grid = Grid::new(n, 1.0).unwrap();
        SemiDiscreteSystem::assemble(grid, moderate(), SchemeOptions { mode, kappa, ..Default::default() }).unwrap()
    }

    fn pseudo_random(len: usize, seed: u64) -> Vec<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn matrix_free_and_dense_agree() {
        for mode in [Mode::EllipticConstraint, Mode::ViscousFiltered] {
            let sys = system(24, mode, None);
            let dense = sys.dense();
            let z = pseudo_random(sys.state_len(), 3);
            for voltage in [0.0, 0.37] {
                let mf = sys.rhs_packed(&z, voltage);
                let dz = &dense.generator * DVector::from_vec(z.clone()) + &dense.input * voltage;
                let scale = dz.amax();
                for (a, b) in mf.iter().zip(dz.iter()) {
                    assert!((a - b).abs() <= 1e-11 * scale, "{mode:?}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn zero_state_is_an_equilibrium() {
        for mode in [Mode::EllipticConstraint, Mode::ViscousFiltered] {
            let sys = system(16, mode, None);
            let d = sys.rhs(&BeamState::zeros(16), 0.0).unwrap();
            assert!(d.w.iter().chain(&d.wdot).chain(&d.phi2).all(|&x| x == 0.0));
        }
    }

    #[test]
    fn interior_rows_match_the_stencil_constants() {
        let sys = system(30, Mode::ViscousFiltered, Some(0.0));
        let c = *sys.coeffs();
        let dense = sys.dense();
        let n = 30;
        let dx = sys.grid().dx();
        let a1sq_over_m = sys.a1().powi(2) / c.m;
        let kc = c.shear_coupling();
        let d4 = [1.0, -4.0, 6.0, -4.0, 1.0];
        for row in 3..n - 4 {
            let r = n + row; // velocity row of node row+1
            for (k, &wgt) in d4.iter().enumerate() {
                let col = row + k - 2;
                let expected = -a1sq_over_m * c.a_tilde * wgt / dx.powi(4);
                let got = dense.generator[(r, col)];
                assert!((got - expected).abs() < 1e-9 * expected.abs().max(1.0), "w row {row}");
            }
            // + (K_c/m) D1 φ² moved to the right-hand side
            let up = dense.generator[(r, 2 * n + row + 1)];
            let down = dense.generator[(r, 2 * n + row - 1)];
            assert!((up - a1sq_over_m * kc / (2.0 * dx)).abs() < 1e-9 * up.abs());
            assert!((down + a1sq_over_m * kc / (2.0 * dx)).abs() < 1e-9 * down.abs());
        }
        // shear equation: L_h (B̃ G) is −B̃·D3 on interior rows
        let lg = &dense.neg_laplacian * &dense.slope * c.b_tilde;
        let d3 = [-0.5, 1.0, 0.0, -1.0, 0.5]; // offsets -2..2
        for row in 3..n - 4 {
            for (k, &wgt) in d3.iter().enumerate() {
                let col = row + k - 2;
                let expected = -c.b_tilde * wgt / dx.powi(3);
                assert!((lg[(row, col)] - expected).abs() < 1e-8 * expected.abs().max(1.0));
            }
        }
    }

    #[test]
    fn constraint_is_the_quasi_static_limit_of_the_filter() {
        let visc = system(20, Mode::ViscousFiltered, None);
        let cons = system(20, Mode::EllipticConstraint, None);
        let w = with_clamped_node(pseudo_random(20, 11));
        let voltage = 0.8;
        let phi = cons.solve_phi_constraint(&w, voltage).unwrap();
        let state = BeamState { w: w.clone(), wdot: vec![0.0; 21], phi2: phi.clone(), time: 0.0 };
        let dv = visc.rhs(&state, voltage).unwrap();
        assert!(dv.phi2.iter().all(|x| x.abs() < 1e-9), "φ̇ should vanish on the constraint");
        let dc = cons.rhs(&state, voltage).unwrap();
        for (a, b) in dv.wdot.iter().zip(&dc.wdot) {
            assert!((a - b).abs() < 1e-9 * b.abs().max(1.0));
        }
    }

    #[test]
    fn rhs_is_linear() {
        let sys = system(18, Mode::ViscousFiltered, None);
        let z1 = pseudo_random(sys.state_len(), 1);
        let z2 = pseudo_random(sys.state_len(), 2);
        let (a, b, v1, v2) = (1.7, -0.4, 0.3, -1.1);
        let combo: Vec<f64> = z1.iter().zip(&z2).map(|(x, y)| a * x + b * y).collect();
        let lhs = sys.rhs_packed(&combo, a * v1 + b * v2);
        let r1 = sys.rhs_packed(&z1, v1);
        let r2 = sys.rhs_packed(&z2, v2);
        for k in 0..lhs.len() {
            let rhs = a * r1[k] + b * r2[k];
            assert!((lhs[k] - rhs).abs() < 1e-9 * rhs.abs().max(1.0));
        }
    }

    #[test]
    fn decoupled_beam_is_pure_euler_bernoulli() {
        let mut c = moderate();
        c.b_tilde = 1e-300; // coupling switched off
        let grid = Grid::new(20, 1.0).unwrap();
        let sys = SemiDiscreteSystem::assemble(
            grid,
            c,
            SchemeOptions { mode: Mode::EllipticConstraint, kappa: Some(0.0), ..Default::default() },
        )
        .unwrap();
        let dense = sys.dense();
        assert!(dense.shear_stiffness.amax() < 1e-200);
        let w = pseudo_random(20, 5);
        let phi = sys.solve_phi_constraint(&with_clamped_node(w), 0.0).unwrap();
        assert!(phi.iter().all(|p| p.abs() < 1e-250));
    }

    #[test]
    fn stiffness_is_symmetric_positive_definite() {
        let sys = system(20, Mode::EllipticConstraint, None);
        let d = sys.dense();
        let k = &d.bending_stiffness + &d.shear_stiffness;
        assert!((&k - k.transpose()).amax() < 1e-9 * k.amax());
        assert!(k.clone().cholesky().is_some());
        // the shear part alone is positive semidefinite
        let eig = nalgebra::SymmetricEigen::new(d.shear_stiffness.clone());
        assert!(eig.eigenvalues.min() > -1e-9 * d.shear_stiffness.amax());
    }

    #[test]
    fn tip_moment_bends_the_beam_into_a_parabola() {
        // Static response to the direct moment only: Ã w_xx = γB₃V/B₄ on
        // the whole beam (coupling and the smoothed trace switched off).
        let mut c = moderate();
        c.b_tilde = 1e-300;
        c.b2 = 0.0;
        let voltage = 2.0;
        let curvature = c.gamma * c.b3 * voltage / (c.b4 * c.a_tilde);
        let mut errs = Vec::new();
        for n in [20, 40, 80] {
            let grid = Grid::new(n, 1.0).unwrap();
            let sys = SemiDiscreteSystem::assemble(grid, c, SchemeOptions::default()).unwrap();
            let d = sys.dense();
            let k = &d.bending_stiffness + &d.shear_stiffness;
            let f = &d.trace * (c.gamma / c.b4 * voltage);
            let w = k.lu().solve(&f).unwrap();
            let err = grid.nodes()[1..]
                .iter()
                .enumerate()
                .map(|(i, x)| (w[i] - 0.5 * curvature * x * x).abs())
                .fold(0.0, f64::max);
            errs.push(err / (0.5 * curvature));
        }
        assert!(errs[2] < 2e-3, "{errs:?}");
        assert!(errs[1] / errs[2] > 1.8, "{errs:?}");
    }

    #[test]
    fn cubic_manufactured_shear() {
        // w = a(x³ − 3Lx²): w(0) = w_x(0) = w_xx(L) = 0, w_xxx = 6a.
        // φ² solves ςC̃φ − φ'' = −6aB̃ with φ(0) = 0, φ'(L) = 0.
        let c = moderate();
        let kp = c.kernel_parameter();
        let r = kp.sqrt();
        let a = 0.3;
        let mut errs = Vec::new();
        for n in [40, 80, 160] {
            let grid = Grid::new(n, 1.0).unwrap();
            let sys = SemiDiscreteSystem::assemble(grid, c, SchemeOptions::default()).unwrap();
            let w: Vec<f64> = grid.nodes().iter().map(|x| a * (x.powi(3) - 3.0 * x * x)).collect();
            let phi = sys.solve_phi_constraint(&w, 0.0).unwrap();
            let err = grid
                .nodes()
                .iter()
                .zip(&phi)
                .map(|(x, p)| {
                    let exact = -6.0 * a * c.b_tilde / kp * (1.0 - (r * (x - 1.0)).cosh() / r.cosh());
                    (p - exact).abs()
                })
                .fold(0.0, f64::max);
            errs.push(err);
        }
        let order = (errs[1] / errs[2]).log2();
        assert!(order > 1.7, "errors {errs:?}");
    }

    #[test]
    fn voltage_enters_shear_linearly_through_the_tip() {
        let sys = system(30, Mode::EllipticConstraint, None);
        let zero = vec![0.0; 31];
        let one = sys.solve_phi_constraint(&zero, 1.0).unwrap();
        let three = sys.solve_phi_constraint(&zero, 3.0).unwrap();
        assert!(one.iter().any(|x| x.abs() > 1e-6));
        for (a, b) in one.iter().zip(&three) {
            assert!((3.0 * a - b).abs() < 1e-12 * b.abs().max(1e-12));
        }
        assert!(sys.solve_phi_constraint(&zero, 0.0).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn softening_flips_only_the_shear_force() {
        let grid = Grid::new(20, 1.0).unwrap();
        let opts = |coupling| SchemeOptions { mode: Mode::ViscousFiltered, kappa: None, coupling };
        let a = SemiDiscreteSystem::assemble(grid, moderate(), opts(Coupling::Stiffening)).unwrap().dense();
        let b = SemiDiscreteSystem::assemble(grid, moderate(), opts(Coupling::Softening)).unwrap().dense();
        let n = 20;
        assert_eq!(a.generator.view((n, 2 * n), (n, n)), -b.generator.view((n, 2 * n), (n, n)));
        assert_eq!(a.generator.view((0, 0), (3 * n, 2 * n)), b.generator.view((0, 0), (3 * n, 2 * n)));
        let constraint = SchemeOptions { mode: Mode::EllipticConstraint, ..opts(Coupling::Softening) };
        assert!(SemiDiscreteSystem::assemble(grid, moderate(), constraint).is_err());
    }

    #[test]
    fn state_invariants_are_checked() {
        let sys = system(10, Mode::EllipticConstraint, None);
        let mut s = BeamState::zeros(10);
        s.w[0] = 1e-3;
        assert!(matches!(sys.rhs(&s, 0.0), Err(Error::Validation(_))));
    }
}
