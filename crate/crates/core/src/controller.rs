//! Boundary voltage laws.
//!
//! Every law here is linear in the state, so the applied voltage can always
//! be written `V = fᵀz` for a fixed row `f` on the packed state. When a law
//! reads `φ̇²` in the filtered mode, `φ̇²` itself depends on `V`; the loop is
//! closed by solving the scalar equation `V = a + bV`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::config::BeamCoefficients;
use crate::error::{Error, Result};
use crate::model::{BeamState, DenseOperators, Mode, SemiDiscreteSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Law {
    /// `V = −k₁ Y(ẇ)` with the tip trace `Y` of the dual control operator.
    #[default]
    AnalyticFeed,
    /// The finite-difference voltage formula, applied as `k₁·V`.
    #[serde(rename = "discrete_sec4", alias = "sec4")]
    Discrete,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TraceMethod {
    /// `ςh₂h₃B̃B₂ (P_h ẇ_x)(L) + B₃ ẇ_x(L)`.
    #[default]
    PSigmaDirect,
    /// `(h₂h₃B̃B₂/C̃ + B₃) ẇ_x(L) − (h₂h₃B₂/C̃) φ̇²(L)`.
    PhiSubstitution,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    pub k1: f64,
    pub law: Law,
    pub trace_method: TraceMethod,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig { k1: 1e8, law: Law::AnalyticFeed, trace_method: TraceMethod::PSigmaDirect }
    }
}

impl ControllerConfig {
    pub fn off() -> Self {
        ControllerConfig { k1: 0.0, law: Law::Off, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.law != Law::Off && !(self.k1 > 0.0 && self.k1.is_finite()) {
            return Err(Error::Validation(format!("k1 > 0 required (got {})", self.k1)));
        }
        Ok(())
    }
}

/// The substituted analytic law evaluated on tip traces: `ẇ_x(L)` and
/// `φ̇²(L)`, both per unit physical time.
pub fn analytic_from_traces(coeffs: &BeamCoefficients, k1: f64, slope_rate: f64, phi_rate: f64) -> f64 {
    let q = coeffs.h2 * coeffs.h3 * coeffs.b2 / coeffs.c_tilde;
    -k1 * ((q * coeffs.b_tilde + coeffs.b3) * slope_rate - q * phi_rate)
}

/// The finite-difference voltage formula on tip traces, before the gain.
pub fn discrete_from_traces(coeffs: &BeamCoefficients, slope_rate: f64, phi_rate: f64) -> f64 {
    let kp = coeffs.kernel_parameter();
    (kp + coeffs.b_tilde) / kp * slope_rate - phi_rate / (kp * coeffs.b_tilde)
}

/// `(3ẇ_N − 4ẇ_{N−1} + ẇ_{N−2}) / (2dx)` on a full nodal vector.
fn tip_slope(v_full: &[f64], dx: f64) -> f64 {
    let n = v_full.len() - 1;
    (3.0 * v_full[n] - 4.0 * v_full[n - 1] + v_full[n - 2]) / (2.0 * dx)
}

/// Packed-state linear functionals used by the laws.
struct Functionals {
    /// `V` as `a·z + b·V` (the `b` part comes from `φ̇²` in filtered mode).
    a: DVector<f64>,
    b: f64,
}

fn functionals(sys: &SemiDiscreteSystem, dense: &DenseOperators, cfg: &ControllerConfig) -> Functionals {
    let n = sys.grid().n();
    let dim = sys.state_len();
    let c = sys.coeffs();
    let inv_a1 = 1.0 / sys.a1();
    let mut a = DVector::zeros(dim);
    if cfg.law == Law::Off {
        return Functionals { a, b: 0.0 };
    }

    let slope_row = dense.slope.row(n - 1).transpose();
    // φ̇²_N = pᵀz + q·V
    let (phi_row, phi_v) = match sys.mode() {
        Mode::EllipticConstraint => {
            let neg_j = nalgebra::DMatrix::identity(n, n) - &dense.shear_p * c.kernel_parameter();
            let row = (&neg_j * &dense.slope * c.b_tilde).row(n - 1).transpose();
            let mut p = DVector::zeros(dim);
            p.rows_mut(n, n).copy_from(&row);
            (p, 0.0)
        }
        Mode::ViscousFiltered => {
            let p = dense.generator.row(2 * n + n - 1).transpose();
            (p, dense.input[2 * n + n - 1])
        }
    };

    let (ws, wp) = match (cfg.law, cfg.trace_method) {
        (Law::AnalyticFeed, TraceMethod::PSigmaDirect) => {
            a.rows_mut(n, n).copy_from(&(&dense.trace * (-cfg.k1 * inv_a1)));
            return Functionals { a, b: 0.0 };
        }
        (Law::AnalyticFeed, TraceMethod::PhiSubstitution) => {
            let q = c.h2 * c.h3 * c.b2 / c.c_tilde;
            (-cfg.k1 * (q * c.b_tilde + c.b3), cfg.k1 * q)
        }
        (Law::Discrete, _) => {
            let kp = c.kernel_parameter();
            (cfg.k1 * (kp + c.b_tilde) / kp, -cfg.k1 / (kp * c.b_tilde))
        }
        (Law::Off, _) => unreachable!(),
    };
    a.rows_mut(n, n).axpy(ws * inv_a1, &slope_row, 0.0);
    a.axpy(wp * inv_a1, &phi_row, 1.0);
    Functionals { a, b: wp * inv_a1 * phi_v }
}

/// Row `f` with `V = fᵀz` on the packed state.
pub fn feedback_row(sys: &SemiDiscreteSystem, dense: &DenseOperators, cfg: &ControllerConfig) -> Result<DVector<f64>> {
    cfg.validate()?;
    let f = functionals(sys, dense, cfg);
    let denom = 1.0 - f.b;
    if denom.abs() < 1e-12 {
        return Err(Error::SolverSingular("voltage loop 1 − b vanishes".into()));
    }
    Ok(f.a / denom)
}

/// Voltage applied by `cfg` at the packed state `z`, matrix-free.
pub fn applied_voltage(sys: &SemiDiscreteSystem, z: &[f64], cfg: &ControllerConfig) -> f64 {
    if cfg.law == Law::Off {
        return 0.0;
    }
    let n = sys.grid().n();
    let c = sys.coeffs();
    let inv_a1 = 1.0 / sys.a1();
    let v = &z[n..2 * n];
    let dx = sys.grid().dx();
    let mut v_full = Vec::with_capacity(n + 1);
    v_full.push(0.0);
    v_full.extend_from_slice(v);

    if cfg.law == Law::AnalyticFeed && cfg.trace_method == TraceMethod::PSigmaDirect {
        return -cfg.k1 * sys.tip_trace(v) * inv_a1;
    }
    let slope = tip_slope(&v_full, dx) * inv_a1;
    // φ̇²_N as an affine function of V
    let (phi0, phi1) = match sys.mode() {
        Mode::EllipticConstraint => {
            let state_v: Vec<f64> = v_full.clone();
            let phi = sys.solve_phi_constraint(&state_v, 0.0).expect("grid sizes agree");
            (phi[n] * inv_a1, 0.0)
        }
        Mode::ViscousFiltered => {
            let r0 = sys.rhs_packed(z, 0.0)[3 * n - 1];
            let r1 = sys.rhs_packed(&vec![0.0; z.len()], 1.0)[3 * n - 1];
            (r0 * inv_a1, r1 * inv_a1)
        }
    };
    let law = |slope: f64, phi_rate: f64| match cfg.law {
        Law::AnalyticFeed => analytic_from_traces(c, cfg.k1, slope, phi_rate),
        Law::Discrete => cfg.k1 * discrete_from_traces(c, slope, phi_rate),
        Law::Off => 0.0,
    };
    // V = law(slope, φ0 + φ1 V) = a + bV
    let a = law(slope, phi0);
    let b = law(0.0, phi1);
    a / (1.0 - b)
}

/// `V` from a [`BeamState`] under the analytic law.
pub fn voltage_analytic(state: &BeamState, sys: &SemiDiscreteSystem, cfg: &ControllerConfig) -> Result<f64> {
    state.check_invariants()?;
    let cfg = ControllerConfig { law: Law::AnalyticFeed, ..*cfg };
    cfg.validate()?;
    Ok(applied_voltage(sys, &sys.pack(state), &cfg))
}

/// `V` from a [`BeamState`] under the finite-difference formula (gain
/// included).
pub fn voltage_discrete(state: &BeamState, sys: &SemiDiscreteSystem, cfg: &ControllerConfig) -> Result<f64> {
    state.check_invariants()?;
    let cfg = ControllerConfig { law: Law::Discrete, ..*cfg };
    cfg.validate()?;
    Ok(applied_voltage(sys, &sys.pack(state), &cfg))
}

/// Rate of work done by the voltage on the beam, `(γ/B₄) V Y(ẇ)`, per unit
/// physical time.
pub fn boundary_power(sys: &SemiDiscreteSystem, z: &[f64], voltage: f64) -> f64 {
    let n = sys.grid().n();
    let c = sys.coeffs();
    c.gamma / c.b4 * voltage * sys.tip_trace(&z[n..2 * n]) / sys.a1()
}
