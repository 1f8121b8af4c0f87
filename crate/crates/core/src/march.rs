//! Time stepping, energy and decay-rate estimation.
//!
//! All times here are nondimensional (`t*`); the trace also records the real
//! time `t = A₁ t*`.

use log::{debug, info};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::controller::{applied_voltage, feedback_row, ControllerConfig, Law};
use crate::error::{Error, Result};
use crate::model::{BeamState, Mode, SemiDiscreteSystem};
use crate::sigma::inner;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    ImplicitMidpoint,
    Rk4,
    /// Exact propagator `exp(dt·A)` of the linear closed loop.
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub scheme: Scheme,
    pub dt: f64,
    /// Horizon in `t*`. `None` means five units of real time, `5/A₁`.
    pub t_end: Option<f64>,
    /// Steps between stored snapshots; 0 disables snapshots.
    pub snapshot_stride: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig { scheme: Scheme::ImplicitMidpoint, dt: 1e-3, t_end: None, snapshot_stride: 0 }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Validation(format!("dt > 0 required (got {})", self.dt)));
        }
        if let Some(t) = self.t_end {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Validation(format!("t_end > 0 required (got {t})")));
            }
        }
        Ok(())
    }

    pub fn horizon(&self, a1: f64) -> f64 {
        self.t_end.unwrap_or(5.0 / a1)
    }
}

/// Shape of the initial bending and velocity profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialProfile {
    /// `10⁻⁴ Σ_{i=2..4} exp(−((x − iL/5)/(0.2L))²)`.
    #[default]
    Gaussian,
    /// The same sum with a positive exponent.
    GrowingExponent,
}

/// Initial state for a profile: `w = ẇ` equal to the profile (the velocity
/// taken per unit `t*`), corrected near `x = 0` to meet the clamp, and `φ²`
/// from the constraint.
pub fn initial_state(sys: &SemiDiscreteSystem, profile: InitialProfile) -> Result<BeamState> {
    let grid = sys.grid();
    let l = grid.length();
    let sign = match profile {
        InitialProfile::Gaussian => -1.0,
        InitialProfile::GrowingExponent => 1.0,
    };
    let f = |x: f64| -> f64 {
        1e-4 * (2..=4).map(|i| (sign * ((x - i as f64 * l / 5.0) / (0.2 * l)).powi(2)).exp()).sum::<f64>()
    };
    let df = |x: f64| -> f64 {
        1e-4 * (2..=4)
            .map(|i| {
                let s = (x - i as f64 * l / 5.0) / (0.2 * l);
                sign * 2.0 * s / (0.2 * l) * (sign * s * s).exp()
            })
            .sum::<f64>()
    };
    let profile_values = clamp_projection(&grid.nodes(), l, f, df);
    let mut state = BeamState {
        w: profile_values.clone(),
        wdot: profile_values,
        phi2: Vec::new(),
        time: 0.0,
    };
    state.phi2 = sys.solve_phi_constraint(&state.w, 0.0)?;
    Ok(state)
}

/// Subtracts `(f(0) + (f'(0) + 4f(0)/ℓ)x)(1 − x/ℓ)⁴` on `x < ℓ = 0.2L`. The
/// correction joins zero with three continuous derivatives at `ℓ`, and removes the value
/// and slope of `f` at `x = 0`.
fn clamp_projection(nodes: &[f64], l: f64, f: impl Fn(f64) -> f64, df: impl Fn(f64) -> f64) -> Vec<f64> {
    let ell = 0.2 * l;
    let (f0, d0) = (f(0.0), df(0.0));
    let mut out: Vec<f64> = nodes
        .iter()
        .map(|&x| {
            let corr = if x < ell { (f0 + (d0 + 4.0 * f0 / ell) * x) * (1.0 - x / ell).powi(4) } else { 0.0 };
            f(x) - corr
        })
        .collect();
    out[0] = 0.0;
    out
}

/// Discrete energy `½(m/A₁²)‖ẇ‖² + ½Ã‖w_xx‖² + ½K_cB̃⟨(−J)w_x, w_x⟩`,
/// trapezoid quadrature throughout (velocities are per unit `t*`).
pub fn energy(state: &BeamState, sys: &SemiDiscreteSystem) -> f64 {
    let grid = sys.grid();
    let c = sys.coeffs();
    let kinetic = 0.5 * c.m / sys.a1().powi(2) * inner(grid, &state.wdot, &state.wdot);
    kinetic + potential_energy(&state.w[1..], sys)
}

/// Potential part of [`energy`] on reduced (`x_1..=x_N`) displacements.
pub fn potential_energy(w: &[f64], sys: &SemiDiscreteSystem) -> f64 {
    let c = sys.coeffs();
    let dx = sys.grid().dx();
    let curv = sys.curvature(w);
    let bending: f64 = curv.iter().enumerate().map(|(i, k)| if i == 0 { 0.5 } else { 1.0 } * dx * k * k).sum();
    let g = sys.slope(w);
    let kp = c.kernel_parameter();
    let p = sys.shear_solver().solve_reduced(&g);
    let shear: f64 = g
        .iter()
        .zip(&p)
        .zip(sys.weights())
        .map(|((g, p), wt)| wt * g * (g - kp * p))
        .sum();
    0.5 * c.a_tilde * bending + 0.5 * c.shear_coupling() * c.b_tilde * shear
}

fn energy_packed(z: &[f64], sys: &SemiDiscreteSystem) -> f64 {
    let n = sys.grid().n();
    let v = &z[n..2 * n];
    let kinetic: f64 = v.iter().zip(sys.weights()).map(|(v, w)| w * v * v).sum();
    0.5 * sys.coeffs().m / sys.a1().powi(2) * kinetic + potential_energy(&z[..n], sys)
}

/// One row of the trace per accepted step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimulationTrace {
    pub a1: f64,
    pub times: Vec<f64>,
    pub energies: Vec<f64>,
    pub voltages: Vec<f64>,
    pub w_tip: Vec<f64>,
    pub phi2_tip: Vec<f64>,
    /// `(step index, state)`.
    pub snapshots: Vec<(usize, BeamState)>,
}

impl SimulationTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn real_times(&self) -> Vec<f64> {
        self.times.iter().map(|t| t * self.a1).collect()
    }

    pub fn normalized_energies(&self) -> Vec<f64> {
        let e0 = self.energies.first().copied().unwrap_or(1.0);
        self.energies.iter().map(|e| e / e0).collect()
    }

    /// Largest `E_{k+1}/E_k − 1`.
    pub fn max_relative_increase(&self) -> f64 {
        self.energies
            .windows(2)
            .map(|w| (w[1] - w[0]) / w[0].abs().max(f64::MIN_POSITIVE))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `max |E(t) − E(0)| / E(0)`.
    pub fn max_relative_drift(&self) -> f64 {
        let e0 = self.energies[0];
        self.energies.iter().map(|e| (e - e0).abs() / e0).fold(0.0, f64::max)
    }

    pub fn check(&self) -> Result<()> {
        let n = self.times.len();
        if [self.energies.len(), self.voltages.len(), self.w_tip.len(), self.phi2_tip.len()]
            .iter()
            .any(|&l| l != n)
        {
            return Err(Error::Validation("trace columns differ in length".into()));
        }
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Validation("trace times must increase strictly".into()));
        }
        Ok(())
    }
}

/// Advances a packed state. Built once per run.
pub struct Stepper<'a> {
    sys: &'a SemiDiscreteSystem,
    controller: ControllerConfig,
    dt: f64,
    kind: StepKind,
}

enum StepKind {
    /// `z⁺ = S z` with `S = (I − dt/2 A)⁻¹(I + dt/2 A)` or `S = exp(dt·A)`.
    Matrix(DMatrix<f64>),
    Rk4,
}

impl<'a> Stepper<'a> {
    pub fn new(sys: &'a SemiDiscreteSystem, controller: ControllerConfig, integrator: &IntegratorConfig) -> Result<Self> {
        integrator.validate()?;
        controller.validate()?;
        let dt = integrator.dt;
        let kind = match integrator.scheme {
            Scheme::ImplicitMidpoint => {
                let a = closed_loop_matrix(sys, &controller)?;
                let dim = a.nrows();
                let lhs = DMatrix::identity(dim, dim) - &a * (0.5 * dt);
                let rhs = DMatrix::identity(dim, dim) + &a * (0.5 * dt);
                let lu = lhs.lu();
                let s = lu
                    .solve(&rhs)
                    .ok_or_else(|| Error::NonConvergence("midpoint system matrix is singular".into()))?;
                if s.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonConvergence("midpoint step matrix is not finite".into()));
                }
                StepKind::Matrix(s)
            }
            Scheme::Exponential => {
                let s = (closed_loop_matrix(sys, &controller)? * dt).exp();
                if s.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonConvergence("matrix exponential is not finite".into()));
                }
                StepKind::Matrix(s)
            }
            Scheme::Rk4 => {
                let bound = rk4_step_bound(sys, &controller)?;
                let dx2 = sys.grid().dx().powi(2);
                info!("rk4 stability bound dt <= {bound:.3e} = {:.4} dx^2", bound / dx2);
                if dt > bound {
                    return Err(Error::Validation(format!(
                        "rk4 dt = {dt:e} exceeds the stability bound {bound:e} ({:.4} dx^2)",
                        bound / dx2
                    )));
                }
                StepKind::Rk4
            }
        };
        Ok(Stepper { sys, controller, dt, kind })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn voltage(&self, z: &[f64]) -> f64 {
        applied_voltage(self.sys, z, &self.controller)
    }

    pub fn step(&self, z: &[f64]) -> Vec<f64> {
        match &self.kind {
            StepKind::Matrix(s) => (s * DVector::from_column_slice(z)).as_slice().to_vec(),
            StepKind::Rk4 => {
                let f = |y: &[f64]| self.sys.rhs_packed(y, self.voltage(y));
                let axpy = |y: &[f64], k: &[f64], h: f64| -> Vec<f64> {
                    y.iter().zip(k).map(|(a, b)| a + h * b).collect()
                };
                let h = self.dt;
                let k1 = f(z);
                let k2 = f(&axpy(z, &k1, 0.5 * h));
                let k3 = f(&axpy(z, &k2, 0.5 * h));
                let k4 = f(&axpy(z, &k3, h));
                (0..z.len()).map(|i| z[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect()
            }
        }
    }
}

/// Dense closed-loop generator `A₀ + b fᵀ`.
pub fn closed_loop_matrix(sys: &SemiDiscreteSystem, controller: &ControllerConfig) -> Result<DMatrix<f64>> {
    let dense = sys.dense();
    let f = feedback_row(sys, &dense, controller)?;
    Ok(&dense.generator + &dense.input * f.transpose())
}

/// Largest RK4-stable step, from the spectral radius of the generator
/// (power iteration) and the RK4 stability interval on the imaginary axis,
/// with a 10% margin.
pub fn rk4_step_bound(sys: &SemiDiscreteSystem, controller: &ControllerConfig) -> Result<f64> {
    let a = closed_loop_matrix(sys, controller)?;
    let radius = crate::spectral::spectrum_of_matrix(&a)?
        .iter()
        .map(|l| l.norm())
        .fold(0.0, f64::max);
    Ok(0.9 * 2.0f64.sqrt() * 2.0 / radius.max(f64::MIN_POSITIVE))
}

/// Runs from `initial` to the horizon, recording every step.
///
/// A conservative run (constraint mode, `κ = 0`, no voltage) aborts with
/// [`Error::StabilityViolation`] when the energy drifts by more than `10⁻⁶`
/// relative. Every run aborts when the state stops being finite.
pub fn run(
    initial: &BeamState,
    sys: &SemiDiscreteSystem,
    controller: ControllerConfig,
    integrator: &IntegratorConfig,
) -> Result<SimulationTrace> {
    initial.check_invariants()?;
    let stepper = Stepper::new(sys, controller, integrator)?;
    let t_end = integrator.horizon(sys.a1());
    let steps = (t_end / integrator.dt).round() as usize;
    let conservative =
        sys.mode() == Mode::EllipticConstraint && sys.kappa() == 0.0 && controller.law == Law::Off;

    let mut trace = SimulationTrace { a1: sys.a1(), ..Default::default() };
    let mut z = sys.pack(initial);
    let e0 = energy_packed(&z, sys);
    let record = |trace: &mut SimulationTrace, z: &[f64], k: usize, time: f64| -> f64 {
        let v = stepper.voltage(z);
        let e = energy_packed(z, sys);
        let state = sys.unpack(z, time, v);
        trace.times.push(time);
        trace.energies.push(e);
        trace.voltages.push(v);
        trace.w_tip.push(*state.w.last().unwrap());
        trace.phi2_tip.push(*state.phi2.last().unwrap());
        if integrator.snapshot_stride > 0 && k.is_multiple_of(integrator.snapshot_stride) {
            trace.snapshots.push((k, state));
        }
        e
    };
    record(&mut trace, &z, 0, initial.time);
    for k in 1..=steps {
        z = stepper.step(&z);
        let time = initial.time + k as f64 * integrator.dt;
        let e = record(&mut trace, &z, k, time);
        if !e.is_finite() || z.iter().any(|x| !x.is_finite()) {
            return Err(Error::StabilityViolation(format!("non-finite state at step {k}, t* = {time}")));
        }
        if conservative && e0 > 0.0 && (e - e0) / e0 > 1e-6 {
            return Err(Error::StabilityViolation(format!(
                "energy grew by {:.3e} relative in a conservative run (step {k}, t* = {time})",
                (e - e0) / e0
            )));
        }
        if e < -1e-12 * e0.abs() {
            return Err(Error::NonPositiveEnergy { energy: e, time });
        }
    }
    debug!("run finished: {} steps, E(end)/E(0) = {:e}", steps, trace.energies[steps] / e0);
    Ok(trace)
}

/// Result of fitting `log E ≈ log M − 2ωt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub omega: f64,
    pub amplitude: f64,
    /// Root-mean-square residual of the fit in `log E`.
    pub residual: f64,
}

/// Least-squares decay rate over `window` (in `t*`).
pub fn fit_decay_rate(trace: &SimulationTrace, window: (f64, f64)) -> Result<DecayFit> {
    let (t0, t1) = window;
    let points: Vec<(f64, f64)> = trace
        .times
        .iter()
        .zip(&trace.energies)
        .filter(|(t, _)| **t >= t0 && **t <= t1)
        .map(|(t, e)| (*t, *e))
        .collect();
    if points.len() < 3 || !(t1 > t0) {
        return Err(Error::WindowTooShort(format!(
            "window [{t0}, {t1}] holds {} samples (need at least 3)",
            points.len()
        )));
    }
    if let Some(&(time, energy)) = points.iter().find(|(_, e)| !(*e > 0.0)) {
        return Err(Error::NonPositiveEnergy { energy, time });
    }
    let k = points.len() as f64;
    let mt = points.iter().map(|p| p.0).sum::<f64>() / k;
    let my = points.iter().map(|p| p.1.ln()).sum::<f64>() / k;
    let sxx: f64 = points.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mt) * (p.1.ln() - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mt;
    let residual =
        (points.iter().map(|p| (p.1.ln() - intercept - slope * p.0).powi(2)).sum::<f64>() / k).sqrt();
    Ok(DecayFit { omega: -0.5 * slope, amplitude: intercept.exp(), residual })
}
