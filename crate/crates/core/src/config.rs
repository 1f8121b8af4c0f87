//! Material constants, composite beam coefficients and the time scale.
//!
//! The dynamics only ever see [`BeamCoefficients`]: the lineal mass `m`, the
//! reduced stiffness `Ã`, the reduced coupling `B̃`, the reduced shear
//! coefficient `C̃`, the shear parameter `ς` and the piezoelectric constants
//! `B₂, B₃, B₄, β, γ`. They are normally given directly. For convenience
//! [`RawMaterialConstants::composite`] maps layer data (densities, moduli,
//! thicknesses) to the unreduced composite coefficients `m, A, B₁..B₄, C, ς`
//! using classical sandwich-beam formulas. That map is an approximation
//! chosen for this crate (see the guide, chapter "Coefficients"), so every
//! field can be overridden.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Layer data of the three-layer beam, SI units.
///
/// Layer 1 is the stiff elastic layer, layer 2 the compliant core, layer 3
/// the piezoelectric layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawMaterialConstants {
    /// Beam length (m).
    #[serde(rename = "L")]
    pub length: f64,
    pub h1: f64,
    pub h2: f64,
    pub h3: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub rho3: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    /// Piezoelectric constant (C/m²).
    pub gamma: f64,
    /// Impermittivity (m/F).
    pub beta: f64,
    /// Shear modulus of the core (N/m²).
    #[serde(rename = "G2")]
    pub g2: f64,
}

impl Default for RawMaterialConstants {
    fn default() -> Self {
        RawMaterialConstants {
            length: 1.0,
            h1: 0.1,
            h2: 0.01,
            h3: 0.1,
            rho1: 7600.0,
            rho2: 5000.0,
            rho3: 7600.0,
            alpha1: 1.4e7,
            alpha2: 1.0e5,
            alpha3: 1.4e7,
            gamma: 1.0e-3,
            beta: 1.0e6,
            g2: 100.0e9,
        }
    }
}

/// Unreduced composite coefficients produced by the layer map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompositeCoefficients {
    pub m: f64,
    pub a: f64,
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub b4: f64,
    pub c: f64,
    pub sigma: f64,
}

impl RawMaterialConstants {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("L", self.length),
            ("h1", self.h1),
            ("h2", self.h2),
            ("h3", self.h3),
            ("rho1", self.rho1),
            ("rho2", self.rho2),
            ("rho3", self.rho3),
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("alpha3", self.alpha3),
            ("gamma", self.gamma),
            ("beta", self.beta),
            ("G2", self.g2),
        ];
        for (name, value) in fields {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::NonPositiveCoefficient(format!("{name} <= 0 ({value})")));
            }
        }
        Ok(())
    }

    /// Distance between the mid-planes of the outer layers.
    pub fn lever_arm(&self) -> f64 {
        0.5 * (self.h1 + 2.0 * self.h2 + self.h3)
    }

    /// Default layer-to-composite map.
    ///
    /// * `m = ρ₁h₁ + ρ₂h₂ + ρ₃h₃`
    /// * `A = (α₁h₁³ + α₃h₃³)/12` (the core carries shear only)
    /// * `B₁ = H/h₂`, `C = 1`, `ς = (G₂/h₂)(1/(α₁h₁) + 1/(α₃h₃))`, which is the
    ///   shear equation obtained by eliminating the outer-layer stretching
    /// * `B₂ = B₃ = H·h₃`, `B₄ = h₃²` for the piezoelectric layer
    ///
    /// with `H = (h₁ + 2h₂ + h₃)/2`.
    pub fn composite(&self) -> Result<CompositeCoefficients> {
        self.validate()?;
        let lever = self.lever_arm();
        let piezo = lever * self.h3;
        Ok(CompositeCoefficients {
            m: self.rho1 * self.h1 + self.rho2 * self.h2 + self.rho3 * self.h3,
            a: (self.alpha1 * self.h1.powi(3) + self.alpha3 * self.h3.powi(3)) / 12.0,
            b1: lever / self.h2,
            b2: piezo,
            b3: piezo,
            b4: self.h3 * self.h3,
            c: 1.0,
            sigma: self.g2 / self.h2 * (1.0 / (self.alpha1 * self.h1) + 1.0 / (self.alpha3 * self.h3)),
        })
    }
}

/// Field-by-field overrides. Any field set here wins over the layer map.
///
/// `a_tilde`, `b_tilde`, `c_tilde` override the reduced coefficients directly;
/// `a`, `b1`, `c` override the unreduced ones before reduction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoefficientOverrides {
    pub m: Option<f64>,
    pub a: Option<f64>,
    pub b1: Option<f64>,
    pub c: Option<f64>,
    pub a_tilde: Option<f64>,
    pub b_tilde: Option<f64>,
    pub c_tilde: Option<f64>,
    pub sigma: Option<f64>,
    pub b2: Option<f64>,
    pub b3: Option<f64>,
    pub b4: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub h2: Option<f64>,
    pub h3: Option<f64>,
    #[serde(rename = "L")]
    pub length: Option<f64>,
}

impl From<&BeamCoefficients> for CoefficientOverrides {
    fn from(c: &BeamCoefficients) -> Self {
        CoefficientOverrides {
            m: Some(c.m),
            a_tilde: Some(c.a_tilde),
            b_tilde: Some(c.b_tilde),
            c_tilde: Some(c.c_tilde),
            sigma: Some(c.sigma),
            b2: Some(c.b2),
            b3: Some(c.b3),
            b4: Some(c.b4),
            beta: Some(c.beta),
            gamma: Some(c.gamma),
            h2: Some(c.h2),
            h3: Some(c.h3),
            length: Some(c.length),
            ..Default::default()
        }
    }
}

/// Coefficients of the reduced (electrostatic) bending/shear system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamCoefficients {
    pub m: f64,
    pub a_tilde: f64,
    pub b_tilde: f64,
    pub c_tilde: f64,
    pub sigma: f64,
    pub b2: f64,
    pub b3: f64,
    pub b4: f64,
    pub beta: f64,
    pub gamma: f64,
    pub h2: f64,
    pub h3: f64,
    #[serde(rename = "L")]
    pub length: f64,
}

/// Builds the reduced coefficients from layer data and/or direct overrides.
///
/// `Ã = A − γ²βB₃²/B₄`, `B̃ = B₁ − γB₂B₃/B₄`, `C̃ = C + γh₂h₃B₂²/B₄`.
pub fn derive_coefficients(
    raw: Option<&RawMaterialConstants>,
    overrides: &CoefficientOverrides,
) -> Result<BeamCoefficients> {
    let composite = raw.map(RawMaterialConstants::composite).transpose()?;
    let pick = |over: Option<f64>, from_raw: Option<f64>, name: &'static str| {
        over.or(from_raw).ok_or(Error::MissingCoefficient(name))
    };

    let m = pick(overrides.m, composite.map(|c| c.m), "m")?;
    let b2 = pick(overrides.b2, composite.map(|c| c.b2), "B2")?;
    let b3 = pick(overrides.b3, composite.map(|c| c.b3), "B3")?;
    let b4 = pick(overrides.b4, composite.map(|c| c.b4), "B4")?;
    let sigma = pick(overrides.sigma, composite.map(|c| c.sigma), "sigma")?;
    let beta = pick(overrides.beta, raw.map(|r| r.beta), "beta")?;
    let gamma = pick(overrides.gamma, raw.map(|r| r.gamma), "gamma")?;
    let h2 = pick(overrides.h2, raw.map(|r| r.h2), "h2")?;
    let h3 = pick(overrides.h3, raw.map(|r| r.h3), "h3")?;
    let length = pick(overrides.length, raw.map(|r| r.length), "L")?;

    if !(b4 > 0.0) {
        return Err(Error::NonPositiveCoefficient(format!("B4 <= 0 ({b4})")));
    }

    let a_tilde = match overrides.a_tilde {
        Some(v) => v,
        None => {
            let a = pick(overrides.a, composite.map(|c| c.a), "A")?;
            a - gamma * gamma * beta * b3 * b3 / b4
        }
    };
    let b_tilde = match overrides.b_tilde {
        Some(v) => v,
        None => {
            let b1 = pick(overrides.b1, composite.map(|c| c.b1), "B1")?;
            b1 - gamma * b2 * b3 / b4
        }
    };
    let c_tilde = match overrides.c_tilde {
        Some(v) => v,
        None => {
            let c = pick(overrides.c, composite.map(|c| c.c), "C")?;
            c + gamma * h2 * h3 * b2 * b2 / b4
        }
    };

    let coeffs = BeamCoefficients {
        m,
        a_tilde,
        b_tilde,
        c_tilde,
        sigma,
        b2,
        b3,
        b4,
        beta,
        gamma,
        h2,
        h3,
        length,
    };
    coeffs.validate()?;
    Ok(coeffs)
}

/// `A₁ = L·sqrt(m/Ã)`, so that real time is `t = A₁·t*`.
pub fn time_scale(coeffs: &BeamCoefficients) -> f64 {
    coeffs.length * (coeffs.m / coeffs.a_tilde).sqrt()
}

impl BeamCoefficients {
    pub fn validate(&self) -> Result<()> {
        let gates = [
            ("Ã <= 0", self.a_tilde),
            ("B̃ <= 0", self.b_tilde),
            ("C̃ <= 0", self.c_tilde),
            ("m <= 0", self.m),
            ("ς <= 0", self.sigma),
            ("β <= 0", self.beta),
            ("γ <= 0", self.gamma),
            ("h2 <= 0", self.h2),
            ("h3 <= 0", self.h3),
            ("L <= 0", self.length),
            ("B4 <= 0", self.b4),
        ];
        for (msg, value) in gates {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::NonPositiveCoefficient(format!("{msg} ({value})")));
            }
        }
        if !(self.b2 >= 0.0 && self.b3 >= 0.0) {
            return Err(Error::NonPositiveCoefficient(format!(
                "B2, B3 must be non-negative (B2 = {}, B3 = {})",
                self.b2, self.b3
            )));
        }
        Ok(())
    }

    pub fn a1(&self) -> f64 {
        time_scale(self)
    }

    /// Kernel parameter `ςC̃` of the shear operator (1/m²).
    pub fn kernel_parameter(&self) -> f64 {
        self.sigma * self.c_tilde
    }

    /// Coupling coefficient `βγςh₂h₃B̃` multiplying `φ²_x` in the bending equation.
    pub fn shear_coupling(&self) -> f64 {
        self.beta * self.gamma * self.sigma * self.h2 * self.h3 * self.b_tilde
    }

    /// Coefficient of the smoothed trace `(P_ς ẇ_x)(L)` in the feedback.
    pub fn trace_weight(&self) -> f64 {
        self.sigma * self.h2 * self.h3 * self.b_tilde * self.b2
    }

    /// The shipped default configuration obtained from the layer map.
    pub fn shipped_defaults() -> Self {
        derive_coefficients(Some(&RawMaterialConstants::default()), &CoefficientOverrides::default())
            .expect("default material constants are valid")
    }
}
