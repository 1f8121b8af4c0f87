//! Boundary-voltage feedback for a clamped piezoelectric sandwich beam.
//!
//! The beam is discretized in space by second-order finite differences and
//! kept continuous in time, which yields a linear system `ż = A z + b V`.
//! The modules follow that pipeline:
//!
//! - [`config`]: layer data, reduced coefficients and the time scale `A₁`.
//! - [`grid`]: nodes, ghost values and stencils.
//! - [`sigma`]: the shear solution operator `P` and `J = ςC̃P − I`.
//! - [`model`]: the assembled semi-discrete system in either shear mode.
//! - [`controller`]: feedback laws for the tip voltage.
//! - [`march`]: time stepping, the discrete energy and decay fits.
//! - [`spectral`]: generator spectra and dissipativity sampling.
//! - [`oracles`]: cross-checks between independent computations.
//! - [`experiment`]: TOML experiments and CSV output for the CLI.
//!
//! ```
//! use mmbeam::config::BeamCoefficients;
//! use mmbeam::controller::ControllerConfig;
//! use mmbeam::grid::Grid;
//! use mmbeam::march::{initial_state, run, InitialProfile, IntegratorConfig};
//! use mmbeam::model::{SchemeOptions, SemiDiscreteSystem};
//!
//! let sys = SemiDiscreteSystem::assemble(
//!     Grid::new(16, 1.0)?,
//!     BeamCoefficients::shipped_defaults(),
//!     SchemeOptions::default(),
//! )?;
//! let start = initial_state(&sys, InitialProfile::Gaussian)?;
//! let cfg = IntegratorConfig { t_end: Some(1.0), ..Default::default() };
//! let trace = run(&start, &sys, ControllerConfig::default(), &cfg)?;
//! assert!(trace.normalized_energies().last().unwrap() < &1.0);
//! # Ok::<(), mmbeam::error::Error>(())
//! ```

pub mod config;
pub mod controller;
pub mod error;
pub mod experiment;
pub mod grid;
pub mod march;
pub mod model;
pub mod oracles;
pub mod sigma;
pub mod spectral;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/coefficients.md")]
    pub struct Coefficients;
    #[doc = include_str!("../../../book/src/grid.md")]
    pub struct GridChapter;
    #[doc = include_str!("../../../book/src/shear.md")]
    pub struct Shear;
    #[doc = include_str!("../../../book/src/model.md")]
    pub struct Model;
    #[doc = include_str!("../../../book/src/feedback.md")]
    pub struct Feedback;
    #[doc = include_str!("../../../book/src/time.md")]
    pub struct Time;
    #[doc = include_str!("../../../book/src/spectrum.md")]
    pub struct Spectrum;
    #[doc = include_str!("../../../book/src/verification.md")]
    pub struct Verification;
    #[doc = include_str!("../../../book/src/cli.md")]
    pub struct Cli;
}
