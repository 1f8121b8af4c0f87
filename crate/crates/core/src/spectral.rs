//! Spectral and energy-inner-product diagnostics of the discrete generator.

use nalgebra::{Complex, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::controller::{feedback_row, ControllerConfig};
use crate::error::{Error, Result};
use crate::model::{Mode, SemiDiscreteSystem};

/// First-order system matrix with its energy Gram matrix.
#[derive(Debug, Clone)]
pub struct DiscreteGenerator {
    pub mode: Mode,
    /// Closed-loop matrix `A₀ + b fᵀ` (equals `A₀` for a zero feedback row).
    pub matrix: DMatrix<f64>,
    pub open_loop: DMatrix<f64>,
    pub input: DVector<f64>,
    pub feedback: DVector<f64>,
    /// `E(z) = ½ zᵀ Q z`.
    pub gram: DMatrix<f64>,
    /// Trace row `y` and dissipation factor `k₁γ/(A₁B₄)`, so that under the
    /// analytic law `Re⟨Az, z⟩_E = −factor·(yᵀv)²` plus viscous terms.
    pub trace: DVector<f64>,
    pub boundary_factor: f64,
    n: usize,
}

pub fn assemble_generator(sys: &SemiDiscreteSystem, controller: &ControllerConfig) -> Result<DiscreteGenerator> {
    let dense = sys.dense();
    let feedback = feedback_row(sys, &dense, controller)?;
    let matrix = &dense.generator + &dense.input * feedback.transpose();
    let c = sys.coeffs();
    let boundary_factor = match controller.law {
        crate::controller::Law::Off => 0.0,
        _ => controller.k1 * c.gamma / (sys.a1() * c.b4),
    };
    Ok(DiscreteGenerator {
        mode: sys.mode(),
        matrix,
        open_loop: dense.generator,
        input: dense.input,
        feedback,
        gram: dense.gram,
        trace: dense.trace,
        boundary_factor,
        n: sys.grid().n(),
    })
}

impl DiscreteGenerator {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `R A R⁻¹` with `Q = RᵀR`, in which the energy norm is Euclidean.
    /// Only available when the Gram matrix is positive definite.
    pub fn energy_coordinates(&self) -> Option<DMatrix<f64>> {
        let chol = self.gram.clone().cholesky()?;
        let r = chol.l().transpose();
        let rinv = r.clone().try_inverse()?;
        Some(&r * &self.matrix * rinv)
    }
}

/// Eigenvalues of any square matrix, sorted by real part (descending, ties by
/// imaginary part).
pub fn spectrum_of_matrix(m: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::EigensolverFailure("matrix has non-finite entries".into()));
    }
    let schur = nalgebra::linalg::Schur::try_new(m.clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::EigensolverFailure(format!("Schur iteration did not converge (dim {})", m.nrows())))?;
    let mut eig: Vec<Complex<f64>> = schur.complex_eigenvalues().iter().copied().collect();
    eig.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    Ok(eig)
}

/// Spectrum of the generator. Computed in energy coordinates when possible,
/// which keeps the conservative spectrum on the imaginary axis to rounding.
pub fn spectrum(gen: &DiscreteGenerator) -> Result<Vec<Complex<f64>>> {
    if gen.n > 400 {
        return Err(Error::Validation(format!("dense spectrum is limited to N <= 400 (N = {})", gen.n)));
    }
    match gen.energy_coordinates() {
        Some(m) => spectrum_of_matrix(&m),
        None => spectrum_of_matrix(&gen.matrix),
    }
}

pub fn spectral_abscissa(eigenvalues: &[Complex<f64>]) -> f64 {
    eigenvalues.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max)
}

pub fn spectral_abscissa_of(gen: &DiscreteGenerator) -> Result<f64> {
    Ok(spectral_abscissa(&spectrum(gen)?))
}

/// One sampled state of [`dissipativity_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DissipationSample {
    /// `⟨Az, z⟩_E / ‖z‖²_E`.
    pub rayleigh: f64,
    /// `−factor·(yᵀv)² / ‖z‖²_E`.
    pub boundary: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DissipativityReport {
    pub max_rayleigh: f64,
    pub samples: Vec<DissipationSample>,
}

impl DissipativityReport {
    /// Largest `|rayleigh − boundary|` relative to `max(|boundary|, tiny)`.
    pub fn max_relative_mismatch(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| (s.rayleigh - s.boundary).abs() / s.boundary.abs().max(1e-300))
            .fold(0.0, f64::max)
    }

    pub fn max_abs_mismatch(&self) -> f64 {
        self.samples.iter().map(|s| (s.rayleigh - s.boundary).abs()).fold(0.0, f64::max)
    }
}

/// Which states to sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleKind {
    /// Smooth random states (random low-mode sine series).
    Smooth,
    /// Random nodal values.
    Rough,
    /// Smooth states whose velocity has zero tip trace `yᵀv = 0`.
    ZeroTrace,
}

/// `max Re⟨Az, z⟩_E / ‖z‖²_E` over seeded random admissible `z`, with the
/// boundary expression per sample.
///
/// Admissible states carry the clamp by construction (the packed state has no
/// unknowns at `x = 0`). In filtered mode the `φ²` block is set from the
/// constraint so the energy norm stays definite on the samples.
pub fn dissipativity_check(
    sys: &SemiDiscreteSystem,
    gen: &DiscreteGenerator,
    samples: usize,
    kind: SampleKind,
    seed: u64,
) -> DissipativityReport {
    let n = gen.n;
    let dim = gen.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes = sys.grid().nodes();
    let l = sys.grid().length();
    let mut out = Vec::with_capacity(samples);
    for _ in 0..samples {
        let field = |rng: &mut ChaCha8Rng| -> DVector<f64> {
            match kind {
                SampleKind::Rough => DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)),
                _ => {
                    let amps: Vec<f64> = (0..6).map(|k| rng.random_range(-1.0..1.0) / (1.0 + k as f64).powi(2)).collect();
                    DVector::from_fn(n, |i, _| {
                        let x = nodes[i + 1] / l;
                        amps.iter()
                            .enumerate()
                            .map(|(k, a)| a * ((k as f64 + 0.5) * std::f64::consts::PI * x).sin())
                            .sum::<f64>()
                            * x
                    })
                }
            }
        };
        let w = field(&mut rng);
        let mut v = field(&mut rng);
        if kind == SampleKind::ZeroTrace {
            let y = &gen.trace;
            v -= y * (y.dot(&v) / y.dot(y));
        }
        // balance the two energy parts so neither dominates
        let mut z = DVector::zeros(dim);
        z.rows_mut(0, n).copy_from(&w);
        let q = &gen.gram;
        let ew = w.dot(&(q.view((0, 0), (n, n)) * &w));
        let ev = v.dot(&(q.view((n, n), (n, n)) * &v));
        let s = if ev > 0.0 { (ew / ev).sqrt() } else { 1.0 };
        let v = v * s;
        z.rows_mut(n, n).copy_from(&v);
        if gen.mode == Mode::ViscousFiltered {
            let wf: Vec<f64> = std::iter::once(0.0).chain(w.iter().copied()).collect();
            let phi = sys.solve_phi_constraint(&wf, 0.0).expect("grid sizes agree");
            z.rows_mut(2 * n, n).copy_from(&DVector::from_column_slice(&phi[1..]));
        }
        let qz = q * &z;
        let norm2 = z.dot(&qz);
        let rayleigh = (&gen.matrix * &z).dot(&qz) / norm2;
        let yv = gen.trace.dot(&v);
        let boundary = -gen.boundary_factor * yv * yv / norm2;
        out.push(DissipationSample { rayleigh, boundary });
    }
    let max_rayleigh = out.iter().map(|s| s.rayleigh).fold(f64::NEG_INFINITY, f64::max);
    DissipativityReport { max_rayleigh, samples: out }
}
