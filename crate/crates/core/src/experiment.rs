//! Experiment specifications (TOML) and their file outputs.
//!
//! Every output file starts with `#`-prefixed lines holding the fully
//! resolved specification, followed by one CSV header line and the data.
//! Numbers are written with 17 significant digits.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{derive_coefficients, BeamCoefficients, CoefficientOverrides, RawMaterialConstants};
use crate::controller::{ControllerConfig, Law};
use crate::error::{Error, Result};
use crate::grid::{Grid, MIN_RESOLUTION};
use crate::march::{fit_decay_rate, initial_state, run, InitialProfile, IntegratorConfig, SimulationTrace};
use crate::model::{SchemeOptions, SemiDiscreteSystem};
use crate::oracles;
use crate::sigma::EllipticSolver;
use crate::spectral::{assemble_generator, dissipativity_check, spectral_abscissa, spectrum, SampleKind};

/// Environment variable that overrides the output directory of a spec file.
pub const OUT_DIR_ENV: &str = "MMBEAM_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    #[default]
    Simulate,
    Spectrum,
    Convergence,
    OracleSuite,
    Sweep,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::Spectrum => "spectrum",
            ExperimentKind::Convergence => "convergence",
            ExperimentKind::OracleSuite => "oracle_suite",
            ExperimentKind::Sweep => "sweep",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumSection {
    /// Random states for the dissipativity check.
    pub samples: usize,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        SpectrumSection { samples: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceSection {
    pub resolutions: Vec<usize>,
    /// Kernel parameter `ςC̃` of the manufactured shear problem. The material
    /// value puts a boundary layer far below any desk-scale `dx`, so the
    /// refinement study uses a resolvable value.
    pub parameter: f64,
}

impl Default for ConvergenceSection {
    fn default() -> Self {
        ConvergenceSection { resolutions: vec![25, 50, 100, 200], parameter: 9.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub gains: Vec<f64>,
    pub resolutions: Vec<usize>,
    /// Fit window start in `t*`; the end is the run horizon.
    pub fit_start: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection { gains: vec![1e7, 1e8, 1e9], resolutions: vec![30, 60], fit_start: 1.0 }
    }
}

/// A complete experiment. Every field is optional in the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub out: Option<PathBuf>,
    pub seed: u64,
    /// Number of grid intervals.
    #[serde(rename = "N")]
    pub n: usize,
    pub initial: InitialProfile,
    pub material: RawMaterialConstants,
    pub coefficients: CoefficientOverrides,
    pub scheme: SchemeOptions,
    pub controller: ControllerConfig,
    pub integrator: IntegratorConfig,
    pub spectrum: SpectrumSection,
    pub convergence: ConvergenceSection,
    pub sweep: SweepSection,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            kind: ExperimentKind::Simulate,
            out: None,
            seed: 20240601,
            n: 60,
            initial: InitialProfile::Gaussian,
            material: RawMaterialConstants::default(),
            coefficients: CoefficientOverrides::default(),
            scheme: SchemeOptions::default(),
            controller: ControllerConfig::default(),
            integrator: IntegratorConfig::default(),
            spectrum: SpectrumSection::default(),
            convergence: ConvergenceSection::default(),
            sweep: SweepSection::default(),
        }
    }
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = toml::from_str(text).map_err(|e| Error::Parse(one_line(&e.to_string())))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let check_n = |n: usize| -> Result<()> {
            if n < MIN_RESOLUTION {
                return Err(Error::Validation(format!("ResolutionTooSmall: N = {n} (need N >= {MIN_RESOLUTION})")));
            }
            Ok(())
        };
        check_n(self.n)?;
        self.controller.validate()?;
        self.integrator.validate()?;
        self.coefficients().map_err(|e| Error::Validation(e.to_string()))?;
        match self.kind {
            ExperimentKind::Convergence => {
                if self.convergence.resolutions.len() < 2 {
                    return Err(Error::Validation("convergence needs at least two resolutions".into()));
                }
                self.convergence.resolutions.iter().try_for_each(|&n| check_n(n))?;
                if !(self.convergence.parameter > 0.0) {
                    return Err(Error::Validation("convergence.parameter > 0 required".into()));
                }
            }
            ExperimentKind::Sweep => {
                if self.sweep.gains.is_empty() || self.sweep.resolutions.is_empty() {
                    return Err(Error::Validation("sweep needs at least one gain and one resolution".into()));
                }
                self.sweep.resolutions.iter().try_for_each(|&n| check_n(n))?;
                if self.controller.law != Law::Off && self.sweep.gains.iter().any(|g| !(*g > 0.0)) {
                    return Err(Error::Validation("k1 > 0 required for every sweep gain".into()));
                }
            }
            ExperimentKind::Spectrum if self.n > 400 => {
                return Err(Error::Validation(format!("spectrum is limited to N <= 400 (N = {})", self.n)));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn coefficients(&self) -> Result<BeamCoefficients> {
        derive_coefficients(Some(&self.material), &self.coefficients)
    }

    pub fn system(&self, n: usize) -> Result<SemiDiscreteSystem> {
        SemiDiscreteSystem::assemble(Grid::new(n, self.coefficients()?.length)?, self.coefficients()?, self.scheme)
    }

    /// Output directory: explicit `out`, then [`OUT_DIR_ENV`], then `out`.
    pub fn output_dir(&self) -> PathBuf {
        if let Some(p) = &self.out {
            return p.clone();
        }
        std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out"))
    }

    /// `#`-prefixed block with the resolved spec and the derived
    /// coefficients. The output directory is left out so that identical runs
    /// produce identical files wherever they are written.
    pub fn header(&self) -> Result<String> {
        let mut resolved = self.clone();
        resolved.out = None;
        let coeffs = self.coefficients()?;
        resolved.coefficients = CoefficientOverrides::from(&coeffs);
        let body = toml::to_string(&resolved).map_err(|e| Error::Parse(e.to_string()))?;
        let mut out = format!("# mmbeam {}\n", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(out, "# derived: A1 = {:.16e} s, kernel parameter = {:.16e}", coeffs.a1(), coeffs.kernel_parameter());
        for line in body.lines() {
            let _ = writeln!(out, "# {line}");
        }
        Ok(out)
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Reads and validates a spec file.
pub fn parse_config(path: &Path) -> Result<ExperimentSpec> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    ExperimentSpec::from_toml(&text)
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_csv(path: &Path, header: &str, columns: &str, rows: impl IntoIterator<Item = String>) -> Result<()> {
    let mut text = String::with_capacity(4096);
    text.push_str(header);
    text.push_str(columns);
    text.push('\n');
    for row in rows {
        text.push_str(&row);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// What an experiment produced.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub files: Vec<PathBuf>,
    /// One line per headline number.
    pub summary: Vec<String>,
    /// `false` only when an oracle suite has failing checks.
    pub passed: bool,
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutcome> {
    spec.validate()?;
    let dir = spec.output_dir();
    fs::create_dir_all(&dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let header = spec.header()?;
    match spec.kind {
        ExperimentKind::Simulate => simulate(spec, &dir, &header),
        ExperimentKind::Spectrum => spectrum_kind(spec, &dir, &header),
        ExperimentKind::Convergence => convergence(spec, &dir, &header),
        ExperimentKind::OracleSuite => oracle_suite(spec, &dir, &header),
        ExperimentKind::Sweep => sweep(spec, &dir, &header),
    }
}

pub fn write_trace(path: &Path, header: &str, trace: &SimulationTrace) -> Result<()> {
    let t_real = trace.real_times();
    let e_norm = trace.normalized_energies();
    let rows = (0..trace.len()).map(|k| {
        [trace.times[k], t_real[k], trace.energies[k], e_norm[k], trace.voltages[k], trace.w_tip[k], trace.phi2_tip[k]]
            .map(num)
            .join(",")
    });
    write_csv(path, header, "t_star,t_real,E,E_normalized,V,w_tip,phi2_tip", rows)
}

fn simulate(spec: &ExperimentSpec, dir: &Path, header: &str) -> Result<ExperimentOutcome> {
    let sys = spec.system(spec.n)?;
    let initial = initial_state(&sys, spec.initial)?;
    let trace = run(&initial, &sys, spec.controller, &spec.integrator)?;
    let mut files = vec![dir.join("trace.csv")];
    write_trace(&files[0], header, &trace)?;
    if !trace.snapshots.is_empty() {
        let snap_dir = dir.join("snapshots");
        fs::create_dir_all(&snap_dir)?;
        let nodes = sys.grid().nodes();
        for (step, state) in &trace.snapshots {
            let path = snap_dir.join(format!("snapshot_{step:08}.csv"));
            let head = format!("{header}# step = {step}, t_star = {}\n", num(state.time));
            let rows = (0..nodes.len()).map(|i| [nodes[i], state.w[i], state.phi2[i]].map(num).join(","));
            write_csv(&path, &head, "x,w,phi2", rows)?;
            files.push(path);
        }
    }
    let e = trace.normalized_energies();
    let mut summary = vec![
        format!("steps = {}", trace.len() - 1),
        format!("E(end)/E(0) = {:.6e}", e.last().unwrap()),
        format!("max relative energy increase per step = {:.3e}", trace.max_relative_increase()),
    ];
    let t_end = trace.times.last().copied().unwrap_or(0.0);
    if let Ok(fit) = fit_decay_rate(&trace, (1.0_f64.min(0.5 * t_end), t_end)) {
        summary.push(format!("fitted omega = {:.6e}", fit.omega));
    }
    Ok(ExperimentOutcome { files, summary, passed: true })
}

fn spectrum_kind(spec: &ExperimentSpec, dir: &Path, header: &str) -> Result<ExperimentOutcome> {
    let sys = spec.system(spec.n)?;
    let gen = assemble_generator(&sys, &spec.controller)?;
    let eig = spectrum(&gen)?;
    let abscissa = spectral_abscissa(&eig);
    let min_mod = eig.iter().map(|l| l.norm()).fold(f64::INFINITY, f64::min);
    let max_mod = eig.iter().map(|l| l.norm()).fold(0.0, f64::max);
    let head = format!("{header}# abscissa = {}, min |lambda| = {}, max |lambda| = {}\n", num(abscissa), num(min_mod), num(max_mod));
    let eig_path = dir.join("eigenvalues.csv");
    write_csv(&eig_path, &head, "re,im", eig.iter().map(|l| format!("{},{}", num(l.re), num(l.im))))?;

    let report = dissipativity_check(&sys, &gen, spec.spectrum.samples, SampleKind::Smooth, spec.seed);
    let dis_path = dir.join("dissipativity.csv");
    write_csv(
        &dis_path,
        header,
        "sample,rayleigh,boundary",
        report.samples.iter().enumerate().map(|(k, s)| format!("{k},{},{}", num(s.rayleigh), num(s.boundary))),
    )?;
    Ok(ExperimentOutcome {
        files: vec![eig_path, dis_path],
        summary: vec![
            format!("abscissa = {abscissa:.6e}"),
            format!("min |lambda| = {min_mod:.6e}"),
            format!("max Rayleigh quotient = {:.6e}", report.max_rayleigh),
        ],
        passed: true,
    })
}

fn convergence(spec: &ExperimentSpec, dir: &Path, header: &str) -> Result<ExperimentOutcome> {
    let res = &spec.convergence.resolutions;
    let length = spec.coefficients()?.length;
    let errors = res
        .iter()
        .map(|&n| oracles::manufactured_error(spec.convergence.parameter, n, length))
        .collect::<Result<Vec<_>>>()?;
    let mut files = Vec::new();
    let mut summary = Vec::new();
    for (name, pick) in [("solve", 0usize), ("kernel", 1)] {
        let errs: Vec<f64> = errors.iter().map(|e| if pick == 0 { e.0 } else { e.1 }).collect();
        let orders = oracles::observed_orders(&errs, res);
        let path = dir.join(if pick == 0 { "convergence.csv".to_string() } else { format!("convergence_{name}.csv") });
        let head = format!("{header}# route = {name}, manufactured s = sin(pi x / 2L)\n");
        let rows = (0..res.len()).map(|k| {
            let o = orders[k].map(num).unwrap_or_else(|| "nan".into());
            format!("{},{},{o}", res[k], num(errs[k]))
        });
        write_csv(&path, &head, "N,error,observed_order", rows)?;
        files.push(path);
        if let Some(Some(o)) = orders.last() {
            summary.push(format!("{name}: finest observed order = {o:.4}"));
        }
    }
    Ok(ExperimentOutcome { files, summary, passed: true })
}

/// One row of the oracle report.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleCheck {
    pub name: &'static str,
    pub value: f64,
    pub threshold: f64,
    /// `true`: pass when `value <= threshold`; `false`: when `value >= threshold`.
    pub upper: bool,
}

impl OracleCheck {
    pub fn passed(&self) -> bool {
        if self.upper {
            self.value <= self.threshold
        } else {
            self.value >= self.threshold
        }
    }
}

/// The operator cross-checks run by the `oracle_suite` kind.
pub fn oracle_checks(spec: &ExperimentSpec) -> Result<Vec<OracleCheck>> {
    let coeffs = spec.coefficients()?;
    let l = coeffs.length;
    let p = spec.convergence.parameter;
    let seed = spec.seed;
    let gap200 = oracles::kernel_vs_solve(p, 200, l, 20, seed)?;
    let gap100 = oracles::kernel_vs_solve(p, 100, l, 20, seed)?;
    let slope = (gap100 / gap200).log2();
    let grid = Grid::new(100, l)?;
    let moderate = EllipticSolver::new(grid, p)?;
    let material = EllipticSolver::new(grid, coeffs.kernel_parameter())?;
    let (min_p, max_j) = oracles::sign_checks(&moderate, 20, seed);
    let (min_p_mat, max_j_mat) = oracles::sign_checks(&material, 20, seed);
    let kk = std::f64::consts::PI / (2.0 * l);
    let identity = oracles::j_identity_error(p, 200, l, |x| (kk * x).sin(), |x| -kk * kk * (kk * x).sin())?;
    let sys = spec.system(spec.n)?;
    Ok(vec![
        OracleCheck { name: "kernel_vs_solve_rel_l2_N200", value: gap200, threshold: 1e-3, upper: true },
        OracleCheck { name: "kernel_vs_solve_slope_low", value: slope, threshold: 1.7, upper: false },
        OracleCheck { name: "kernel_vs_solve_slope_high", value: slope, threshold: 2.3, upper: true },
        OracleCheck { name: "p_symmetry", value: oracles::p_symmetry(&moderate, 20, seed), threshold: 1e-10, upper: true },
        OracleCheck { name: "p_nonnegative", value: min_p, threshold: -1e-12, upper: false },
        OracleCheck { name: "j_nonpositive", value: max_j, threshold: 1e-12, upper: true },
        OracleCheck { name: "p_nonnegative_material", value: min_p_mat, threshold: -1e-12, upper: false },
        OracleCheck { name: "j_nonpositive_material", value: max_j_mat, threshold: 1e-12, upper: true },
        OracleCheck { name: "j_energy_identity", value: oracles::j_energy_identity(&moderate, 20, seed), threshold: 1e-9, upper: true },
        OracleCheck { name: "j_equals_p_d2_N200", value: identity, threshold: 1e-3, upper: true },
        OracleCheck { name: "solve_residual", value: oracles::solve_residual(&material, 20, seed), threshold: 1e-10, upper: true },
        OracleCheck { name: "generator_vs_rhs", value: oracles::generator_vs_rhs(&sys, 10, seed), threshold: 1e-12, upper: true },
    ])
}

fn oracle_suite(spec: &ExperimentSpec, dir: &Path, header: &str) -> Result<ExperimentOutcome> {
    let checks = oracle_checks(spec)?;
    let path = dir.join("oracle_report.csv");
    let rows = checks.iter().map(|c| {
        let op = if c.upper { "<=" } else { ">=" };
        format!("{},{},{op},{},{}", c.name, num(c.value), num(c.threshold), if c.passed() { "pass" } else { "FAIL" })
    });
    write_csv(&path, header, "check,value,relation,threshold,result", rows)?;
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed()).map(|c| c.name).collect();
    let mut summary = vec![format!("{} of {} checks passed", checks.len() - failed.len(), checks.len())];
    if !failed.is_empty() {
        summary.push(format!("failed: {}", failed.join(", ")));
    }
    Ok(ExperimentOutcome { files: vec![path], summary, passed: failed.is_empty() })
}

/// One cell of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub gain: f64,
    pub n: usize,
    pub omega: f64,
    pub abscissa: f64,
}

fn sweep(spec: &ExperimentSpec, dir: &Path, header: &str) -> Result<ExperimentOutcome> {
    let cells: Vec<(usize, f64, usize)> = spec
        .sweep
        .gains
        .iter()
        .flat_map(|&g| spec.sweep.resolutions.iter().map(move |&n| (g, n)))
        .enumerate()
        .map(|(k, (g, n))| (k, g, n))
        .collect();
    let results: Vec<Result<(SweepCell, PathBuf)>> = cells
        .par_iter()
        .map(|&(k, gain, n)| {
            let controller = ControllerConfig { k1: gain, ..spec.controller };
            let sys = spec.system(n)?;
            let initial = initial_state(&sys, spec.initial)?;
            let trace = run(&initial, &sys, controller, &spec.integrator)?;
            let t_end = *trace.times.last().unwrap();
            let fit = fit_decay_rate(&trace, (spec.sweep.fit_start.min(0.5 * t_end), t_end))?;
            let abscissa = spectral_abscissa(&spectrum(&assemble_generator(&sys, &controller)?)?);
            let path = dir.join(format!("sweep_cell_{k:03}.csv"));
            let head = format!("{header}# cell {k}: gain = {}, N = {n}\n", num(gain));
            write_trace(&path, &head, &trace)?;
            Ok((SweepCell { gain, n, omega: fit.omega, abscissa }, path))
        })
        .collect();
    let mut files = Vec::new();
    let mut rows = Vec::new();
    for r in results {
        let (cell, path) = r?;
        files.push(path);
        rows.push(format!("{},{},{},{}", num(cell.gain), cell.n, num(cell.omega), num(cell.abscissa)));
    }
    let summary_path = dir.join("sweep.csv");
    write_csv(&summary_path, header, "gain,N,omega,abscissa", rows.clone())?;
    files.insert(0, summary_path);
    Ok(ExperimentOutcome { files, summary: vec![format!("{} cells", rows.len())], passed: true })
}
