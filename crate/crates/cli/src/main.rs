use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mmbeam::controller::Law;
use mmbeam::error::Error;
use mmbeam::experiment::{parse_config, run_experiment, ExperimentKind, ExperimentSpec};
use mmbeam::model::Mode;

/// Boundary-voltage stabilization of a piezoelectric sandwich beam.
#[derive(Parser, Debug)]
#[command(name = "mmbeam", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Time-march the closed loop and write the energy/voltage trace.
    Simulate(Common),
    /// Eigenvalues of the discrete generator and a dissipativity sample.
    Spectrum(Common),
    /// Refinement study of the shear operator on a manufactured solution.
    Convergence(Common),
    /// Operator cross-checks with a pass/fail report.
    OracleSuite(Common),
    /// Gain x resolution grid of decay rates and spectral abscissae.
    Sweep(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// TOML experiment file; omitted fields take the shipped defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides the file and MMBEAM_OUT).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    law: Option<LawArg>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Number of grid intervals.
    #[arg(long)]
    n: Option<usize>,
    /// Feedback gain k1.
    #[arg(long)]
    gain: Option<f64>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum LawArg {
    Analytic,
    Sec4,
    Off,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ModeArg {
    Viscous,
    Constraint,
}

fn build_spec(kind: ExperimentKind, args: &Common) -> Result<ExperimentSpec, Error> {
    let mut spec = match &args.config {
        Some(path) => parse_config(path)?,
        None => ExperimentSpec::default(),
    };
    spec.kind = kind;
    if let Some(out) = &args.out {
        spec.out = Some(out.clone());
    }
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(law) = args.law {
        spec.controller.law = match law {
            LawArg::Analytic => Law::AnalyticFeed,
            LawArg::Sec4 => Law::Discrete,
            LawArg::Off => Law::Off,
        };
    }
    if let Some(mode) = args.mode {
        spec.scheme.mode = match mode {
            ModeArg::Viscous => Mode::ViscousFiltered,
            ModeArg::Constraint => Mode::EllipticConstraint,
        };
    }
    if let Some(n) = args.n {
        spec.n = n;
    }
    if let Some(gain) = args.gain {
        spec.controller.k1 = gain;
        spec.sweep.gains = vec![gain];
    }
    spec.validate()?;
    Ok(spec)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (kind, args) = match &cli.command {
        Command::Simulate(a) => (ExperimentKind::Simulate, a),
        Command::Spectrum(a) => (ExperimentKind::Spectrum, a),
        Command::Convergence(a) => (ExperimentKind::Convergence, a),
        Command::OracleSuite(a) => (ExperimentKind::OracleSuite, a),
        Command::Sweep(a) => (ExperimentKind::Sweep, a),
    };
    let outcome = build_spec(kind, args).and_then(|spec| run_experiment(&spec));
    match outcome {
        Ok(outcome) => {
            for line in &outcome.summary {
                println!("{line}");
            }
            for file in &outcome.files {
                println!("wrote {}", file.display());
            }
            if outcome.passed {
                ExitCode::SUCCESS
            } else {
                eprintln!("OracleFailure: {}", outcome.summary.join("; "));
                ExitCode::from(1)
            }
        }
        Err(e) => {
            let msg = e.to_string();
            let body = msg.strip_prefix(&format!("{}: ", e.kind())).unwrap_or(&msg);
            eprintln!("{}: {}", e.kind(), body.replace('\n', " "));
            ExitCode::from(2)
        }
    }
}
