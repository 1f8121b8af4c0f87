use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = r#"
N = 16

[integrator]
t_end = 0.2
snapshot_stride = 50

[sweep]
gains = [1e8]
resolutions = [12, 16]
fit_start = 0.05

[convergence]
resolutions = [25, 50, 100]
"#;

fn mmbeam(args: &[&str], envs: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_mmbeam"));
    cmd.args(args).env_remove("MMBEAM_OUT");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn config(dir: &TempDir, body: &str) -> PathBuf {
    let path = dir.path().join("experiment.toml");
    fs::write(&path, body).unwrap();
    path
}

fn run_ok(sub: &str, cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![sub, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = mmbeam(&args, &[]);
    assert!(o.status.success(), "{sub}: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn data_rows(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect()
}

#[test]
fn every_subcommand_writes_headed_csv() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(&tmp, SMALL);
    for (sub, file) in [
        ("simulate", "trace.csv"),
        ("spectrum", "eigenvalues.csv"),
        ("convergence", "convergence.csv"),
        ("oracle-suite", "oracle_report.csv"),
        ("sweep", "sweep.csv"),
    ] {
        let out = tmp.path().join(sub);
        run_ok(sub, &cfg, &out, &[]);
        let text = fs::read_to_string(out.join(file)).unwrap();
        assert!(text.starts_with("# mmbeam "), "{sub}: {}", &text[..40.min(text.len())]);
        assert!(text.contains("# derived: A1 = "), "{sub}");
    }
}

#[test]
fn reruns_are_bit_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(&tmp, SMALL);
    for sub in ["simulate", "spectrum", "sweep"] {
        let a = tmp.path().join(format!("{sub}_a"));
        let b = tmp.path().join(format!("{sub}_b"));
        run_ok(sub, &cfg, &a, &["--seed", "7"]);
        run_ok(sub, &cfg, &b, &["--seed", "7"]);
        let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        for name in names {
            let pa = a.join(&name);
            if pa.is_file() {
                assert_eq!(fs::read(&pa).unwrap(), fs::read(b.join(&name)).unwrap(), "{sub}/{name:?}");
            }
        }
    }
}

#[test]
fn environment_sets_the_output_directory() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(&tmp, SMALL);
    let env_dir = tmp.path().join("from_env");
    let o = mmbeam(&["spectrum", "--config", cfg.to_str().unwrap()], &[("MMBEAM_OUT", &env_dir)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(env_dir.join("eigenvalues.csv").is_file());

    let flag_dir = tmp.path().join("from_flag");
    let o = mmbeam(
        &["spectrum", "--config", cfg.to_str().unwrap(), "--out", flag_dir.to_str().unwrap()],
        &[("MMBEAM_OUT", &env_dir.join("unused"))],
    );
    assert!(o.status.success());
    assert!(flag_dir.join("eigenvalues.csv").is_file());
    assert!(!env_dir.join("unused").exists());
}

#[test]
fn too_coarse_grid_fails_with_one_line() {
    let tmp = TempDir::new().unwrap();
    let o = mmbeam(&["simulate", "--n", "7", "--out", tmp.path().to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("ValidationError: ResolutionTooSmall"), "{err}");
}

#[test]
fn unknown_config_key_is_a_parse_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(&tmp, "N = 16\nbogus = 1\n");
    let o = mmbeam(&["simulate", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(String::from_utf8_lossy(&o.stderr).lines().count(), 1);
}

#[test]
fn convergence_reports_second_order() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(&tmp, SMALL);
    let out = tmp.path().join("conv");
    run_ok("convergence", &cfg, &out, &[]);
    for file in ["convergence.csv", "convergence_kernel.csv"] {
        let rows = data_rows(&out.join(file));
        let last = rows.last().unwrap()[2];
        assert!((1.7..=2.3).contains(&last), "{file}: {rows:?}");
    }
}

#[test]
fn conservative_open_loop_spectrum_is_imaginary() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(&tmp, "N = 20\n[scheme]\nkappa = 0.0\n[controller]\nlaw = \"off\"\n");
    let out = tmp.path().join("spec");
    run_ok("spectrum", &cfg, &out, &[]);
    let rows = data_rows(&out.join("eigenvalues.csv"));
    let scale = rows.iter().map(|r| r[0].hypot(r[1])).fold(0.0, f64::max);
    assert!(rows.iter().all(|r| r[0].abs() <= 1e-8 * scale));
}

#[test]
fn flags_override_the_file() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(&tmp, SMALL);
    let out = tmp.path().join("flags");
    run_ok("spectrum", &cfg, &out, &["--n", "12", "--law", "sec4", "--mode", "constraint", "--gain", "1e6"]);
    let text = fs::read_to_string(out.join("eigenvalues.csv")).unwrap();
    assert!(text.contains("N = 12"));
    assert!(text.contains("law = \"discrete_sec4\""));
    assert!(text.contains("k1 = 1000000.0"));
    assert_eq!(data_rows(&out.join("eigenvalues.csv")).len(), 24);
}

#[test]
fn oracle_suite_passes_at_default_settings() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("oracles");
    let o = mmbeam(&["oracle-suite", "--out", out.to_str().unwrap()], &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = fs::read_to_string(out.join("oracle_report.csv")).unwrap();
    assert!(!report.lines().any(|l| l.ends_with(",FAIL")), "{report}");
}
