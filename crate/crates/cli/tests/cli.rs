use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dkfd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dkfd"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.cfg");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

const SMALL: &str = "\
# tiny h sweep
rho0 = bump
n = 512
l = 8, 16, 32
dt = 0.001
times = 0.02, 0.01
moments = 2,0; 1,1
models = particles, dk
m = 64
";

#[test]
fn validate_reports_steps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "times = 0.4\nmoments = 2,0\n");
    let out = dkfd(&["validate", "--config", &cfg]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("400 steps"), "{text}");
}

#[test]
fn validate_flags_fine_grid_and_few_particles() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "l = 256\nn = 100000\n");
    let out = dkfd(&["validate", "--config", &cfg]);
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().contains("warning"));
    let cfg = write_config(dir.path(), "l = 256\nn = 100\n");
    let out = dkfd(&["validate", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stdout)
        .unwrap()
        .contains("smaller than"));
}

#[test]
fn malformed_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "l = 16\nbogus = 1\n");
    let out = dkfd(&["moments", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("line 2"));
}

#[test]
fn unknown_preset_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dkfd(&["run", "fig9", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_h_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let run = |name: &str, workers: &str| {
        let out_dir = dir.path().join(name);
        let out = dkfd(&[
            "sweep-h",
            "--config",
            &cfg,
            "--seed",
            "3",
            "--workers",
            workers,
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        out_dir
    };
    let a = run("a", "1");
    let b = run("b", "2");
    for f in [
        "moments.csv",
        "convergence.csv",
        "slopes.csv",
        "differences.svg",
    ] {
        let x = fs::read(a.join(f)).unwrap();
        assert_eq!(x, fs::read(b.join(f)).unwrap(), "{f}");
    }
    let moments = fs::read_to_string(a.join("moments.csv")).unwrap();
    let rows = dkfd_core::report::parse_moment_csv(&moments).unwrap();
    assert_eq!(rows.len(), 3 * 2 * 2);
    let slopes = fs::read_to_string(a.join("slopes.csv")).unwrap();
    assert!(dkfd_core::report::parse_slope_csv(&slopes).is_ok());
}

#[test]
fn simulate_writes_grid_functions() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "n = 2048\nl = 32\ntimes = 0.05\nmoments = 1,0\n",
    );
    let out_dir = dir.path().join("sim");
    let out = dkfd(&[
        "simulate",
        "--config",
        &cfg,
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in [
        "initial.csv",
        "mean.csv",
        "dk.csv",
        "phi1.csv",
        "phi2.csv",
        "monitor.csv",
        "particles.csv",
        "config.txt",
    ] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let text = fs::read_to_string(out_dir.join("dk.csv")).unwrap();
    let rho = dkfd_core::GridFunction::read_csv(text.as_bytes()).unwrap();
    assert!((rho.mass() - 1.0).abs() < 1e-10);
    let echoed = fs::read_to_string(out_dir.join("config.txt")).unwrap();
    assert_eq!(
        dkfd_core::config::ExperimentConfig::parse(&echoed)
            .unwrap()
            .n,
        vec![2048]
    );
}

#[test]
fn negative_part_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "n = 1024, 4096\nl = 32\ntimes = 0.02\nmoments = 1,0\nm = 8\n",
    );
    let out_dir = dir.path().join("neg");
    let out = dkfd(&[
        "negative-part",
        "--config",
        &cfg,
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = fs::read_to_string(out_dir.join("negative_part.csv")).unwrap();
    let rows = dkfd_core::report::parse_negative_part_csv(&text).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1].n, 4096);
}

#[test]
fn sample_preset_by_short_name() {
    let dir = tempfile::tempdir().unwrap();
    let out = dkfd(&["run", "fig2", "--out", dir.path().to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir.path().join("fig2-sample/sample_dk.csv").exists());
    assert!(dir.path().join("fig2-sample/sample_config.txt").exists());
}
