use std::path::Path;
use std::process::Command;

use gs_spde::output::{read_field_dump, NORM_SERIES_HEADER};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_gs-spde"));
    c.env_remove("GS_SPDE_OUT");
    c
}

fn run(args: &[&str], out: &Path) -> std::process::Output {
    bin().args(args).arg("--out").arg(out).output().unwrap()
}

#[test]
fn simulate_writes_norm_rows_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &["simulate", "--seed", "3", "--override", "time.t_end=0.01", "--override", "time.dt=0.001"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("norms_0000.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(NORM_SERIES_HEADER));
    assert_eq!(lines.count(), 11);

    let manifest: toml::Table = std::fs::read_to_string(dir.path().join("manifest.toml")).unwrap().parse().unwrap();
    let run = manifest["run"].as_table().unwrap();
    assert_eq!(run["status"].as_str(), Some("complete"));
    assert_eq!(run["seed"].as_integer(), Some(3));
    let files = run["files"].as_array().unwrap();
    assert!(files.iter().any(|f| f.as_str() == Some("norms_0000.csv")));
    for f in files {
        assert!(dir.path().join(f.as_str().unwrap()).exists());
    }
    assert_eq!(manifest["config"]["time"]["dt"].as_float(), Some(0.001));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[model]\nsigma1 = -1.0\n").unwrap();
    let o = run(&["simulate", "--config", bad.to_str().unwrap()], &dir.path().join("a"));
    assert_eq!(o.status.code(), Some(2));

    std::fs::write(&bad, "[model\n").unwrap();
    let o = run(&["simulate", "--config", bad.to_str().unwrap()], &dir.path().join("b"));
    assert_eq!(o.status.code(), Some(2));

    let o = run(&["simulate", "--override", "model.unknown=1"], &dir.path().join("c"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn blow_up_exits_with_one_and_partial_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &[
            "simulate",
            "--override",
            "model.a1=1000.0",
            "--override",
            "time.dt=1.0",
            "--override",
            "time.t_end=10.0",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = std::fs::read_to_string(dir.path().join("manifest.toml")).unwrap();
    assert!(manifest.contains("status = \"partial\""));
}

#[test]
fn check_params_flags_special_case() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &[
            "check-params",
            "--override",
            "space.dim=2",
            "--override",
            "model.q=2.0",
            "--override",
            "model.aleph=2.0",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("special case d=2, aleph=2, q=2: true"), "{text}");
    assert!(dir.path().join("gate_report.txt").exists());
}

#[test]
fn check_params_sweep_writes_grid() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["check-params", "--sweep-x", "q:1:3:4", "--sweep-y", "alpha:-0.5:0.5:3"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("gate_sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 12);
}

#[test]
fn field_dumps_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &[
            "simulate",
            "--override",
            "time.t_end=0.005",
            "--override",
            "time.dt=0.001",
            "--override",
            "output.field_dumps=true",
            "--override",
            "output.snapshot_stride=5",
            "--override",
            "space.modes=12",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let bytes = std::fs::read(dir.path().join("fields/path0000_u_0000005.bin")).unwrap();
    assert_eq!(bytes[63], b'\n');
    assert_eq!(bytes.len(), 64 + 8 * 12);
    let dump = read_field_dump(&bytes).unwrap();
    assert!(dump.header.starts_with("gsf1 d=1"));
    assert!(dump.header.contains("N=12") && dump.header.contains("f=u"));
    assert!(dump.coeffs.iter().all(|c| c.is_finite()));
    let init = read_field_dump(&std::fs::read(dir.path().join("fields/path0000_u_0000000.bin")).unwrap()).unwrap();
    assert_eq!(init.coeffs[0], 1.0);
}

#[test]
fn env_var_sets_default_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from-env");
    let o = bin()
        .args(["check-params"])
        .env("GS_SPDE_OUT", &target)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(target.join("manifest.toml").exists());

    let explicit = dir.path().join("explicit");
    let o = bin()
        .args(["check-params", "--out"])
        .arg(&explicit)
        .env("GS_SPDE_OUT", &target)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(explicit.join("manifest.toml").exists());
}

#[test]
fn fixed_point_and_estimate_run_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let short = ["--override", "time.t_end=0.02", "--override", "time.dt=0.001", "--paths", "4"];
    let mut args = vec!["fixed-point"];
    args.extend(short);
    let o = run(&args, &dir.path().join("fp"));
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("fp/fixed_point.csv").exists());

    let mut args = vec!["estimate"];
    args.extend(short);
    let o = run(&args, &dir.path().join("est"));
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("est/estimates.csv")).unwrap();
    assert!(csv.lines().count() > 1);
}
