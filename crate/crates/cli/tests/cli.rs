use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("levy-mfg-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(dir: &PathBuf, args: &[&str], config: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_levy-mfg"));
    cmd.args(args).arg("--out").arg(dir.join("out"));
    if let Some(text) = config {
        let path = dir.join("run.cfg");
        fs::write(&path, text).unwrap();
        cmd.arg("--config").arg(path);
    }
    cmd.env_remove("LEVY_MFG_THREADS");
    cmd.output().unwrap()
}

fn summary(dir: &PathBuf) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("out/summary.json")).unwrap()).unwrap()
}

#[test]
fn diagnose_nonsymmetric_order_two_tenths() {
    let dir = scratch("diagnose");
    let cfg = "levy.two_sigma = 0.2\ndiagnose.symmetric = false\ndiagnose.alpha = 1\ndiagnose.gamma = 1\n";
    let out = run(&dir, &["diagnose", "--stable-output"], Some(cfg));
    assert_eq!(out.status.code(), Some(0));
    let s = summary(&dir);
    assert_eq!(s["mfg_unique"], serde_json::json!(true));
    assert!((s["thresholds"]["mfg_lhs"].as_f64().unwrap() - 0.5625).abs() < 1e-15);
    assert_eq!(s["thresholds"]["exact"]["mfg_unique"], "pass");
}

#[test]
fn diagnose_above_the_cap_fails() {
    let dir = scratch("diagnose-fail");
    let cfg = "levy.two_sigma = 0.3\ndiagnose.symmetric = false\ndiagnose.gamma = 1\n";
    let out = run(&dir, &["diagnose"], Some(cfg));
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(summary(&dir)["mfg_unique"], serde_json::json!(false));
}

#[test]
fn grid_size_must_be_power_of_two() {
    let dir = scratch("bad-grid");
    let out = run(&dir, &["solve-mfg"], Some("grid.n = 100\n"));
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("grid") && err.contains("power of two"), "{err}");
}

#[test]
fn unknown_and_duplicate_keys_rejected() {
    let dir = scratch("bad-keys");
    assert_eq!(run(&dir, &["diagnose"], Some("grid.bogus = 1\n")).status.code(), Some(2));
    assert_eq!(run(&dir, &["diagnose"], Some("grid.n = 64\ngrid.n = 128\n")).status.code(), Some(2));
    assert_eq!(run(&dir, &["diagnose"], Some("levy.two_sigma = 1.2\n")).status.code(), Some(2));
}

#[test]
fn unresolvable_cfl_is_numerical_failure() {
    let dir = scratch("cfl");
    let out = run(&dir, &["solve-fp"], Some("drift.value = 1e12\n"));
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("fp"));
}

#[test]
fn iteration_cap_is_nonconvergence() {
    let dir = scratch("nonconv");
    let out = run(&dir, &["solve-mfg"], Some("solver.max_iters = 2\n"));
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(summary(&dir)["mfg"]["converged"], serde_json::json!(false));
}

#[test]
fn solve_mfg_default_is_reproducible() {
    let a = scratch("mfg-a");
    let b = scratch("mfg-b");
    for dir in [&a, &b] {
        assert_eq!(run(dir, &["solve-mfg", "--stable-output"], None).status.code(), Some(0));
    }
    for name in ["summary.json", "u.csv", "m.csv", "b.csv", "history.csv"] {
        let x = fs::read(a.join("out").join(name)).unwrap();
        let y = fs::read(b.join("out").join(name)).unwrap();
        assert_eq!(x, y, "{name} differs");
    }
    let s = summary(&a);
    let hash = s["config_hash"].as_str().unwrap().to_string();
    assert_eq!(hash.len(), 64);
    assert!(s.get("timings").is_none());
    assert!(s["mfg"]["fp_residual"].as_f64().unwrap() < 1e-6);
    assert!(s["multistart"]["max_u_distance"].as_f64().unwrap() < 1e-5);
    let u = fs::read_to_string(a.join("out/u.csv")).unwrap();
    assert!(u.lines().any(|l| l.contains(&hash)));
    assert!(u.lines().next().unwrap().starts_with("# levy-mfg "));
}

#[test]
fn csv_values_round_trip() {
    let dir = scratch("roundtrip");
    assert_eq!(run(&dir, &["solve-hjb"], None).status.code(), Some(0));
    let text = fs::read_to_string(dir.join("out/u.csv")).unwrap();
    let row = text.lines().find(|l| !l.starts_with('#') && !l.starts_with('k')).unwrap();
    let v: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
    assert_eq!(format!("{v:.16e}"), row.rsplit(',').next().unwrap());
}

#[test]
fn seed_override_changes_hash_and_threads_do_not() {
    let dir = scratch("seed");
    let cfg = "levy.kind = atomic\nlevy.atoms = [0.015625, 1.0, -0.03125, 0.5]\nlevy.two_sigma = 0\nmc.n_paths = 4000\n";
    run(&dir, &["simulate-sde", "--stable-output"], Some(cfg));
    let first = summary(&dir);
    run(&dir, &["simulate-sde", "--stable-output", "--seed", "7"], Some(cfg));
    let second = summary(&dir);
    assert_ne!(first["config_hash"], second["config_hash"]);
    assert_eq!(second["seed"], 7);
    let threaded = format!("{cfg}mc.threads = 3\n");
    run(&dir, &["simulate-sde", "--stable-output", "--seed", "7"], Some(&threaded));
    assert_eq!(second["sde"], summary(&dir)["sde"]);
}

#[test]
fn remaining_commands_run() {
    for cmd in ["solve-fp", "solve-dual", "simulate-sde"] {
        let dir = scratch(cmd);
        let out = run(&dir, &[cmd], Some("mc.n_paths = 2000\n"));
        assert_eq!(out.status.code(), Some(0), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(summary(&dir)["timings"]["total_seconds"].as_f64().is_some());
    }
}

#[test]
fn verify_all_on_default_config() {
    let dir = scratch("verify");
    let out = run(&dir, &["verify-all", "--stable-output"], None);
    let stdout = String::from_utf8_lossy(&out.stdout);
    print!("{stdout}");
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout.lines().filter(|l| l.contains(": PASS")).count(), 11);
    let s = summary(&dir);
    assert_eq!(s["all_passed"], serde_json::json!(true));
    assert_eq!(s["criteria"].as_array().unwrap().len(), 11);
}
