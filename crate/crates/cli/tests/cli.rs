use std::path::Path;
use std::process::{Command, Output};

fn cafe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cafe"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let p = dir.join("cfg.json");
    std::fs::write(
        &p,
        r#"{
  "n_centers": 4,
  "horizon": 6,
  "budget_kg": 2400,
  "v": 1.0,
  "seeds": [0, 1],
  "policies": ["cafe", "smu", "amn"],
  "task": {"samples_per_center": 40, "test_samples": 100, "n_classes": 4, "dim": 5},
  "final_window": 3
}"#,
    )
    .unwrap();
    p
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn synth_trace_to_file_and_stdout() {
    let tmp = tempfile::tempdir().unwrap();
    let f = tmp.path().join("t.csv");
    let out = cafe(&[
        "synth-trace",
        "--centers",
        "3",
        "--horizon",
        "5",
        "--profile",
        "random_walk",
        "--seed",
        "2",
        "--out",
        f.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let text = read(&f);
    assert!(text.starts_with("slot,center,intensity_kg_per_kwh\n"));
    assert_eq!(text.lines().count(), 1 + 15);
    let out = cafe(&[
        "synth-trace",
        "--centers",
        "3",
        "--horizon",
        "5",
        "--profile",
        "random_walk",
        "--seed",
        "2",
    ]);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), text);
    assert_eq!(
        code(&cafe(&[
            "synth-trace",
            "--centers",
            "3",
            "--horizon",
            "5",
            "--profile",
            "weekly"
        ])),
        1
    );
}

#[test]
fn run_writes_artifacts_and_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        let out = cafe(&[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--v",
            "5",
            "--out",
            dir.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in [
        "metrics.csv",
        "summary.csv",
        "slot_diagnostics.csv",
        "config.json",
        "trace.csv",
        "bounds_cafe_0.txt",
        "bounds_cafe_1.txt",
    ] {
        assert_eq!(read(a.join(f)), read(b.join(f)), "{f}");
    }
    let metrics = read(a.join("metrics.csv"));
    assert!(metrics.starts_with(
        "policy,seed,slot,selection_bits,utility,carbon_kg,cum_carbon_kg,queue,objective,train_loss,test_acc\n"
    ));
    assert_eq!(metrics.lines().count(), 1 + 3 * 2 * 6);
    let summary = read(a.join("summary.csv"));
    assert!(summary.starts_with(
        "policy,avg_utility,avg_carbon_kg,total_carbon_kg,final_acc,thm1_pass,thm1_rhs_main,thm1_rhs_appendix\n"
    ));
    assert_eq!(summary.lines().count(), 4);
    let echo: serde_json::Value = serde_json::from_str(&read(a.join("config.json"))).unwrap();
    assert_eq!(echo["v"], 5.0);
    assert_eq!(echo["n_centers"], 4);
    assert!(read(a.join("bounds_cafe_0.txt")).contains("thm1_rhs_appendix: "));
    assert!(!a.join("errors.txt").exists());

    let out = cafe(&["validate", a.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("summary_consistent: true"));
    assert!(text.contains("utility_bound: skipped"));

    let tampered = summary.replacen("cafe,", "cafe,1", 1);
    std::fs::write(a.join("summary.csv"), tampered).unwrap();
    assert_eq!(code(&cafe(&["validate", a.to_str().unwrap()])), 3);
}

#[test]
fn config_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let out_dir = tmp.path().join("o");
    let o = out_dir.to_str().unwrap();
    let c = cfg.to_str().unwrap();
    assert_eq!(code(&cafe(&["run", "--config", c, "--v", "-1", "--out", o])), 1);
    assert_eq!(
        code(&cafe(&[
            "run",
            "--config",
            c,
            "--policies",
            "cafe,nope",
            "--out",
            o
        ])),
        1
    );
    assert_eq!(code(&cafe(&["run", "--config", c])), 1);
    assert_eq!(code(&cafe(&["run", "--config", "/no/such.json", "--out", o])), 1);
    assert_eq!(code(&cafe(&["run", "--unknown-flag"])), 1);
    assert!(!out_dir.exists());

    let bad = tmp.path().join("bad.csv");
    std::fs::write(&bad, "slot,center,intensity_kg_per_kwh\n0,0,0.1\n0,0,0.2\n").unwrap();
    let out = cafe(&["run", "--config", c, "--trace", bad.to_str().unwrap(), "--out", o]);
    assert_eq!(code(&out), 1);
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("row 3") && err.contains("duplicate"), "{err}");
}

#[test]
fn validate_missing_artifacts_is_runtime_error() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&cafe(&["validate", tmp.path().to_str().unwrap()])), 2);
}

#[test]
fn oracle_artifacts_enable_utility_bound() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let dir = tmp.path().join("r");
    let out = cafe(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--oracle-artifacts",
        "--seeds",
        "3",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("oracle_3.txt").is_file());
    let out = cafe(&["validate", dir.to_str().unwrap()]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("utility_rhs: "), "{text}");
}

#[test]
fn sweep_writes_cells() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let dir = tmp.path().join("s");
    let out = cafe(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--seeds",
        "0",
        "--v-grid",
        "0.5,5",
        "--budget-grid",
        "1200,2400",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary = read(dir.join("sweep_summary.csv"));
    assert_eq!(summary.lines().count(), 1 + 4 * 3);
    assert!(dir.join("cell_003").join("metrics.csv").is_file());
    assert!(summary.lines().nth(1).unwrap().starts_with("cell_000,0.5,"));
}

#[test]
fn solve_prints_json() {
    let tmp = tempfile::tempdir().unwrap();
    let req = tmp.path().join("req.json");
    std::fs::write(
        &req,
        r#"{"gradients": [[1, 0], [0, 1], [0.5, 0.5]], "intensities": [0.2, 0.4, 0.3],
            "static_kwh": 40, "active_kwh": 760, "q": 0.001, "v": 1.0}"#,
    )
    .unwrap();
    let out = cafe(&["solve", req.to_str().unwrap(), "--solver", "det_double_greedy"]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["solver"], "det_double_greedy");
    assert_eq!(v["selection_bits"].as_str().unwrap().len(), 3);

    std::fs::write(&req, r#"{"gradients": [[1]], "intensities": [0.2, 0.3], "static_kwh": 1, "active_kwh": 1, "q": 0, "v": 1}"#).unwrap();
    assert_eq!(code(&cafe(&["solve", req.to_str().unwrap()])), 1);
}
