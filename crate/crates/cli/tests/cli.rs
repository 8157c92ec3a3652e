use std::path::Path;
use std::process::{Command, Output};

fn qflow(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qflow"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("QFLOW_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SMALL_ROTATION: &str = r#"{
  "schema": 1,
  "id": "small-rotation",
  "d": 1,
  "hamiltonian": [[1.0, 0.0], [0.0, 1.0]],
  "tau": 0.4,
  "k_list": [8, 16, 32],
  "truncation": {"multiplier": 6.0, "minimum": 20},
  "offsets": [{"label": "origin", "tag": "graph", "u": [0.0, 0.0], "w": [0.0, 0.0]}],
  "thresholds": {"ratio_tolerance": 1e-9}
}"#;

#[test]
fn identities_pass_and_write_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = qflow(
        &["identities", "--samples", "60", "--seed", "3"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("PASS polar_reconstruction"));
    assert!(text.trim_end().ends_with("PASS identities"));
    let csv = std::fs::read_to_string(dir.path().join("identities-seed-3.csv")).unwrap();
    assert!(csv.starts_with("scenario,k,quantity,model_re,model_im,pred_re,pred_im,rel_err,gate\n"));
    let json: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("identities-seed-3.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(json["suite"], "identities");
}

#[test]
fn reruns_are_bit_identical_across_job_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(qflow(
        &[
            "identities",
            "--samples",
            "40",
            "--seed",
            "9",
            "--jobs",
            "1"
        ],
        a.path()
    )
    .status
    .success());
    assert!(qflow(
        &[
            "identities",
            "--samples",
            "40",
            "--seed",
            "9",
            "--jobs",
            "3"
        ],
        b.path()
    )
    .status
    .success());
    let read = |d: &Path| std::fs::read(d.join("identities-seed-9.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
}

#[test]
fn json_scenario_file_and_svg() {
    let dir = tempfile::tempdir().unwrap();
    let sc = dir.path().join("small.json");
    std::fs::write(&sc, SMALL_ROTATION).unwrap();
    let out = dir.path().join("out");
    let o = qflow(
        &["kernel-sweep", "--scenario", sc.to_str().unwrap(), "--svg"],
        &out,
    );
    assert!(
        o.status.success(),
        "{}{}",
        stdout(&o),
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(out.join("kernel-sweep-small-rotation.csv").exists());
    // All relative errors sit at round-off, so no fit has points to draw.
    assert!(!out.join("kernel-sweep-small-rotation.svg").exists());
}

#[test]
fn builtin_szego_scenario_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = qflow(&["kernel-sweep", "--scenario", "szego-kernel"], dir.path());
    assert!(o.status.success(), "{}", stdout(&o));
}

#[test]
fn trace_sweep_writes_svg() {
    let dir = tempfile::tempdir().unwrap();
    let sc = dir.path().join("trace.toml");
    let text = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../scenarios/rotation-trace.toml"
    ))
    .unwrap()
    .replace("k_list = [16, 32, 64, 128, 256]", "k_list = [8, 16, 32]")
    .replace("trace_k = 256", "trace_k = 32")
    .replace("trace_tolerance = 0.10", "trace_tolerance = 0.5");
    std::fs::write(&sc, text).unwrap();
    let o = qflow(
        &["trace-sweep", "--scenario", sc.to_str().unwrap(), "--svg"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stdout(&o));
    let svg = std::fs::read_to_string(dir.path().join("trace-sweep-rotation-trace.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
}

#[test]
fn failing_thresholds_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let sc = dir.path().join("strict.json");
    // A slope range on an exact prediction cannot be met: the fit is undefined.
    let strict = SMALL_ROTATION.replace(
        r#""w": [0.0, 0.0]}"#,
        r#""w": [0.0, 0.0], "slope_range": [-1.3, -0.7]}"#,
    );
    std::fs::write(&sc, strict).unwrap();
    let o = qflow(
        &["kernel-sweep", "--scenario", sc.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL slope:origin: undefined"));
}

#[test]
fn input_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = qflow(&["identities", "--samples", "0"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("at least one sample"));
    let o = qflow(
        &["kernel-sweep", "--scenario", "no-such-scenario"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    let o = qflow(&["identities", "--jobs", "0"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn degenerate_trace_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let sc = dir.path().join("degenerate.toml");
    let text = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../scenarios/rotation-trace.toml"
    ))
    .unwrap()
    .replace("tau = 0.7", "tau = 0.0");
    std::fs::write(&sc, text).unwrap();
    let o = qflow(
        &["trace-sweep", "--scenario", sc.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("degenerate"));
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_qflow"))
        .args(["stationary-phase", "--samples", "20", "--seed", "1"])
        .env("QFLOW_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(dir.path().join("stationary-phase-seed-1.csv").exists());
}

#[test]
fn lists_builtin_scenarios() {
    let dir = tempfile::tempdir().unwrap();
    let o = qflow(&["scenarios"], dir.path());
    assert!(o.status.success());
    assert!(stdout(&o).lines().any(|l| l == "rotation-trace"));
}
