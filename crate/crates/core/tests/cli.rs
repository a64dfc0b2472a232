use std::path::Path;
use std::process::{Command, Output};

use hmpc::cli::VariantReport;
use hmpc::controllers::ControllerVariant;
use hmpc::sim::read_trace_file;

const SHORT_RUN: &str = r#"
[experiment]
duration = 12

[horizons]
smpc = 15
"#;

fn hmpc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hmpc")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("experiment.toml");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn writes_one_trace_per_variant_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SHORT_RUN);
    let out = dir.path().join("out");
    let run = hmpc(&["--config", &config, "--out", out.to_str().unwrap()]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let summary = String::from_utf8_lossy(&run.stdout);
    for variant in ControllerVariant::ALL {
        assert!(summary.contains(variant.id()), "{summary}");
        let trace = read_trace_file(&out.join(format!("{}_trace.csv", variant.id()))).unwrap();
        assert_eq!(trace.steps(), 12);
        assert!(trace.failure.is_none());
    }
    let reports: Vec<VariantReport> =
        serde_json::from_str(&std::fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    let order: Vec<_> = reports.iter().map(|r| r.controller).collect();
    assert_eq!(order, ControllerVariant::ALL.to_vec());
    assert!(reports.iter().all(|r| r.metrics.completed && r.metrics.steps == 12));
}

#[test]
fn controller_list_and_horizon_override() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SHORT_RUN);
    let out = dir.path().join("subset");
    let run = hmpc(&[
        "--config",
        &config,
        "--controller",
        "smpc,hmpc-robust,smpc",
        "--horizon-smpc",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let mut files: Vec<_> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    files.sort();
    assert_eq!(files, ["hmpc-robust_trace.csv", "metrics.json", "smpc_trace.csv"]);

    // A different single-layer horizon changes its trace.
    let long_out = dir.path().join("long");
    let run = hmpc(&["--config", &config, "--controller", "smpc", "--out", long_out.to_str().unwrap()]);
    assert!(run.status.success());
    let short = std::fs::read(out.join("smpc_trace.csv")).unwrap();
    let long = std::fs::read(long_out.join("smpc_trace.csv")).unwrap();
    assert_ne!(short, long);
}

#[test]
fn invalid_config_exits_one_without_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "[horizons]\nnu = 0\n");
    let out = dir.path().join("never");
    let run = hmpc(&["--config", &config, "--out", out.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&run.stderr).contains("horizons.nu"));
    assert!(!out.exists());

    let config = write_config(dir.path(), "[horizons]\nsmpc = 10\nbogus = 1\n");
    let run = hmpc(&["--config", &config, "--out", out.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&run.stderr).contains("line 3"), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(!out.exists());
}

#[test]
fn bad_arguments_exit_one() {
    assert_eq!(hmpc(&["--controller", "mpc"]).status.code(), Some(1));
    assert_eq!(hmpc(&["--horizon-smpc", "0"]).status.code(), Some(1));
    assert_eq!(hmpc(&["--config", "/nonexistent/experiment.toml"]).status.code(), Some(1));
    assert_eq!(hmpc(&["--help"]).status.code(), Some(0));
}

#[test]
fn solver_failure_exits_two_with_truncated_trace() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &format!("{SHORT_RUN}\n[solver]\nmax_iter = 1\n"));
    let out = dir.path().join("failed");
    let run = hmpc(&["--config", &config, "--controller", "hmpc", "--out", out.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(2));
    let trace = read_trace_file(&out.join("hmpc_trace.csv")).unwrap();
    assert!(trace.failure.is_some());
    assert_eq!(trace.steps(), 0);
}
