//! End-to-end runs of the `curvflow` binary.

use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn curvflow(args: &[&str], stdin: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_curvflow"))
        .args(args)
        .env_remove("CURVFLOW_OUT_DIR")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("binary runs");
    child.stdin.take().unwrap().write_all(stdin.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn json(bytes: &[u8]) -> Value {
    serde_json::from_slice(bytes).expect("valid JSON")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8(bytes.to_vec()).unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn triangle_is_stable() {
    let out = curvflow(&["stability", "--graph", "complete:3", "--jacobian"], "");
    assert!(out.status.success());
    let v = json(&out.stdout);
    assert_eq!(v["kind"], -1);
    assert_eq!(v["eigenvalues"].as_array().unwrap().len(), 3);
    assert_eq!(v["jacobian"].as_array().unwrap().len(), 3);
}

#[test]
fn non_equilibrium_reports_nulls() {
    let out = curvflow(&["stability", "--graph", "random-example", "--weights", "random-example"], "");
    assert!(out.status.success());
    let v = json(&out.stdout);
    assert!(v["kind"].is_null() && v["eigenvalues"].is_null());
    assert!(v["note"].is_string());
}

#[test]
fn errors_are_json_with_exit_codes() {
    let out = curvflow(&["gen", "nonsense:3"], "");
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out.stderr)["error"], "parse");

    let out = curvflow(&["frobnicate"], "");
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out.stderr)["error"], "usage");

    let out = curvflow(&["sharp", "--graph", "path:3", "--weights", "clockwise"], "");
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out.stderr)["error"], "invalid-argument");
}

#[test]
fn sharpness_of_reference_schemes() {
    let out = curvflow(&["sharp", "--graph", "octahedron", "--weights", "octahedron-equilibrium"], "");
    assert!(out.status.success());
    assert_eq!(json(&out.stdout)["sharp"], true);
    let out = curvflow(&["sharp", "--graph", "random-example", "--weights", "random-example"], "");
    assert_eq!(json(&out.stdout)["sharp"], false);
}

#[test]
fn curvature_csv_has_a_row_per_vertex() {
    let out = curvflow(&["curvature", "--graph", "hypercube:3", "--dim", "2"], "");
    assert!(out.status.success());
    let s = text(&out.stdout);
    let mut lines = s.lines();
    assert_eq!(lines.next(), Some("vertex,K_N,K_upper,N"));
    assert_eq!(lines.count(), 8);
}

#[test]
fn drift_prompt_answers() {
    let args = ["flow", "--graph", "random-example", "--weights", "random-example", "--t-max", "10", "--dt", "2"];
    let stop = curvflow(&args, "A\n");
    assert!(stop.status.success());
    let err = text(&stop.stderr);
    assert!(err.contains("'norm_tolerance' has been exceeded at one or more vertices, at time t = 2 Would you like to:"));
    assert!(err.contains("Please enter A, B or C here:"));
    assert_eq!(text(&stop.stdout).lines().count(), 2);

    let always = curvflow(&args, "B\n");
    assert!(always.status.success());
    assert_eq!(text(&always.stdout).lines().count(), 7);
    assert!(text(&always.stderr).contains("Transition rates have been artificially normalized at time t ="));

    let eof = curvflow(&args, "");
    assert_eq!(text(&eof.stdout), text(&stop.stdout));
}

#[test]
fn checkpoint_resume_matches_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("ck.json");
    let base = ["limit", "--graph", "dumbbell", "--stoch-corr"];
    let mut first = base.to_vec();
    first.extend(["--t-lim", "40", "--checkpoint-interval", "10", "--checkpoint", path_str(&ck)]);
    let partial = curvflow(&first, "");
    assert!(partial.status.success());
    assert_eq!(json(&partial.stdout)["converged"], false);
    assert!(ck.exists());

    let mut resumed = base.to_vec();
    resumed.extend(["--checkpoint", path_str(&ck), "--resume"]);
    let resumed = curvflow(&resumed, "");
    let whole = curvflow(&base, "");
    assert!(resumed.status.success() && whole.status.success());
    assert_eq!(resumed.stdout, whole.stdout);
    assert_eq!(json(&whole.stdout)["converged"], true);
}

#[test]
fn limit_dot_marks_one_way_and_dead_edges() {
    let dir = tempfile::tempdir().unwrap();
    let lim = curvflow(
        &["limit", "--graph", "random-example", "--weights", "random-example", "--dt", "0.1", "--stoch-corr"],
        "",
    );
    assert!(lim.status.success());
    let scheme = dir.path().join("limit.json");
    std::fs::write(&scheme, json(&lim.stdout)["P"].to_string()).unwrap();
    let weights = format!("file:{}", path_str(&scheme));
    let args = ["render", "--graph", "random-example", "--weights", weights.as_str(), "--title", "limit"];
    let first = curvflow(&args, "");
    assert!(first.status.success());
    assert_eq!(first.stdout, curvflow(&args, "").stdout);
    let dot = text(&first.stdout);
    assert!(dot.starts_with("digraph \"limit\" {"));
    assert!(dot.contains("4 -> 3 [color=red, style=dashed, dir=forward"));
    let dead = dot.lines().find(|l| l.trim_start().starts_with("8 -> 9") || l.trim_start().starts_with("9 -> 8"));
    assert!(dead.unwrap().contains("style=dotted"));
}

#[test]
fn batch_writes_one_file_per_run() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["batch", "--graph", "wedge", "--count", "4", "--seed", "3", "--out-dir", path_str(dir.path())];
    let out = curvflow(&args, "");
    assert!(out.status.success());
    let summary = json(&out.stdout);
    assert_eq!(summary["count"], 4);
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 4);
    let mut sequential = args.to_vec();
    sequential.push("--sequential");
    assert_eq!(json(&curvflow(&sequential, "").stdout), summary);
}

#[test]
fn gen_round_trips_through_file_specs() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g.json");
    let out = curvflow(&["gen", "complete:3*path:2", "--out", path_str(&g)], "");
    assert!(out.status.success());
    let spec = format!("file:{}", path_str(&g));
    let again = curvflow(&["gen", spec.as_str()], "");
    assert_eq!(json(&again.stdout), json(std::fs::read(&g).unwrap().as_slice()));
    assert_eq!(json(&again.stdout)["n"], 6);
}
