use std::process::Command;

use serde_json::Value;

fn densilim(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_densilim"))
        .args(args)
        .env_remove("DENSILIM_SEED")
        .output()
        .expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

fn json(args: &[&str]) -> Value {
    let (code, out, err) = densilim(args);
    assert_eq!(code, 0, "{err}");
    serde_json::from_str(&out).unwrap()
}

#[test]
fn half_plane_density() {
    let r = json(&[
        "density", "--set", "x2>0", "--domain", "true", "--at", "0,0",
    ]);
    assert!((r["value"].as_f64().unwrap() - 0.5).abs() < 5e-3);
    assert_eq!(r["converged"], true);
    assert_eq!(r["command"], "density");
    assert!(r["config"]["estimator"]["tol"]["cap"].is_number());
}

#[test]
fn clarke_abs_is_the_unit_interval() {
    let r = json(&["clarke", "--f", "abs(x1)", "--at", "0", "--dim", "1"]);
    let v = r["hull_vertices"].as_array().unwrap();
    assert_eq!(v.len(), 2);
    assert!((v[0][0].as_f64().unwrap() + 1.0).abs() <= 1e-3);
    assert!((v[1][0].as_f64().unwrap() - 1.0).abs() <= 1e-3);
}

#[test]
fn singular_field_limits() {
    let r = json(&[
        "aplim",
        "--f",
        "1/sqrt(atan2(x2,x1))",
        "--at",
        "0,0",
        "--atan2-range",
        "0..2pi",
    ]);
    assert_eq!(r["f_upper"], "+inf");
    assert!(r["ap_limit"].is_null());
    assert!((r["f_lower"].as_f64().unwrap() - 0.39894).abs() < 2e-2);
    assert_eq!(r["config"]["atan2_range"], "0..2pi");
    let named = json(&["aplim", "--f", "polar-singular", "--at", "0,0"]);
    assert_eq!(named["f_upper"], "+inf");
}

#[test]
fn syntax_errors_exit_with_two() {
    let (code, _, err) = densilim(&["aplim", "--f", "max(x1,", "--at", "0,0"]);
    assert_eq!(code, 2);
    assert!(err.contains("column 8"), "{err}");
    let (code, _, _) = densilim(&["density", "--at", "0,0"]);
    assert_eq!(code, 2);
}

#[test]
fn oscillating_density_exits_with_three() {
    let (code, out, _) = densilim(&[
        "density",
        "--set",
        "sin(3*log(x1^2 + x2^2)) > 0",
        "--at",
        "0,0",
    ]);
    assert_eq!(code, 3);
    let r: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(r["converged"], false);
}

#[test]
fn seed_from_environment_wins() {
    let r = json(&[
        "density",
        "--set",
        "half-plane",
        "--at",
        "0,0",
        "--seed",
        "7",
    ]);
    assert_eq!(r["config"]["estimator"]["quad"]["seed"], 7);
    let out = Command::new(env!("CARGO_BIN_EXE_densilim"))
        .args([
            "density",
            "--set",
            "half-plane",
            "--at",
            "0,0",
            "--seed",
            "7",
        ])
        .env("DENSILIM_SEED", "11")
        .output()
        .unwrap();
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["config"]["estimator"]["quad"]["seed"], 11);
}

#[test]
fn gauss_green_sweep_csv() {
    let (code, out, _) = densilim(&[
        "gauss-green",
        "--f",
        "quadratic",
        "--phi",
        "x2,x1",
        "--domain",
        "unit-square",
        "--sweep",
        "32,64",
        "--csv",
    ]);
    assert_eq!(code, 0);
    let lines: Vec<&str> = out.lines().filter(|l| !l.is_empty()).collect();
    assert_eq!(lines[0], "h,residual");
    assert_eq!(lines.len(), 3);
    let (code, _, _) = densilim(&[
        "gauss-green",
        "--f",
        "1",
        "--phi",
        "x1,x2",
        "--domain",
        "x1^2 + x2^2 < 1",
    ]);
    assert_eq!(code, 2);
}

#[test]
fn thread_count_does_not_change_reports() {
    let args = ["jump", "--f", "step-oblique", "--at", "0,0"];
    let one = densilim(&[&args[..], &["--threads", "1"]].concat()).1;
    let eight = densilim(&[&args[..], &["--threads", "8"]].concat()).1;
    assert_eq!(one, eight);
    let r: Value = serde_json::from_str(&one).unwrap();
    assert_eq!(r["is_jump"], true);
}

#[test]
fn calculus_rule_flag() {
    let r = json(&[
        "clarke", "--f", "x-abs-x", "--g", "abs", "--rule", "sum:1,-1", "--at", "0",
    ]);
    assert_eq!(r["holds"], true);
    let r = json(&["clarke", "--f", "abs", "--rule", "scale:-2", "--at", "0"]);
    assert_eq!(r["equality"], true);
}

#[test]
fn vanishing_demo() {
    let r = json(&[
        "demo-vanishing",
        "--f",
        "cos-mix",
        "--e1",
        "cusp-left",
        "--e2",
        "cusp",
        "--at",
        "0,0",
    ]);
    assert!(r["value"].as_f64().unwrap().abs() <= 1e-3);
}
