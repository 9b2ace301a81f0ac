use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use fwlab::manifest::{manifest_path, RunManifest};

fn fwlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fwlab"))
        .args(args)
        .output()
        .expect("spawn fwlab")
}

fn arg(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn manifest(path: &Path) -> RunManifest {
    serde_json::from_str(&fs::read_to_string(manifest_path(path)).unwrap()).unwrap()
}

#[test]
fn solve_slow_start() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("traj.csv");
    let o = fwlab(&["solve", "--p", "3", "--rule", "exact", "--x0", "slow:0.75", "--iters", "1000", "--out", arg(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().next().unwrap(), "t,x1,x2,gamma,h,u,w,y,s");
    let rows = rows(&out);
    assert_eq!(rows.len(), 1001);
    assert_eq!(rows[0][1].parse::<f64>().unwrap(), 0.25);
    assert!((rows[0][2].parse::<f64>().unwrap() - 0.590919).abs() < 1e-6);
    // full-precision decimals
    assert_eq!(rows[0][2].trim_start_matches('-').split('e').next().unwrap().len(), 18);
    let m = manifest(&out);
    assert_eq!(m.command, "solve");
    assert_eq!(m.outputs, vec![out.display().to_string()]);
    assert_eq!(m.config["p"], 3.0);
    assert_eq!(m.config["rule"], "exact");
    assert_eq!(m.config["T"], 1000);
    assert_eq!(m.config["precision"], "double");
}

#[test]
fn solve_from_optimum() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("opt.csv");
    let o = fwlab(&["solve", "--p", "3", "--x0", "point:1,0", "--out", arg(&out)]);
    assert!(o.status.success());
    let rows = rows(&out);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][4].parse::<f64>().unwrap(), 0.0);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    let o = fwlab(&["solve", "--p", "3", "--rule", "short", "--theta", "0.25", "--x0", "slow:0.5", "--out", arg(&out)]);
    assert_eq!(o.status.code(), Some(2));
    let o = fwlab(&["solve", "--p", "3", "--x0", "point:1.2,0", "--out", arg(&out)]);
    assert_eq!(o.status.code(), Some(3));
    let o = fwlab(&["solve", "--p", "3", "--x0", "bogus", "--out", arg(&out)]);
    assert_eq!(o.status.code(), Some(2));
    let o = fwlab(&["solve", "--p", "3", "--x0", "slow:0.5", "--rule", "sideways"]);
    assert_eq!(o.status.code(), Some(2));
    let o = fwlab(&["solve", "--p", "3", "--x0", "slow:0.5", "--precision", "extended:64", "--out", arg(&out)]);
    assert_eq!(o.status.code(), Some(2));
    let o = fwlab(&["constants", "--p", "2.5"]);
    assert_eq!(o.status.code(), Some(2));
    let o = fwlab(&["fixedpoint", "--p", "3", "--u-max", "0.9", "--out", arg(&out)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn solve_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = fwlab(&["solve", "--p", "4", "--x0", "random:17", "--iters", "300", "--out", arg(out)]);
        assert!(o.status.success());
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(manifest(&a).config["seed"], 17);
    let (ma, mb) = (manifest(&a), manifest(&b));
    assert_eq!(ma.config, mb.config);
}

#[test]
fn solve_extended_and_embedded() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ext.csv");
    let o = fwlab(&[
        "solve", "--p", "3", "--x0", "point:0.25,0.5", "--precision", "extended:192", "--iters", "50", "--dim", "4",
        "--out", arg(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = rows(&out);
    assert_eq!(rows.len(), 51);
    // decimals longer than a double can carry
    assert!(rows[10][4].len() > 40);
    assert_eq!(manifest(&out).config["precision"], "extended:192");
}

#[test]
fn constants_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("k.json");
    let o = fwlab(&["constants", "--p", "3", "--out", arg(&out)]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["c_p"].as_f64().unwrap() - 0.8254818).abs() < 1e-7);
    assert!((v["thm_constant"].as_f64().unwrap() - 0.408248).abs() < 1e-6);
    for key in ["p", "q", "alpha", "kappa", "c_p", "d_p", "a_p", "rate_exponent", "thm_constant", "in_theorem_scope"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    let file: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(file, v);
    assert!(manifest_path(&out).exists());

    let o = fwlab(&["constants", "--p", "2.5", "--force"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["in_theorem_scope"], false);
    assert!(String::from_utf8_lossy(&o.stderr).contains("outside theorem scope"));
}

#[test]
fn heatmap_rows_are_feasible() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("h.csv");
    let o = fwlab(&["heatmap", "--p", "3", "--grid", "64", "--target", "1e-4", "--cap", "100000", "--jobs", "2", "--out", arg(&out)]);
    assert!(o.status.success());
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().next().unwrap(), "x1,x2,iters");
    let rows = rows(&out);
    assert!(!rows.is_empty() && rows.len() <= 64 * 64);
    for r in &rows {
        let (x1, x2): (f64, f64) = (r[0].parse().unwrap(), r[1].parse().unwrap());
        assert!((x1.abs().powi(3) + x2.abs().powi(3)).cbrt() < 1.0);
        let it: i64 = r[2].parse().unwrap();
        assert!(it >= 1);
    }
    assert_eq!(manifest(&out).config["grid"], 64);

    let again = dir.path().join("h1.csv");
    let o = fwlab(&["heatmap", "--p", "3", "--grid", "64", "--cap", "100000", "--jobs", "1", "--out", arg(&again)]);
    assert!(o.status.success());
    assert_eq!(fs::read(&out).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn heatmap_cap_sentinel() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("h.csv");
    let o = fwlab(&["heatmap", "--p", "3", "--grid", "16", "--target", "1e-4", "--cap", "3", "--out", arg(&out)]);
    assert!(o.status.success());
    assert!(rows(&out).iter().any(|r| r[2] == "-1"));
}

#[test]
fn fixedpoint_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fp.csv");
    let o = fwlab(&["fixedpoint", "--p", "4", "--u-min", "1e-6", "--u-max", "0.1", "--points", "50", "--out", arg(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().next().unwrap(), "u,y_star,residual");
    let rows = rows(&out);
    assert_eq!(rows.len(), 50);
    for r in &rows {
        assert!(r[2].parse::<f64>().unwrap().abs() <= 1e-12);
    }
    let first: f64 = rows[0][0].parse().unwrap();
    let last: f64 = rows[49][0].parse().unwrap();
    assert!((first - 1e-6).abs() < 1e-18 && (last - 0.1).abs() < 1e-15);
}

#[test]
fn rates_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("rates.json");
    let traj = dir.path().join("rates.csv");
    let o = fwlab(&[
        "rates", "--p", "3", "--iters", "20000", "--out", arg(&out), "--trajectory", arg(&traj), "--record-every", "100",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    for key in ["p", "theta", "mu", "u0", "T", "slope", "expected_slope", "constant_tail", "expected_constant"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    assert_eq!(v["expected_slope"], -1.5);
    assert!((v["slope"].as_f64().unwrap() + 1.5).abs() < 0.05);
    assert_eq!(v["T"], 20000);
    assert_eq!(rows(&traj).len(), 201);
    assert!(manifest_path(&traj).exists());

    let o = fwlab(&["rates", "--p", "5", "--theta", "0.25", "--iters", "20000", "--out", arg(&out)]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["expected_slope"], -2.5);
    assert!((v["upper_bound_slope"].as_f64().unwrap() + 10.0 / 9.0).abs() < 1e-12);
}
