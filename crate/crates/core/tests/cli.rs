use std::process::{Command, Output};

use serde_json::Value;

fn yangyang(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_yangyang"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("valid JSON on stdout")
}

#[test]
fn solve_reports_grid_and_diagnostics() {
    let out = yangyang(&["solve", "--c", "1", "--h", "1", "--T", "0.1"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    for key in [
        "params",
        "qhat",
        "iterations",
        "contraction_estimate",
        "residual_norm",
        "grid",
    ] {
        assert!(!v[key].is_null(), "missing {key}");
    }
    assert!(v["residual_norm"].as_f64().unwrap() <= 1e-9);
    let grid = v["grid"].as_array().unwrap();
    assert!(grid.len() > 100);
    let qhat = v["qhat"].as_f64().unwrap();
    assert!((1.0..=2.0 * 1.8101f64.sqrt()).contains(&qhat));
}

#[test]
fn check_bounds_brackets_qhat() {
    let out = yangyang(&["check-bounds", "--c", "1", "--h", "1", "--T", "0.1"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let (lo, q, hi) = (
        v["qhat_lower"].as_f64().unwrap(),
        v["qhat"].as_f64().unwrap(),
        v["qhat_upper"].as_f64().unwrap(),
    );
    assert!(lo < q && q < hi);
    assert!(v["V_h"].as_f64().unwrap() <= 0.1 * 2f64.ln());
    assert!(v["z_h"].as_f64().unwrap() >= v["w"].as_f64().unwrap());
}

#[test]
fn impenetrable_sweep_is_exact() {
    let out = yangyang(&[
        "lowt-verify",
        "--c",
        "inf",
        "--h",
        "1",
        "--t-list",
        "0.1,0.05,0.02,0.01",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    for q in v["qhat_list"].as_array().unwrap() {
        assert!((q.as_f64().unwrap() - 1.0).abs() <= 1e-12);
    }
    for r in v["sup_residual2"].as_array().unwrap() {
        assert!(r.as_f64().unwrap() <= 1e-9);
    }
}

#[test]
fn csv_output_has_header_and_rows() {
    let out = yangyang(&[
        "lowt-verify",
        "--c",
        "1",
        "--h",
        "1",
        "--t-list",
        "0.1,0.07,0.05,0.035",
        "--format",
        "csv",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("T,qhat,sup_residual0,sup_residual2"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 4);
    for row in rows {
        assert!(row.split(',').all(|f| f.parse::<f64>().is_ok()), "{row}");
    }
}

#[test]
fn config_file_and_out_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    let out_path = dir.path().join("fe.json");
    std::fs::write(&cfg, "# free energy\nc = 2\nh = 0.5\nT = 0.02\n").unwrap();
    let out = yangyang(&[
        "free-energy",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_slice(&std::fs::read(&out_path).unwrap()).unwrap();
    assert_eq!(v["T"].as_f64(), Some(0.02));
    assert!(v["f"].as_f64().unwrap() < 0.0);

    // Flags take precedence over the file.
    let out = yangyang(&["free-energy", "--config", cfg.to_str().unwrap(), "--T", "0.04"]);
    assert_eq!(json(&out)["T"].as_f64(), Some(0.04));
}

#[test]
fn det_reports_positivity() {
    let out = yangyang(&["det", "--c", "2", "--alpha", "1", "--seed", "7"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["positivity"]["seed"].as_u64(), Some(7));
    assert_eq!(v["positivity"]["passed"].as_bool(), Some(true));
    let det = &v["log_det"];
    assert!((det["series"].as_f64().unwrap() - det["dense"].as_f64().unwrap()).abs() <= 1e-6);
}

#[test]
fn exit_codes() {
    assert_eq!(yangyang(&["--help"]).status.code(), Some(0));
    assert_eq!(yangyang(&["--version"]).status.code(), Some(0));
    assert_eq!(yangyang(&["solve", "--c", "1", "--h", "1"]).status.code(), Some(3));
    assert_eq!(
        yangyang(&["solve", "--c", "1", "--h", "-1", "--T", "0.1"])
            .status
            .code(),
        Some(3)
    );
    assert_eq!(
        yangyang(&["solve", "--c", "abc", "--h", "1", "--T", "0.1"])
            .status
            .code(),
        Some(3)
    );
    assert_eq!(yangyang(&["warp", "--c", "1"]).status.code(), Some(3));
    assert_eq!(
        yangyang(&["free-energy", "--config", "/nonexistent/x.cfg"])
            .status
            .code(),
        Some(3)
    );
    // Too few temperatures for the order fit.
    assert_eq!(
        yangyang(&["lowt-verify", "--c", "1", "--h", "1", "--t-list", "0.1,0.05"])
            .status
            .code(),
        Some(3)
    );
    // Valid input the dense solver refuses to discretize.
    assert_eq!(
        yangyang(&["solve", "--c", "1", "--h", "1", "--T", "1e6"]).status.code(),
        Some(1)
    );
    assert_eq!(
        yangyang(&["solve", "--c", "1", "--h", "1", "--T", "1e-300"])
            .status
            .code(),
        Some(1)
    );
}
