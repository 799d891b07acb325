use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn zeff(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zeff"))
        .args(args)
        .output()
        .expect("run zeff")
}

fn config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const IDVS_50: &str = r#"{
  "$schema": "zeff-run/1",
  "base": { "s_base": 200e6, "v_base": 220e3, "f1": 50.0 },
  "device": { "kind": "idvs", "x": 0.48, "x_over_r": 10.0 }
}"#;

#[test]
fn scan_writes_one_row_per_point_and_is_reproducible() {
    let d = tempfile::tempdir().unwrap();
    let cfg = config(d.path(), "idvs.json", IDVS_50);
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    for out in [&a, &b] {
        let o = zeff(&[
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--stable-output",
            "scan",
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let text = std::fs::read_to_string(a.join("spectrum.csv")).unwrap();
    assert_eq!(text.lines().count(), 31);
    assert_eq!(
        text,
        std::fs::read_to_string(b.join("spectrum.csv")).unwrap()
    );
    assert_eq!(
        std::fs::read(a.join("run.json")).unwrap(),
        std::fs::read(b.join("run.json")).unwrap()
    );
    assert!(a.join("spectrum.json").exists());
}

#[test]
fn zero_points_names_the_field() {
    let d = tempfile::tempdir().unwrap();
    let cfg = config(d.path(), "idvs.json", IDVS_50);
    let o = zeff(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        d.path().to_str().unwrap(),
        "--points",
        "0",
        "scan",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("scan.n_points"), "{}", stderr(&o));
}

#[test]
fn bad_config_reports_path() {
    let d = tempfile::tempdir().unwrap();
    let cfg = config(
        d.path(),
        "bad.json",
        r#"{ "scan": { "n_points": "many" } }"#,
    );
    let o = zeff(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        d.path().to_str().unwrap(),
        "scan",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("scan.n_points"), "{}", stderr(&o));
    let cfg = config(d.path(), "schema.json", r#"{ "$schema": "other/9" }"#);
    let o = zeff(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        d.path().to_str().unwrap(),
        "analytic",
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn idvs_fit_passes_at_hv() {
    let d = tempfile::tempdir().unwrap();
    let cfg = config(d.path(), "idvs.json", IDVS_50);
    let out = d.path().join("o");
    let o = zeff(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "fit",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let f = json(out.join("fit.json"));
    assert!((f["x_eff"].as_f64().unwrap() - 0.48).abs() < 1e-3);
    assert!((f["r_eff"].as_f64().unwrap() - 0.048).abs() < 1e-3);
    assert_eq!(f["pass"], true);
    assert_eq!(f["location"], "HV");
    let overlay = std::fs::read_to_string(out.join("fit_overlay.csv")).unwrap();
    assert!(overlay.starts_with("f_hz,mag_full,mag_th"));
}

#[test]
fn spectrum_without_yqd_is_rejected() {
    let d = tempfile::tempdir().unwrap();
    let s = config(
        d.path(),
        "s.csv",
        "f_hz,y_dd_re,y_dd_im\n5,0.1,0.2\n10,0.1,0.2\n20,0.1,0.2\n",
    );
    let o = zeff(&[
        "--out",
        d.path().to_str().unwrap(),
        "comply",
        "--spectrum",
        s.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn tight_eps_fails_compliance_on_gfm() {
    let d = tempfile::tempdir().unwrap();
    let cfg = config(
        d.path(),
        "gfm.json",
        r#"{ "device": { "kind": "droop_gfm", "grid_branch_x": 0.30 }, "scan": { "n_points": 8 } }"#,
    );
    let out = d.path().join("o");
    let o = zeff(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--eps",
        "1e-9",
        "fit",
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let f = json(out.join("fit.json"));
    assert_eq!(f["eps_satisfied"], false);
    assert_eq!(f["pass"], false);
    assert_eq!(f["in_range"], true);
}

#[test]
fn pv_on_lossless_source_reaches_unit_power() {
    let d = tempfile::tempdir().unwrap();
    let cfg = config(
        d.path(),
        "pv.json",
        r#"{ "device": { "kind": "idvs", "x": 0.5, "r": 0.0 }, "pv": { "base_load": [0.1, 0.0], "step": [0.02, 0.0] } }"#,
    );
    let out = d.path().join("o");
    let o = zeff(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "pv",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = json(out.join("pv_summary.json"));
    assert!((s["p_max"].as_f64().unwrap() - 1.0).abs() < 0.01);
    let csv = std::fs::read_to_string(out.join("pv_curve.csv")).unwrap();
    assert!(csv.starts_with("p_load_pu,v_poi_pu\n"));
}

#[test]
fn step_on_default_gfm_is_within_five_percent() {
    let d = tempfile::tempdir().unwrap();
    let cfg = config(
        d.path(),
        "gfm.json",
        r#"{ "device": { "kind": "droop_gfm", "grid_branch_x": 0.30 } }"#,
    );
    let out = d.path().join("o");
    let o = zeff(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "step",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = json(out.join("step_summary.json"));
    assert!(s["rms_error_q"].as_f64().unwrap() <= 0.05);
    assert!(s.get("rms_error_p").is_some() && s.get("window_s").is_some());
    assert!(out.join("step_full.csv").exists() && out.join("step_equiv.csv").exists());
}

#[test]
fn case_one_has_two_sources_and_one_gfm() {
    let d = tempfile::tempdir().unwrap();
    let cfg = config(d.path(), "case.json", r#"{ "case": { "id": "I" } }"#);
    let out = d.path().join("o");
    let o = zeff(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "case",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = json(out.join("case_I.json"));
    let kinds: Vec<&str> = r["variants"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v["kind"].as_str().unwrap())
        .collect();
    assert_eq!(kinds.iter().filter(|k| **k == "idvs").count(), 2);
    assert_eq!(kinds.iter().filter(|k| **k == "gfm_idealistic").count(), 1);
}

#[test]
fn case_parameters_out_of_range() {
    let d = tempfile::tempdir().unwrap();
    let cfg = config(
        d.path(),
        "case.json",
        r#"{ "case": { "id": "II", "params": { "z_gfm": [0.5] } } }"#,
    );
    let o = zeff(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        d.path().to_str().unwrap(),
        "case",
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn analytic_outputs() {
    let d = tempfile::tempdir().unwrap();
    let cfg = config(
        d.path(),
        "zero.json",
        r#"{ "analytic": { "v1": 1.0, "v2": 1.0, "delta1_deg": 0.0, "delta2_deg": 0.0, "t_end": 0.01 } }"#,
    );
    let out = d.path().join("z");
    let o = zeff(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "analytic",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(out.join("analytic_pq.csv")).unwrap();
    let rows: Vec<&str> = text
        .lines()
        .skip(1)
        .map(|l| l.split_once(',').unwrap().1)
        .collect();
    assert!(rows.len() > 10);
    assert!(rows.iter().all(|r| *r == rows[0]), "{rows:?}");

    let cfg = config(
        d.path(),
        "empty.json",
        r#"{ "analytic": { "t_end": 0.0 } }"#,
    );
    let o = zeff(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "analytic",
    ]);
    assert_eq!(o.status.code(), Some(1));

    let cfg = config(
        d.path(),
        "lossless.json",
        r#"{ "analytic": { "r": 0.0, "t_end": 0.01 } }"#,
    );
    let out = d.path().join("l");
    let o = zeff(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "analytic",
    ]);
    assert!(o.status.success());
    assert!(stderr(&o).contains("r = 0"));
    let meta = json(out.join("run.json"));
    assert_eq!(meta["details"]["warnings"].as_array().unwrap().len(), 1);
}
