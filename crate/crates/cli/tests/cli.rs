use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hybrid-orbit"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn run(args: &[&str], cfg: &Path, out: &Path) -> Output {
    bin()
        .args(args)
        .arg("--config")
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn write_config(dir: &TempDir, text: &str) -> PathBuf {
    let p = dir.path().join("config.json");
    fs::write(&p, text).unwrap();
    p
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn assert_ok(o: &Output) {
    assert!(
        o.status.success(),
        "exit {:?}\nstderr: {}",
        o.status.code(),
        String::from_utf8_lossy(&o.stderr)
    );
    let summary: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["status"], "ok");
    assert_eq!(summary["schema_version"], 1);
}

fn error_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stderr).unwrap_or_else(|e| {
        panic!(
            "stderr is not JSON ({e}): {}",
            String::from_utf8_lossy(&o.stderr)
        )
    })
}

#[test]
fn hopper_five_cycles_have_ten_events() {
    let out = TempDir::new().unwrap();
    let o = run(&["simulate"], &config("hopper_simulate.json"), out.path());
    assert_ok(&o);
    let csv = fs::read_to_string(out.path().join("trace.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,domain_id,x_1,x_2,x_3,x_4,event_flag"
    );
    let flagged = lines.filter(|l| l.ends_with(",1")).count();
    assert_eq!(flagged, 10);
    let ev = read_json(&out.path().join("events.json"));
    assert_eq!(ev["event_count"], 10);
    let names: Vec<&str> = ev["events"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["guard_name"].as_str().unwrap())
        .collect();
    assert!(names.chunks(2).all(|c| c == ["touchdown", "liftoff"]));
}

#[test]
fn zero_horizon_writes_an_empty_trace() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, r#"{ "model": "hopper", "horizon": { "time": 0.0 } }"#);
    let o = run(&["simulate"], &cfg, &dir.path().join("out"));
    assert_ok(&o);
    let csv = fs::read_to_string(dir.path().join("out/trace.csv")).unwrap();
    assert_eq!(csv, "t,domain_id,x_1,x_2,x_3,x_4,event_flag\n");
    assert_eq!(
        read_json(&dir.path().join("out/events.json"))["event_count"],
        0
    );
}

#[test]
fn unknown_model_exits_two() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        r#"{ "model": "unicycle", "horizon": { "time": 1.0 } }"#,
    );
    let o = run(&["simulate"], &cfg, dir.path());
    assert_eq!(o.status.code(), Some(2));
    let e = error_json(&o);
    assert_eq!(e["error"]["code"], "UNKNOWN_MODEL");
    assert_eq!(e["error"]["exit_code"], 2);
    assert_eq!(e["schema_version"], 1);
}

#[test]
fn config_errors_are_json() {
    let dir = TempDir::new().unwrap();
    let cases = [
        (
            r#"{ "model": "hopper", "params": { "spring": 1 } }"#,
            "INVALID_CONFIG",
        ),
        (r#"{ "model": "hopper", "colour": "red" }"#, "CONFIG_PARSE"),
        (r#"{ "model": "hopper" "#, "CONFIG_PARSE"),
        (
            r#"{ "schema_version": 9, "model": "hopper" }"#,
            "INVALID_CONFIG",
        ),
    ];
    for (text, code) in cases {
        let cfg = write_config(&dir, text);
        let o = run(&["simulate"], &cfg, dir.path());
        assert_eq!(o.status.code(), Some(2), "{text}");
        assert_eq!(error_json(&o)["error"]["code"], code, "{text}");
    }
    let o = run(&["simulate"], &dir.path().join("missing.json"), dir.path());
    assert_eq!(error_json(&o)["error"]["code"], "CONFIG_IO");
    let o = bin().args(["simulate", "--bogus"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_json(&o)["error"]["code"], "USAGE");
}

#[test]
fn invalid_model_parameters_exit_two() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        r#"{ "model": "hopper", "params": { "a": 0.5 }, "horizon": { "time": 1.0 } }"#,
    );
    let o = run(&["simulate"], &cfg, dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_json(&o)["error"]["category"], "config");
}

#[test]
fn hopper_reduce_is_exact_with_r_one() {
    let out = TempDir::new().unwrap();
    let o = run(
        &["analyze", "reduce"],
        &config("hopper_reduce.json"),
        out.path(),
    );
    assert_ok(&o);
    let r = read_json(&out.path().join("reduction.json"));
    assert_eq!(r["verdict"], "ExactCertified");
    assert_eq!(r["r"], 1);
    let y = r["orbit"]["coords"][0].as_f64().unwrap();
    assert!((y - 1.087).abs() < 5e-3, "{y}");
    let csv = fs::read_to_string(out.path().join("profile.csv")).unwrap();
    assert!(csv.starts_with("cycle,total,transverse,tangential\n"));
}

#[test]
fn halfturn_poincare_reports_lambda_squared() {
    let out = TempDir::new().unwrap();
    let o = run(
        &["analyze", "poincare"],
        &config("halfturn_poincare.json"),
        out.path(),
    );
    assert_ok(&o);
    let r = read_json(&out.path().join("poincare.json"));
    let lam = r["multipliers"][0]["re"].as_f64().unwrap();
    assert!((lam - 0.36).abs() < 1e-6, "{lam}");
    assert!((r["orbit"]["coords"][0].as_f64().unwrap() - 1.0).abs() < 1e-8);
}

#[test]
fn missing_base_point_exits_two() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        r#"{ "model": "halfturn", "section": { "domain": 0, "coordinate": 0, "direction": -1.0 } }"#,
    );
    let o = run(&["analyze", "poincare"], &cfg, dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_json(&o)["error"]["code"], "MISSING_BASE_POINT");
}

#[test]
fn halfturn_one_cycle_deadbeat() {
    let out = TempDir::new().unwrap();
    let o = run(
        &["control", "deadbeat"],
        &config("halfturn_deadbeat.json"),
        out.path(),
    );
    assert_ok(&o);
    let r = read_json(&out.path().join("deadbeat.json"));
    assert_eq!(r["status"], "ok");
    let res = r["residuals"].as_array().unwrap();
    assert_eq!(res.len(), 12);
    assert!(res.iter().all(|e| e["residual"].as_f64().unwrap() <= 1e-7));
    assert_eq!(r["closed_loop"]["ranks"][0], 0);
    let csv = fs::read_to_string(out.path().join("residuals.csv")).unwrap();
    assert_eq!(csv.lines().count(), 13);
}

#[test]
fn rank_deficient_deadbeat_recommends_two_cycles() {
    let out = TempDir::new().unwrap();
    let o = run(
        &["control", "deadbeat"],
        &config("companion_deadbeat.json"),
        out.path(),
    );
    assert_ok(&o);
    let r = read_json(&out.path().join("deadbeat.json"));
    assert_eq!(r["status"], "rank_deficient");
    assert_eq!(r["recommendation"]["cycles"], 2);
    assert_eq!(r["recommendation"]["achieved_rank"], 1);
}

#[test]
fn companion_search_finds_two_cycles() {
    let dir = TempDir::new().unwrap();
    let text = fs::read_to_string(config("companion_deadbeat.json"))
        .unwrap()
        .replace(r#""cycles": 1, "#, "");
    let cfg = write_config(&dir, &text);
    let o = run(&["control", "deadbeat"], &cfg, dir.path());
    assert_ok(&o);
    let r = read_json(&dir.path().join("deadbeat.json"));
    assert_eq!(r["law"]["cycles"], 2);
    assert!(r["max_residual"].as_f64().unwrap() < 1e-7);
}

#[test]
fn polyped_embed_tracks_the_template() {
    let out = TempDir::new().unwrap();
    let o = run(
        &["control", "embed"],
        &config("polyped_embed.json"),
        out.path(),
    );
    assert_ok(&o);
    let r = read_json(&out.path().join("embed.json"));
    assert_eq!(r["table"].as_array().unwrap().len(), 3);
    assert!(r["max_deviation"].as_f64().unwrap() < 1e-6);
    let csv = fs::read_to_string(out.path().join("embed.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn embed_rejects_other_models() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, r#"{ "model": "hopper" }"#);
    let o = run(&["control", "embed"], &cfg, dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn hopper_phase_report() {
    let out = TempDir::new().unwrap();
    let o = run(
        &["analyze", "phase"],
        &config("hopper_phase.json"),
        out.path(),
    );
    assert_ok(&o);
    let r = read_json(&out.path().join("phase.json"));
    let errs = r["orbit_phases"].as_array().unwrap();
    assert_eq!(errs.len(), 6);
    assert!(errs
        .iter()
        .all(|e| e["error"].as_f64().unwrap().abs() < 1e-4));
    assert!(out.path().join("isochron.csv").exists());
}

#[test]
fn reports_are_reproducible() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    for out in [&a, &b] {
        assert_ok(&run(
            &["analyze", "reduce"],
            &config("hopper_reduce.json"),
            out.path(),
        ));
    }
    let read = |d: &TempDir| fs::read(d.path().join("reduction.json")).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn seed_flag_overrides_config() {
    let out = TempDir::new().unwrap();
    let o = bin()
        .args(["control", "deadbeat", "--seed", "99", "--plot", "--config"])
        .arg(config("halfturn_deadbeat.json"))
        .arg("--out")
        .arg(out.path())
        .output()
        .unwrap();
    assert_ok(&o);
    assert_eq!(read_json(&out.path().join("deadbeat.json"))["seed"], 99);
    let svg = fs::read_to_string(out.path().join("deadbeat.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
}

#[test]
fn models_list_has_schemas() {
    let o = bin().args(["models", "list"]).output().unwrap();
    assert!(o.status.success());
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let models = v["models"].as_array().unwrap();
    let names: Vec<&str> = models.iter().map(|m| m["name"].as_str().unwrap()).collect();
    assert_eq!(
        names,
        [
            "hopper",
            "lls",
            "polyped",
            "halfturn",
            "projectglue",
            "linear_clock",
            "system"
        ]
    );
    assert_eq!(models[0]["parameters"]["k"]["type"], "number");
    assert_eq!(models[0]["system"]["guards"][0]["name"], "touchdown");
    assert_eq!(models[2]["parameters"]["legs"]["type"], "integer");
}

#[test]
fn json_system_matches_closed_form() {
    let out = TempDir::new().unwrap();
    let o = run(
        &["analyze", "poincare"],
        &config("system_poincare.json"),
        out.path(),
    );
    assert_ok(&o);
    let r = read_json(&out.path().join("poincare.json"));
    let q = (-0.25f64).exp();
    let fixed = 0.5 * q / (1.0 - q * q);
    assert!((r["orbit"]["coords"][0].as_f64().unwrap() - fixed).abs() < 1e-8);
    assert!((r["multipliers"][0]["re"].as_f64().unwrap() - q * q).abs() < 1e-8);
}

#[test]
fn malformed_system_document_exits_two() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        r#"{ "model": "system", "params": { "domains": [{ "name": "a", "dim": 2, "field": { "kind": "affine", "a": [[1.0]], "c": [0.0, 0.0] } }] }, "horizon": { "time": 1.0 } }"#,
    );
    let o = run(&["simulate"], &cfg, dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_json(&o)["error"]["code"], "INVALID_CONFIG");
}
