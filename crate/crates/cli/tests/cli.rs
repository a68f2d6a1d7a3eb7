use std::f64::consts::PI;
use std::path::PathBuf;
use std::process::Command;

use serde_json::Value;
use vbob_cli::{run, EXIT_CHECK_FAILED, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE};

fn vbob(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run(std::iter::once("vbob").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn json(args: &[&str]) -> (i32, Value) {
    let mut full = args.to_vec();
    full.push("--json");
    let (code, out, err) = vbob(&full);
    assert!(!out.is_empty(), "no output; stderr: {err}");
    (code, serde_json::from_str(&out).unwrap())
}

fn temp_model(name: &str, body: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("vbob-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn period_of_the_trivial_sphere_model() {
    let (code, v) = json(&["period", "sphere-trivial", "--sphere", "gen", "--grid", "201"]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(v["schema_version"], 1);
    let p = v["period_matrix"][0][0].as_f64().unwrap();
    assert!((p - 4.0 * PI).abs() < 1e-6, "{p}");
    assert!(v["error_estimate"].as_f64().unwrap() <= 1e-6);
    assert_eq!(v["period_matrix"].as_array().unwrap().len(), 1);
}

#[test]
fn verdicts_for_builtins() {
    let (code, v) = json(&["verdict", "sphere-trivial"]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(v["decision"], "NonIntegrable");
    assert_eq!(v["lattice"]["result"], "nontrivial");

    let (_, v) = json(&["verdict", "t1-toy", "--assert-A-integrable", "tangent algebroid"]);
    assert_eq!(v["decision"], "Integrable-conditional");
    assert_eq!(v["shortcut"], "injective core anchor");

    let (_, v) = json(&["verdict", "su2-star"]);
    assert_eq!(v["decision"], "Inconclusive");
    assert!(v["missing_premise"].as_str().unwrap().contains("--assert-A-integrable"));

    let (_, v) = json(&["verdict", "su2-star", "--assert-A-integrable", "T*SU(2)", "--assert-generators-complete", "leaves are spheres"]);
    assert_eq!(v["decision"], "Integrable-conditional");
    assert_eq!(v["lattice"]["result"], "trivial");
    assert_eq!(v["premises"]["base"]["citation"], "T*SU(2)");

    let (_, v) = json(&["verdict", "t1-toy", "--assert-A-nonintegrable", "counterexample"]);
    assert_eq!(v["decision"], "NonIntegrable");
}

#[test]
fn usage_errors_exit_two() {
    for args in [
        vec!["axioms", "no-such-model"],
        vec!["axioms"],
        vec!["frobnicate"],
        vec!["period", "sphere-trivial", "--sphere", "nope"],
        vec!["period", "sphere-trivial", "--sphere", "gen", "--csv"],
        vec!["area-scan", "su2-star", "--r", "2:1:0.5", "--e", "0:1:1"],
        vec!["area-scan", "su2-star", "--r", "1:2", "--e", "0:1:1"],
        vec!["compat", "su2-star", "--convention-sign", "2"],
        vec!["verdict", "sphere-trivial", "--tol", "1e-9"],
        vec!["verdict", "t1-toy", "--assert-A-integrable", "a", "--assert-A-nonintegrable", "b"],
        vec!["decompose", "su2-star", "--point", "0.01,0,0"],
        vec!["compat", "su2-star", "--samples", "0"],
    ] {
        let (code, out, err) = vbob(&args);
        assert_eq!(code, EXIT_USAGE, "{args:?}: {out} {err}");
        assert!(!err.is_empty(), "{args:?}");
    }
}

#[test]
fn help_and_version_succeed() {
    let (code, out, _) = vbob(&["--help"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("area-scan"));
    assert_eq!(vbob(&["--version"]).0, EXIT_OK);
}

#[test]
fn residual_failures_exit_one() {
    let (code, v) = json(&["ruth-check", "pair-ruth-twisted", "--convention", "literal"]);
    assert_eq!(code, EXIT_CHECK_FAILED);
    assert_eq!(v["passed"], false);
    assert_eq!(v["vb_groupoid"], Value::Null);

    let (code, v) = json(&["axioms", "su2-star", "--convention-sign", "-1"]);
    assert_eq!(code, EXIT_CHECK_FAILED);
    assert!(v["total_reconstruction"][0]["bracket_difference"].as_f64().unwrap() > 0.1);

    let (code, _) = json(&["diff-ruth", "pair-ruth-twisted", "--convention-sign", "-1"]);
    assert_eq!(code, EXIT_CHECK_FAILED);
}

#[test]
fn every_builtin_passes_its_checks() {
    for model in ["sphere-trivial", "su2-star", "t1-toy", "pair-ruth-exp", "pair-ruth-flat", "pair-ruth-twisted"] {
        for cmd in ["axioms", "compat", "sphere-check"] {
            let (code, v) = json(&[cmd, model]);
            assert_eq!(code, EXIT_OK, "{cmd} {model}: {v}");
        }
    }
    for model in ["pair-ruth-exp", "pair-ruth-flat", "pair-ruth-twisted"] {
        assert_eq!(json(&["ruth-check", model]).0, EXIT_OK, "{model}");
        assert_eq!(json(&["diff-ruth", model]).0, EXIT_OK, "{model}");
    }
    let (code, v) = json(&["list-models"]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(v["models"].as_array().unwrap().len(), 6);
}

#[test]
fn area_scan_matches_closed_form() {
    let (code, out, err) = vbob(&["area-scan", "su2-star", "--r", "0.5:2:0.5", "--e", "-1:1:0.5", "--csv"]);
    assert_eq!(code, EXIT_OK, "{err}");
    let mut lines = out.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let rel = header.iter().position(|h| *h == "rel_error").unwrap();
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 20);
    for r in &rows {
        let want = 4.0 * PI * r[0] / (1.0 + r[1] * r[1] / 2.0);
        assert!((r[2] - want).abs() / want <= 1e-6);
        assert!(r[rel] <= 1e-6);
    }
}

#[test]
fn area_scan_gradient_columns() {
    let (code, v) = json(&["area-scan", "su2-star", "--r", "1:1:1", "--e", "-1:1:1", "--gradient"]);
    assert_eq!(code, EXIT_OK);
    let rows = v["rows"].as_array().unwrap();
    let (lo, hi) = (&rows[0], &rows[2]);
    approx::assert_abs_diff_eq!(lo["dA_de"].as_f64().unwrap(), -hi["dA_de"].as_f64().unwrap(), epsilon = 1e-6);
    approx::assert_abs_diff_eq!(lo["dA_dr"].as_f64().unwrap(), hi["dA_dr"].as_f64().unwrap(), epsilon = 1e-6);
    assert!(v["max_gradient_difference"].as_f64().unwrap() < 1e-3);
}

#[test]
fn outputs_are_reproducible() {
    for args in [
        vec!["verdict", "sphere-trivial", "--json"],
        vec!["compat", "su2-star", "--seed", "9", "--json"],
        vec!["diff-ruth", "pair-ruth-flat", "--json"],
        vec!["area-scan", "su2-star", "--r", "1:2:1", "--e", "0:1:0.5", "--csv"],
    ] {
        let a = vbob(&args);
        let b = vbob(&args);
        assert_eq!(a, b, "{args:?}");
    }
}

#[test]
fn seed_environment_variable_overrides_flag() {
    let exe = env!("CARGO_BIN_EXE_vbob");
    let go = |seed_env: Option<&str>, flag: &str| {
        let mut c = Command::new(exe);
        c.args(["compat", "su2-star", "--json", "--seed", flag]);
        c.env_remove("VBOB_SEED");
        if let Some(s) = seed_env {
            c.env("VBOB_SEED", s);
        }
        let o = c.output().unwrap();
        (o.status.code().unwrap(), String::from_utf8(o.stdout).unwrap())
    };
    let (code, with_env) = go(Some("7"), "0");
    assert_eq!(code, 0);
    let (_, with_flag) = go(None, "7");
    assert_eq!(with_env, with_flag);
    let v: Value = serde_json::from_str(&with_env).unwrap();
    assert_eq!(v["splits"][0]["seed"], 7);
    assert_eq!(go(Some("seven"), "0").0, 2);
}

#[test]
fn model_files_are_accepted_and_errors_located() {
    let good = temp_model(
        "line.vbm",
        "[model]\nname = line\n[chart M]\ncoords = x\nbounds = -1, 1\n[algebroid T]\nchart = M\nkind = tangent\n\
         [splitvba V]\nbase = T\nside = e\ncore = c\ncore_anchor(c) = e\nconn_e(d_x, e) = x*e\nconn_c(d_x, c) = x*c\n",
    );
    let (code, v) = json(&["compat", good.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(v["model"], "line");

    let bad = temp_model("bad.vbm", "[model]\nname = bad\n[chart M]\ncoords = x\nbounds = -1, 1\ncolour = blue\n");
    let (code, _, err) = vbob(&["axioms", bad.to_str().unwrap()]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("line 6"), "{err}");
}

#[test]
fn numeric_failures_exit_three() {
    let planes = temp_model(
        "planes.vbm",
        "[model]\nname = planes\n[chart M]\ncoords = x, y, z\nbounds = -2, 2\n[poisson p]\nchart = M\npi(x, y) = 1\nleaf = x, y, z\n",
    );
    let (code, _, err) = vbob(&["area-scan", planes.to_str().unwrap(), "--r", "1:1:1", "--e", "0:0:1"]);
    assert_eq!(code, EXIT_NUMERIC, "{err}");
    assert!(err.contains("leaf-tangent"));
}

#[test]
fn plain_output_is_readable() {
    let (code, out, _) = vbob(&["verdict", "sphere-trivial"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("decision: NonIntegrable"));
    assert!(!out.contains("schema_version"));
    let (_, out, _) = vbob(&["holcheck", "su2-star"]);
    assert!(out.contains("passed: true"), "{out}");
}
