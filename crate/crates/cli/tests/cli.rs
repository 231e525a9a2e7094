use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn cbsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cbsim")).args(args).output().unwrap()
}

struct Run {
    dir: tempfile::TempDir,
}

impl Run {
    fn new() -> Self {
        Run { dir: tempfile::tempdir().unwrap() }
    }

    fn file(&self, name: &str, text: &str) -> PathBuf {
        let p = self.dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn exec(&self, command: &str, input: &str, output: &str, extra: &[&str]) -> Output {
        let inp = self.file("input.json", input);
        let out = self.path(output);
        let mut args = vec![command, "--input", inp.to_str().unwrap(), "--output", out.to_str().unwrap()];
        args.extend_from_slice(extra);
        cbsim(&args)
    }
}

fn report(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const THETA_0_HALF: &str = r#"{"theta": {"roots": [{"re": 0, "im": 0}, {"re": 0.5, "im": 0}], "constant": [1, 0]}}"#;

#[test]
fn empty_input_exits_2() {
    let r = Run::new();
    let o = r.exec("cbnorm", "", "out.json", &[]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(!r.path("out.json").exists());
}

#[test]
fn malformed_json_reports_line_and_column() {
    let r = Run::new();
    let o = r.exec("model", "{\n  \"theta\": [1,\n}", "out.json", &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("line 3"), "{err}");
    assert!(err.contains("column"), "{err}");
}

#[test]
fn schema_mismatch_names_the_field_path() {
    let r = Run::new();
    let o = r.exec("carleson", r#"{"theta": {"roots": [{"re": "x", "im": 0}], "constant": [1, 0]}}"#, "out.json", &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("theta.roots[0].re"), "{}", stderr(&o));

    let o = r.exec("clbp", r#"{"algebra": "full", "n": 2, "extra": 1}"#, "out.json", &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("extra"), "{}", stderr(&o));
}

#[test]
fn unknown_command_and_bad_flags_exit_2() {
    let r = Run::new();
    assert_eq!(r.exec("nosuch", "{}", "out.json", &[]).status.code(), Some(2));
    let o = r.exec("model", THETA_0_HALF, "out.json", &["--tol", "chain=1e-20"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("floor"), "{}", stderr(&o));
    assert_eq!(r.exec("model", THETA_0_HALF, "out.json", &["--tol", "nosuch=1e-3"]).status.code(), Some(2));
    assert_eq!(r.exec("model", THETA_0_HALF, "out.json", &["--budget", "0"]).status.code(), Some(2));
}

#[test]
fn carleson_csv_row_has_delta_one_half() {
    let r = Run::new();
    let o = r.exec("carleson", THETA_0_HALF, "table.csv", &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut rd = csv::Reader::from_path(r.path("table.csv")).unwrap();
    let header = rd.headers().unwrap().clone();
    let col = header.iter().position(|h| h == "delta").unwrap();
    let rows: Vec<csv::StringRecord> = rd.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    for row in &rows {
        let d: f64 = row[col].parse().unwrap();
        assert!((d - 0.5).abs() < 1e-12);
    }
}

#[test]
fn carleson_json_reports_sandwich() {
    let r = Run::new();
    let input = r#"{"theta": {"roots": [{"re": 0.3, "im": 0}, {"re": 0, "im": -0.4}, {"re": 0.7, "im": 0}], "constant": [1, 0]},
                    "grids": [[[[[1, 0]], [[0, 0], [1, 0]]], [[[0, 0], [0, 0], [1, 0]], [[2, 0]]]]]}"#;
    let o = r.exec("carleson", input, "out.json", &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rep = report(&r.path("out.json"));
    let res = &rep["report"]["result"];
    assert_eq!(res["sandwich_holds"], Value::Bool(true));
    assert_eq!(res["sandwich"].as_array().unwrap().len(), 3);
    let kappa = res["vasyunin"]["kappa"].as_f64().unwrap();
    assert!(kappa >= 1.0);
}

#[test]
fn repeated_root_is_an_input_error_for_carleson() {
    let r = Run::new();
    let o = r.exec("carleson", r#"{"theta": {"roots": [{"re": 0, "im": 0, "mult": 2}], "constant": [1, 0]}}"#, "out.json", &[]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn clustered_roots_are_an_engine_error() {
    let r = Run::new();
    let o = r.exec(
        "model",
        r#"{"theta": {"roots": [{"re": 0.5, "im": 0}, {"re": 0.5000000001, "im": 0}, {"re": 0.5, "im": 0.0000000001}], "constant": [1, 0]}}"#,
        "out.json",
        &[],
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn report_echoes_seed_input_versions_and_tolerances() {
    let r = Run::new();
    let o = r.exec("model", THETA_0_HALF, "out.json", &["--seed", "17", "--tol", "quasinilpotent=1e-12"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = String::from_utf8_lossy(&o.stdout);
    assert_eq!(summary.lines().count(), 1);
    let rep = report(&r.path("out.json"));
    let block = &rep["report"];
    assert_eq!(block["seed"], 17);
    assert_eq!(block["command"], "model");
    assert_eq!(block["tolerances"]["quasinilpotent"], 1e-12);
    assert_eq!(block["tolerances"]["chain"], 1e-9);
    assert!(block["versions"]["cbsim"].is_string());
    assert_eq!(block["input"]["theta"]["roots"][1]["re"], 0.5);
    assert!(rep["timing"]["elapsed_seconds"].is_number());
    assert!(block.get("timing").is_none());
}

#[test]
fn model_on_double_root_finds_the_nilpotent_class() {
    let r = Run::new();
    let o = r.exec("model", r#"{"theta": {"roots": [{"re": 0, "im": 0, "mult": 2}], "constant": [1, 0]}}"#, "out.json", &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let res = &report(&r.path("out.json"))["report"]["result"];
    let u = &res["polynomials"][0];
    assert!((u["norm"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(u["quasinilpotent"], Value::Bool(true));
    assert!(!res["quasinilpotent_classes"].as_array().unwrap().is_empty());
}

#[test]
fn config_file_mirrors_the_flags() {
    let r = Run::new();
    let inp = r.file("in.json", THETA_0_HALF);
    let via_flags = r.path("a.json");
    let o = cbsim(&["model", "--input", inp.to_str().unwrap(), "--output", via_flags.to_str().unwrap(), "--seed", "5"]);
    assert!(o.status.success());
    let via_config = r.path("b.json");
    let cfg = serde_json::json!({
        "command": "model",
        "input_path": inp,
        "output_path": via_config,
        "seed": 5,
    });
    let cfg_path = r.file("cfg.json", &cfg.to_string());
    let o = cbsim(&["--config", cfg_path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(report(&via_flags)["report"], report(&via_config)["report"]);

    let bad = r.file("bad.json", r#"{"command": "model", "input_path": "x", "output_path": "y", "sede": 1}"#);
    assert_eq!(cbsim(&["--config", bad.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn clbp_on_scalars_is_one_over_condition() {
    let r = Run::new();
    let x = r#"{"rows": 2, "cols": 2, "data": [[1, 0], [0, 0], [0, 0], [3, 0]]}"#;
    let o = r.exec("clbp", &format!(r#"{{"algebra": "scalars", "x": {x}}}"#), "out.json", &["--budget", "4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ratio = report(&r.path("out.json"))["report"]["result"]["defect"]["ratio"].as_f64().unwrap();
    assert!((ratio - 1.0 / 3.0).abs() < 1e-9);
}

#[test]
fn cbnorm_on_an_explicit_map() {
    // a -> 2a on M_1 is not contractive
    let r = Run::new();
    let one = r#"{"rows": 1, "cols": 1, "data": [[1, 0]]}"#;
    let two = r#"{"rows": 1, "cols": 1, "data": [[2, 0]]}"#;
    let space = format!(r#"{{"ambient_dim": 1, "basis": [{one}], "unital_algebra": false}}"#);
    let input = format!(r#"{{"map": {{"domain": {space}, "codomain": {space}, "images": [{two}]}}}}"#);
    let o = r.exec("cbnorm", &input, "out.json", &["--budget", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let res = &report(&r.path("out.json"))["report"]["result"];
    assert!((res["estimate"]["lower"].as_f64().unwrap() - 2.0).abs() < 1e-9);
    assert_eq!(res["completely_contractive"], Value::Bool(false));
}

#[test]
fn map_needs_exactly_one_source() {
    let r = Run::new();
    assert_eq!(r.exec("cbnorm", "{}", "out.json", &[]).status.code(), Some(2));
    assert_eq!(r.exec("cbnorm", r#"{"scene": "other"}"#, "out.json", &[]).status.code(), Some(2));
}

#[test]
fn csv_output_needs_a_table() {
    let r = Run::new();
    let o = r.exec("clbp", r#"{"algebra": "scalars", "n": 2}"#, "out.csv", &["--budget", "2"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn counterexample_report_carries_scene_hash_and_lemma_table() {
    let r = Run::new();
    let input = r#"{"kappa_cap": 1, "lemma": [{"alpha": [1, 0], "beta": [0, 0], "gamma": [1, 0],
        "alpha_p": [1, 0], "beta_p": [0, 0], "gamma_p": [1, 0], "delta_p": [0, 0]}]}"#;
    let o = r.exec("counterexample", input, "out.json", &["--budget", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let res = &report(&r.path("out.json"))["report"]["result"];
    assert_eq!(res["scene_hash"].as_str().unwrap().len(), 64);
    assert!((res["identity_defect_unit_point"].as_f64().unwrap() - (2f64.sqrt() - 1.0)).abs() < 1e-12);
    // phases alone cannot change either norm
    assert!(res["search"]["best_defect"].as_f64().unwrap() >= 0.41);
    let lemma = &res["lemma"][0];
    assert_eq!(lemma["relations"]["hypothesis_holds"], Value::Bool(true));
    assert_eq!(lemma["diagonal_ok"], Value::Bool(true));
}

#[test]
fn iterate_on_a_conjugation_records_the_chain() {
    let r = Run::new();
    let unit = |i: usize, j: usize| {
        let mut data = vec!["[0, 0]"; 4];
        data[2 * i + j] = "[1, 0]";
        format!(r#"{{"rows": 2, "cols": 2, "data": [{}]}}"#, data.join(", "))
    };
    let conj = |i: usize, j: usize, s: f64| {
        let mut data = vec!["[0, 0]".to_string(); 4];
        data[2 * i + j] = format!("[{s}, 0]");
        format!(r#"{{"rows": 2, "cols": 2, "data": [{}]}}"#, data.join(", "))
    };
    let basis = [unit(0, 0), unit(0, 1), unit(1, 0), unit(1, 1)].join(", ");
    // conjugation by diag(1, 2)
    let images = [conj(0, 0, 1.0), conj(0, 1, 0.5), conj(1, 0, 2.0), conj(1, 1, 1.0)].join(", ");
    let space = format!(r#"{{"ambient_dim": 2, "basis": [{basis}], "unital_algebra": true}}"#);
    let input = format!(r#"{{"map": {{"domain": {space}, "codomain": {space}, "images": [{images}]}}, "n_max": 1, "probes": 2}}"#);
    let o = r.exec("iterate", &input, "out.json", &["--budget", "4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let res = &report(&r.path("out.json"))["report"]["result"];
    assert_eq!(res["chain"].as_array().unwrap().len(), 2);
    assert_eq!(res["chain"][0].as_array().unwrap().len(), 3);
    assert_eq!(res["chain_ok"], Value::Bool(true));
}

#[test]
fn almost_isometric_on_the_scene_fills_the_certificate() {
    let r = Run::new();
    let o = r.exec("almost-isometric", r#"{"scene": "counterexample", "epsilon": 0.25}"#, "out.json", &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let res = &report(&r.path("out.json"))["report"]["result"];
    for key in ["x", "y", "epsilon", "N", "delta", "zeta", "rho", "sigma", "bound_factor", "measured_ratios", "bound_holds"] {
        assert!(!res[key].is_null(), "missing {key}");
    }
    assert!(res["sigma"].as_f64().unwrap() < 1.25);
    assert!(res["bound_holds"].as_array().unwrap().iter().all(|b| b == &Value::Bool(true)));
}
