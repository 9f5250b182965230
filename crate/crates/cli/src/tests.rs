use clap::Parser;
use serde_json::Value;

use super::{execute, Cli};

fn pamlab(args: &[&str]) -> (i32, Value, String) {
    let argv = std::iter::once("pamlab").chain(args.iter().copied());
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => return (e.exit_code(), Value::Null, e.to_string()),
    };
    match execute(cli.command, cli.out.as_deref()) {
        Ok(text) => (0, serde_json::from_str(&text).expect("valid json"), String::new()),
        Err((code, msg)) => (i32::from(code), Value::Null, msg),
    }
}

fn ok(args: &[&str]) -> Value {
    let (code, v, err) = pamlab(args);
    assert_eq!(code, 0, "{args:?}: {err}");
    v
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap_or_else(|| panic!("not a number: {v}"))
}

fn without_wall_clock(mut v: Value) -> String {
    v["manifest"].as_object_mut().unwrap().remove("wall_clock");
    serde_json::to_string(&v).unwrap()
}

#[test]
fn green_examples() {
    let v = ok(&["green", "--d", "3", "--mu", "0"]);
    assert!((f(&v["R"]) - 0.252731).abs() < 1e-6);
    assert!((f(&v["r_d"]) - 3.9568).abs() < 1e-4);
    let v = ok(&["green", "--d", "2", "--mu", "0"]);
    assert_eq!(v["R"], "inf");
    assert_eq!(f(&v["r_d"]), 0.0);
    let v = ok(&["green", "--d", "1", "--mu", "5"]);
    assert!((f(&v["R"]) - 0.1490712).abs() < 1e-7);
    let v = ok(&["green", "--d", "4", "--a", "2"]);
    assert!(f(&v["G_a"]) > 0.0 && f(&v["c_d"]) > 0.0);
    for key in ["command", "params", "seed", "version", "wall_clock", "outputs"] {
        assert!(v["manifest"].get(key).is_some(), "manifest lacks {key}");
    }
}

#[test]
fn nine_significant_digits() {
    let v = ok(&["green", "--d", "3", "--mu", "0.3"]);
    let text = v["R"].to_string();
    let digits = text.trim_start_matches("0.").trim_start_matches('0').replace('.', "");
    assert!(digits.len() <= 9, "{text}");
}

#[test]
fn exit_codes() {
    assert_eq!(pamlab(&["green", "--d", "7"]).0, 2);
    assert_eq!(pamlab(&["green", "--d", "3", "--mu", "-1"]).0, 2);
    assert_eq!(pamlab(&["phase", "--d", "3", "--gamma", "0"]).0, 2);
    assert_eq!(pamlab(&["mc", "lambda", "--replicas", "0"]).0, 2);
    assert_eq!(pamlab(&["mc", "lambda", "--t", "1", "--replicas", "5", "--dt", "1"]).0, 2);
    assert_eq!(pamlab(&["polaron", "--eps", "1e-3"]).0, 2);
    assert_eq!(pamlab(&["polaron", "--eps", "2", "--K", "1"]).0, 2);
    let (code, _, err) = pamlab(&["mc", "pinned", "--replicas", "3", "--t", "0.3", "--kappa", "0.001"]);
    assert!(code == 0 || code == 3, "{err}");
    let (code, _, _) = pamlab(&["wbar", "--t", "200", "--volterra-dt", "1"]);
    assert_eq!(code, 3);
}

#[test]
fn phase_rows_and_sweep() {
    let v = ok(&["phase", "--d", "2"]);
    assert_eq!(v["report"]["strongly_catalytic"], true);
    let v = ok(&["phase", "--d", "3", "--gamma", "0.5"]);
    assert_eq!(v["report"]["strongly_catalytic"], false);
    assert_eq!(v["report"]["lambda_p_finite"], true);
    let r3 = "3.9567760226940054";
    let v = ok(&["phase", "--d", "3", "--gamma", r3]);
    assert_eq!(v["report"]["lambda_p_finite"], false);
    assert_eq!(v["lambda_p_zero"], "inf");

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.csv");
    let v = ok(&["phase", "--csv", path.to_str().unwrap(), "--points", "8"]);
    assert_eq!(v["sweep_rows"], 40);
    let mut rd = csv::Reader::from_path(&path).unwrap();
    let rows: Vec<csv::StringRecord> = rd.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 40);
    for row in &rows {
        let strong = &row[3] == "true";
        let hat: f64 = row[6].parse().unwrap();
        assert_eq!(strong, hat > 0.0, "{row:?}");
    }
    assert!(path.with_extension("manifest.json").exists());
    let outputs = v["manifest"]["outputs"].as_array().unwrap();
    assert_eq!(outputs.len(), 2);
}

#[test]
fn wbar_trace_export() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("wbar.csv");
    let v = ok(&["wbar", "--t", "10", "--csv", path.to_str().unwrap()]);
    let (pde, vol) = (f(&v["w_bar_pde"]), f(&v["w_bar_volterra"]));
    assert!((pde - vol).abs() < 0.01 * vol);
    assert!(f(&v["limit"]) > pde);
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), f(&v["csv_rows"]) as usize + 1);
}

#[test]
fn mc_examples() {
    let v = ok(&["mc", "lambda", "--kappa", "0", "--t", "2", "--replicas", "10"]);
    assert_eq!(f(&v["estimate"]["std_error"]), 0.0);
    let w = ok(&["wbar", "--kappa", "0", "--t", "2"]);
    let lam = f(&v["estimate"]["value"]);
    assert!((lam - f(&w["lambda_p_kappa_zero"])).abs() < 1e-3 * lam);

    let v = ok(&["mc", "scaling-check", "--kappa", "1", "--t", "1", "--replicas", "30"]);
    assert_eq!(v["lhs"]["value"], v["rhs_times_kappa"]["value"]);
    assert_eq!(v["pass_3sigma"], true);

    let v = ok(&["mc", "pinned", "--t", "1", "--replicas", "400"]);
    assert_eq!(v["pinned_le_unpinned_3sigma"], true);

    let v = ok(&["mc", "lambda", "--t", "1", "--replicas", "300"]);
    assert_eq!(v["sandwich"]["holds_3sigma"], true);

    let v = ok(&["mc", "quenched", "--t", "1", "--replicas", "100", "--alpha", "0.5"]);
    assert!(f(&v["u"]["value"]) >= 1.0);
    assert!(v["exceedance"]["count"].as_u64().is_some());
}

#[test]
fn reruns_are_identical() {
    let args = ["mc", "lambda", "--t", "1", "--replicas", "64", "--seed", "42", "--p", "2"];
    let a = without_wall_clock(ok(&args));
    let b = without_wall_clock(ok(&args));
    assert_eq!(a, b);
}

#[test]
fn polaron_examples() {
    let base = ok(&["polaron"]);
    assert!(f(&base["virial_residual"]) < 0.01);
    let p = f(&base["P"]);
    assert!((f(&base["four_sqrt_pi_P"]) - 4.0 * std::f64::consts::PI.sqrt() * p).abs() < 1e-8 * p);
    let v = ok(&["polaron", "--eps", "1e-3", "--K", "1e3"]);
    assert_eq!(v["P_p_truncated"]["le_full"], true);
    let two = ok(&["polaron", "--gamma", "2"]);
    let ratio = f(&two["P_p"]["value"]) / f(&base["P_p"]["value"]);
    assert!((ratio - 16.0).abs() < 1e-6, "{ratio}");

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run.json");
    let prof = dir.path().join("profile.csv");
    let v = ok(&["polaron", "--csv", prof.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let saved: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(without_wall_clock(saved), without_wall_clock(v));
    assert!(std::fs::read_to_string(&prof).unwrap().starts_with("r,f\n"));
}
