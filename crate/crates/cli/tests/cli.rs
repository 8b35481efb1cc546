use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cfverify"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}\nstderr: {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

const IDENTITY: &str = r#"{
    "network": {"layers": [{"weights": [[1.0]], "bias": [0.0]}]},
    "inputs": [{"kind": "cauchy", "location": 0, "scale": 1}],
    "safety": [{"c": [1], "d": 0, "direction": "le"}],
    "risk": 0.6
}"#;

#[test]
fn identity_passes_with_exit_zero() {
    let cfg = configs().join("identity_cauchy.json");
    let out = run(&["verify", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert!((v["p_hat"].as_f64().unwrap() - 0.5).abs() < 1e-3);
    assert_eq!(v["verdict"], "pass");
    for key in ["delta", "raw_cdf_value", "timing_seconds", "params_echo"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn risk_override_flips_verdict_and_is_echoed() {
    let cfg = configs().join("identity_cauchy.json");
    let out = run(&["verify", cfg.to_str().unwrap(), "--risk", "0.4"]);
    assert_eq!(out.status.code(), Some(1));
    let v = json(&out);
    assert_eq!(v["verdict"], "fail");
    assert_eq!(v["params_echo"]["risk"], 0.4);
}

#[test]
fn numerics_overrides_are_echoed() {
    let cfg = configs().join("identity_cauchy.json");
    let out = run(&[
        "verify",
        cfg.to_str().unwrap(),
        "--ht-step",
        "0.1",
        "--ht-terms",
        "1000",
        "--grid-points",
        "2001",
        "--cutoff",
        "30",
        "--seed",
        "9",
        "--samples",
        "123",
        "--threads",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let echo = &json(&out)["params_echo"];
    assert_eq!(echo["numerics"]["ht_step"], 0.1);
    assert_eq!(echo["numerics"]["ht_terms"], 1000);
    assert_eq!(echo["numerics"]["n_grid"], 2001);
    assert_eq!(echo["numerics"]["t_max"], 30.0);
    assert_eq!(echo["seed"], 9);
    assert_eq!(echo["samples"], 123);
    assert_eq!(echo["threads"], 1);
}

#[test]
fn shallow_cauchy_config_fails_verification() {
    let cfg = configs().join("shallow_cauchy.json");
    let out = run(&["verify", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(json(&out)["p_hat"].as_f64().unwrap() < 0.95);
}

#[test]
fn config_errors_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.json", "{ not json");
    assert_eq!(run(&["verify", &bad]).status.code(), Some(3));
    let missing = dir.path().join("nope.json");
    assert_eq!(run(&["verify", missing.to_str().unwrap()]).status.code(), Some(3));
    let no_risk = write(dir.path(), "norisk.json", &IDENTITY.replace(r#""risk": 0.6"#, r#""seed": 1"#));
    let out = run(&["verify", &no_risk]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("risk"));
    let ok = write(dir.path(), "ok.json", IDENTITY);
    assert_eq!(run(&["verify", &ok, "--risk", "1.5"]).status.code(), Some(3));
}

#[test]
fn polytope_reports_union_bound() {
    let dir = tempfile::tempdir().unwrap();
    let two = IDENTITY.replace(
        r#"[{"c": [1], "d": 0, "direction": "le"}]"#,
        r#"[{"c": [1], "d": 10, "direction": "le"}, {"c": [1], "d": -10, "direction": "ge"}]"#,
    );
    let cfg = write(dir.path(), "box.json", &two);
    let out = run(&["verify", &cfg, "--risk", "0.2"]);
    let v = json(&out);
    assert_eq!(v["constraints"].as_array().unwrap().len(), 2);
    // P(|y| <= 10) = 2 atan(10)/pi = 0.9365, union bound 1 - 2 * 0.0317
    assert!((v["lower_bound"].as_f64().unwrap() - 0.9365).abs() < 5e-3);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn propagate_identity_matches_input_cdf() {
    let cfg = configs().join("identity_cauchy.json");
    let out = run(&["propagate", cfg.to_str().unwrap(), "--x-min", "-2", "--x-max", "2", "--x-points", "5"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "layer,phase,component,x,cdf");
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 5);
    for r in rows {
        let x: f64 = r[3].parse().unwrap();
        let cdf: f64 = r[4].parse().unwrap();
        let exact = 0.5 + x.atan() / std::f64::consts::PI;
        assert!((cdf - exact).abs() < 2e-3, "x={x}: {cdf} vs {exact}");
    }
}

#[test]
fn propagate_trace_file_and_component_filter() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "p.json",
        r#"{
            "network": {"random": {"widths": [2, 4, 3], "seed": 1}},
            "inputs": [{"kind": "gaussian", "mean": 1, "variance": 1},
                       {"kind": "gaussian", "mean": 1, "variance": 2}],
            "safety": [{"c": [1, 0, 0], "d": 0, "direction": "ge"}],
            "risk": 0.05,
            "numerics": {"t_max": 20, "n_grid": 2001, "ht_step": 0.1, "ht_terms": 500}
        }"#,
    );
    let trace = dir.path().join("trace.csv");
    let out = run(&[
        "propagate",
        &cfg,
        "--trace",
        trace.to_str().unwrap(),
        "--components",
        "1",
        "--x-points",
        "11",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    // layer 0 pre + post, layer 1 pre; 11 points each
    assert_eq!(v["rows"], 33);
    let text = std::fs::read_to_string(&trace).unwrap();
    assert!(text.lines().skip(1).all(|l| l.split(',').nth(2) == Some("1")));
}

#[test]
fn quantile_of_symmetric_cauchy_median() {
    let cfg = configs().join("identity_cauchy.json");
    let out = run(&["quantile", cfg.to_str().unwrap(), "--p", "0.5"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(json(&out)["r"].as_f64().unwrap().abs() < 1e-2);
}

#[test]
fn compare_on_constant_network_has_zero_gap() {
    let dir = tempfile::tempdir().unwrap();
    // atom at the origin: the boundary-value extrapolation of the sampled CF
    // is then exact beyond the cutoff
    let cfg = write(
        dir.path(),
        "c.json",
        &IDENTITY
            .replace(r#"[[1.0]]"#, r#"[[0.0]]"#)
            .replace(r#""d": 0"#, r#""d": 1"#),
    );
    let out = run(&["compare", &cfg, "--samples", "500"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["p_hat_mc"], 1.0);
    assert!(v["delta_delta"].as_f64().unwrap().abs() < 1e-3);
    assert_eq!(v["n_samples"], 500);
}

#[test]
fn compare_shallow_cauchy_reports_both_estimates() {
    let cfg = configs().join("shallow_cauchy.json");
    let out = run(&["compare", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let (cf, mc) = (v["p_hat_cf"].as_f64().unwrap(), v["p_hat_mc"].as_f64().unwrap());
    let dd = v["delta_delta"].as_f64().unwrap();
    assert!((dd - (cf - mc)).abs() < 1e-12);
    assert_eq!(v["n_samples"], 10_000);
}

#[test]
fn sweep_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "s.json",
        r#"{
            "network": {"random": {"widths": [2, 3, 1], "seed": 0}},
            "inputs": [{"kind": "cauchy", "location": 1, "scale": 1},
                       {"kind": "cauchy", "location": -1, "scale": 1}],
            "safety": [{"c": [1], "d": 0, "direction": "ge"}],
            "risk": 0.05
        }"#,
    );
    let args = ["sweep", &cfg, "--point", "0.5,1001,200", "--point", "0.7,501,100", "--trials", "2", "--samples", "1000"];
    let a = run(&args);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    let text = String::from_utf8(a.stdout.clone()).unwrap();
    assert_eq!(text.lines().next().unwrap(), "h,N,M,mean_abs_delta_delta,mean_time_seconds");
    assert_eq!(text.lines().count(), 3);
    let strip = |s: &str| s.lines().map(|l| l.rsplit_once(',').unwrap().0.to_string()).collect::<Vec<_>>();
    let b = run(&args);
    assert_eq!(strip(&text), strip(&String::from_utf8(b.stdout).unwrap()));
}

#[test]
fn sweep_single_trial_one_row_per_point() {
    let cfg = configs().join("identity_cauchy.json");
    let out = run(&["sweep", cfg.to_str().unwrap(), "--point", "0.5,1001,200", "--trials", "1", "--samples", "100"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 2);
}
