use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_steadypop");

fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .arg("--quiet")
        .output()
        .expect("binary runs")
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout)
        .unwrap_or_else(|e| panic!("bad report ({e}): {}", String::from_utf8_lossy(&out.stdout)))
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write_scenario(dir: &TempDir, name: &str, text: &str) -> String {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines
        .next()
        .unwrap()
        .split(',')
        .map(str::to_string)
        .collect();
    let rows = lines
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    (header, rows)
}

fn column(header: &[String], rows: &[Vec<String>], name: &str) -> Vec<f64> {
    let idx = header.iter().position(|h| h == name).unwrap();
    rows.iter().map(|r| r[idx].parse().unwrap()).collect()
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap_or_else(|| panic!("not a number: {v}"))
}

/// Root of `β₀(1 − e^{−(λ+μ₀)m})/(λ+μ₀) = 1` by plain bisection.
fn constant_rate_bound(beta: f64, mu: f64, m: f64) -> f64 {
    let k = |l: f64| beta * (1.0 - (-(l + mu) * m).exp()) / (l + mu);
    let (mut lo, mut hi) = (-20.0, 20.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if k(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn spectral_bound_of_constant_rates() {
    let out = run(&["spectral-bound", "--scenario", "catalog:constant_rate"]);
    assert_eq!(code(&out), 0);
    let r = report(&out);
    let o = &r["outputs"];
    let s_exact = constant_rate_bound(2.0, 1.0, 5.0);
    let r_exact = 2.0 * (1.0 - (-5.0f64).exp());
    assert!((f(&o["spectral_bound"]) - s_exact).abs() < 1e-5);
    assert!((f(&o["net_reproduction"]) - r_exact).abs() < 1e-5);
    assert!((s_exact - 0.9999092).abs() < 1e-7);
    assert!((r_exact - 1.9865241).abs() < 1e-7);
    assert_eq!(o["sign_consistent"], Value::Bool(true));
    assert!(o["bracket"].as_array().unwrap().len() == 2);
    assert!(o["iterations"].as_u64().unwrap() > 0);
    assert_eq!(r["error"], Value::Null);
    assert_eq!(r["scenario"]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn spectral_bound_accepts_density_expressions() {
    let out = run(&[
        "spectral-bound",
        "--scenario",
        "catalog:hierarchic_reference",
        "--u",
        "exp(-a)",
    ]);
    assert_eq!(code(&out), 0);
    let o = &report(&out)["outputs"];
    assert_eq!(o["u"], "exp(-a)");
    let bad = run(&[
        "spectral-bound",
        "--scenario",
        "catalog:hierarchic_reference",
        "--u",
        "a*x",
    ]);
    assert_eq!(code(&bad), 2);
}

#[test]
fn zero_fertility_is_a_solver_error() {
    let dir = TempDir::new().unwrap();
    let path = write_scenario(
        &dir,
        "zero.json",
        r#"{"model_kind": "linear", "m": 5, "n": 100, "beta": {"expr": "0"}, "mu": {"expr": "1"}, "mu0": 1}"#,
    );
    let out = run(&["spectral-bound", "--scenario", &path]);
    assert_eq!(code(&out), 3);
    assert_eq!(report(&out)["error"]["code"], "ZeroFertility");
    assert!(String::from_utf8_lossy(&out.stderr).contains("ZeroFertility"));
}

#[test]
fn malformed_json_reports_offset() {
    let dir = TempDir::new().unwrap();
    let path = write_scenario(&dir, "bad.json", "{\"m\": 5,\n  \"n\": }");
    let out = run(&["spectral-bound", "--scenario", &path]);
    assert_eq!(code(&out), 2);
    let msg = report(&out)["error"]["message"]
        .as_str()
        .unwrap()
        .to_string();
    assert!(msg.contains("offset"), "{msg}");
    assert!(String::from_utf8_lossy(&out.stderr).contains("offset"));
}

#[test]
fn schema_errors_are_input_errors() {
    let dir = TempDir::new().unwrap();
    let unknown = write_scenario(
        &dir,
        "unknown.json",
        r#"{"model_kind": "linear", "m": 5, "n": 100, "beta": {"expr": "1"}, "mu": {"expr": "1"}, "mu0": 1, "colour": 3}"#,
    );
    assert_eq!(code(&run(&["spectral-bound", "--scenario", &unknown])), 2);
    let syntax = write_scenario(
        &dir,
        "syntax.json",
        r#"{"model_kind": "linear", "m": 5, "n": 100, "beta": {"expr": "1 +"}, "mu": {"expr": "1"}, "mu0": 1}"#,
    );
    assert_eq!(code(&run(&["steady-state", "--scenario", &syntax])), 2);
    assert_eq!(
        code(&run(&["steady-state", "--scenario", "catalog:nope"])),
        2
    );
    assert_eq!(
        code(&run(&[
            "steady-state",
            "--scenario",
            "/nonexistent/file.json"
        ])),
        2
    );
}

#[test]
fn steady_state_matches_closed_form() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("out");
    let out = run(&[
        "steady-state",
        "--scenario",
        "catalog:gurtin_mccamy_closed_form",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let (header, rows) = read_csv(&out_dir.join("steady_state.csv"));
    assert_eq!(header, ["a", "p_star", "pi", "beta_profile", "mu_profile"]);
    assert_eq!(rows.len(), 4000);
    let h = 5.0 / 4000.0;
    let total: f64 = column(&header, &rows, "p_star").iter().sum::<f64>() * h;
    let exact = 2.0 * (1.0 - (-5.0f64).exp()) - 1.0;
    assert!((total - exact).abs() < 1e-5, "{total} vs {exact}");
    let pi = column(&header, &rows, "pi");
    let a = column(&header, &rows, "a");
    for (p, a) in pi.iter().zip(&a) {
        assert!((p - (-a).exp()).abs() < 1e-6);
    }
    let beta = column(&header, &rows, "beta_profile");
    assert!((beta[0] - 2.0 / (1.0 + exact)).abs() < 1e-5);
}

#[test]
fn linear_steady_state_is_a_hypothesis_violation() {
    let out = run(&["steady-state", "--scenario", "catalog:constant_rate"]);
    assert_eq!(code(&out), 3);
    assert_eq!(report(&out)["error"]["code"], "HypothesisViolation");
}

#[test]
fn hierarchic_steady_state_residuals() {
    let out = run(&["steady-state", "--scenario", "catalog:hierarchic_reference"]);
    assert_eq!(code(&out), 0);
    let o = &report(&out)["outputs"];
    for key in [
        "residual_boundary",
        "residual_profile",
        "residual_r",
        "self_consistency",
    ] {
        assert!(f(&o[key]) <= 1e-6, "{key} = {}", o[key]);
    }
}

#[test]
fn transport_snapshots_are_exact_shifts() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("sim");
    let out = run(&[
        "simulate",
        "--scenario",
        "catalog:pure_transport",
        "--horizon",
        "0.25",
        "--stride",
        "1",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let (header, rows) = read_csv(&out_dir.join("snapshots.csv"));
    assert_eq!(header, ["t", "a", "p"]);
    let n = 64;
    let h = 1.0 / n as f64;
    let initial: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64 + 0.5) * h).collect();
    let p = column(&header, &rows, "p");
    assert_eq!(p.len(), 17 * n);
    for (k, snap) in p.chunks(n).enumerate() {
        for i in 0..n {
            let expected = if i >= k { initial[i - k] } else { 0.0 };
            assert_eq!(snap[i].to_bits(), expected.to_bits(), "step {k}, cell {i}");
        }
    }
    let (sh, series) = read_csv(&out_dir.join("series.csv"));
    assert_eq!(sh, ["t", "P", "birth_rate"]);
    assert_eq!(series.len(), 17);
}

#[test]
fn extinction_run_decays() {
    let out = run(&[
        "simulate",
        "--scenario",
        "catalog:extinction",
        "--horizon",
        "20",
    ]);
    assert_eq!(code(&out), 0);
    let o = &report(&out)["outputs"];
    assert!(f(&o["final_total"]) < f(&o["initial_total"]));
}

#[test]
fn persistent_run_approaches_steady_state() {
    let out = run(&[
        "simulate",
        "--scenario",
        "catalog:gurtin_mccamy_closed_form",
        "--horizon",
        "60",
        "--from-steady",
        "0.5",
    ]);
    assert_eq!(code(&out), 0);
    let o = &report(&out)["outputs"];
    let p_star = 2.0 * (1.0 - (-5.0f64).exp()) - 1.0;
    assert!((f(&o["initial_total"]) - 0.5 * p_star).abs() < 1e-5);
    assert!(
        (f(&o["final_total"]) - p_star).abs() <= 2e-2,
        "{}",
        o["final_total"]
    );
}

#[test]
fn simulate_rejects_bad_horizon() {
    let out = run(&[
        "simulate",
        "--scenario",
        "catalog:extinction",
        "--horizon",
        "-1",
    ]);
    assert_eq!(code(&out), 2);
}

fn suites(r: &Value) -> &Vec<Value> {
    r["outputs"]["suites"].as_array().unwrap()
}

#[test]
fn verify_random_suites_pass() {
    let out = run(&["verify", "--draws", "100", "--seed", "11"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let r = report(&out);
    assert_eq!(suites(&r).len(), 7);
    for s in suites(&r) {
        assert_eq!(s["failed"], 0);
        assert_eq!(
            s["passed"].as_u64().unwrap() + s["skipped"].as_u64().unwrap(),
            100
        );
    }
    assert_eq!(r["outputs"]["all_passed"], true);
}

#[test]
fn verify_catalog_scenarios_pass() {
    for name in [
        "gurtin_mccamy_closed_form",
        "hierarchic_reference",
        "increasing_beta",
        "extinction",
    ] {
        let source = format!("catalog:{name}");
        let out = run(&["verify", "--scenario", &source, "--draws", "100"]);
        assert_eq!(
            code(&out),
            0,
            "{name}: {}",
            String::from_utf8_lossy(&out.stdout)
        );
    }
}

#[test]
fn mislabelled_monotonicity_fails_verification() {
    let dir = TempDir::new().unwrap();
    let path = write_scenario(
        &dir,
        "mislabelled.json",
        r#"{"model_kind": "hierarchic", "m": 5, "n": 400, "beta": {"expr": "3*x/(1+x)"},
            "mu": {"expr": "1+0.5*x"}, "mu0": 1, "beta_monotonicity": "decreasing"}"#,
    );
    let out = run(&[
        "verify",
        "--scenario",
        &path,
        "--draws",
        "20",
        "--seed",
        "3",
    ]);
    assert_eq!(code(&out), 1);
    let r = report(&out);
    let ray = suites(&r)
        .iter()
        .find(|s| s["suite"] == "ray_monotonicity")
        .unwrap();
    assert!(ray["failed"].as_u64().unwrap() > 0);
    assert!(ray["first_failure"]
        .as_str()
        .unwrap()
        .contains("MonotonicityViolation"));
    assert_eq!(r["error"]["code"], "PropertyFailure");
}

#[test]
fn zero_draws_pass_trivially() {
    let out = run(&["verify", "--draws", "0"]);
    assert_eq!(code(&out), 0);
    for s in suites(&report(&out)) {
        assert_eq!(
            (
                s["passed"].as_u64(),
                s["failed"].as_u64(),
                s["skipped"].as_u64()
            ),
            (Some(0), Some(0), Some(0))
        );
    }
}

#[test]
fn verify_is_deterministic_across_thread_counts() {
    let args = [
        "verify",
        "--scenario",
        "catalog:hierarchic_reference",
        "--draws",
        "30",
        "--quiet",
    ];
    let one = Command::new(BIN)
        .args(args)
        .env("STEADYPOP_THREADS", "1")
        .output()
        .unwrap();
    let many = Command::new(BIN)
        .args(args)
        .env("STEADYPOP_THREADS", "4")
        .output()
        .unwrap();
    let again = Command::new(BIN).args(args).output().unwrap();
    assert_eq!(one.stdout, many.stdout);
    assert_eq!(one.stdout, again.stdout);
}

#[test]
fn verify_dumps_generators() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("dump");
    let out = run(&[
        "verify",
        "--scenario",
        "catalog:gurtin_mccamy_closed_form",
        "--draws",
        "0",
        "--dump",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    for file in ["generator_full.txt", "generator_homogeneous.txt"] {
        let text = std::fs::read_to_string(out_dir.join(file)).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with('#'));
        assert_eq!(lines.len(), 51);
        assert!(lines[1..].iter().all(|l| l.split(' ').count() == 50));
    }
    assert_eq!(code(&run(&["verify", "--draws", "0", "--dump"])), 2);
}

#[test]
fn sweep_amplitude_follows_closed_form() {
    let dir = TempDir::new().unwrap();
    let path = write_scenario(
        &dir,
        "amp.json",
        r#"{"model_kind": "linear", "m": 5, "n": 4000,
            "beta": {"family": "hyperbolic", "params": {"amplitude": 1, "k": 0}},
            "mu": {"family": "constant", "params": {"value": 1}}, "mu0": 1}"#,
    );
    let out_dir = dir.path().join("sweep");
    let out = run(&[
        "sweep",
        "--scenario",
        &path,
        "--param",
        "beta.params.amplitude",
        "--values",
        "0.5,1,2",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let (header, rows) = read_csv(&out_dir.join("sweep.csv"));
    assert_eq!(header, ["value", "s", "R", "P_star", "error_code"]);
    let values = column(&header, &rows, "value");
    assert_eq!(values, [0.5, 1.0, 2.0]);
    for (v, r) in values.iter().zip(column(&header, &rows, "R")) {
        assert!((r - v * (1.0 - (-5.0f64).exp())).abs() < 1e-6);
    }
    for (v, s) in values.iter().zip(column(&header, &rows, "s")) {
        assert!((s - constant_rate_bound(*v, 1.0, 5.0)).abs() < 1e-5);
    }
}

#[test]
fn sweep_reports_failing_rows() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("sweep");
    let out = run(&[
        "sweep",
        "--scenario",
        "catalog:gurtin_mccamy_closed_form",
        "--param",
        "beta.params.amplitude",
        "--values",
        "2,0.5,3",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let (_, rows) = read_csv(&out_dir.join("sweep.csv"));
    assert_eq!(rows.len(), 3);
    for (row, amplitude) in rows.iter().zip([2.0, 0.5, 3.0]) {
        let failing = amplitude < 1.0;
        assert_eq!(row[3].is_empty(), failing, "{row:?}");
        assert_eq!(row[4].is_empty(), !failing, "{row:?}");
        assert!(!row[1].is_empty() && !row[2].is_empty());
        if !failing {
            let p: f64 = row[3].parse().unwrap();
            assert!((p - (amplitude * (1.0 - (-5.0f64).exp()) - 1.0)).abs() < 1e-5);
        }
    }
}

#[test]
fn sweep_over_cells_converges() {
    let out = run(&[
        "sweep",
        "--scenario",
        "catalog:constant_rate",
        "--param",
        "n",
        "--values",
        "500,1000,2000",
    ]);
    assert_eq!(code(&out), 0);
    let rows = report(&out)["outputs"]["rows"].as_array().unwrap().clone();
    let s: Vec<f64> = rows.iter().map(|r| f(&r["s"])).collect();
    let (d1, d2) = ((s[1] - s[0]).abs(), (s[2] - s[1]).abs());
    assert!(d2 <= 0.5 * d1, "{d1} -> {d2}");
    let exact = constant_rate_bound(2.0, 1.0, 5.0);
    assert!((s[2] - exact).abs() < (s[0] - exact).abs());
}

#[test]
fn sweep_rejects_non_numeric_paths() {
    let out = run(&[
        "sweep",
        "--scenario",
        "catalog:constant_rate",
        "--param",
        "beta.expr",
        "--values",
        "1",
    ]);
    assert_eq!(code(&out), 2);
    let out = run(&[
        "sweep",
        "--scenario",
        "catalog:constant_rate",
        "--param",
        "n",
        "--values",
        "1.5",
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(
        report(&out)["outputs"]["rows"][0]["error_code"],
        "InvalidScenario"
    );
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let mut reports = Vec::new();
    for d in [&a, &b] {
        let out = run(&[
            "steady-state",
            "--scenario",
            "catalog:increasing_beta",
            "--out",
            d.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0);
        let mut r = report(&out);
        r["outputs"]["csv"] = Value::Null;
        reports.push(r.to_string());
    }
    assert_eq!(reports[0], reports[1]);
    assert_eq!(
        std::fs::read(a.join("steady_state.csv")).unwrap(),
        std::fs::read(b.join("steady_state.csv")).unwrap()
    );
}

#[test]
fn catalog_lists_and_prints_entries() {
    let out = run(&["catalog"]);
    assert_eq!(code(&out), 0);
    let names = report(&out)["outputs"]["scenarios"]
        .as_array()
        .unwrap()
        .clone();
    assert!(names.iter().any(|n| n == "hierarchic_reference"));
    let entry = run(&["catalog", "constant_rate"]);
    let doc: Value = serde_json::from_slice(&entry.stdout).unwrap();
    assert_eq!(doc["model_kind"], "linear");
    assert_eq!(code(&run(&["catalog", "missing"])), 2);
}
