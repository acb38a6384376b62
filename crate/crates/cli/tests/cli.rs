use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use sphere_equilibria_cli::config::{parse_config_str, ExperimentConfig};
use sphere_equilibria_cli::error::CliError;
use sphere_equilibria_cli::report::Table;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sphere-eq"))
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run_cli(config: &Path, out: &Path, extra: &[&str]) -> Output {
    bin()
        .arg("run")
        .arg(config)
        .arg("--out-dir")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

fn stderr_error(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().find(|l| l.contains("\"error\"")).expect("error JSON on stderr");
    serde_json::from_str(line).unwrap()
}

fn json_file(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

const SWEEP: &str = r#"{
  "kind": "predict-sweep",
  "model": {"j1": 1.0, "j2": 1.0, "alpha1": 0.3, "alpha2": 0.2},
  "sigmas": [0.0, 0.5, 1.0392, 2.0],
  "ns": [4, 10]
}"#;

#[test]
fn minimal_sweep_parses_with_defaults_and_round_trips() {
    let parsed = parse_config_str(SWEEP, true).unwrap();
    assert!(parsed.unknown_keys.is_empty());
    let ExperimentConfig::PredictSweep(c) = &parsed.config else {
        panic!("wrong kind")
    };
    assert_eq!(c.seed, 0);
    assert_eq!(c.ns, vec![4, 10]);
    let text = serde_json::to_string(&parsed.config).unwrap();
    let again = parse_config_str(&text, true).unwrap().config;
    assert_eq!(again, parsed.config);
    assert_eq!(again.hash(), parsed.config.hash());

    let mc = r#"{"kind": "mc-count", "model": {"j1": 1, "j2": 1, "alpha1": 0.3, "alpha2": 0.2},
                "n": 4, "sigmas": [0.5]}"#;
    let parsed = parse_config_str(mc, true).unwrap().config;
    let ExperimentConfig::McCount(c) = &parsed else { panic!("wrong kind") };
    assert_eq!(c.instances, 500);
    assert!(c.lambda_cuts.is_empty());
    assert_eq!(c.solver.tolerance, 1e-10);
    let resolved: Value = serde_json::to_value(&parsed).unwrap();
    assert_eq!(resolved["kind"], "mc-count");
    assert_eq!(resolved["instances"], 500);
    assert_eq!(resolved["solver"]["max_iterations"], 100);
    assert_eq!(parse_config_str(&resolved.to_string(), true).unwrap().config, parsed);
}

#[test]
fn exceptional_model_is_rejected_with_diagnostic() {
    // J1 = 0, alpha2 = -1/2 gives Phi2(1) = -Phi1(1), so b^2 + tau = 0 at sigma = 0.
    let text = r#"{"kind": "predict-sweep", "model": {"j1": 0, "j2": 1, "alpha1": 0, "alpha2": -0.5},
                  "sigmas": [0.5, 0.0], "ns": [4]}"#;
    let err = parse_config_str(text, false).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    let msg = err.to_string();
    assert!(msg.contains("exceptional") && msg.contains("sigmas[1]"), "{msg}");
}

#[test]
fn invalid_values_name_their_field() {
    let cases = [
        (SWEEP.replace("[4, 10]", "[4, 7]"), "ns[1]"),
        (SWEEP.replace("0.5,", "-0.5,"), "sigmas[1]"),
        (SWEEP.replace("\"j1\": 1.0", "\"j1\": -1.0"), "model.j1"),
        (SWEEP.replace("predict-sweep", "nonsense"), "kind"),
        (SWEEP.replace("\"ns\": [4, 10]", "\"ns\": []"), "ns"),
    ];
    for (text, field) in cases {
        match parse_config_str(&text, false) {
            Err(CliError::Config { field: Some(f), .. }) => assert_eq!(f, field),
            other => panic!("{field}: {other:?}"),
        }
    }
    let missing = parse_config_str(r#"{"kind": "det-identity", "tau": 0}"#, false).unwrap_err();
    assert!(missing.to_string().contains("missing field `n`"), "{missing}");
}

#[test]
fn unknown_keys_are_errors_only_in_strict_mode() {
    let text = SWEEP.replace("\"ns\"", "\"colour\": 3, \"ns\"");
    let lax = parse_config_str(&text, false).unwrap();
    assert_eq!(lax.unknown_keys, vec!["colour".to_string()]);
    match parse_config_str(&text, true) {
        Err(CliError::Config { field: Some(f), .. }) => assert_eq!(f, "colour"),
        other => panic!("{other:?}"),
    }

    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &text);
    let out = run_cli(&cfg, &dir.path().join("o"), &["--strict"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_error(&out)["error"]["field"], "colour");
    let out = run_cli(&cfg, &dir.path().join("o"), &[]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown-key"));
}

#[test]
fn sweep_run_writes_reproducible_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "sweep.json", SWEEP);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(run_cli(&cfg, &a, &[]).status.code(), Some(0));
    assert_eq!(run_cli(&cfg, &b, &["--threads", "1"]).status.code(), Some(0));
    for f in ["predictions.csv", "summary.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let csv = fs::read_to_string(a.join("predictions.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("N,tau,b2,sigma,regime,value,log_value"));
    assert_eq!(lines.count(), 8);

    let summary = json_file(&a.join("summary.json"));
    let manifest = json_file(&a.join("manifest.json"));
    assert_eq!(summary["seed"], 0);
    assert_eq!(summary["config_hash"], manifest["config_hash"]);
    assert_eq!(summary["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(summary["results"]["rows"].as_array().unwrap().len(), 8);
    for key in ["tool_version", "core_version", "wall_time_seconds", "started_unix", "threads", "config"] {
        assert!(!manifest[key].is_null(), "{key}");
    }
    assert_eq!(manifest["threads"], 1.0f64.max(json_file(&b.join("manifest.json"))["threads"].as_f64().unwrap()));
    // Full-precision floats survive the JSON summary.
    let row = &summary["results"]["rows"][2];
    let value = row["value"].as_f64().unwrap();
    let from_csv: f64 = csv.lines().nth(3).unwrap().split(',').nth(5).unwrap().parse().unwrap();
    assert_eq!(value.to_bits(), from_csv.to_bits());
}

#[test]
fn seed_flag_overrides_config_and_changes_hash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "sweep.json", SWEEP);
    run_cli(&cfg, &dir.path().join("a"), &[]);
    run_cli(&cfg, &dir.path().join("b"), &["--seed", "99"]);
    let (ma, mb) = (json_file(&dir.path().join("a/manifest.json")), json_file(&dir.path().join("b/manifest.json")));
    assert_eq!(mb["seed"], 99);
    assert_eq!(mb["config"]["seed"], 99);
    assert_ne!(ma["config_hash"], mb["config_hash"]);
}

#[test]
fn det_identity_reports_ratio_per_lambda() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "det.json",
        r#"{"kind": "det-identity", "n": 4, "tau": 0.0, "trials": 40000, "seed": 3}"#,
    );
    let out = dir.path().join("o");
    assert_eq!(run_cli(&cfg, &out, &[]).status.code(), Some(0));
    let csv = fs::read_to_string(out.join("det_identity.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("lambda,ln_predicted,ratio,ratio_stderr,z"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 2);
    for r in rows {
        assert!(r[4].abs() < 4.0, "{r:?}");
    }
}

#[test]
fn spectra_validate_writes_bin_z_scores() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "spec.json",
        r#"{"kind": "spectra-validate", "n": 8, "tau": 0.5, "trials": 20000, "bins": 16}"#,
    );
    let out = dir.path().join("o");
    assert_eq!(run_cli(&cfg, &out, &["--strict"]).status.code(), Some(0));
    let csv = fs::read_to_string(out.join("spectra.csv")).unwrap();
    assert!(csv.starts_with("bin_lo,bin_hi,center,mc_density,mc_stderr,exact_density,z\n"));
    assert_eq!(csv.lines().count(), 17);
    let s = json_file(&out.join("summary.json"));
    assert!(s["results"]["count_z"].as_f64().unwrap().abs() < 4.0);
    assert_eq!(s["results"]["verify_by_mc"], false);
}

#[test]
fn mc_count_with_no_cuts_has_header_only_interval_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "mc.json",
        r#"{"kind": "mc-count", "model": {"j1": 1, "j2": 1, "alpha1": 0.3, "alpha2": 0.2},
            "n": 4, "sigmas": [0.5, 3.0], "instances": 20}"#,
    );
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(run_cli(&cfg, &a, &[]).status.code(), Some(0));
    assert_eq!(
        fs::read_to_string(a.join("mc_intervals.csv")).unwrap(),
        "sigma,alpha,beta,mean,stderr,exact,z\n"
    );
    let totals = fs::read_to_string(a.join("mc_count.csv")).unwrap();
    assert!(totals.starts_with("sigma,instances,n_unsaturated,mean,stderr,exact,z\n"));
    assert_eq!(totals.lines().count(), 3);
    assert_eq!(fs::read_to_string(a.join("instances.csv")).unwrap().lines().count(), 41);
    assert!(json_file(&a.join("summary.json"))["results"]["points"].is_array());
    // Thread count does not change the payload.
    assert_eq!(run_cli(&cfg, &b, &["--threads", "2"]).status.code(), Some(0));
    for f in ["mc_count.csv", "instances.csv", "summary.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn strict_mode_flags_unsaturated_instances() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "mc.json",
        r#"{"kind": "mc-count", "model": {"j1": 1, "j2": 1, "alpha1": 0.3, "alpha2": 0.2},
            "n": 4, "sigmas": [0.0], "instances": 30, "lambda_cuts": [0.0],
            "solver": {"n_starts": 4}}"#,
    );
    let out = dir.path().join("o");
    let res = run_cli(&cfg, &out, &["--strict"]);
    assert_eq!(res.status.code(), Some(4), "{}", String::from_utf8_lossy(&res.stderr));
    let err = stderr_error(&res);
    assert_eq!(err["error"]["kind"], "unsaturated");
    let m = json_file(&out.join("manifest.json"));
    assert_eq!(m["unsaturated_instances"], err["error"]["instances"]);
    assert_eq!(fs::read_to_string(out.join("mc_intervals.csv")).unwrap().lines().count(), 3);
    let lax = run_cli(&cfg, &dir.path().join("lax"), &[]);
    assert_eq!(lax.status.code(), Some(0));
}

#[test]
fn transition_curve_has_exact_asymptotic_and_mc_columns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "tc.json",
        r#"{"kind": "transition-curve", "model": {"j1": 1, "j2": 1, "alpha1": 0.3, "alpha2": 0.2},
            "n": 4, "points": 5, "mc_instances": 10}"#,
    );
    let out = dir.path().join("o");
    assert_eq!(run_cli(&cfg, &out, &[]).status.code(), Some(0));
    let csv = fs::read_to_string(out.join("transition.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("sigma,sigma_over_sigma_c,tau,b2,exact,log_exact,asymptotic,log_asymptotic,mc_mean,mc_stderr")
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 5);
    assert_eq!(rows[0][1], "0");
    assert_eq!(rows[4][1], "2");
    for r in &rows {
        assert!(r.iter().all(|c| !c.is_empty()), "{r:?}");
    }
    let exact: Vec<f64> = rows.iter().map(|r| r[4].parse().unwrap()).collect();
    assert!(exact.windows(2).all(|w| w[1] <= w[0]));

    // Above the Monte Carlo size limit the MC columns stay empty.
    let big = write_config(
        dir.path(),
        "tc40.json",
        r#"{"kind": "transition-curve", "model": {"j1": 1, "j2": 1, "alpha1": 0.3, "alpha2": 0.2},
            "n": 40, "points": 3, "mc_instances": 10}"#,
    );
    let out = dir.path().join("o40");
    assert_eq!(run_cli(&big, &out, &[]).status.code(), Some(0));
    let csv = fs::read_to_string(out.join("transition.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",,")));
}

#[test]
fn dynamics_run_records_outcomes_and_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "dyn.json",
        r#"{"kind": "dynamics", "model": {"j1": 1, "j2": 1, "alpha1": 0.3, "alpha2": 0.2},
            "n": 4, "sigma": 3.2, "starts": 8, "relax": {"t_max": 500}, "trajectory_time": 5}"#,
    );
    let out = dir.path().join("o");
    assert_eq!(run_cli(&cfg, &out, &[]).status.code(), Some(0));
    let relax = fs::read_to_string(out.join("relax.csv")).unwrap();
    assert!(relax.starts_with("start,status,matched,lambda,time,speed,residual,constraint_drift\n"));
    assert_eq!(relax.lines().count(), 9);
    let traj = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert!(traj.starts_with("t,lambda,speed,x0,x1,x2,x3\n"));
    let s = json_file(&out.join("summary.json"))["results"].clone();
    assert_eq!(s["starts"], 8);
    assert!(s["max_constraint_drift"].as_f64().unwrap() <= 1e-8);
    assert_eq!(s["converged"].as_u64().unwrap() + s["cycling"].as_u64().unwrap() + s["wandering"].as_u64().unwrap(), 8);
}

#[test]
fn io_and_parse_failures_exit_with_json_errors() {
    let dir = tempfile::tempdir().unwrap();
    let missing = run_cli(&dir.path().join("none.json"), &dir.path().join("o"), &[]);
    assert_eq!(missing.status.code(), Some(2));
    assert_eq!(stderr_error(&missing)["error"]["kind"], "config");

    let bad = write_config(dir.path(), "bad.json", "{ not json");
    assert_eq!(run_cli(&bad, &dir.path().join("o"), &[]).status.code(), Some(2));

    // The output path is a regular file, so the directory cannot be created.
    let blocker = write_config(dir.path(), "blocker", "x");
    let cfg = write_config(dir.path(), "sweep.json", SWEEP);
    let io = run_cli(&cfg, &blocker.join("sub"), &[]);
    assert_eq!(io.status.code(), Some(1));
    assert_eq!(stderr_error(&io)["error"]["kind"], "io");

    let usage = bin().arg("frobnicate").output().unwrap();
    assert_eq!(usage.status.code(), Some(2));
}

#[test]
fn empty_table_serializes_to_header_only() {
    let t = Table::new(&["a", "b"]);
    assert_eq!(t.to_bytes().unwrap(), b"a,b\n");
}
