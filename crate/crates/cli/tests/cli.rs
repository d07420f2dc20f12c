use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn otl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_otl")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

fn run(cmd: &str, config: &str, out: &Path, extra: &[&str]) -> Output {
    let out = out.to_string_lossy();
    let mut args = vec![cmd, "--config", config, "--out", &out];
    args.extend_from_slice(extra);
    otl(&args)
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn data_rows(csv: &str) -> usize {
    // provenance comment and header precede the data
    csv.lines().filter(|l| !l.starts_with('#')).count() - 1
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const RATES: &str = r#"{"seed": 7, "task": {"kind": "kinked", "dim": 2, "noise_sd": 0.1},
  "m_grid": [40, 80, 160], "trials": 3, "m_source": 400, "n_eval": 400, "solver": {"tol": 1e-4}}"#;

#[test]
fn rates_writes_one_row_per_m_and_reruns_identically() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "rates.json", RATES);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&run("rates", &cfg, &a, &[])), 0);
    assert_eq!(code(&run("rates", &cfg, &b, &[])), 0);
    let csv = std::fs::read_to_string(a.join("rates.csv")).unwrap();
    assert_eq!(data_rows(&csv), 3);
    assert!(csv.starts_with("# otl seed=7 config_hash="));
    assert!(csv.contains("m,mean_err_transfer,sd_transfer,mean_err_direct,sd_direct"));
    assert_eq!(csv, std::fs::read_to_string(b.join("rates.csv")).unwrap());

    let summary = json(&a.join("summary.json"));
    for key in ["command", "seed", "config_hash", "wall_time_s", "config", "results"] {
        assert!(summary.get(key).is_some(), "missing {key}");
    }
    let results = &summary["results"];
    assert!(results["slope_transfer"]["slope"].is_number());
    assert!(results["theory_direct"].is_number());
    assert_eq!(results["advantage_condition"], true);
}

#[test]
fn seed_flag_overrides_the_config() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "rates.json", RATES);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&run("rates", &cfg, &a, &["--seed", "99"])), 0);
    assert_eq!(code(&run("rates", &cfg, &b, &[])), 0);
    let with_flag = std::fs::read_to_string(a.join("rates.csv")).unwrap();
    assert!(with_flag.starts_with("# otl seed=99 "));
    assert_ne!(with_flag, std::fs::read_to_string(b.join("rates.csv")).unwrap());
    assert_eq!(json(&a.join("summary.json"))["seed"], 99);
}

#[test]
fn single_point_grid_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.json",
        r#"{"seed": 1, "task": {"kind": "identity", "dim": 2}, "m_grid": [100]}"#,
    );
    let out = run("rates", &cfg, &dir.path().join("o"), &[]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("2 points"));
    assert!(!dir.path().join("o").exists());
}

#[test]
fn unknown_keys_and_missing_files_are_config_errors() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "typo.json",
        r#"{"seed": 1, "task": {"kind": "identity", "dim": 2}, "m_grid": [50, 100], "solver": {"tolerance": 1e-6}}"#,
    );
    assert_eq!(code(&run("rates", &cfg, &dir.path().join("o"), &[])), 2);
    let missing = dir.path().join("nope.json");
    assert_eq!(code(&run("rates", &missing.to_string_lossy(), &dir.path().join("o"), &[])), 2);
}

#[test]
fn unconverged_trials_invalidate_the_sweep() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "stuck.json",
        r#"{"seed": 3, "task": {"kind": "kinked", "dim": 2, "noise_sd": 0.1},
           "m_grid": [30, 60], "trials": 2, "m_source": 200, "n_eval": 100,
           "solver": {"tol": 1e-14, "max_iter": 1}}"#,
    );
    let out = run("rates", &cfg, &dir.path().join("o"), &[]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

const CLASSIFY: &str = r#"{"seed": 5, "task": {"kind": "kinked", "dim": 2, "noise_sd": 0.1},
  "m_grid": [40, 80], "trials": 3, "m_source": 400, "n_eval": 400, "solver": {"tol": 1e-4}, "threshold": 0.0}"#;

#[test]
fn classify_writes_both_tables_and_reruns_identically() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "classify.json", CLASSIFY);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&run("classify", &cfg, &a, &[])), 0);
    assert_eq!(code(&run("classify", &cfg, &b, &[])), 0);
    for name in ["metrics.csv", "improvement.csv"] {
        let text = std::fs::read_to_string(a.join(name)).unwrap();
        assert_eq!(data_rows(&text), 2, "{name}");
        assert_eq!(text, std::fs::read_to_string(b.join(name)).unwrap(), "{name}");
    }
    let metrics = std::fs::read_to_string(a.join("metrics.csv")).unwrap();
    assert!(metrics.contains("auroc_direct") && metrics.contains("sensitivity_transfer"));
    assert!(!metrics.contains("null"));
    assert_eq!(json(&a.join("summary.json"))["results"]["warnings"], 0);
}

#[test]
fn single_class_rows_degrade_to_nulls_with_a_warning_count() {
    let dir = TempDir::new().unwrap();
    let body = CLASSIFY.replace("\"threshold\": 0.0", "\"threshold\": 1e6");
    let cfg = write_config(dir.path(), "degenerate.json", &body);
    let out = run("classify", &cfg, &dir.path().join("o"), &[]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("single-class"));
    let metrics = std::fs::read_to_string(dir.path().join("o/metrics.csv")).unwrap();
    assert!(metrics.contains("null"));
    assert_eq!(json(&dir.path().join("o/summary.json"))["results"]["warnings"], 6);
}

#[test]
fn classify_without_threshold_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "rates.json", RATES);
    assert_eq!(code(&run("classify", &cfg, &dir.path().join("o"), &[])), 2);
}

#[test]
fn identity_demo_stays_within_five_percent_of_the_diameter() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "demo.json",
        r#"{"seed": 7, "pair": {"kind": "identity", "dim": 2}, "m": 1000, "epsilon_rel": 0.02, "tol": 1e-6}"#,
    );
    let out_dir = dir.path().join("o");
    let out = run("ot-demo", &cfg, &out_dir, &[]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["map_nd.csv", "map_1d.csv", "report.csv", "summary.json"] {
        assert!(out_dir.join(name).exists(), "{name}");
    }
    let summary = json(&out_dir.join("summary.json"));
    for dev in summary["results"]["deviations"].as_array().unwrap() {
        let sup = dev["rel_sup_dev"].as_f64().unwrap();
        let l2 = dev["rel_l2_dev"].as_f64().unwrap();
        eprintln!("identity demo {}: rel_sup {sup:.4}, rel_l2 {l2:.4}", dev["map"]);
        assert!(sup < 0.05 && l2 < 0.05, "{dev}");
    }
}

#[test]
fn translation_demo_reports_deviation_from_the_shift() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "shift.json",
        r#"{"seed": 9, "pair": {"kind": "translation", "shift": [1.0, -0.5]}, "m": 400, "tol": 1e-6}"#,
    );
    let out_dir = dir.path().join("o");
    assert_eq!(code(&run("ot-demo", &cfg, &out_dir, &[])), 0);
    let report = std::fs::read_to_string(out_dir.join("report.csv")).unwrap();
    assert!(report.contains("map,dim,grid_points,sup_dev,l2_dev,diameter,rel_sup_dev,rel_l2_dev"));
    let dev = &json(&out_dir.join("summary.json"))["results"]["deviations"][0];
    assert!(dev["sup_dev"].as_f64().unwrap().is_finite());
    assert!(dev["l2_dev"].as_f64().unwrap() < 0.5);
}

#[test]
fn non_positive_epsilon_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    for eps in ["0.0", "-1.0"] {
        let cfg = write_config(
            dir.path(),
            "eps.json",
            &format!(r#"{{"seed": 1, "pair": {{"kind": "identity", "dim": 2}}, "m": 50, "epsilon": {eps}}}"#),
        );
        assert_eq!(code(&run("ot-demo", &cfg, &dir.path().join("o"), &[])), 2);
    }
}

#[test]
fn solver_exhaustion_is_a_numerical_failure() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "stuck.json",
        r#"{"seed": 1, "pair": {"kind": "identity", "dim": 2}, "m": 700, "tol": 1e-15, "max_iter": 1}"#,
    );
    let out = run("ot-demo", &cfg, &dir.path().join("o"), &[]);
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
}
