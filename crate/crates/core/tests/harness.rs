use std::fs;

use cnc_core::envs::MiniPongConfig;
use cnc_core::harness::{
    bundled_corpus, run, run_control, run_oracle_cert, ControlEnv, ControlSpec, ExperimentConfig, OracleCert,
};

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn cert_covers_corpus_and_flags_the_periodic_chain() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = OracleCert {
        random: 4,
        ..OracleCert::default()
    };
    let report = run_oracle_cert(&spec, 0, tmp.path()).unwrap();
    assert!(report.passed(), "{:?}", report.checks);
    let rows = csv_rows(&fs::read_to_string(tmp.path().join("oracle_cert.csv")).unwrap());
    assert_eq!(rows.len(), bundled_corpus().len() + 4);
    let cycle = rows.iter().find(|r| r[0] == "cycle2").unwrap();
    assert_eq!(cycle[8], "2");
    assert_eq!(cycle[11], "\"periodic\"");
    let horizons: Vec<&str> = rows.iter().filter(|r| r[1] == "random").map(|r| r[4].as_str()).collect();
    assert_eq!(horizons, ["1", "2", "3", "4"]);
}

#[test]
fn cert_records_solver_errors_as_failures() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = OracleCert {
        random: 0,
        window_cap: 2,
        ..OracleCert::default()
    };
    let report = run_oracle_cert(&spec, 0, tmp.path()).unwrap();
    assert!(!report.passed());
    let csv = fs::read_to_string(tmp.path().join("oracle_cert.csv")).unwrap();
    assert!(csv.contains("\"error: "));
}

#[test]
fn rate_summary_ratios_are_consistent() {
    let tmp = tempfile::tempdir().unwrap();
    let config = ExperimentConfig::parse(
        "seed = 3\ntrials = 4\n[experiment]\nkind = \"rate-test\"\ncheckpoints = [1000, 4000, 16000]\nratio_range = [0.0, 1000.0]\n",
    )
    .unwrap();
    let report = run(&config, tmp.path()).unwrap();
    assert!(report.passed(), "{:?}", report.checks);
    let summary = csv_rows(&fs::read_to_string(tmp.path().join("rate_summary.csv")).unwrap());
    assert_eq!(summary.len(), 3);
    for w in summary.windows(2) {
        let ratio: f64 = w[0][4].parse().unwrap();
        let expected = w[0][1].parse::<f64>().unwrap() / w[1][1].parse::<f64>().unwrap();
        assert!((ratio - expected).abs() <= 1e-12 * expected);
    }
    assert_eq!(summary[2][4], "");
}

#[test]
fn rate_rejects_bad_checkpoints() {
    let tmp = tempfile::tempdir().unwrap();
    for cps in ["[1000]", "[4000, 1000]", "[0, 1000]"] {
        let config = ExperimentConfig::parse(&format!("[experiment]\nkind = \"rate-test\"\ncheckpoints = {cps}\n")).unwrap();
        assert!(run(&config, tmp.path()).is_err(), "{cps}");
    }
}

fn small_control() -> ControlSpec {
    let mut spec = ControlSpec {
        env: ControlEnv::Minipong(MiniPongConfig {
            width: 8,
            height: 8,
            points_to_win: 3,
            ..MiniPongConfig::default()
        }),
        steps: 4000,
        report_every: 1000,
        final_episodes: 5,
        ..ControlSpec::default()
    };
    spec.engine.horizon = 8;
    spec.engine.epsilon.decay_steps = 2000;
    spec
}

#[test]
fn control_outputs_are_complete_and_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = small_control();
    let a = run_control(&spec, 1, 2, &tmp.path().join("a")).unwrap();
    run_control(&spec, 1, 2, &tmp.path().join("b")).unwrap();
    assert_eq!(a.files, ["control_episodes.csv", "control_curve.csv", "control_summary.csv"]);
    for f in &a.files {
        assert_eq!(
            fs::read(tmp.path().join("a").join(f)).unwrap(),
            fs::read(tmp.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }
    let curve = csv_rows(&fs::read_to_string(tmp.path().join("a/control_curve.csv")).unwrap());
    assert_eq!(curve.len(), 2 * 4);
    assert_eq!(curve[3][1], "4000");
    assert_eq!(curve[3][4], "0.02");
    assert_eq!(curve[4][4], "1.0");
    assert_eq!(a.checks.len(), 1);
}

#[test]
fn single_trial_control_cannot_pass() {
    let tmp = tempfile::tempdir().unwrap();
    let report = run_control(&small_control(), 1, 1, tmp.path()).unwrap();
    assert!(!report.checks[0].passed);
}

#[test]
fn control_without_baseline_has_no_check() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = ControlSpec {
        baseline: false,
        ..small_control()
    };
    let report = run_control(&spec, 1, 2, tmp.path()).unwrap();
    assert!(report.checks.is_empty());
    let summary = fs::read_to_string(tmp.path().join("control_summary.csv")).unwrap();
    assert!(!summary.contains("random"));
}

#[test]
fn manifest_config_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let config = ExperimentConfig::parse("seed = 8\n[experiment]\nkind = \"oracle-cert\"\nrandom = 3\n").unwrap();
    run(&config, &tmp.path().join("a")).unwrap();
    let manifest = fs::read_to_string(tmp.path().join("a/manifest.txt")).unwrap();
    let resolved = manifest.split("# resolved configuration\n").nth(1).unwrap();
    let again = ExperimentConfig::parse(resolved).unwrap();
    assert_eq!(again.hash(), config.hash());
    run(&again, &tmp.path().join("b")).unwrap();
    for f in ["oracle_cert.csv", "manifest.txt"] {
        assert_eq!(
            fs::read(tmp.path().join("a").join(f)).unwrap(),
            fs::read(tmp.path().join("b").join(f)).unwrap()
        );
    }
}
