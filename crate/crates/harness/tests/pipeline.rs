use treecast_harness::config::read_config_file;
use treecast_harness::{run_experiment, ExperimentConfig, Report, RunOptions, Status};

const CROSS_SIGMAS: f64 = 4.0;

fn run(text: &str) -> Report {
    let cfg = ExperimentConfig::parse(text).unwrap();
    run_experiment(&cfg, &RunOptions::default()).unwrap()
}

#[test]
fn population_engine_agrees_with_full_trees() {
    let base = "experiment.id = semirandom_robustness\ntree.arity = 8\ntree.depth = 2,3\n\
                model.epsilon = 0.5\nadversary.rho = 0.1\nrun.trials = 3000\nrun.seed = 11\n";
    let tree = run(&format!("{base}run.engine = tree\n"));
    let pop = run(&format!("{base}run.engine = population\n"));
    for t in [2, 3] {
        let a = tree.metric("root_tv_damage").find(|r| r.t == t).unwrap();
        let b = pop.metric("root_tv_damage").find(|r| r.t == t).unwrap();
        let se = |r: &treecast_harness::Row| (r.ci_high - r.ci_low) / (2.0 * 1.959963984540054);
        let tol = CROSS_SIGMAS * (se(a).powi(2) + se(b).powi(2)).sqrt();
        assert!((a.mean - b.mean).abs() <= tol, "t={t}: tree {} vs population {}", a.mean, b.mean);
    }
}

#[test]
fn sidecar_reproduces_the_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::parse(
        "experiment.id = lowerbound_tv\nrun.mode = failure_rate\ntree.arity = 3\ntree.depth = 2,3\n\
         coupling.epsilon = 0.2\nadversary.rho = 0.05\nrun.trials = 500\nrun.seed = 3\n",
    )
    .unwrap();
    let first = dir.path().join("first.csv");
    let report = run_experiment(&cfg, &RunOptions::default()).unwrap();
    let sidecar = report.write(&first, &cfg).unwrap();

    let again = ExperimentConfig::from_map(read_config_file(&sidecar).unwrap()).unwrap();
    let second = dir.path().join("second.csv");
    run_experiment(&again, &RunOptions { workers: 3 }).unwrap().write(&second, &again).unwrap();
    assert_eq!(std::fs::read(&first).unwrap(), std::fs::read(&second).unwrap());

    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(&sidecar).unwrap()).unwrap();
    assert_eq!(json["ci_method"], "normal-95");
    assert_eq!(json["config"]["run.trials"], "500");
}

#[test]
fn csv_has_the_mandatory_columns() {
    let report = run("experiment.id = psi_bound\nrun.trials = 20\nrun.seed = 1\n");
    let text = String::from_utf8(report.csv_bytes().unwrap()).unwrap();
    let header = text.lines().next().unwrap();
    for col in [
        "experiment", "b", "t", "epsilon", "rho_or_budget", "strategy", "trials", "metric_name", "mean", "ci_low",
        "ci_high", "seed",
    ] {
        assert!(header.split(',').any(|c| c == col), "{col}");
    }
}

#[test]
fn overrides_apply_last_and_bad_values_name_the_key() {
    let cfg = ExperimentConfig::parse_with("experiment.id = psi_bound\nrun.trials = 100\nrun.seed = 1\n", &["trials=10"]).unwrap();
    assert_eq!(cfg.trials, 10);
    let err = ExperimentConfig::parse_with("experiment.id = psi_bound\nrun.seed = 1\n", &["epsilon=1.5"]).unwrap_err();
    assert!(err.is_config() && err.to_string().contains("model.epsilon"), "{err}");
    let err = ExperimentConfig::parse("run.trials = 5\n").unwrap_err();
    assert!(err.to_string().contains("experiment.id"), "{err}");
}

#[test]
fn psi_bound_violations_are_lower_side_only() {
    let report = run("experiment.id = psi_bound\nrun.trials = 4000\nrun.seed = 20240504\n");
    assert_eq!(report.check("psi_ratio_squared_channel").unwrap().status, Status::Pass);
    let all: f64 = report.metric("violations").map(|r| r.mean).sum();
    let below: f64 = report.metric("violations_below").map(|r| r.mean).sum();
    assert_eq!(all, below);
}
