use std::path::Path;

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("treecast").chain(args.iter().copied());
    let code = treecast::run_with(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

#[test]
fn infer_star_tree() {
    let (code, out, _) = run(&["infer", "--b", "3", "--t", "1", "--epsilon", "0.3", "--leaves", "++-"]);
    assert_eq!(code, 0);
    let x: f64 = out.trim().parse().unwrap();
    assert!((x - 0.3).abs() < 1e-15, "{x}");
}

#[test]
fn unknown_flag_prints_usage() {
    let (code, _, err) = run(&["infer", "--nope"]);
    assert_eq!(code, 2);
    assert!(err.contains("Usage"), "{err}");
}

#[test]
fn bad_leaves_are_usage_errors() {
    let (code, _, err) = run(&["infer", "--b", "2", "--t", "1", "--epsilon", "0.3", "--leaves", "+x"]);
    assert_eq!(code, 2, "{err}");
    let (code, _, _) = run(&["infer", "--b", "2", "--t", "1", "--epsilon", "0.3", "--leaves", "+++"]);
    assert_eq!(code, 2);
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn config_errors_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "a.cfg", "experiment.id = psi_bound\nrun.trials = 10\n");
    let (code, _, err) = run(&["experiment", "--config", &cfg, "--set", "model.epsilon=1.5"]);
    assert_eq!(code, 2);
    assert!(err.contains("model.epsilon"), "{err}");
    let missing = write(dir.path(), "b.cfg", "run.trials = 10\n");
    let (code, _, err) = run(&["experiment", "--config", &missing]);
    assert_eq!(code, 2);
    assert!(err.contains("experiment.id"), "{err}");
    let (code, _, _) = run(&["experiment", "--config", &dir.path().join("absent.cfg").display().to_string()]);
    assert_eq!(code, 1);
}

#[test]
fn experiment_output_is_reproducible_from_its_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.cfg",
        "experiment.id = lowerbound_tv\nrun.mode = failure_rate\ntree.arity = 2\ntree.depth = 2,3\n\
         coupling.epsilon = 0.2\nadversary.rho = 0.1\nrun.trials = 300\n",
    );
    let one = dir.path().join("one");
    let two = dir.path().join("two");
    let (code, out, err) = run(&["experiment", "--config", &cfg, "--seed", "9", "--out-dir", one.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("failure_trend"), "{out}");
    let sidecar = one.join("lowerbound_tv.json");
    let (code, _, _) = run(&[
        "experiment",
        "--config",
        sidecar.to_str().unwrap(),
        "--workers",
        "2",
        "--out-dir",
        two.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let a = std::fs::read(one.join("lowerbound_tv.csv")).unwrap();
    let b = std::fs::read(two.join("lowerbound_tv.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn simulate_is_seeded() {
    let args = ["simulate", "--b", "2", "--t", "4", "--epsilon", "0.4", "--seed", "8"];
    let (code, a, _) = run(&args);
    assert_eq!(code, 0);
    assert_eq!(a, run(&args).1);
    assert!(a.lines().nth(1).unwrap().trim_start_matches("leaves ").len() == 16);
}

#[test]
fn verify_passes() {
    let (code, out, err) = run(&["verify"]);
    assert_eq!(code, 0, "{out}{err}");
    assert!(out.ends_with("verify: ok\n"));
}
