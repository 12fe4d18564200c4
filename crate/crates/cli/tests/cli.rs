use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_disparity"))
}

fn repo(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn simulate(dir: &TempDir, scm: &Path, n: usize, seed: u64, extra: &[&str]) -> PathBuf {
    let out = dir.path().join(format!("sim{seed}_{n}.csv"));
    let mut args = vec![
        "simulate".to_string(),
        "--scm".into(),
        scm.display().to_string(),
        "--n".into(),
        n.to_string(),
        "--seed".into(),
        seed.to_string(),
        "--out".into(),
        out.display().to_string(),
    ];
    args.extend(extra.iter().map(|s| s.to_string()));
    let o = bin().args(&args).output().unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn names(v: &Value) -> Vec<String> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|s| s.as_str().unwrap().to_string())
        .collect()
}

fn admissible<'a>(report: &'a Value, block: &[&str]) -> &'a Value {
    report["admissible"]
        .as_array()
        .unwrap()
        .iter()
        .find(|a| names(&a["mediator"]) == block)
        .unwrap_or_else(|| panic!("no admissible entry for {block:?}"))
}

fn validate(instance: &Value) {
    let schema: Value = serde_json::from_str(&fs::read_to_string(repo("schema/report.schema.json")).unwrap()).unwrap();
    let v = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = v.iter_errors(instance).map(|e| format!("{} at {}", e, e.instance_path())).collect();
    assert!(errors.is_empty(), "{errors:#?}");
}

#[test]
fn simulate_running_example_truth() {
    let dir = TempDir::new().unwrap();
    let csv = simulate(&dir, &repo("data/running_example.scm"), 100, 1, &["--joint", "M1+M2"]);
    let truth = json(&csv.with_file_name("sim1_100.truth.json"));
    let delta = |block: &[&str]| -> f64 {
        truth["effects"]
            .as_array()
            .unwrap()
            .iter()
            .find(|e| names(&e["mediators"]) == block)
            .unwrap()["delta"]
            .as_f64()
            .unwrap()
    };
    assert_eq!(delta(&["M1"]), 16.0);
    assert_eq!(delta(&["M2"]), 21.0);
    assert_eq!(delta(&["M1", "M2"]), 25.0);
    assert_eq!(truth["effects"][0]["method"], "analytic_linear");
    let lines = fs::read_to_string(&csv).unwrap().lines().count();
    assert_eq!(lines, 101);
}

#[test]
fn simulate_zero_rows_and_nonlinear() {
    let dir = TempDir::new().unwrap();
    let csv = simulate(&dir, &repo("data/running_example.scm"), 0, 0, &[]);
    assert_eq!(fs::read_to_string(&csv).unwrap().trim(), "R,X,M1,M2,Y");

    let scm = dir.path().join("nl.scm");
    fs::write(
        &scm,
        "var R = bernoulli(0.5)\nvar X = normal(0,1)\nvar M = tanh(R + X) + normal(0,1)\n\
         var Y = sin(M) + X + normal(0,1)\nexposure R\noutcome Y\n",
    )
    .unwrap();
    let csv = simulate(&dir, &scm, 10, 2, &["--n-sim", "20000"]);
    let truth = json(&csv.with_file_name("sim2_10.truth.json"));
    let m = &truth["effects"][1];
    assert_eq!(m["method"], "monte_carlo");
    assert!(m["mc_se"].as_f64().unwrap() > 0.0);
}

#[test]
fn simulate_reports_spec_line() {
    let dir = TempDir::new().unwrap();
    let scm = dir.path().join("bad.scm");
    fs::write(&scm, "var R = bernoulli(0.5)\nvar Y = Q + normal(0,1)\nexposure R\noutcome Y\n").unwrap();
    let o = run(&["simulate", "--scm", scm.to_str().unwrap(), "--n", "5", "--out", dir.path().join("x.csv").to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn discover_running_example_on_data() {
    let dir = TempDir::new().unwrap();
    let csv = simulate(&dir, &repo("data/running_example.scm"), 10_000, 1, &[]);
    let out = dir.path().join("d.json");
    let o = run(&[
        "discover",
        "--input",
        csv.to_str().unwrap(),
        "--exposure",
        "R",
        "--outcome",
        "Y",
        "--contexts",
        "R",
        "--seed",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&out);
    assert_eq!(names(&r["mediators"]), vec!["M1", "M2"]);
    assert_eq!(names(&admissible(&r, &["M1"])["b_m"]), vec!["X"]);
    validate(&r);
}

#[test]
fn oracle_discovery_is_noise_free() {
    let dir = TempDir::new().unwrap();
    let csv = simulate(&dir, &repo("data/running_example.scm"), 300, 3, &[]);
    let graph = dir.path().join("g.txt");
    fs::write(
        &graph,
        "nodes R X M1 M2 Y\nR --> M1\nX --> M1\nM1 --> M2\nR --> M2\nX --> M2\n\
         M1 --> Y\nM2 --> Y\nX --> Y\nR --> Y\n",
    )
    .unwrap();
    let ci = format!("oracle:{}", graph.display());
    let mut reports = Vec::new();
    for i in 0..2 {
        let out = dir.path().join(format!("o{i}.json"));
        let o = run(&[
            "discover", "--input", csv.to_str().unwrap(), "--exposure", "R", "--outcome", "Y",
            "--ci-test", &ci, "--joint", "M1+M2", "--out", out.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        reports.push(fs::read_to_string(&out).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    let r: Value = serde_json::from_str(&reports[0]).unwrap();
    assert_eq!(names(&admissible(&r, &["M1"])["b_m"]), vec!["X"]);
    assert_eq!(names(&admissible(&r, &["M2"])["b_m"]), vec!["X", "M1"]);
    assert_eq!(names(&admissible(&r, &["M1", "M2"])["b_m"]), vec!["X"]);
    validate(&r);
}

#[test]
fn decompose_is_deterministic_and_telescopes() {
    let dir = TempDir::new().unwrap();
    let csv = simulate(&dir, &repo("data/running_example.scm"), 3000, 4, &[]);
    let config = dir.path().join("run.toml");
    fs::write(
        &config,
        format!(
            "input = \"{}\"\nexposure = \"R\"\noutcome = \"Y\"\ncontexts = [\"R\"]\nbootstrap = 100\nseed = 9\njoint = [\"M1+M2\"]\n",
            csv.display()
        ),
    )
    .unwrap();
    let mut outs = Vec::new();
    for i in 0..2 {
        let out = dir.path().join(format!("r{i}.json"));
        let o = run(&["decompose", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        outs.push(out);
    }
    let a = fs::read(&outs[0]).unwrap();
    assert_eq!(a, fs::read(&outs[1]).unwrap());
    let r = json(&outs[0]);
    validate(&r);
    assert_eq!(r["meta"]["estimator"]["seed"], 9);
    for e in r["effects"].as_array().unwrap() {
        let (d, z, t) = (e["delta_hat"].as_f64().unwrap(), e["zeta_hat"].as_f64().unwrap(), e["total_disparity_hat"].as_f64().unwrap());
        assert!((d + z - t).abs() <= 1e-10 * t.abs());
    }
    let plot = fs::read_to_string(dir.path().join("r0.plot.csv")).unwrap();
    assert!(plot.starts_with("mediator,delta,zeta,ci_low,ci_high\n"));
    assert!(plot.contains("\nM1+M2,"));
}

#[test]
fn flags_override_config() {
    let dir = TempDir::new().unwrap();
    let csv = simulate(&dir, &repo("data/running_example.scm"), 500, 5, &[]);
    let config = dir.path().join("run.toml");
    fs::write(&config, format!("input = \"{}\"\nexposure = \"R\"\noutcome = \"Nope\"\n", csv.display())).unwrap();
    let o = run(&["discover", "--config", config.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let o = run(&["discover", "--config", config.to_str().unwrap(), "--outcome", "Y", "--alpha", "0.01"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["meta"]["alpha"], 0.01);
}

#[test]
fn input_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "R,M,Y\n0,1.5,2\n1,oops,3\n").unwrap();
    let o = run(&["discover", "--input", bad.to_str().unwrap(), "--exposure", "R", "--outcome", "Y"]);
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3") && err.contains("`M`"), "{err}");

    let csv = simulate(&dir, &repo("data/running_example.scm"), 40, 6, &[]);
    let o = run(&["decompose", "--input", csv.to_str().unwrap(), "--exposure", "R", "--outcome", "Y", "--ci-test", "fisher_z"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("sample size"));

    let o = run(&["discover", "--input", csv.to_str().unwrap(), "--exposure", "R", "--outcome", "Y", "--alpha", "0.7"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn latent_confounding_is_refused() {
    let dir = TempDir::new().unwrap();
    let scm = dir.path().join("confounded.scm");
    fs::write(
        &scm,
        "var R = bernoulli(0.5)\nvar U = normal(0,1)\nvar Z = normal(0,1)\n\
         var M = R + U + Z + normal(0,1)\nvar Y = 2 * R + U + normal(0,1)\n\
         exposure R\noutcome Y\nlatent U\n",
    )
    .unwrap();
    let csv = simulate(&dir, &scm, 500, 7, &[]);
    let graph = dir.path().join("g.txt");
    fs::write(&graph, "R --> M\nU --> M\nZ --> M\nR --> Y\nU --> Y\n").unwrap();
    let ci = format!("oracle:{}", graph.display());
    let out = dir.path().join("r.json");
    let o = run(&[
        "decompose", "--input", csv.to_str().unwrap(), "--exposure", "R", "--outcome", "Y",
        "--ci-test", &ci, "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("if and only if"));
    let r = json(&out);
    assert_eq!(r["effects"].as_array().unwrap().len(), 0);
    assert_eq!(r["admissible"][0]["identifiable"], false);
    validate(&r);
}
