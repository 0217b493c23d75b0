use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lsde(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lsde"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

const GENERATOR: &str = r#"
model = "L1:S1"
[params]
pulls = [[0.5]]
diffusions = [[0.3]]
level = [1.0]
"#;

const SIMULATE: &str = r#"
command = "simulate"
output_dir = "sim"
seed = 3
[simulate.generator]
file = "gen.toml"
[simulate.design]
n_sites = 1
noise_var = 0.01
times = [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0, 5.5]
"#;

#[test]
fn simulate_then_fit() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("gen.toml"), GENERATOR).unwrap();
    fs::write(d.join("sim.toml"), SIMULATE).unwrap();
    let out = lsde(&["simulate", "--config", "sim.toml"], d);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(d.join("sim/simulated.csv")).unwrap();
    assert_eq!(csv.lines().count(), 13);

    let out = lsde(
        &["fit", "--data", "sim/simulated.csv", "-m", "L1:S1", "-o", "fit", "--seed", "5"],
        d,
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let records = fs::read_to_string(d.join("fit/models.jsonl")).unwrap();
    let rec: serde_json::Value = serde_json::from_str(records.lines().next().unwrap()).unwrap();
    assert_eq!(rec["model"], "L1:S1:rw0");
    assert_eq!(rec["seed"], 5);
    assert!(rec["log_likelihood"].as_f64().unwrap().is_finite());
    assert!(rec["log_bml"].is_null());
    assert!(fs::read_to_string(d.join("fit/summary.txt")).unwrap().contains("Prior 95%"));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("bad.toml"), "command = \"fit\"\nunknown_key = 1\n").unwrap();
    assert_eq!(lsde(&["run", "-c", "bad.toml"], d).status.code(), Some(2));
    // missing data file is caught before any fitting
    fs::write(d.join("missing.toml"), "command = \"fit\"\ndata = \"nope.csv\"\nmodel = \"L1:S1\"\n").unwrap();
    assert_eq!(lsde(&["run", "-c", "missing.toml"], d).status.code(), Some(2));
    assert!(!d.join("out").exists());
    // malformed row names its line
    fs::write(d.join("bad.csv"), "site,time_my,mean_log_size,sample_variance,n\nA,0,1,0.1,0\n").unwrap();
    let out = lsde(&["fit", "--data", "bad.csv", "-m", "L1:S1"], d);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
    assert_eq!(lsde(&["fit", "--data", "bad.csv", "-m", "L9:S1"], d).status.code(), Some(2));
}

#[test]
fn all_models_failing_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // values this large overflow every likelihood evaluation
    fs::write(
        d.join("huge.csv"),
        "site,time_my,mean_log_size,sample_variance,n\nA,0,1e300,0.1,1\nA,1,-1e300,0.1,1\n",
    )
    .unwrap();
    fs::write(
        d.join("cfg.toml"),
        "command = \"compare\"\ndata = \"huge.csv\"\nmodels = [\"L1:S1\"]\n[fit.mcmc]\niterations = 10\nburn_in = 10\n[fit.ml]\nstarts = 2\n",
    )
    .unwrap();
    let out = lsde(&["run", "-c", "cfg.toml"], d);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let rec = fs::read_to_string(d.join("out/models.jsonl")).unwrap();
    assert!(rec.contains("failures"));
}
