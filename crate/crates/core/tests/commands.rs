use std::fs;
use std::path::Path;

use layered_sde::io::format_dataset;
use layered_sde::run::{run, RunConfig};
use layered_sde::sim::{simulate_dataset, ObservationDesign};
use layered_sde::{Error, ModelSpec, ParamVector};

fn write_toy(dir: &Path, spec: &str, params: &ParamVector, times: &[f64], noise: f64, seed: u64) {
    let s: ModelSpec = spec.parse().unwrap();
    let design = ObservationDesign::regular(1, times, noise).unwrap();
    let data = simulate_dataset(&s, params, &design, None, seed).unwrap();
    fs::write(dir.join("toy.csv"), format_dataset(&data).unwrap()).unwrap();
}

const FRAME: &str = r#"
command = "compare"
data = "toy.csv"
[frame]
layers = [1, 2]
n_sites = 1
regional = []
deterministic = false
random_walk = true
correlation = ["none"]
forcing_layers = []
[fit.ml]
starts = 4
[fit.mcmc]
iterations = 2000
burn_in = 1000
"#;

#[test]
fn toy_frame_favours_one_layer() {
    // a slow pull; with a fast one the 2-layer models tie the 1-layer one
    let times: Vec<f64> = (0..80).map(|i| 0.5 * i as f64).collect();
    let p = ParamVector::from_layers(&[0.1], &[0.2], 1.0);
    let mut wins = 0;
    for seed in 0..5 {
        let dir = tempfile::tempdir().unwrap();
        write_toy(dir.path(), "L1:S1", &p, &times, 0.01, 100 + seed);
        let mut cfg = RunConfig::from_toml(FRAME, dir.path()).unwrap();
        cfg.seed = seed;
        let out = run(&cfg).unwrap();
        assert_eq!(out.bundle.records.len(), 4);
        let layers = out
            .bundle
            .property_tables
            .iter()
            .find(|t| t.property == "number of layers")
            .expect("layer weights");
        if layers.weights[0].weight > 0.5 {
            wins += 1;
        }
    }
    assert!(wins >= 3, "one layer favoured in {wins}/5");
}

#[test]
fn bands_widen_away_from_observations() {
    let dir = tempfile::tempdir().unwrap();
    // two clusters of samples with a 6 My gap between them
    let times: Vec<f64> = (0..10).map(|i| 0.2 * i as f64).chain((0..10).map(|i| 8.0 + 0.2 * i as f64)).collect();
    let p = ParamVector::from_layers(&[4.0, 0.3], &[0.4, 0.3], 1.0);
    write_toy(dir.path(), "L2:S1", &p, &times, 0.005, 4);
    let text = r#"
        command = "smooth"
        data = "toy.csv"
        model = "L2:S1"
        [smooth]
        grid = [-1.0, 11.0, 0.1]
        draws = 40
        [fit.mcmc]
        iterations = 1000
        burn_in = 500
    "#;
    let cfg = RunConfig::from_toml(text, dir.path()).unwrap();
    let out = run(&cfg).unwrap();
    let width = |t: f64| {
        let r = out
            .bundle
            .states
            .iter()
            .find(|r| r.layer == 1 && (r.time - t).abs() < 1e-9)
            .unwrap();
        r.upper - r.lower
    };
    let far = width(5.0);
    for &t in &times {
        let t = (t * 10.0f64).round() / 10.0;
        assert!(far > width(t), "width at 5.0 = {far}, at {t} = {}", width(t));
    }
    let csv = fs::read_to_string(cfg.output_path().join("states.csv")).unwrap();
    assert!(csv.starts_with("time_my,layer,site,mean,lower,upper"));
    assert_eq!(csv.lines().count(), 1 + 2 * 121);
}

#[test]
fn fixed_parameter_smoothing_is_fast_path() {
    let dir = tempfile::tempdir().unwrap();
    let times: Vec<f64> = (0..12).map(|i| i as f64).collect();
    write_toy(dir.path(), "L1:S1", &ParamVector::from_layers(&[0.5], &[0.3], 0.0), &times, 0.01, 1);
    let text = r#"
        command = "smooth"
        data = "toy.csv"
        model = "L1:S1"
        [smooth]
        times = [0.5, 20.0]
        [smooth.params]
        pulls = [[0.5]]
        diffusions = [[0.3]]
        level = [0.0]
    "#;
    let out = run(&RunConfig::from_toml(text, dir.path()).unwrap()).unwrap();
    assert!(out.bundle.records.is_empty());
    let far = &out.bundle.states[1];
    // far from the data the band approaches the stationary one
    let sd = 0.3 / (2.0f64 * 0.5).sqrt();
    assert!(((far.upper - far.lower) / (2.0 * 1.959963984540054 * sd) - 1.0).abs() < 0.01);
}

#[test]
fn inputs_are_checked_before_work() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("toy.csv"), "site,time_my,mean_log_size,sample_variance,n\nA,0,1,0.1,2\n").unwrap();
    let bad_model = "command = \"fit\"\ndata = \"toy.csv\"\nmodels = [\"L1:S1\", \"L2:S1:bogus\"]\n";
    let e = run(&RunConfig::from_toml(bad_model, d).unwrap()).unwrap_err();
    assert!(matches!(e, Error::Config(_)));
    let wrong_sites = "command = \"fit\"\ndata = \"toy.csv\"\nmodel = \"L1:S2\"\n";
    assert!(run(&RunConfig::from_toml(wrong_sites, d).unwrap()).is_err());
    let no_forcing = "command = \"fit\"\ndata = \"toy.csv\"\nmodel = \"L1:S1:forcing@1\"\n";
    assert!(run(&RunConfig::from_toml(no_forcing, d).unwrap()).is_err());
    let both_priors = "command = \"fit\"\ndata = \"toy.csv\"\nmodel = \"L1:S1\"\nprior_file = \"p.toml\"\n[prior]\nbeta = [-1.0, 1.0]\n";
    assert!(run(&RunConfig::from_toml(both_priors, d).unwrap()).is_err());
    assert!(!d.join("out").exists());
}

#[test]
fn simulation_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"
        command = "simulate"
        seed = 12
        [simulate.generator]
        model = "L2:S2:regpull@2"
        params = { pulls = [[5.0], [0.3, 0.8]], diffusions = [[0.2], [0.3]], level = [0.5] }
        [simulate.design]
        n_sites = 2
        noise_var = 0.01
        times = [0.0, 1.0, 2.0, 3.0]
    "#;
    let mut outs = Vec::new();
    for k in 0..2 {
        let mut cfg = RunConfig::from_toml(text, dir.path()).unwrap();
        cfg.output_dir = format!("o{k}").into();
        run(&cfg).unwrap();
        outs.push(fs::read(cfg.output_path().join("simulated.csv")).unwrap());
    }
    assert_eq!(outs[0], outs[1]);
    assert_eq!(String::from_utf8(outs[0].clone()).unwrap().lines().count(), 9);
}

#[test]
fn example_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut runs = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_none_or(|e| e != "toml") {
            continue;
        }
        let text = fs::read_to_string(&path).unwrap();
        if text.contains("[params]") {
            let g: layered_sde::run::GeneratorFile = toml::from_str(&text).unwrap();
            let spec = g.model.parse::<ModelSpec>().unwrap().normalized().unwrap();
            g.params.check(&spec).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        } else {
            RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            runs += 1;
        }
    }
    assert!(runs >= 5);
}
