//! Configuration-driven runs behind the command-line tool.
//!
//! A run reads a TOML configuration, loads and validates every input before
//! any computation, dispatches one command and writes its outputs
//! atomically into the output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::forcing::ForcingSeries;
use crate::inference::{
    fit_model, format_property_tables, mcmc_sample_target, posterior_model_probabilities,
    property_weights, quantile_sorted, FitConfig, FitResult, PropertyTable, Target,
};
use crate::io::{format_dataset, load_dataset, load_forcing, to_json_lines, write_atomic};
use crate::kalman::{smooth, Z95};
use crate::model_space::{enumerate_models, standard_categorizations, Coord, ModelFrame, PriorSpec};
use crate::params::ParamVector;
use crate::posterior::posterior_process_draws;
use crate::sim::{run_selection_study, simulate_dataset, Criterion, ObservationDesign, StudyConfig, StudyResult};
use crate::spec::ModelSpec;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Fit,
    Sample,
    #[default]
    Compare,
    Smooth,
    Simulate,
    Study,
}

/// Where simulated observations are made.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignSection {
    /// Dataset whose times and noise are copied.
    pub file: Option<PathBuf>,
    /// Regular design: the same times at every site.
    pub times: Vec<f64>,
    pub noise_var: f64,
    pub n_sites: usize,
}

/// A model name with parameters, inline or from a file holding both.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorEntry {
    pub model: Option<String>,
    pub params: Option<ParamVector>,
    pub file: Option<PathBuf>,
}

/// Contents of a generator parameter file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorFile {
    pub model: String,
    #[serde(default)]
    pub note: Option<String>,
    pub params: ParamVector,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoothSection {
    pub times: Vec<f64>,
    /// `[start, end, step]` in My, used when `times` is empty.
    pub grid: Option<[f64; 3]>,
    /// Posterior draws mixed into the bands.
    pub draws: usize,
    pub realizations: bool,
    /// Smooth at fixed parameters instead of sampling them.
    pub params: Option<ParamVector>,
}

impl Default for SmoothSection {
    fn default() -> Self {
        SmoothSection {
            times: Vec::new(),
            grid: None,
            draws: 200,
            realizations: false,
            params: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub generator: GeneratorEntry,
    pub design: DesignSection,
}


#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudySection {
    pub generators: Vec<GeneratorEntry>,
    pub candidates: Vec<String>,
    pub replicates: usize,
    pub criteria: Vec<Criterion>,
    pub design: DesignSection,
}

impl Default for StudySection {
    fn default() -> Self {
        StudySection {
            generators: Vec::new(),
            candidates: Vec::new(),
            replicates: 20,
            criteria: vec![Criterion::Aic, Criterion::Bic, Criterion::Bml],
            design: DesignSection::default(),
        }
    }
}

/// A complete run description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub command: Command,
    #[serde(default)]
    pub data: Option<PathBuf>,
    #[serde(default)]
    pub forcing: Option<PathBuf>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Worker threads; all available cores when absent.
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub models: Vec<String>,
    #[serde(default)]
    pub frame: Option<ModelFrame>,
    #[serde(default)]
    pub prior: Option<PriorSpec>,
    #[serde(default)]
    pub prior_file: Option<PathBuf>,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub smooth: SmoothSection,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub study: StudySection,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn default_seed() -> u64 {
    1
}

fn config_error(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

impl RunConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(config_error)?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        RunConfig::from_toml(&text, base)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_path(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }
}

/// Parameter summary in the layout of a parameter table: ML estimate,
/// posterior median and 95% prior and posterior intervals, all on the
/// natural scale (pulls in 1/My).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    pub ml: Option<f64>,
    pub median: Option<f64>,
    pub prior_95: [f64; 2],
    pub posterior_95: Option<[f64; 2]>,
}

/// Machine-readable outcome for one model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub model: String,
    pub seed: u64,
    pub version: String,
    pub n_obs: usize,
    pub k: usize,
    pub log_likelihood: Option<f64>,
    pub aic: Option<f64>,
    pub bic: Option<f64>,
    pub log_bml: Option<f64>,
    pub log_bml_mc_se: Option<f64>,
    pub bml_ess: Option<f64>,
    pub posterior_probability: Option<f64>,
    pub ml_converged: Option<bool>,
    pub max_rhat: Option<f64>,
    pub chains_converged: Option<bool>,
    pub parameters: Vec<ParameterSummary>,
    pub failures: Vec<String>,
}

/// One row of smoothed-state plot data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateRow {
    pub time: f64,
    pub layer: usize,
    pub site: String,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultBundle {
    pub version: String,
    pub records: Vec<ModelRecord>,
    pub property_tables: Vec<PropertyTable>,
    pub states: Vec<StateRow>,
    pub study: Option<StudyResult>,
    pub simulated: Option<Dataset>,
}

impl ResultBundle {
    /// True when models were fitted and none produced any estimate.
    pub fn all_failed(&self) -> bool {
        !self.records.is_empty()
            && self
                .records
                .iter()
                .all(|r| r.log_likelihood.is_none() && r.log_bml.is_none() && r.max_rhat.is_none())
    }
}

fn natural(c: &Coord, z: f64) -> f64 {
    match c {
        Coord::Pull { .. } | Coord::Diffusion { .. } => z.exp(),
        Coord::Correlation { .. } => z.tanh(),
        Coord::Level { .. } | Coord::Beta => z,
    }
}

fn summarize(fit: &FitResult, target: &Target<'_>, seed: u64) -> ModelRecord {
    let layout = target.layout();
    let prior = target.prior();
    let ml_full = fit.ml.as_ref().map(|m| target.expand(&m.unconstrained));
    let parameters = layout
        .coords()
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let p = prior.normal_for(c);
            let (median, posterior_95) = match &fit.mcmc {
                Some(m) => {
                    let mut xs: Vec<f64> = m.pooled().iter().map(|d| target.expand(d)[j]).collect();
                    xs.sort_by(f64::total_cmp);
                    (
                        Some(natural(c, quantile_sorted(&xs, 0.5))),
                        Some([
                            natural(c, quantile_sorted(&xs, 0.025)),
                            natural(c, quantile_sorted(&xs, 0.975)),
                        ]),
                    )
                }
                None => (None, None),
            };
            ParameterSummary {
                name: c.label(),
                ml: ml_full.as_ref().map(|v| natural(c, v[j])),
                median,
                prior_95: [natural(c, p.mean - Z95 * p.sd), natural(c, p.mean + Z95 * p.sd)],
                posterior_95,
            }
        })
        .collect();
    ModelRecord {
        model: fit.name.clone(),
        seed,
        version: VERSION.to_string(),
        n_obs: fit.n_obs,
        k: fit.k,
        log_likelihood: fit.ml.as_ref().map(|m| m.log_likelihood),
        aic: fit.aic(),
        bic: fit.bic(),
        log_bml: fit.log_bml(),
        log_bml_mc_se: fit.bml.as_ref().map(|b| b.mc_se),
        bml_ess: fit.bml.as_ref().map(|b| b.ess).filter(|e| e.is_finite()),
        posterior_probability: None,
        ml_converged: fit.ml.as_ref().map(|m| m.converged),
        max_rhat: fit
            .mcmc
            .as_ref()
            .map(|m| m.rhat.iter().cloned().fold(f64::NAN, f64::max)),
        chains_converged: fit.mcmc.as_ref().map(|m| m.converged),
        parameters,
        failures: fit.failures.clone(),
    }
}

fn significant(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    if x.abs() < 1e-3 || x.abs() >= 1e6 {
        return format!("{x:.2e}");
    }
    let digits = (2 - x.abs().log10().floor() as i32).max(0) as usize;
    format!("{x:.digits$}")
}

/// Characteristic time `1/α` (α in 1/My) with an automatic unit.
pub fn format_characteristic_time(alpha: f64) -> String {
    let my = 1.0 / alpha;
    let (v, unit) = if my < 1e-4 {
        (my * 1e6, "y")
    } else if my < 1.0 {
        (my * 1e3, "ky")
    } else if my < 1e3 {
        (my, "My")
    } else {
        (my / 1e3, "Gy")
    };
    format!("{} {unit}", significant(v))
}

fn display(name: &str, v: f64) -> String {
    if name.starts_with("dt_") {
        format_characteristic_time(v)
    } else if name.starts_with("mu0") {
        significant(v.exp())
    } else {
        significant(v)
    }
}

fn display_interval(name: &str, iv: [f64; 2]) -> String {
    // characteristic times decrease with the pull
    let [a, b] = if name.starts_with("dt_") { [iv[1], iv[0]] } else { iv };
    format!("{} to {}", display(name, a), display(name, b))
}

/// Parameter table with ML, Bayesian median and 95% prior and posterior
/// intervals; characteristic times are shown with automatic units and the
/// level as `exp(mu0)`.
pub fn format_parameter_table(record: &ModelRecord) -> String {
    let mut out = format!("{}\n", record.model);
    let _ = writeln!(
        out,
        "  {:<12} {:>10} {:>10}   {:<24} {:<24}",
        "parameter", "ML", "B. median", "Prior 95%", "Posterior 95%"
    );
    for p in &record.parameters {
        let name = if p.name.starts_with("mu0") {
            format!("exp({})", p.name)
        } else {
            p.name.clone()
        };
        let opt = |v: Option<f64>| v.map(|v| display(&p.name, v)).unwrap_or_else(|| "-".into());
        let _ = writeln!(
            out,
            "  {:<12} {:>10} {:>10}   {:<24} {:<24}",
            name,
            opt(p.ml),
            opt(p.median),
            display_interval(&p.name, p.prior_95),
            p.posterior_95
                .map(|iv| display_interval(&p.name, iv))
                .unwrap_or_else(|| "-".into())
        );
    }
    out
}

fn format_ranking(records: &[ModelRecord]) -> String {
    let opt = |v: Option<f64>, prec: usize| v.map(|v| format!("{v:.prec$}")).unwrap_or_else(|| "-".into());
    let mut out = format!(
        "{:<44} {:>3} {:>10} {:>10} {:>10} {:>16} {:>8}\n",
        "model", "k", "logL", "AIC", "BIC", "log BML (se)", "P(M|D)"
    );
    for r in records {
        let bml = match (r.log_bml, r.log_bml_mc_se) {
            (Some(b), Some(se)) => format!("{b:.2} ({se:.2})"),
            _ => "-".into(),
        };
        let _ = writeln!(
            out,
            "{:<44} {:>3} {:>10} {:>10} {:>10} {:>16} {:>8}",
            r.model,
            r.k,
            opt(r.log_likelihood, 2),
            opt(r.aic, 2),
            opt(r.bic, 2),
            bml,
            opt(r.posterior_probability, 4)
        );
    }
    out
}

/// Everything read from disk, loaded before any computation.
struct Inputs {
    data: Option<Dataset>,
    forcing: Option<ForcingSeries>,
    prior: PriorSpec,
    models: Vec<ModelSpec>,
}

fn parse_model(name: &str) -> Result<ModelSpec> {
    name.parse::<ModelSpec>()
        .and_then(|s| s.normalized())
        .map_err(|e| Error::Config(format!("model `{name}`: {e}")))
}

fn load_generator(cfg: &RunConfig, g: &GeneratorEntry) -> Result<(ModelSpec, ParamVector)> {
    let (model, params) = match (&g.file, &g.model, &g.params) {
        (Some(f), None, None) => {
            let path = cfg.resolve(f);
            let text = fs::read_to_string(&path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let gf: GeneratorFile = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            (gf.model, gf.params)
        }
        (None, Some(m), Some(p)) => (m.clone(), p.clone()),
        _ => {
            return Err(Error::Config(
                "a generator needs either `file` or both `model` and `params`".into(),
            ))
        }
    };
    let spec = parse_model(&model)?;
    params
        .check(&spec)
        .map_err(|e| Error::Config(format!("parameters for {model}: {e}")))?;
    Ok((spec, params))
}

fn load_design(cfg: &RunConfig, d: &DesignSection, data: Option<&Dataset>) -> Result<ObservationDesign> {
    if let Some(f) = &d.file {
        return Ok(ObservationDesign::from_dataset(&load_dataset(&cfg.resolve(f))?));
    }
    if !d.times.is_empty() {
        return ObservationDesign::regular(d.n_sites.max(1), &d.times, d.noise_var);
    }
    data.map(ObservationDesign::from_dataset)
        .ok_or_else(|| Error::Config("no design: give `design.file`, `design.times` or `data`".into()))
}

fn load_inputs(cfg: &RunConfig) -> Result<Inputs> {
    let data = cfg.data.as_ref().map(|p| load_dataset(&cfg.resolve(p))).transpose()?;
    let forcing = cfg.forcing.as_ref().map(|p| load_forcing(&cfg.resolve(p))).transpose()?;
    let prior = match (&cfg.prior, &cfg.prior_file) {
        (Some(_), Some(_)) => return Err(Error::Config("give either `prior` or `prior_file`".into())),
        (Some(p), None) => p.clone(),
        (None, Some(f)) => {
            let path = cfg.resolve(f);
            let text = fs::read_to_string(&path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        (None, None) => PriorSpec::default(),
    };
    prior.validate()?;

    let mut models = Vec::new();
    if let Some(m) = &cfg.model {
        models.push(parse_model(m)?);
    }
    for m in &cfg.models {
        models.push(parse_model(m)?);
    }
    if let Some(frame) = &cfg.frame {
        let mut frame = frame.clone();
        if let Some(d) = &data {
            frame.n_sites = d.n_sites();
        }
        let enumerated = enumerate_models(&frame)?;
        log::info!("frame enumerates {} models", enumerated.len());
        models.extend(enumerated);
    }
    let mut seen = std::collections::BTreeSet::new();
    models.retain(|m| seen.insert(m.clone()));
    if let Some(d) = &data {
        if let Some(m) = models.iter().find(|m| m.n_sites != d.n_sites()) {
            return Err(Error::Config(format!(
                "{m} has {} sites, the data has {}",
                m.n_sites,
                d.n_sites()
            )));
        }
    }
    if forcing.is_none() {
        if let Some(m) = models.iter().find(|m| m.forcing_layer.is_some()) {
            return Err(Error::Config(format!("{m} is forced but no `forcing` file was given")));
        }
    }
    Ok(Inputs {
        data,
        forcing,
        prior,
        models,
    })
}

fn need_data(inputs: &Inputs) -> Result<&Dataset> {
    inputs
        .data
        .as_ref()
        .ok_or_else(|| Error::Config("this command needs a `data` file".into()))
}

fn single_model(inputs: &Inputs) -> Result<&ModelSpec> {
    match inputs.models.as_slice() {
        [m] => Ok(m),
        _ => Err(Error::Config("this command needs exactly one model".into())),
    }
}

fn fit_all(cfg: &RunConfig, inputs: &Inputs, fit: &FitConfig) -> Result<Vec<ModelRecord>> {
    let data = need_data(inputs)?;
    if inputs.models.is_empty() {
        return Err(Error::Config("no models: give `model`, `models` or `frame`".into()));
    }
    let forcing = inputs.forcing.as_ref();
    inputs
        .models
        .par_iter()
        .enumerate()
        .map(|(i, spec)| {
            let seed = cfg.seed.wrapping_add(i as u64);
            let target = Target::new(spec, data, forcing, &inputs.prior)?;
            let fit = fit_model(spec, data, forcing, &inputs.prior, &fit.with_seed(seed))?;
            Ok(summarize(&fit, &target, seed))
        })
        .collect()
}

fn query_times(section: &SmoothSection, data: &Dataset) -> Result<Vec<f64>> {
    if !section.times.is_empty() {
        return Ok(section.times.clone());
    }
    if let Some([start, end, step]) = section.grid {
        if !(step > 0.0 && end >= start) {
            return Err(Error::Config("smooth grid needs start <= end and step > 0".into()));
        }
        let n = ((end - start) / step + 1e-9).floor() as usize;
        return Ok((0..=n).map(|i| start + i as f64 * step).collect());
    }
    let (a, b) = match (data.first_time(), data.last_time()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::Config("no data to place a smoothing grid on".into())),
    };
    let pad = 0.1 * (b - a).max(1e-3);
    Ok((0..200).map(|i| a - pad + (b - a + 2.0 * pad) * i as f64 / 199.0).collect())
}

fn state_rows(spec: &ModelSpec, data: &Dataset, times: &[f64], mean: &[Vec<f64>], lower: &[Vec<f64>], upper: &[Vec<f64>]) -> Vec<StateRow> {
    let mut rows = Vec::new();
    for (k, &t) in times.iter().enumerate() {
        for layer in 0..spec.n_layers {
            for site in 0..spec.n_sites {
                let i = spec.index(layer, site);
                rows.push(StateRow {
                    time: t,
                    layer: layer + 1,
                    site: data.sites()[site].clone(),
                    mean: mean[k][i],
                    lower: lower[k][i],
                    upper: upper[k][i],
                });
            }
        }
    }
    rows
}

fn run_smooth(cfg: &RunConfig, inputs: &Inputs, bundle: &mut ResultBundle) -> Result<Option<Vec<Vec<Vec<f64>>>>> {
    let data = need_data(inputs)?;
    let spec = single_model(inputs)?;
    let forcing = inputs.forcing.as_ref();
    let times = query_times(&cfg.smooth, data)?;
    if let Some(params) = &cfg.smooth.params {
        params.check(spec).map_err(|e| Error::Config(format!("smooth.params: {e}")))?;
        let post = smooth(spec, params, data, forcing, &times)?;
        let (mut m, mut lo, mut hi) = (Vec::new(), Vec::new(), Vec::new());
        for k in 0..times.len() {
            let p = spec.state_dim();
            let band: Vec<(f64, f64, f64)> = (0..p).map(|i| post.band(k, i)).collect();
            m.push(band.iter().map(|b| b.0).collect());
            lo.push(band.iter().map(|b| b.1).collect());
            hi.push(band.iter().map(|b| b.2).collect());
        }
        bundle.states = state_rows(spec, data, &times, &m, &lo, &hi);
        return Ok(None);
    }
    let target = Target::new(spec, data, forcing, &inputs.prior)?;
    let chains = mcmc_sample_target(&target, &cfg.fit.with_seed(cfg.seed).mcmc, &[])?;
    let pooled = chains.pooled();
    let n = cfg.smooth.draws.clamp(1, pooled.len());
    let draws: Vec<ParamVector> = (0..n)
        .map(|i| target.params(pooled[i * pooled.len() / n]))
        .collect::<Result<_>>()?;
    let seed = cfg.smooth.realizations.then_some(cfg.seed);
    let ens = posterior_process_draws(spec, &draws, data, forcing, &times, seed)?;
    let as_rows = |v: &[nalgebra::DVector<f64>]| -> Vec<Vec<f64>> { v.iter().map(|x| x.iter().copied().collect()).collect() };
    bundle.states = state_rows(spec, data, &times, &as_rows(&ens.mean), &as_rows(&ens.lower), &as_rows(&ens.upper));
    let fit = FitResult {
        spec: spec.clone(),
        name: spec.name(),
        n_obs: data.len(),
        k: target.dim(),
        labels: target.labels(),
        ml: None,
        mcmc: Some(chains),
        bml: None,
        failures: Vec::new(),
    };
    bundle.records.push(summarize(&fit, &target, cfg.seed));
    Ok(ens.realizations.map(|r| r.iter().map(|path| as_rows(path)).collect()))
}

fn states_csv(rows: &[StateRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(["time_my", "layer", "site", "mean", "lower", "upper"]).map_err(io)?;
    for r in rows {
        w.write_record(&[
            r.time.to_string(),
            r.layer.to_string(),
            r.site.clone(),
            r.mean.to_string(),
            r.lower.to_string(),
            r.upper.to_string(),
        ])
        .map_err(io)?;
    }
    String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.to_string()))?).map_err(|e| Error::Io(e.to_string()))
}

fn realizations_csv(spec: &ModelSpec, data: &Dataset, times: &[f64], paths: &[Vec<Vec<f64>>]) -> String {
    let mut out = String::from("draw,time_my,layer,site,value\n");
    for (d, path) in paths.iter().enumerate() {
        for (k, x) in path.iter().enumerate() {
            for layer in 0..spec.n_layers {
                for site in 0..spec.n_sites {
                    let _ = writeln!(
                        out,
                        "{d},{},{},{},{}",
                        times[k],
                        layer + 1,
                        data.sites()[site],
                        x[spec.index(layer, site)]
                    );
                }
            }
        }
    }
    out
}

/// Files written by a run.
#[derive(Clone, Debug, Default)]
pub struct RunOutcome {
    pub bundle: ResultBundle,
    pub files: Vec<PathBuf>,
}

impl RunOutcome {
    pub fn all_failed(&self) -> bool {
        self.bundle.all_failed()
    }
}

/// Executes `cfg`, writing results under its output directory.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    let inputs = load_inputs(cfg)?;
    // generators and designs are also read before computing
    let generators: Vec<(ModelSpec, ParamVector)> = match cfg.command {
        Command::Simulate => vec![load_generator(cfg, &cfg.simulate.generator)?],
        Command::Study => cfg
            .study
            .generators
            .iter()
            .map(|g| load_generator(cfg, g))
            .collect::<Result<_>>()?,
        _ => Vec::new(),
    };
    let design = match cfg.command {
        Command::Simulate => Some(load_design(cfg, &cfg.simulate.design, inputs.data.as_ref())?),
        Command::Study => Some(load_design(cfg, &cfg.study.design, inputs.data.as_ref())?),
        _ => None,
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads.unwrap_or(0))
        .build()
        .map_err(config_error)?;
    let out_dir = cfg.output_path();
    let mut outcome = RunOutcome {
        bundle: ResultBundle {
            version: VERSION.to_string(),
            ..ResultBundle::default()
        },
        files: Vec::new(),
    };
    let mut files: Vec<(String, String)> = Vec::new();

    pool.install(|| -> Result<()> {
        let bundle = &mut outcome.bundle;
        match cfg.command {
            Command::Fit => {
                let mut fit = cfg.fit.clone();
                fit.bayes = false;
                fit.optimize = true;
                bundle.records = fit_all(cfg, &inputs, &fit)?;
            }
            Command::Sample => {
                let mut fit = cfg.fit.clone();
                fit.bayes = true;
                fit.optimize = false;
                bundle.records = fit_all(cfg, &inputs, &fit)?;
            }
            Command::Compare => {
                bundle.records = fit_all(cfg, &inputs, &cfg.fit)?;
                weigh(bundle, &inputs.models)?;
            }
            Command::Smooth => {
                let reals = run_smooth(cfg, &inputs, bundle)?;
                files.push(("states.csv".into(), states_csv(&bundle.states)?));
                if let Some(paths) = reals {
                    let data = need_data(&inputs)?;
                    let times = query_times(&cfg.smooth, data)?;
                    files.push((
                        "realizations.csv".into(),
                        realizations_csv(single_model(&inputs)?, data, &times, &paths),
                    ));
                }
            }
            Command::Simulate => {
                let (spec, params) = &generators[0];
                let design = design.as_ref().expect("design loaded");
                let sim = simulate_dataset(spec, params, design, inputs.forcing.as_ref(), cfg.seed)?;
                files.push(("simulated.csv".into(), format_dataset(&sim)?));
                bundle.simulated = Some(sim);
            }
            Command::Study => {
                let candidates: Vec<ModelSpec> = cfg
                    .study
                    .candidates
                    .iter()
                    .map(|c| parse_model(c))
                    .collect::<Result<_>>()?;
                let study_cfg = StudyConfig {
                    replicates: cfg.study.replicates,
                    criteria: cfg.study.criteria.clone(),
                    seed: cfg.seed,
                    prior: inputs.prior.clone(),
                    fit: cfg.fit.clone(),
                };
                let design = design.as_ref().expect("design loaded");
                let result = run_selection_study(&generators, &candidates, design, inputs.forcing.as_ref(), &study_cfg)?;
                let mut lines = to_json_lines(&result.rows)?;
                lines.push_str(&to_json_lines(&result.records)?);
                files.push(("study.jsonl".into(), lines));
                files.push(("study.txt".into(), result.table()));
                bundle.study = Some(result);
            }
        }
        Ok(())
    })?;

    let bundle = &outcome.bundle;
    if !bundle.records.is_empty() {
        files.push(("models.jsonl".into(), to_json_lines(&bundle.records)?));
        let mut summary = format_ranking(&bundle.records);
        if !bundle.property_tables.is_empty() {
            summary.push('\n');
            summary.push_str(&format_property_tables(&bundle.property_tables));
        }
        for r in &bundle.records {
            summary.push('\n');
            summary.push_str(&format_parameter_table(r));
        }
        files.push(("summary.txt".into(), summary));
    }
    if !bundle.property_tables.is_empty() {
        files.push(("weights.jsonl".into(), to_json_lines(&bundle.property_tables)?));
    }
    for (name, text) in files {
        let path = out_dir.join(name);
        write_atomic(&path, text.as_bytes())?;
        log::info!("wrote {}", path.display());
        outcome.files.push(path);
    }
    Ok(outcome)
}

/// Posterior model probabilities and property weights over the models with
/// a BML estimate; categorisations with fewer than two populated
/// categories are skipped.
fn weigh(bundle: &mut ResultBundle, models: &[ModelSpec]) -> Result<()> {
    let table: Vec<(ModelSpec, f64)> = models
        .iter()
        .zip(&bundle.records)
        .filter_map(|(m, r)| r.log_bml.map(|b| (m.clone(), b)))
        .collect();
    if table.is_empty() {
        return Ok(());
    }
    let probs = posterior_model_probabilities(&table.iter().map(|t| t.1).collect::<Vec<_>>());
    let mut it = probs.iter();
    for r in &mut bundle.records {
        if r.log_bml.is_some() {
            r.posterior_probability = it.next().copied();
        }
    }
    let present: Vec<ModelSpec> = table.iter().map(|t| t.0.clone()).collect();
    for mut cat in standard_categorizations() {
        let counts = cat.counts(&present)?;
        let keep: Vec<bool> = counts.iter().map(|&c| c > 0).collect();
        if keep.iter().filter(|&&k| k).count() < 2 {
            continue;
        }
        let mut k = keep.iter();
        cat.categories.retain(|_| *k.next().unwrap_or(&false));
        bundle.property_tables.push(property_weights(&cat, &table)?);
    }
    Ok(())
}
