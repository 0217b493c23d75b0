//! Exact simulation of datasets and the layer-count recovery study.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Record};
use crate::error::{Error, Result};
use crate::forcing::ForcingSeries;
use crate::inference::{fit_model, FitConfig, FitResult};
use crate::kalman::{draw, log_likelihood, start_time};
use crate::model_space::PriorSpec;
use crate::params::ParamVector;
use crate::spec::{ModelSpec, MAX_LAYERS};
use crate::system::{build_system_jittered, SystemMatrices};

/// One planned observation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignPoint {
    pub site: usize,
    pub time: f64,
    pub s2: f64,
    pub n: u32,
}

/// Where and when observations are made, and how noisy they are.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationDesign {
    pub sites: Vec<String>,
    pub points: Vec<DesignPoint>,
}

impl ObservationDesign {
    pub fn new(sites: Vec<String>, points: Vec<DesignPoint>) -> Result<Self> {
        for (i, p) in points.iter().enumerate() {
            if p.site >= sites.len() || !p.time.is_finite() || !(p.s2 >= 0.0) || !p.s2.is_finite() || p.n == 0 {
                return Err(Error::Validation {
                    line: i,
                    message: format!("invalid design point {p:?}"),
                });
            }
        }
        Ok(ObservationDesign { sites, points })
    }

    /// Times and noise of an existing dataset.
    pub fn from_dataset(data: &Dataset) -> Self {
        ObservationDesign {
            sites: data.sites().to_vec(),
            points: data
                .records()
                .iter()
                .map(|r| DesignPoint {
                    site: r.site,
                    time: r.time,
                    s2: r.s2,
                    n: r.n,
                })
                .collect(),
        }
    }

    /// The same times at every site with a common noise variance.
    pub fn regular(n_sites: usize, times: &[f64], noise_var: f64) -> Result<Self> {
        let sites = (1..=n_sites).map(|i| format!("site{i}")).collect();
        let points = (0..n_sites)
            .flat_map(|site| {
                times.iter().map(move |&time| DesignPoint {
                    site,
                    time,
                    s2: noise_var,
                    n: 1,
                })
            })
            .collect();
        ObservationDesign::new(sites, points)
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Exact draw of the full state at sorted `times`, started from the
/// stationary law (at the forcing start for forced models).
pub fn simulate_states<R: Rng + ?Sized>(
    sys: &SystemMatrices,
    times: &[f64],
    forcing: Option<&ForcingSeries>,
    rng: &mut R,
) -> Result<Vec<DVector<f64>>> {
    let Some(&first) = times.first() else {
        return Ok(Vec::new());
    };
    let (m0, p0) = sys.stationary_moments()?;
    let t0 = start_time(sys, first, forcing);
    let mut x = draw(&m0, &p0, rng);
    let mut t = t0;
    let zero = p0.scale(0.0);
    let mut out = Vec::with_capacity(times.len());
    for &ti in times {
        if ti < t {
            return Err(Error::DomainError("simulation times must be sorted".into()));
        }
        if ti > t {
            let (m, c) = sys.transition_moments(&x, &zero, t, ti, forcing)?;
            x = draw(&m, &c, rng);
            t = ti;
        }
        out.push(x.clone());
    }
    Ok(out)
}

/// Simulated dataset for `design`, deterministic given `seed`.
pub fn simulate_dataset(
    spec: &ModelSpec,
    params: &ParamVector,
    design: &ObservationDesign,
    forcing: Option<&ForcingSeries>,
    seed: u64,
) -> Result<Dataset> {
    let sys = build_system_jittered(spec, params)?;
    if design.n_sites() != sys.spec().n_sites {
        return Err(Error::DimensionMismatch(format!(
            "model has {} sites, design has {}",
            sys.spec().n_sites,
            design.n_sites()
        )));
    }
    if sys.spec().forcing_layer.is_some() && forcing.is_none() {
        return Err(Error::InvalidSpec("forced model needs a forcing series".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut times: Vec<f64> = design.points.iter().map(|p| p.time).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let states = simulate_states(&sys, &times, forcing, &mut rng)?;
    let records = design
        .points
        .iter()
        .enumerate()
        .map(|(row, p)| {
            let k = times.partition_point(|&t| t < p.time);
            let x = states[k][sys.spec().index(0, p.site)];
            let z: f64 = rng.sample(StandardNormal);
            Record {
                site: p.site,
                time: p.time,
                y: x + (p.s2 / p.n as f64).sqrt() * z,
                s2: p.s2,
                n: p.n,
                source_row: row,
            }
        })
        .collect();
    Dataset::new(design.sites.clone(), records)
}

/// Model selection criterion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Aic,
    Bic,
    Bml,
}

impl Criterion {
    pub fn label(self) -> &'static str {
        match self {
            Criterion::Aic => "AIC",
            Criterion::Bic => "BIC",
            Criterion::Bml => "BML",
        }
    }

    /// Score where larger is better, if the fit provides it.
    fn score(self, fit: &FitResult) -> Option<f64> {
        let s = match self {
            Criterion::Aic => fit.aic().map(|v| -v),
            Criterion::Bic => fit.bic().map(|v| -v),
            Criterion::Bml => fit.log_bml(),
        };
        s.filter(|v| v.is_finite())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub replicates: usize,
    pub criteria: Vec<Criterion>,
    pub seed: u64,
    pub prior: PriorSpec,
    pub fit: FitConfig,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            replicates: 20,
            criteria: vec![Criterion::Aic, Criterion::Bic, Criterion::Bml],
            seed: 1,
            prior: PriorSpec::default(),
            fit: FitConfig::default(),
        }
    }
}

/// Selections made in one simulated replicate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub generator: String,
    pub replicate: usize,
    pub seed: u64,
    /// Selected candidate name per criterion, `None` when some fit failed.
    pub selected: Vec<(Criterion, Option<String>)>,
    pub true_log_likelihood: f64,
    /// ML log-likelihood of the candidate with the generating structure.
    pub ml_log_likelihood: Option<f64>,
}

/// Tally for one generator and criterion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub generator: String,
    pub criterion: Criterion,
    pub correct: usize,
    /// Replicates selecting 1, 2, … layers.
    pub selected_layers: Vec<usize>,
    pub failed: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub replicates: usize,
    pub seed: u64,
    pub candidates: Vec<String>,
    pub rows: Vec<StudyRow>,
    pub records: Vec<ReplicateRecord>,
    /// Replicates whose ML optimum fell short of the true parameters' log-likelihood by more than 1e-4.
    pub ml_shortfalls: usize,
}

impl StudyResult {
    /// Table of correct identifications per generator and criterion.
    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<28} {:<5} {:>8} {}  {:>6}\n",
            "generating model",
            "crit",
            "correct",
            (1..=MAX_LAYERS)
                .map(|l| format!("{:>4}L", l))
                .collect::<Vec<_>>()
                .join(" "),
            "failed"
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:<28} {:<5} {:>8} {}  {:>6}\n",
                r.generator,
                r.criterion.label(),
                format!("{}/{}", r.correct, self.replicates),
                r.selected_layers
                    .iter()
                    .map(|c| format!("{c:>5}"))
                    .collect::<Vec<_>>()
                    .join(" "),
                r.failed
            ));
        }
        out
    }
}

fn fit_seed(rep_seed: u64) -> u64 {
    rep_seed ^ 0x9E37_79B9_7F4A_7C15
}

/// Simulates `replicates` datasets from each generator, fits every
/// candidate and tallies which structure each criterion selects.
///
/// Replicate `r` of generator `g` uses seed `seed + g·replicates + r`.
pub fn run_selection_study(
    generators: &[(ModelSpec, ParamVector)],
    candidates: &[ModelSpec],
    design: &ObservationDesign,
    forcing: Option<&ForcingSeries>,
    config: &StudyConfig,
) -> Result<StudyResult> {
    if config.replicates == 0 {
        return Err(Error::Config("a study needs at least one replicate".into()));
    }
    let candidates: Vec<ModelSpec> = candidates
        .iter()
        .map(|c| c.normalized())
        .collect::<Result<_>>()?;
    let generators: Vec<(ModelSpec, ParamVector)> = generators
        .iter()
        .map(|(s, p)| Ok((s.normalized()?, p.clone())))
        .collect::<Result<_>>()?;
    for (g, _) in &generators {
        if !candidates.contains(g) {
            return Err(Error::Config(format!("generator {g} is not among the candidates")));
        }
    }
    let mut fit_cfg = config.fit.clone();
    fit_cfg.bayes = config.criteria.contains(&Criterion::Bml);
    fit_cfg.optimize = config.criteria.iter().any(|c| *c != Criterion::Bml);

    let jobs: Vec<(usize, usize)> = (0..generators.len())
        .flat_map(|g| (0..config.replicates).map(move |r| (g, r)))
        .collect();
    let records: Vec<ReplicateRecord> = jobs
        .par_iter()
        .map(|&(g, r)| -> Result<ReplicateRecord> {
            let (spec, params) = &generators[g];
            let seed = config
                .seed
                .wrapping_add((g * config.replicates + r) as u64);
            let data = simulate_dataset(spec, params, design, forcing, seed)?;
            let truth = log_likelihood(spec, params, &data, forcing).unwrap_or(f64::NEG_INFINITY);
            let cfg = fit_cfg.with_seed(fit_seed(seed));
            let fits: Vec<Option<FitResult>> = candidates
                .iter()
                .map(|c| fit_model(c, &data, forcing, &config.prior, &cfg).ok())
                .collect();
            let selected = config
                .criteria
                .iter()
                .map(|&crit| {
                    let scores: Option<Vec<f64>> = fits
                        .iter()
                        .map(|f| f.as_ref().and_then(|f| crit.score(f)))
                        .collect();
                    let best = scores.and_then(|s| {
                        (0..s.len()).fold(None, |acc: Option<usize>, i| match acc {
                            Some(b) if s[b] >= s[i] => Some(b),
                            _ => Some(i),
                        })
                    });
                    (crit, best.map(|i| candidates[i].name()))
                })
                .collect();
            let own = candidates.iter().position(|c| c == spec).expect("checked above");
            let ml_ll = fits[own].as_ref().and_then(|f| f.ml.as_ref()).map(|m| m.log_likelihood);
            Ok(ReplicateRecord {
                generator: spec.name(),
                replicate: r,
                seed,
                selected,
                true_log_likelihood: truth,
                ml_log_likelihood: ml_ll,
            })
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for (spec, _) in &generators {
        let name = spec.name();
        for &crit in &config.criteria {
            let mut row = StudyRow {
                generator: name.clone(),
                criterion: crit,
                correct: 0,
                selected_layers: vec![0; MAX_LAYERS],
                failed: 0,
            };
            for rec in records.iter().filter(|r| r.generator == name) {
                let pick = rec.selected.iter().find(|(c, _)| *c == crit).and_then(|(_, s)| s.clone());
                match pick {
                    Some(s) => {
                        if s == name {
                            row.correct += 1;
                        }
                        let layers = s.parse::<ModelSpec>().map(|m| m.n_layers).unwrap_or(1);
                        row.selected_layers[layers - 1] += 1;
                    }
                    None => row.failed += 1,
                }
            }
            rows.push(row);
        }
    }
    let failed: usize = rows.iter().map(|r| r.failed).sum();
    if failed > 0 {
        log::warn!("{failed} replicate selections excluded after failed fits");
    }
    let ml_shortfalls = records
        .iter()
        .filter(|r| matches!(r.ml_log_likelihood, Some(ml) if ml < r.true_log_likelihood - 1e-4))
        .count();
    Ok(StudyResult {
        replicates: config.replicates,
        seed: config.seed,
        candidates: candidates.iter().map(|c| c.name()).collect(),
        rows,
        records,
        ml_shortfalls,
    })
}
