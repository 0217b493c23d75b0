//! Model frames, their enumeration and categorisations of the enumerated set.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spec::{Correlation, ModelSpec, Regional, RegionalKind, MAX_LAYERS};

/// Which structural variants to cross.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelFrame {
    /// Allowed layer counts.
    pub layers: Vec<usize>,
    pub n_sites: usize,
    /// Allowed regional parameter kinds; regionality sits in at most one layer.
    pub regional: Vec<RegionalKind>,
    pub deterministic: bool,
    pub random_walk: bool,
    /// Allowed correlation levels per layer.
    pub correlation: Vec<Correlation>,
    /// One-based layers that may receive the forcing series. Models without
    /// forcing are always included.
    pub forcing_layers: Vec<usize>,
}

impl Default for ModelFrame {
    fn default() -> Self {
        ModelFrame {
            layers: (1..=MAX_LAYERS).collect(),
            n_sites: 1,
            regional: vec![RegionalKind::Level, RegionalKind::Pull, RegionalKind::Diffusion],
            deterministic: true,
            random_walk: true,
            correlation: vec![Correlation::None, Correlation::Intermediate, Correlation::Perfect],
            forcing_layers: Vec::new(),
        }
    }
}

impl ModelFrame {
    /// Only plain models with the given layer counts.
    pub fn plain(layers: &[usize], n_sites: usize) -> Self {
        ModelFrame {
            layers: layers.to_vec(),
            n_sites,
            regional: Vec::new(),
            deterministic: false,
            random_walk: false,
            correlation: vec![Correlation::None],
            forcing_layers: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() || self.layers.iter().any(|&l| l == 0 || l > MAX_LAYERS) {
            return Err(Error::Config(format!(
                "frame layers must be between 1 and {MAX_LAYERS}"
            )));
        }
        if self.n_sites == 0 {
            return Err(Error::Config("frame needs at least one site".into()));
        }
        if !self.correlation.contains(&Correlation::None) {
            return Err(Error::Config("frame correlation levels must include none".into()));
        }
        let max = *self.layers.iter().max().unwrap_or(&1);
        if self.forcing_layers.iter().any(|&f| f == 0 || f > max) {
            return Err(Error::Config("forcing layer out of range".into()));
        }
        Ok(())
    }
}

fn cartesian<T: Clone>(choices: &[T], n: usize) -> Vec<Vec<T>> {
    let mut out = vec![Vec::new()];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                choices.iter().map(move |c| {
                    let mut v = prefix.clone();
                    v.push(c.clone());
                    v
                })
            })
            .collect();
    }
    out
}

/// Structurally distinct models of a frame in canonical order.
///
/// Every combination of flags is normalised, so vacuous combinations
/// collapse onto the model they are equivalent to.
pub fn enumerate_models(frame: &ModelFrame) -> Result<Vec<ModelSpec>> {
    frame.validate()?;
    let mut set = BTreeSet::new();
    let mut layers = frame.layers.clone();
    layers.sort_unstable();
    layers.dedup();
    for &l in &layers {
        let bottom = l - 1;
        let mut regionals = vec![None];
        for &kind in &frame.regional {
            match kind {
                RegionalKind::Level => regionals.push(Some(Regional { kind, layer: bottom })),
                _ => regionals.extend((0..l).map(|layer| Some(Regional { kind, layer }))),
            }
        }
        let det_sets: Vec<Vec<bool>> = if frame.deterministic {
            cartesian(&[false, true], bottom)
                .into_iter()
                .map(|mut v| {
                    v.push(false);
                    v
                })
                .collect()
        } else {
            vec![vec![false; l]]
        };
        let walks: &[bool] = if frame.random_walk { &[false, true] } else { &[false] };
        let corrs = cartesian(&frame.correlation, l);
        let mut forcings = vec![None];
        forcings.extend(frame.forcing_layers.iter().filter(|&&f| f <= l).map(|&f| Some(f - 1)));

        for regional in &regionals {
            for det in &det_sets {
                for &rw in walks {
                    for corr in &corrs {
                        for &forcing_layer in &forcings {
                            let spec = ModelSpec {
                                n_layers: l,
                                n_sites: frame.n_sites,
                                regional: *regional,
                                deterministic: det.clone(),
                                random_walk_bottom: rw,
                                correlation: corr.clone(),
                                forcing_layer,
                            };
                            set.insert(spec.normalized()?);
                        }
                    }
                }
            }
        }
    }
    Ok(set.into_iter().collect())
}

type Predicate = Box<dyn Fn(&ModelSpec) -> bool + Send + Sync>;

/// A named category of models.
pub struct Category {
    pub name: String,
    predicate: Predicate,
}

impl Category {
    pub fn new(name: impl Into<String>, predicate: impl Fn(&ModelSpec) -> bool + Send + Sync + 'static) -> Self {
        Category {
            name: name.into(),
            predicate: Box::new(predicate),
        }
    }

    pub fn contains(&self, spec: &ModelSpec) -> bool {
        (self.predicate)(spec)
    }
}

impl std::fmt::Debug for Category {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Category").field("name", &self.name).finish()
    }
}

/// A property and the categories it splits models into.
#[derive(Debug)]
pub struct Categorization {
    pub property: String,
    pub categories: Vec<Category>,
}

impl Categorization {
    pub fn new(property: impl Into<String>, categories: Vec<Category>) -> Self {
        Categorization {
            property: property.into(),
            categories,
        }
    }

    /// Index of the single category containing `spec`.
    pub fn assign(&self, spec: &ModelSpec) -> Result<usize> {
        let hits: Vec<usize> = (0..self.categories.len())
            .filter(|&i| self.categories[i].contains(spec))
            .collect();
        match hits.as_slice() {
            [i] => Ok(*i),
            [] => Err(Error::NotAPartition(format!(
                "{}: no category contains {spec}",
                self.property
            ))),
            _ => Err(Error::NotAPartition(format!(
                "{}: {spec} falls in {} categories",
                self.property,
                hits.len()
            ))),
        }
    }

    /// Model count per category; errors unless the categories partition `models`.
    pub fn counts(&self, models: &[ModelSpec]) -> Result<Vec<usize>> {
        let mut counts = vec![0; self.categories.len()];
        for m in models {
            counts[self.assign(m)?] += 1;
        }
        Ok(counts)
    }
}

fn layer_of(r: Option<Regional>) -> Option<usize> {
    r.filter(|r| r.kind != RegionalKind::Level).map(|r| r.layer)
}

/// The reporting categorisations: number of layers, regionality kind and
/// layer, inter-regional correlation, deterministic layers and random walk.
pub fn standard_categorizations() -> Vec<Categorization> {
    let mut out = Vec::new();
    out.push(layer_categorization(MAX_LAYERS));
    out.push(Categorization::new(
        "regionality",
        vec![
            Category::new("none", |s: &ModelSpec| s.regional.is_none()),
            Category::new("level", |s: &ModelSpec| s.regional_level()),
            Category::new("pull", |s: &ModelSpec| s.regional_pull_layer().is_some()),
            Category::new("diffusion", |s: &ModelSpec| s.regional_diffusion_layer().is_some()),
        ],
    ));
    let mut by_layer = vec![Category::new("no layer", |s: &ModelSpec| layer_of(s.regional).is_none())];
    by_layer.extend((0..MAX_LAYERS).map(|l| {
        Category::new(format!("layer {}", l + 1), move |s: &ModelSpec| layer_of(s.regional) == Some(l))
    }));
    out.push(Categorization::new("regional layer", by_layer));
    let level = |s: &ModelSpec| {
        if s.correlation.contains(&Correlation::Perfect) {
            Correlation::Perfect
        } else if s.correlation.contains(&Correlation::Intermediate) {
            Correlation::Intermediate
        } else {
            Correlation::None
        }
    };
    out.push(Categorization::new(
        "inter-regional correlation",
        vec![
            Category::new("none", move |s: &ModelSpec| level(s) == Correlation::None),
            Category::new("intermediate", move |s: &ModelSpec| level(s) == Correlation::Intermediate),
            Category::new("perfect", move |s: &ModelSpec| level(s) == Correlation::Perfect),
        ],
    ));
    out.push(Categorization::new(
        "deterministic layers",
        vec![
            Category::new("none", |s: &ModelSpec| !s.deterministic.contains(&true)),
            Category::new("some", |s: &ModelSpec| s.deterministic.contains(&true)),
        ],
    ));
    out.push(Categorization::new(
        "random walk bottom",
        vec![
            Category::new("no", |s: &ModelSpec| !s.random_walk_bottom),
            Category::new("yes", |s: &ModelSpec| s.random_walk_bottom),
        ],
    ));
    out
}

/// Layer-count categorisation over `1..=max_layers`.
pub fn layer_categorization(max_layers: usize) -> Categorization {
    Categorization::new(
        "number of layers",
        (1..=max_layers)
            .map(|l| Category::new(format!("{l}"), move |s: &ModelSpec| s.n_layers == l))
            .collect(),
    )
}
