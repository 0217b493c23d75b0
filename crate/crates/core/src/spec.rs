//! Structural description of a layered SDE model variant.
//!
//! Layers are indexed from zero internally, with layer 0 the observed top
//! layer and `n_layers - 1` the bottom layer. The canonical name uses
//! one-based layer numbers, so `regpull@2` means regional pulls in the middle
//! layer of a three-layer model.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pull of the random-walk bottom layer, in 1/My (characteristic time 1 Gy).
pub const RANDOM_WALK_PULL: f64 = 0.001;

/// Largest supported number of layers.
pub const MAX_LAYERS: usize = 3;

/// Which parameter type takes distinct values per site.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionalKind {
    /// The level `mu0` (always attached to the bottom layer).
    Level,
    Pull,
    Diffusion,
}

impl RegionalKind {
    fn token(self) -> &'static str {
        match self {
            RegionalKind::Level => "level",
            RegionalKind::Pull => "pull",
            RegionalKind::Diffusion => "diff",
        }
    }
}

/// Regional parameters: a kind and the layer carrying them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Regional {
    pub kind: RegionalKind,
    pub layer: usize,
}

/// Instantaneous cross-site correlation of a layer's noise.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Correlation {
    #[default]
    None,
    /// One free correlation coefficient shared by all site pairs.
    Intermediate,
    /// Noise collapses to one dimension (rho = 1).
    Perfect,
}

/// Structural model variant.
///
/// Field order defines the enumeration order of [`crate::model_space::enumerate_models`].
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ModelSpec {
    pub n_layers: usize,
    pub n_sites: usize,
    pub regional: Option<Regional>,
    /// Per layer: true when the layer has zero diffusion.
    pub deterministic: Vec<bool>,
    pub random_walk_bottom: bool,
    /// Per layer correlation flag.
    pub correlation: Vec<Correlation>,
    pub forcing_layer: Option<usize>,
}

impl ModelSpec {
    /// A plain model: global parameters, all layers stochastic, no correlation.
    pub fn new(n_layers: usize, n_sites: usize) -> Self {
        ModelSpec {
            n_layers,
            n_sites,
            regional: None,
            deterministic: vec![false; n_layers],
            random_walk_bottom: false,
            correlation: vec![Correlation::None; n_layers],
            forcing_layer: None,
        }
    }

    pub fn with_regional(mut self, kind: RegionalKind, layer: usize) -> Self {
        self.regional = Some(Regional { kind, layer });
        self
    }

    pub fn with_deterministic(mut self, layer: usize) -> Self {
        if layer < self.deterministic.len() {
            self.deterministic[layer] = true;
        }
        self
    }

    pub fn with_random_walk(mut self) -> Self {
        self.random_walk_bottom = true;
        self
    }

    pub fn with_correlation(mut self, layer: usize, c: Correlation) -> Self {
        if layer < self.correlation.len() {
            self.correlation[layer] = c;
        }
        self
    }

    pub fn with_forcing(mut self, layer: usize) -> Self {
        self.forcing_layer = Some(layer);
        self
    }

    pub fn bottom(&self) -> usize {
        self.n_layers - 1
    }

    /// State dimension, layers times sites.
    pub fn state_dim(&self) -> usize {
        self.n_layers * self.n_sites
    }

    /// Index of component (layer, site) in the state vector.
    pub fn index(&self, layer: usize, site: usize) -> usize {
        layer * self.n_sites + site
    }

    pub fn regional_pull_layer(&self) -> Option<usize> {
        self.regional
            .filter(|r| r.kind == RegionalKind::Pull)
            .map(|r| r.layer)
    }

    pub fn regional_diffusion_layer(&self) -> Option<usize> {
        self.regional
            .filter(|r| r.kind == RegionalKind::Diffusion)
            .map(|r| r.layer)
    }

    pub fn regional_level(&self) -> bool {
        matches!(self.regional, Some(r) if r.kind == RegionalKind::Level)
    }

    /// Pull of `layer` is fixed (random-walk bottom) rather than free.
    pub fn pull_fixed(&self, layer: usize) -> bool {
        self.random_walk_bottom && layer == self.bottom()
    }

    /// Checks the structural invariants and returns a copy with vacuous flag
    /// combinations collapsed: correlation on a deterministic layer or a
    /// single-site model, regionality on a single-site model, regional
    /// diffusion on a deterministic layer and regional pull on a random-walk
    /// bottom layer are all dropped.
    pub fn normalized(&self) -> Result<ModelSpec> {
        if self.n_layers == 0 || self.n_layers > MAX_LAYERS {
            return Err(Error::InvalidSpec(format!(
                "number of layers must be between 1 and {MAX_LAYERS}, got {}",
                self.n_layers
            )));
        }
        if self.n_sites == 0 {
            return Err(Error::InvalidSpec("at least one site is required".into()));
        }
        if self.deterministic.len() != self.n_layers || self.correlation.len() != self.n_layers {
            return Err(Error::InvalidSpec(
                "per-layer flag vectors must have one entry per layer".into(),
            ));
        }
        if self.deterministic[self.bottom()] {
            return Err(Error::InvalidSpec(
                "the bottom layer must be stochastic".into(),
            ));
        }
        if let Some(r) = self.regional {
            if r.layer >= self.n_layers {
                return Err(Error::InvalidSpec(format!(
                    "regional layer {} out of range",
                    r.layer + 1
                )));
            }
            if r.kind == RegionalKind::Level && r.layer != self.bottom() {
                return Err(Error::InvalidSpec(
                    "a regional level belongs to the bottom layer".into(),
                ));
            }
        }
        if let Some(f) = self.forcing_layer {
            if f >= self.n_layers {
                return Err(Error::InvalidSpec(format!(
                    "forcing layer {} out of range",
                    f + 1
                )));
            }
        }

        let mut out = self.clone();
        for layer in 0..out.n_layers {
            if out.deterministic[layer] || out.n_sites == 1 {
                out.correlation[layer] = Correlation::None;
            }
        }
        if let Some(r) = out.regional {
            let vacuous = out.n_sites == 1
                || (r.kind == RegionalKind::Diffusion && out.deterministic[r.layer])
                || (r.kind == RegionalKind::Pull && out.pull_fixed(r.layer));
            if vacuous {
                out.regional = None;
            }
        }
        Ok(out)
    }

    /// Canonical name, e.g. `L3:S6:regpull@2:det@2:corr3=int:rw0:forcing@2`.
    pub fn name(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}:S{}", self.n_layers, self.n_sites)?;
        if let Some(r) = self.regional {
            write!(f, ":reg{}@{}", r.kind.token(), r.layer + 1)?;
        }
        let det: Vec<String> = (0..self.n_layers)
            .filter(|&l| self.deterministic.get(l).copied().unwrap_or(false))
            .map(|l| (l + 1).to_string())
            .collect();
        if !det.is_empty() {
            write!(f, ":det@{}", det.join(","))?;
        }
        for (l, c) in self.correlation.iter().enumerate() {
            match c {
                Correlation::None => {}
                Correlation::Intermediate => write!(f, ":corr{}=int", l + 1)?,
                Correlation::Perfect => write!(f, ":corr{}=perf", l + 1)?,
            }
        }
        write!(f, ":rw{}", u8::from(self.random_walk_bottom))?;
        if let Some(l) = self.forcing_layer {
            write!(f, ":forcing@{}", l + 1)?;
        }
        Ok(())
    }
}

fn parse_layer(s: &str, token: &str) -> Result<usize> {
    let n: usize = s
        .parse()
        .map_err(|_| Error::InvalidSpec(format!("bad layer number in '{token}'")))?;
    if n == 0 {
        return Err(Error::InvalidSpec(format!("layers are numbered from 1 in '{token}'")));
    }
    Ok(n - 1)
}

impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut tokens = s.trim().split(':');
        let bad = |t: &str| Error::InvalidSpec(format!("unrecognised token '{t}' in '{s}'"));

        let layers_tok = tokens.next().unwrap_or("");
        let n_layers: usize = layers_tok
            .strip_prefix('L')
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad(layers_tok))?;
        let sites_tok = tokens.next().unwrap_or("");
        let n_sites: usize = sites_tok
            .strip_prefix('S')
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad(sites_tok))?;
        if n_layers == 0 || n_layers > MAX_LAYERS {
            return Err(Error::InvalidSpec(format!("bad layer count in '{s}'")));
        }
        let mut spec = ModelSpec::new(n_layers, n_sites);

        for tok in tokens {
            if let Some(rest) = tok.strip_prefix("reg") {
                let (kind, layer) = rest.split_once('@').ok_or_else(|| bad(tok))?;
                let kind = match kind {
                    "level" => RegionalKind::Level,
                    "pull" => RegionalKind::Pull,
                    "diff" => RegionalKind::Diffusion,
                    _ => return Err(bad(tok)),
                };
                spec.regional = Some(Regional {
                    kind,
                    layer: parse_layer(layer, tok)?,
                });
            } else if let Some(rest) = tok.strip_prefix("det@") {
                for l in rest.split(',') {
                    let l = parse_layer(l, tok)?;
                    if l >= n_layers {
                        return Err(bad(tok));
                    }
                    spec.deterministic[l] = true;
                }
            } else if let Some(rest) = tok.strip_prefix("corr") {
                let (layer, level) = rest.split_once('=').ok_or_else(|| bad(tok))?;
                let l = parse_layer(layer, tok)?;
                if l >= n_layers {
                    return Err(bad(tok));
                }
                spec.correlation[l] = match level {
                    "int" => Correlation::Intermediate,
                    "perf" => Correlation::Perfect,
                    "none" => Correlation::None,
                    _ => return Err(bad(tok)),
                };
            } else if tok == "rw0" {
                spec.random_walk_bottom = false;
            } else if tok == "rw1" {
                spec.random_walk_bottom = true;
            } else if let Some(rest) = tok.strip_prefix("forcing@") {
                spec.forcing_layer = Some(parse_layer(rest, tok)?);
            } else {
                return Err(bad(tok));
            }
        }
        Ok(spec)
    }
}
