//! Bayes factors, posterior model probabilities and property weights.

use serde::{Deserialize, Serialize};

use super::bml::log_sum_exp;
use crate::error::{Error, Result};
use crate::model_space::Categorization;
use crate::spec::ModelSpec;

/// `f(D|M1) / f(D|M2)` from the two log-BMLs.
pub fn bayes_factor(log_bml_1: f64, log_bml_2: f64) -> f64 {
    (log_bml_1 - log_bml_2).exp()
}

/// Posterior model probabilities under equal prior model probabilities.
pub fn posterior_model_probabilities(log_bml: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(log_bml);
    log_bml.iter().map(|x| (x - lse).exp()).collect()
}

/// Weight of one category.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryWeight {
    pub category: String,
    pub weight: f64,
    pub n_models: usize,
}

/// Weights of all categories of one property.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyTable {
    pub property: String,
    pub weights: Vec<CategoryWeight>,
}

/// Property weights `W(C|D)`: every category gets the same prior mass,
/// spread evenly over its models.
///
/// `table` holds `(model, log-BML)`; every category must contain at least
/// one model of the table and the categories must partition it.
pub fn property_weights(cat: &Categorization, table: &[(ModelSpec, f64)]) -> Result<PropertyTable> {
    let mut members: Vec<Vec<f64>> = vec![Vec::new(); cat.categories.len()];
    for (spec, lb) in table {
        members[cat.assign(spec)?].push(*lb);
    }
    if let Some(i) = members.iter().position(|m| m.is_empty()) {
        return Err(Error::EmptyCategory(format!(
            "{}: {}",
            cat.property, cat.categories[i].name
        )));
    }
    let log_w: Vec<f64> = members
        .iter()
        .map(|m| log_sum_exp(m) - (m.len() as f64).ln())
        .collect();
    let total = log_sum_exp(&log_w);
    Ok(PropertyTable {
        property: cat.property.clone(),
        weights: cat
            .categories
            .iter()
            .zip(&log_w)
            .zip(&members)
            .map(|((c, lw), m)| CategoryWeight {
                category: c.name.clone(),
                weight: (lw - total).exp(),
                n_models: m.len(),
            })
            .collect(),
    })
}

/// Table rows as `category  weight% (model count)`.
pub fn format_property_tables(tables: &[PropertyTable]) -> String {
    let mut out = String::new();
    for t in tables {
        out.push_str(&t.property);
        out.push('\n');
        for w in &t.weights {
            out.push_str(&format!(
                "  {:<16} {:>6.1}% ({})\n",
                w.category,
                100.0 * w.weight,
                w.n_models
            ));
        }
    }
    out
}
