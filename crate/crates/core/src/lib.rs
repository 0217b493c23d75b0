//! Layered linear SDE (hierarchical Ornstein–Uhlenbeck) models observed
//! through noisy sample means at irregular times.

// negated comparisons such as `!(x > 0.0)` are how NaN gets rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autocov;
pub mod data;
pub mod error;
pub mod forcing;
pub mod inference;
pub mod io;
pub mod kalman;
pub mod linalg;
pub mod model_space;
pub mod params;
pub mod posterior;
pub mod run;
pub mod sim;
pub mod spec;
pub mod system;

pub use data::{Dataset, Record};
pub use error::{Error, Result};
pub use forcing::ForcingSeries;
pub use params::ParamVector;
pub use spec::{Correlation, ModelSpec, RegionalKind};

// The guide's snippets run as doc-tests.
#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/filtering.md")]
    mod filtering {}
    #[doc = include_str!("../../../book/src/smoothing.md")]
    mod smoothing {}
    #[doc = include_str!("../../../book/src/model-space.md")]
    mod model_space {}
    #[doc = include_str!("../../../book/src/inference.md")]
    mod inference {}
    #[doc = include_str!("../../../book/src/comparison.md")]
    mod comparison {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
