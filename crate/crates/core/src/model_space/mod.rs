//! Model enumeration, priors, reparametrisation and pull identification.

mod canonical;
mod frame;
mod prior;

pub use canonical::canonicalize_pulls;
pub use frame::{
    enumerate_models, layer_categorization, standard_categorizations, Categorization, Category,
    ModelFrame,
};
pub use prior::{
    from_unconstrained, log_prior, to_unconstrained, Coord, NormalPrior, ParamLayout, PriorSpec,
};
