//! Meltpool geometry and defect modelling for metal additive manufacturing.
//!
//! The crate covers the full path from a tabular experiment log to trained
//! models: CSV ingestion, alloy property lookup, feature assembly,
//! closed-form Rosenthal estimates, dimension-constrained power-law
//! identification, a set of regressors and classifiers, cross-validated
//! evaluation and hyperparameter search.

pub mod analytical;
pub mod data;
pub mod error;
pub mod evaluate;
pub mod featurize;
pub mod identify;
pub mod learners;
pub mod materials;
pub mod matrix;
pub mod pipeline;
pub mod synthetic;
pub mod tune;

pub use error::{Error, Result};
