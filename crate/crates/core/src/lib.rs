//! Hierarchical risk-factor reduction by top-down clustering of categories.

// NaN-rejecting guards are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ari;
pub mod clustering;
pub mod embeddings;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod model;
pub mod phirat;
pub mod proximity;
pub mod validation;
pub mod rng;
pub mod synth;

pub use error::{ClusterError, DataError, Error, EvalError, FitError, IndexError, ProximityError, Result};

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
