//! Density ratios, approximate limits, precise representatives, Clarke
//! generalized gradients and Gauss-Green checks for regions given by predicates.

pub mod aplimits;
pub mod clarke;
pub mod config;
pub mod density;
pub mod error;
pub mod exprcli;
pub mod extended;
pub mod field;
pub mod gaussgreen;
pub mod measure;
pub mod representative;
pub mod sampling;

pub use config::{ClarkeOptions, ConeOptions, EstimatorConfig, GaussGreenOptions, Tolerances};
pub use error::{Error, Result};
pub use extended::ExtendedReal;
pub use field::{ScalarField, VectorField};
