//! Joint inference of linguistic areas and genealogies.
//!
//! Languages are seated in a Pitman-Yor process whose tables are spatially
//! constrained areas; every observed feature value is attributed either to
//! the language's area or to its genealogy (a coalescent tree or a fixed
//! genus/family grouping). Inference is collapsed Gibbs sampling with
//! Metropolis-Hastings moves on area centers.

pub mod analysis;
pub mod areal;
pub mod coalescent;
pub mod data;
pub mod error;
pub mod geo;
pub mod metrics;
pub mod pool;
pub mod sampler;
pub mod synth;

pub use error::{Error, Result};
