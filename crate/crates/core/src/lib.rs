pub mod domain_geometry;
pub mod error;
pub mod field_sim;
pub mod quad;
pub mod registry;
pub mod gamma_model;
pub mod harness;
pub mod limit_dist;
pub mod rng;
pub mod spectral_operator;
pub mod specfun;

pub use error::{Error, Result};
