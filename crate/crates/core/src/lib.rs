pub mod angular;
pub mod approxefn;
pub mod config;
pub mod counterexamples;
pub mod error;
pub mod exterior;
pub mod ladder;
pub mod numerics;
pub mod ode;
pub mod oscillation;
pub mod potential;

pub use error::{Error, Result};

/// Version of this crate, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
