pub mod cli;
pub mod dataset;
pub mod diagnostics;
pub mod encoder;
pub mod error;
pub mod experiment;
pub mod fbam;
pub mod metrics;
pub mod nn;
pub mod numcore;
pub mod optim;
pub mod pce;
pub mod scln;
pub mod spectral;
pub mod trainer;
pub mod tsam;

pub use error::{Error, Result};
