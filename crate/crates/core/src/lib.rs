pub mod autodiff;
pub mod config;
pub mod data;
pub mod encoder;
pub mod error;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod predict;
pub mod trainer;

pub use error::{Error, Result};
