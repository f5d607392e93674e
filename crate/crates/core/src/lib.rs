pub mod deep;
pub mod envs;
pub mod error;
pub mod harness;
pub mod mdp;
pub mod metrics;
pub mod neural;
pub mod tabular;

pub use error::{Error, Result};
