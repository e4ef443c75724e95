pub mod agents;
pub mod budget;
pub mod codec;
pub mod demos;
pub mod discretize;
pub mod env;
pub mod error;
pub mod harness;
pub mod nn;
pub mod scheduler;

pub use error::{Error, Result};
