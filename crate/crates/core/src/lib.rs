pub mod cli;
pub mod error;
pub mod models;
pub mod nn;
pub mod prep;
pub mod rng;
pub mod scene;
pub mod train;

pub use error::{Error, Result};
