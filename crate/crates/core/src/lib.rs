pub mod cli;
pub mod construction;
pub mod error;
pub mod experiment;
pub mod grid;
pub mod spectral;
pub mod tree;

pub use error::{Error, Result};
