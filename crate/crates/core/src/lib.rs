//! Few-shot word sense disambiguation with episodically trained sense
//! prototypes.

pub mod cli;
pub mod config;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod inference;
pub mod metric;
pub mod rng;
pub mod sampler;
pub mod trainer;

pub use error::{Error, Result};
