//! Translation error correction workbench.

pub mod cli;
pub mod corpus;
pub mod corruption;
pub mod edits;
pub mod error;
pub mod model;
pub mod seed;
pub mod service;
pub mod stats;
pub mod textnorm;
pub mod training;

pub use error::{Error, Result};
