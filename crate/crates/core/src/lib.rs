#![no_std]

extern crate alloc;

pub mod corpus;
pub mod error;
pub mod eval;
pub mod featkit;
pub mod gmm;
pub mod ivector;
pub mod linalg;
pub mod math;
pub mod matrix;
pub mod neural;
pub mod plda;
pub mod ppdnn;
pub mod rng;

pub use error::{Error, Result};
pub use matrix::{FeatureMatrix, Matrix};
