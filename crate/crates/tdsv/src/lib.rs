//! File formats, TOML recipe configuration and the end-to-end recipe built
//! on `tdsv-core`.

pub mod config;
pub mod dataset;
pub mod error;
pub mod formats;
pub mod pipeline;
pub mod recipe;

pub use config::RecipeConfig;
pub use error::{Error, Result};
