//! Content-conditioned, style-controllable sketch generation.

pub mod dataset;
pub mod error;
pub mod networks;
pub mod raster;

pub use error::{Error, Result};
pub mod objectives;
pub mod trainer;
pub mod synthesis;
pub mod evaluation;
