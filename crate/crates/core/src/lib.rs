//! Evolving transparent image-segmentation pipelines with Cartesian genetic
//! programming.

pub mod analysis;
pub mod bench;
pub mod cgp;
pub mod dataset;
pub mod endpoints;
pub mod ensemble;
mod error;
pub mod evolution;
pub mod export;
pub mod image;
pub mod imgops;
pub mod metrics;
pub mod model;
pub mod raster;
pub mod run;
pub mod synth;

pub use error::{Error, Result};
