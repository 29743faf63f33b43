//! Spatial-temporal graph convolution for lifting 2D hand skeleton sequences to 3D,
//! with kinematic training losses.

pub mod ablation;
pub mod config;
pub mod data;
pub mod error;
pub mod graph;
pub mod losses;
pub mod metrics;
pub mod nn;
pub mod topology;
pub mod train;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use topology::HandTopology;
