//! Road-masked tree-crown segmentation toolkit.
//!
//! Trains and runs a small U-Net on spatially incomplete labels: a road
//! validity mask joins the RGB imagery as a fourth input channel, the loss
//! only counts masked pixels, and predictions are coated with the mask.
//! The crate covers the whole pipeline: road/crown geometry ingestion
//! (GeoJSON, Overpass), mask and label rasterization, patch extraction,
//! training, tiled inference and evaluation.

pub mod cli;
pub mod error;
pub mod geodata;
pub mod maskgen;
pub mod nn;
pub mod patches;
pub mod pipeline;
pub mod raster;
pub mod rng;

pub use error::{Error, Result};
