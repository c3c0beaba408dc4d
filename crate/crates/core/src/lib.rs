//! Spatial and visual connectivity analysis of raster floor plans.
//!
//! The crate covers the whole batch pipeline: plan rasters and their PGM
//! encoding ([`grid`], [`pgm`]), analysis fields ([`spatial`], [`visual`],
//! [`sdf`]), a seeded plan generator ([`synth`]), a local and networked
//! task farm with CPU/wall accounting ([`farm`]), and a dataset builder
//! that pairs plans with grayscale targets ([`dataset`]).

pub mod analysis;
pub mod component;
pub mod dataset;
pub mod error;
pub mod farm;
pub mod field;
mod fsutil;
pub mod grid;
pub mod pgm;
pub mod sdf;
pub mod spatial;
pub mod synth;
pub mod visual;

pub use analysis::{analyze_plan, compute_field, AnalysisOptions};
pub use component::largest_component;
pub use error::{Error, Result};
pub use field::{AnalysisField, FieldKind};
pub use grid::{Cell, GrayImage, OccupancyGrid};
pub use pgm::{load_occupancy, save_occupancy};
pub use sdf::signed_distance_field;
pub use visual::VisibilityBackend;
