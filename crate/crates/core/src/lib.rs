//! Maize vs. short-crop classification from spaceborne lidar relative-height
//! metrics and optical harmonic features.
//!
//! The crate is organized as a pipeline:
//!
//! * [`ingest`] parses shots, optical series and label rasters, applies
//!   quality control and attaches ground truth at footprint centroids.
//! * [`features`] reduces shots to 11 RH values and optical series to 20
//!   harmonic coefficients.
//! * [`forest`] is a deterministic random-forest binary classifier.
//! * [`experiments`] runs local, transfer and lidar-supervised regimes over
//!   spatially blocked splits.
//! * [`synth`] generates multi-region datasets with known ground truth.
//! * [`mapgen`] turns a trained optical model into wall-to-wall rasters.

pub mod error;
pub mod experiments;
pub mod features;
pub mod forest;
pub mod ingest;
pub mod mapgen;
pub mod synth;

pub use error::{Error, ErrorClass, Result};
