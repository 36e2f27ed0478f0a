//! Synthetic cerebrovascular TOF-MRA patch modeling toolkit.
//!
//! Turns binary vessel volumes into perturbable geometric models
//! (graph -> splines -> tubes), attaches parametric aneurysm sacs,
//! synthesizes statistically calibrated TOF-like backgrounds, emits
//! labeled training patches, and scores detector outputs lesion by
//! lesion.

pub mod aneurysm;
pub mod components;
pub mod detect;
pub mod distance;
pub mod elastic;
pub mod error;
pub mod fidelity;
pub mod filter;
pub mod graph;
pub mod io;
pub mod noise;
pub mod phantom;
pub mod pipeline;
pub mod raster;
pub mod skeleton;
pub mod spline;
pub mod threshold;
pub mod volume;

pub use error::{Result, VamosError};
