//! LiDAR point-cloud augmentation and evaluation.
//!
//! The centerpiece is pattern-aware ground-truth sampling: stored objects
//! are partitioned into angular slices matching the scan pattern of a
//! spinning LiDAR, thinned to every other slice in both angular dimensions
//! and pushed twice as far along the sensor ray, producing realistic
//! far-range training samples. Around it sit KITTI format I/O, a
//! ground-truth object database, the usual point-removal baselines, an
//! equal-element distance-binned AP evaluator and a raycasting scan
//! simulator that independently validates the downsampling claim.
//!
//! With the default `parallel` feature the hot loops (database builds, scan
//! simulation, nearest-neighbor comparison, per-frame matching) run on
//! rayon; disabling it falls back to sequential code with identical output.

pub mod baselines;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod gtdb;
pub mod kitti;
pub mod pattern;
pub mod sim;

pub use error::{Error, Result};
