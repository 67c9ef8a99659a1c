//! Active-sonar detection and tracking with a track-before-detect chain.
//!
//! One emission flows through the crate as:
//!
//! 1. [`scenario`] synthesizes a multichannel hydrophone buffer with delayed
//!    chirp echoes embedded in white Gaussian clutter.
//! 2. [`beamform`] pulse-compresses every channel and delay-and-sum beamforms
//!    the result into an angle-distance matrix (beam azimuth x range sample).
//! 3. [`detect`] thresholds the matrix with a 2D cell-averaging CFAR under a
//!    Rayleigh clutter model, labels 4-connected blobs and merges blobs that
//!    are closer than the merging thresholds.
//! 4. [`track`] converts the polar blob measurements to debiased Cartesian
//!    measurements and runs a multitarget nearly-constant-velocity Kalman
//!    tracker with gating, auction assignment and confirm/delete logic.
//!
//! [`eval`] scores tracker output against ground truth and runs Monte Carlo
//! sweeps; [`pipeline`] glues the stages together and [`io`] holds the file
//! formats.

// Negated comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod angle;
pub mod beamform;
pub mod config;
pub mod detect;
pub mod error;
pub mod eval;
pub mod io;
pub mod pipeline;
pub mod scenario;
pub mod track;

pub use error::{Error, Result};
