//! Visible and hidden walkable-surface maps from posed depth and segmentation.
//!
//! The crate covers the whole loop around a four-channel world model
//! (`S`, `D`, `S*`, `D*`): an exact synthetic world to render from, training
//! label generation from multiple frames, the training losses with analytic
//! gradients, baseline predictors, evaluation, and A* path planning over the
//! predicted hidden ground.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod evalkit;
pub mod geometry;
pub mod io;
pub mod labelgen;
pub mod losses;
pub mod planner;
pub mod predictors;
pub mod raster;
pub mod scene;

pub use error::{Error, Result};
pub use raster::{BinaryMask, DepthMap, FlowField, FootprintFrame, ProbMap, Raster};
