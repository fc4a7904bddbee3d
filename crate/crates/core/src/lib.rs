//! 3D pictorial structures for human pose estimation on RGB-D frames.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod features;
pub mod frame;
pub mod geometry;
pub mod image;
pub mod inference;
pub mod learning;
pub mod model;
pub mod par;
pub mod synthgen;

pub use error::{Error, Result};
