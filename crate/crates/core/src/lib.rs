//! Perturbation generators, attackable salient-object detectors and the
//! max-F-beta robustness protocol.
//!
//! Images carry continuous channel values in `[0, 255]`; quantization to
//! bytes happens only when writing files.

pub mod attacks;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod imagekit;
pub mod models;
pub mod noise;

pub use error::{Error, Result};
