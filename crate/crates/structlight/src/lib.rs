//! Structured-light fringe projection 3D measurement engine.
//!
//! Generates phase-shifting and Gray-coded projection patterns, simulates a
//! projector-camera system over synthetic scenes, recovers absolute phase with
//! a jump-error-tolerant tripartite unwrapper (plus classic baselines), and
//! converts phase to metric height through per-pixel calibration.
//!
//! The whole chain is closed: every algorithm can be exercised end-to-end
//! against the built-in simulator without hardware.

pub mod calibrate;
pub mod config;
pub mod error;
pub mod fringe;
pub mod graycode;
#[doc(hidden)]
pub mod harness;
pub mod io;
pub(crate) mod numeric;
pub mod patterns;
pub mod pipeline;
pub mod raster;
pub mod rng;
pub mod sequence;
pub mod simulate;
pub mod unwrap;

pub use error::Error;
pub use raster::{Mask, RasterF};

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
