//! Real-time estimation of a temperature-thresholded flame boundary surface
//! from two binary thermal silhouettes.
//!
//! The flame is modeled as a circular-arc center curve leaving the torch
//! nozzle, with a circular cross-section whose radius varies along the arc
//! (a Gaussian-process regression over arc length). Modules:
//!
//! - [`geom`]: pinhole cameras, rays and closest-point queries in the nozzle frame.
//! - [`model`]: arc parameterization, width GP and the implicit surface.
//! - [`silhouette`]: thresholding, boundary tracing, mask IoU and PGM I/O.
//! - [`estimate`]: midpoint triangulation, surface-point recovery, fitting,
//!   reprojection and IoU refinement.
//! - [`synth`]: synthetic ground-truth scenes for round-trip testing.
//! - [`eval`]: precision/IoU scoring and the straight-line baseline comparison.

pub mod error;
pub mod geom;
pub mod model;
pub mod silhouette;
pub mod estimate;
pub mod synth;
pub mod eval;
pub(crate) mod optim;

pub use error::{Error, Result};
