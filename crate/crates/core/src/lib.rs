//! Planning optimization for mandibular reconstruction with donor bone.
//!
//! The crate covers the geometry of cut planes and contours, bone material
//! and stimulus formulas, a deterministic synthetic reconstruction evaluator,
//! the union objectives, a Gaussian-process surrogate with expected
//! improvement, template-to-patient personalization, and validation metrics.

pub mod analysis;
pub mod bo;
pub mod bone;
pub mod case;
pub mod design;
pub mod error;
pub mod evaluator;
pub mod geometry;
pub mod gp;
pub mod objective;
pub mod registration;

pub use error::{Error, Result};
