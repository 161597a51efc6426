//! Physics-informed networks for singularly perturbed convection-diffusion
//! problems, with boundary-layer-aware composite models.

pub mod diffnet;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod fdref;
pub mod parallel;
pub mod layers;
pub mod problems;
pub mod sampling;
pub mod training;

pub use error::{Error, Result};
