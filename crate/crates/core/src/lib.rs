//! Models for human-robot co-transportation under uncertain human
//! preferences.
//!
//! - [`geometry`]: environments, path options through openings, objective cost.
//! - [`preference`]: subjective cost and choice probabilities over a parameter box.
//! - [`coordination`]: discomfort, stubbornness, mode transition and the simulated team.
//! - [`control`]: reference mobile-manipulator kinematics, tracking MPC and pose optimization.

pub mod builtin;
pub mod config;
pub mod control;
pub mod coordination;
pub mod error;
pub mod geometry;
pub mod preference;

pub use error::{CalibrationError, ConfigError, ControlError, GeometryError};
