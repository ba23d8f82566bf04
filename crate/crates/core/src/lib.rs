//! Reduced-order 3D biped with a per-step velocity regulator whose foot
//! placement is augmented online by shallow adaptive networks.

pub mod adaptive_net;
pub mod biped_model;
pub mod cli;
pub mod config;
pub mod error;
pub mod gait_phase;
pub mod harness;
pub mod nominal_controller;
pub mod regulators;
pub mod report;

pub use error::{Error, Result};
