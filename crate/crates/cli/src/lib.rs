//! Experiment runner for implied asset correlation studies: parameter sweeps,
//! stacking checks and Monte Carlo validation, driven by plain-text spec files.

pub mod emit;
pub mod mc;
pub mod spec;
pub mod stacking;
pub mod sweep;
