//! Default-rate variance and implied asset correlation for credit pools that
//! are inhomogeneous in PD and/or asset correlation, under the one-factor
//! Gaussian threshold model.
//!
//! The pipeline is: describe a pool by its moments ([`constellation::InputConfiguration`]),
//! discretize it into an [`constellation::ExposureConstellation`], compute the exact
//! default-rate variance ([`poolvar::var_dr_grid`]), and back out the asset
//! correlation a homogeneous-pool analyst would measure ([`implied`]).

pub mod constellation;
pub mod corrmap;
pub mod error;
pub mod gaussian;
pub mod implied;
pub mod mc_oracle;
pub mod poolvar;
pub mod quadrature;
pub mod root;
pub mod special;
pub mod summation;

pub use error::{Error, Result};
