use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the function.
    #[error("{name} = {value} is outside its domain ({expected})")]
    Domain {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    /// A probability of exactly 0 or 1 where an interior value is required.
    #[error("{name} = {value} is a boundary probability; threshold would be infinite")]
    Boundary { name: &'static str, value: f64 },

    /// A default correlation outside the range a Gaussian copula can produce for the given PDs.
    #[error("default correlation {value} is not attainable; bounds are [{lower}, {upper}]")]
    Unattainable { value: f64, lower: f64, upper: f64 },

    /// A variance (or other target) outside the image of the forward map.
    #[error("target {target:e} lies outside the attainable interval [{lower:e}, {upper:e}]")]
    OutOfRange { target: f64, lower: f64, upper: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not symmetric at ({row}, {col})")]
    Asymmetric { row: usize, col: usize },

    /// A requested distribution shape cannot be realized.
    #[error("infeasible configuration: {0}")]
    Infeasible(String),

    #[error("invalid constellation: {0}")]
    InvalidConstellation(String),

    #[error("root finder failed to converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub(crate) fn check_finite(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Domain {
            name,
            value,
            expected: "finite",
        })
    }
}

pub(crate) fn check_open_unit(name: &'static str, value: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&value) {
        return Err(Error::Domain {
            name,
            value,
            expected: "[0, 1]",
        });
    }
    if value == 0.0 || value == 1.0 {
        return Err(Error::Boundary { name, value });
    }
    Ok(value)
}

pub(crate) fn check_unit(name: &'static str, value: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(Error::Domain {
            name,
            value,
            expected: "[0, 1]",
        })
    }
}

pub(crate) fn check_corr(name: &'static str, value: f64) -> Result<f64> {
    if (-1.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(Error::Domain {
            name,
            value,
            expected: "[-1, 1]",
        })
    }
}
