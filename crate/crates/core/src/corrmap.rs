//! Default correlation versus asset correlation under the Gaussian copula.

use crate::error::{check_corr, check_open_unit, check_unit, Error, Result};
use crate::gaussian::{phi_inv, BivariateNormal};
use crate::root::{solve_increasing, Tolerance};

/// Range of default correlations attainable for a pair of PDs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DefaultCorrBounds {
    pub lower: f64,
    pub upper: f64,
}

impl DefaultCorrBounds {
    pub fn contains(&self, rho_d: f64) -> bool {
        self.lower <= rho_d && rho_d <= self.upper
    }
}

/// Attainable range of the default correlation of two Bernoulli indicators
/// with success probabilities `p_i` and `p_j`.
pub fn default_corr_bounds(p_i: f64, p_j: f64) -> Result<DefaultCorrBounds> {
    let p_i = check_open_unit("p_i", p_i)?;
    let p_j = check_open_unit("p_j", p_j)?;
    let (p_i, p_j) = if p_i <= p_j { (p_i, p_j) } else { (p_j, p_i) };
    let (q_i, q_j) = (1.0 - p_i, 1.0 - p_j);
    let up = (p_j * q_i / (p_i * q_j)).sqrt();
    let upper = up.min(1.0 / up);
    let lo = (p_i * p_j / (q_i * q_j)).sqrt();
    let lower = -lo.min(1.0 / lo);
    Ok(DefaultCorrBounds { lower, upper })
}

/// Default correlation implied by asset correlation `rho_a` for PDs `p_i`, `p_j`.
pub fn default_corr_from_asset(p_i: f64, p_j: f64, rho_a: f64) -> Result<f64> {
    let bounds = default_corr_bounds(p_i, p_j)?;
    let bvn = BivariateNormal::new(check_corr("rho_a", rho_a)?)?;
    Ok(default_corr_with(&bvn, p_i, p_j, bounds))
}

fn default_corr_with(bvn: &BivariateNormal, p_i: f64, p_j: f64, bounds: DefaultCorrBounds) -> f64 {
    let sd = (p_i * (1.0 - p_i)).sqrt() * (p_j * (1.0 - p_j)).sqrt();
    let rho_d = bvn.excess(phi_inv(p_i), phi_inv(p_j)) / sd;
    rho_d.clamp(bounds.lower, bounds.upper)
}

/// Asset correlation that produces default correlation `rho_d`.
///
/// Fails with [`Error::Unattainable`] when `rho_d` lies outside
/// [`default_corr_bounds`]; the bounds themselves map to ±1.
pub fn asset_corr_from_default(p_i: f64, p_j: f64, rho_d: f64) -> Result<f64> {
    let bounds = default_corr_bounds(p_i, p_j)?;
    let rho_d = check_corr("rho_d", rho_d)?;
    if !bounds.contains(rho_d) {
        return Err(Error::Unattainable {
            value: rho_d,
            lower: bounds.lower,
            upper: bounds.upper,
        });
    }
    if rho_d == 0.0 {
        return Ok(0.0);
    }
    let (c_i, c_j) = (phi_inv(p_i), phi_inv(p_j));
    let sd = (p_i * (1.0 - p_i)).sqrt() * (p_j * (1.0 - p_j)).sqrt();
    // excess covariance is increasing in rho; solve on the covariance scale
    let target = rho_d * sd;
    let forward = |r: f64| {
        BivariateNormal::new(r.clamp(-1.0, 1.0))
            .expect("clamped correlation")
            .excess(c_i, c_j)
    };
    let (lo, hi) = if rho_d > 0.0 { (0.0, 1.0) } else { (-1.0, 0.0) };
    let tol = Tolerance {
        x_abs: 0.0,
        f_rel: 0.0,
        f_floor: f64::MIN_POSITIVE,
        max_iter: 500,
    };
    match solve_increasing(forward, target, lo, hi, tol) {
        Ok(root) => Ok(root.x),
        // endpoint values can differ from the analytic bound by rounding
        Err(Error::OutOfRange { .. }) => Ok(if rho_d > 0.0 { 1.0 } else { -1.0 }),
        Err(e) => Err(e),
    }
}

/// Correlation of latent variables in two segments loaded on factors with
/// correlation `rho_z`: `√ρ₁ · ρ_z · √ρ₂`.
pub fn cross_segment_asset_corr(rho_a_1: f64, rho_a_2: f64, rho_z: f64) -> Result<f64> {
    let r1 = check_unit("rho_a_1", rho_a_1)?;
    let r2 = check_unit("rho_a_2", rho_a_2)?;
    let rz = check_corr("rho_z", rho_z)?;
    Ok((r1.sqrt() * rz * r2.sqrt()).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bounds_examples() {
        let b = default_corr_bounds(0.5, 0.5).unwrap();
        assert!((b.lower + 1.0).abs() < 1e-15 && (b.upper - 1.0).abs() < 1e-15);
        let b = default_corr_bounds(0.01, 0.10).unwrap();
        let expected = (0.01f64 / 0.10 * 0.90 / 0.99).sqrt();
        assert!((b.upper - expected).abs() < 1e-15);
        assert!((b.upper - 0.30151).abs() < 1e-5);
        for p in [1e-6, 0.02, 0.3, 0.9] {
            assert_eq!(default_corr_bounds(p, p).unwrap().upper, 1.0);
        }
        assert!(default_corr_bounds(0.0, 0.5).is_err());
        assert!(default_corr_bounds(0.2, 1.0).is_err());
    }

    #[test]
    fn forward_examples() {
        assert_eq!(default_corr_from_asset(0.02, 0.02, 0.0).unwrap(), 0.0);
        assert!((default_corr_from_asset(0.3, 0.3, 1.0).unwrap() - 1.0).abs() < 1e-14);
        assert!(default_corr_from_asset(0.0, 0.3, 0.5).is_err());
    }

    #[test]
    fn copula_extremes_hit_unrestricted_bounds() {
        for &(a, b) in &[(0.01, 0.1), (0.3, 0.6), (0.2, 0.95), (0.5, 0.5)] {
            let bd = default_corr_bounds(a, b).unwrap();
            assert!((default_corr_from_asset(a, b, 1.0).unwrap() - bd.upper).abs() < 1e-12);
            assert!((default_corr_from_asset(a, b, -1.0).unwrap() - bd.lower).abs() < 1e-12);
        }
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(asset_corr_from_default(0.05, 0.05, 0.0).unwrap(), 0.0);
        let d = default_corr_from_asset(0.02, 0.02, 0.12).unwrap();
        assert!((asset_corr_from_default(0.02, 0.02, d).unwrap() - 0.12).abs() < 1e-9);
        match asset_corr_from_default(0.01, 0.10, 0.95) {
            Err(Error::Unattainable { upper, .. }) => assert!((upper - 0.30151).abs() < 1e-5),
            other => panic!("expected unattainable, got {other:?}"),
        }
    }

    #[test]
    fn cross_segment_examples() {
        assert!((cross_segment_asset_corr(0.12, 0.12, 1.0).unwrap() - 0.12).abs() < 1e-16);
        assert!((cross_segment_asset_corr(0.04, 0.25, 1.0).unwrap() - 0.10).abs() < 1e-16);
        assert_eq!(cross_segment_asset_corr(0.16, 0.16, 0.0).unwrap(), 0.0);
        assert!(cross_segment_asset_corr(-0.1, 0.2, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn mapped_default_corr_within_bounds(
            p_i in 1e-4f64..0.9999, p_j in 1e-4f64..0.9999, r in -1.0f64..=1.0
        ) {
            let b = default_corr_bounds(p_i, p_j).unwrap();
            let d = default_corr_from_asset(p_i, p_j, r).unwrap();
            prop_assert!(d <= b.upper + 1e-12 && d >= b.lower - 1e-12);
            prop_assert!(b.lower <= 0.0 && b.upper >= 0.0);
        }

        #[test]
        fn forward_is_increasing(
            p_i in 1e-3f64..0.999, p_j in 1e-3f64..0.999, r in -0.95f64..0.95, dr in 1e-3f64..0.05
        ) {
            let a = default_corr_from_asset(p_i, p_j, r).unwrap();
            let b = default_corr_from_asset(p_i, p_j, r + dr).unwrap();
            prop_assert!(b >= a);
            // the density factor vanishes numerically near |ρ| = 1 with distant PDs
            if (r + dr).abs() <= 0.5 && r.abs() <= 0.5 {
                prop_assert!(b > a);
            }
        }
    }
}
