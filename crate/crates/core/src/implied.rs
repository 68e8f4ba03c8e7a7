//! Implied (homogeneous-pool) asset correlation and the global adjustment
//! factor of a correlation structure.

use crate::error::{check_open_unit, Error, Result};
use crate::poolvar::{
    grid_moments, multibucket_forms, single_asset_variance, var_dr_grid, ExposureConstellation,
    GridMethod,
};
use crate::root::{solve_increasing, Root, Tolerance};

/// How far below zero the single-bucket inversion may follow the analytic
/// continuation of the variance formula.
pub const NEGATIVE_CONTINUATION_LIMIT: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpliedRhoResult {
    /// Backed-out asset correlation; slightly negative when the target lies
    /// just below the independence variance of a finite pool.
    pub rho_tilde: f64,
    /// `rho_tilde / rho_bar`, when a reference correlation was supplied.
    pub rho_percent: Option<f64>,
    pub iterations: usize,
    /// Forward variance minus target at `rho_tilde`.
    pub residual: f64,
}

impl ImpliedRhoResult {
    fn from_root(root: Root) -> Self {
        Self {
            rho_tilde: root.x,
            rho_percent: None,
            iterations: root.iterations,
            residual: root.residual,
        }
    }
}

fn solver_tolerance() -> Tolerance {
    Tolerance {
        x_abs: 1e-16,
        f_rel: 1e-14,
        f_floor: f64::MIN_POSITIVE,
        max_iter: 400,
    }
}

fn check_target(target: f64) -> Result<f64> {
    if target.is_finite() && target >= 0.0 {
        Ok(target)
    } else {
        Err(Error::Domain {
            name: "target_var",
            value: target,
            expected: "finite and >= 0",
        })
    }
}

/// Asset correlation of a homogeneous pool `(p, n)` whose default-rate
/// variance equals `target_var`.
///
/// Targets above `p(1−p)` are unattainable. Targets below the independence
/// value `p(1−p)/n` are matched on `[−NEGATIVE_CONTINUATION_LIMIT, 0)` by the
/// same formula evaluated at negative correlation, and rejected beyond.
pub fn implied_rho_single(target_var: f64, p: f64, n: u64) -> Result<ImpliedRhoResult> {
    let target = check_target(target_var)?;
    let p = check_open_unit("p", p)?;
    if n == 0 {
        return Err(Error::Domain {
            name: "n",
            value: 0.0,
            expected: ">= 1",
        });
    }
    let upper = p * (1.0 - p);
    let lower = upper / n as f64;
    let tol = solver_tolerance();
    let slack = tol.f_rel * target.max(tol.f_floor);
    if target > upper + slack {
        return Err(Error::Unattainable {
            value: target,
            lower,
            upper,
        });
    }
    let f = |r: f64| single_asset_variance(p, r, n);
    if target >= lower - slack {
        return solve_increasing(f, target, 0.0, 1.0, tol).map(ImpliedRhoResult::from_root);
    }
    match solve_increasing(f, target, -NEGATIVE_CONTINUATION_LIMIT, 0.0, tol) {
        Ok(root) => Ok(ImpliedRhoResult::from_root(root)),
        Err(Error::OutOfRange { .. }) => Err(Error::OutOfRange {
            target,
            lower,
            upper,
        }),
        Err(e) => Err(e),
    }
}

/// Common asset correlation of a PD-bucketed pool that reproduces `target_var`.
pub fn implied_rho_multibucket(target_var: f64, p_k: &[f64], n_k: &[u64]) -> Result<ImpliedRhoResult> {
    let target = check_target(target_var)?;
    multibucket_forms(p_k, n_k, 0.0)?;
    let f = |r: f64| {
        multibucket_forms(p_k, n_k, r)
            .expect("inputs validated")
            .inverter
    };
    solve_increasing(f, target, 0.0, 1.0, solver_tolerance()).map(ImpliedRhoResult::from_root)
}

/// Scale `α` such that the structure `α·ρᴬ_l` gives grid variance `target_var`.
///
/// `α` ranges over `[0, 1/max ρᴬ_l]`.
pub fn global_adjustment_factor(c: &ExposureConstellation, target_var: f64) -> Result<f64> {
    let target = check_target(target_var)?;
    let rho_max = c
        .rho_values()
        .iter()
        .zip(0..)
        .filter(|(_, l)| (0..c.k()).any(|k| c.count(k, *l) > 0))
        .map(|(r, _)| *r)
        .fold(0.0, f64::max);
    if rho_max <= 0.0 {
        return Err(Error::Infeasible(
            "correlation structure is identically zero; no scale factor exists".into(),
        ));
    }
    let weights = c.weights();
    let f = |alpha: f64| {
        let rho: Vec<f64> = c.rho_values().iter().map(|r| (r * alpha).min(1.0)).collect();
        grid_moments(c.pd_values(), &rho, &weights, c.n(), GridMethod::Auto).variance
    };
    let tol = Tolerance {
        x_abs: 1e-15,
        ..solver_tolerance()
    };
    solve_increasing(f, target, 0.0, 1.0 / rho_max, tol).map(|r| r.x)
}

/// Grid variance of `c` backed out as a homogeneous correlation at the
/// pool's mean PD and size, expressed relative to `rho_bar`.
pub fn rho_percent_for_configuration(c: &ExposureConstellation, rho_bar: f64) -> Result<ImpliedRhoResult> {
    if !(rho_bar > 0.0 && rho_bar <= 1.0) {
        return Err(Error::Domain {
            name: "rho_bar",
            value: rho_bar,
            expected: "(0, 1]",
        });
    }
    let m = var_dr_grid(c);
    let mut r = implied_rho_single(m.variance, m.mean, c.n())?;
    r.rho_percent = Some(r.rho_tilde / rho_bar);
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poolvar::{var_dr_multibucket, var_dr_single_asset};

    #[test]
    fn single_edges() {
        for &(p, n) in &[(0.02, 10u64), (0.3, 1000), (0.5, 1_000_000_000)] {
            let lo = p * (1.0 - p) / n as f64;
            assert_eq!(implied_rho_single(lo, p, n).unwrap().rho_tilde, 0.0);
            let hi = p * (1.0 - p);
            assert!((implied_rho_single(hi, p, n).unwrap().rho_tilde - 1.0).abs() < 1e-12);
        }
        assert!(matches!(
            implied_rho_single(0.3, 0.2, 10),
            Err(Error::Unattainable { .. })
        ));
    }

    #[test]
    fn single_round_trip() {
        let v = var_dr_single_asset(0.02, 0.12, 1_000_000_000).unwrap();
        let r = implied_rho_single(v, 0.02, 1_000_000_000).unwrap();
        assert!((r.rho_tilde - 0.12).abs() < 1e-10, "{r:?}");
        assert!(r.residual.abs() <= 1e-14 * v);
    }

    #[test]
    fn negative_continuation() {
        let (p, n) = (0.5, 1_000_000_000u64);
        let r = implied_rho_single(0.0, p, n).unwrap();
        assert!(r.rho_tilde < 0.0 && r.rho_tilde > -1e-8, "{r:?}");
        // a small pool far below the independence variance has no nearby root
        assert!(matches!(
            implied_rho_single(0.0, 0.5, 10),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn multibucket_collapse_and_round_trip() {
        let v = var_dr_single_asset(0.03, 0.2, 500).unwrap();
        let a = implied_rho_multibucket(v, &[0.03], &[500]).unwrap();
        let b = implied_rho_single(v, 0.03, 500).unwrap();
        assert!((a.rho_tilde - b.rho_tilde).abs() < 1e-13);
        let p = [0.001, 0.01, 0.04, 0.1, 0.3];
        let nk = [5000, 300, 20, 4000, 7];
        let v = var_dr_multibucket(&p, &nk, 0.17).unwrap();
        let r = implied_rho_multibucket(v, &p, &nk).unwrap();
        assert!((r.rho_tilde - 0.17).abs() < 1e-10);
        let v0 = var_dr_multibucket(&p, &nk, 0.0).unwrap();
        assert_eq!(implied_rho_multibucket(v0, &p, &nk).unwrap().rho_tilde, 0.0);
    }

    #[test]
    fn alpha_round_trip() {
        let c = ExposureConstellation::new(
            vec![0.01, 0.05],
            vec![0.08, 0.3],
            vec![400, 100, 250, 250],
        )
        .unwrap();
        let v = var_dr_grid(&c).variance;
        assert!((global_adjustment_factor(&c, v).unwrap() - 1.0).abs() < 1e-9);
        let v7 = var_dr_grid(&c.scale_rho(0.7).unwrap()).variance;
        assert!((global_adjustment_factor(&c, v7).unwrap() - 0.7).abs() < 1e-9);
        let zero = ExposureConstellation::new(vec![0.01, 0.05], vec![0.0], vec![500, 500]).unwrap();
        let v0 = var_dr_grid(&zero).variance;
        assert_eq!(global_adjustment_factor(&c, v0).unwrap(), 0.0);
    }

    #[test]
    fn homogeneous_is_one_hundred_percent() {
        let c = ExposureConstellation::homogeneous(0.02, 0.12, 1000).unwrap();
        let r = rho_percent_for_configuration(&c, 0.12).unwrap();
        assert!((r.rho_percent.unwrap() - 1.0).abs() < 1e-8);
    }
}
