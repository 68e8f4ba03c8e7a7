//! Oracles and random instances shared by the integration tests.
#![allow(dead_code)]

use poolcorr::corrmap::{cross_segment_asset_corr, default_corr_from_asset};
use poolcorr::gaussian::{phi, std_normal_pdf};
use poolcorr::poolvar::{cov_dr, ExposureConstellation};
use poolcorr::quadrature::integrate_adaptive;
use poolcorr::summation::CompensatedSum;
use rand::Rng;

/// `P(X ≤ h, Y ≤ k)` as `∫_{-∞}^{h} φ(x) Φ((k − ρx)/√(1−ρ²)) dx`, integrated
/// adaptively with a breakpoint where the inner argument changes sign.
pub fn bivariate_cdf_oracle(h: f64, k: f64, rho: f64) -> f64 {
    assert!(rho.abs() < 1.0);
    let s = (1.0 - rho * rho).sqrt();
    let lo = -40.0;
    if h <= lo {
        return 0.0;
    }
    let mut bp = vec![lo, h];
    if rho != 0.0 {
        let x0 = k / rho;
        if x0 > lo && x0 < h {
            bp.push(x0);
        }
    }
    if 0.0 > lo && 0.0 < h {
        bp.push(0.0);
    }
    bp.sort_by(f64::total_cmp);
    bp.dedup();
    integrate_adaptive(
        |x| std_normal_pdf(x) * phi((k - rho * x) / s),
        &bp,
        1e-15,
        1e-14,
        100_000,
    )
    .value
}

/// Variance of the default rate from the covariance of every exposure pair:
/// cross-segment asset correlation, mapped to a default correlation, times
/// the indicator standard deviations.
pub fn brute_force_variance(c: &ExposureConstellation) -> f64 {
    let mut ex: Vec<(f64, f64)> = Vec::new();
    for k in 0..c.k() {
        for l in 0..c.l() {
            for _ in 0..c.count(k, l) {
                ex.push((c.pd_values()[k], c.rho_values()[l]));
            }
        }
    }
    let n = ex.len() as f64;
    let mut acc = CompensatedSum::new();
    for (i, &(pi, ri)) in ex.iter().enumerate() {
        for (j, &(pj, rj)) in ex.iter().enumerate() {
            let si = (pi * (1.0 - pi)).sqrt();
            let sj = (pj * (1.0 - pj)).sqrt();
            let rho_d = if i == j {
                1.0
            } else {
                let ra = cross_segment_asset_corr(ri, rj, 1.0).unwrap();
                default_corr_from_asset(pi, pj, ra).unwrap()
            };
            acc += cov_dr(si, sj, rho_d).unwrap();
        }
    }
    acc.value() / (n * n)
}

/// Strictly increasing values drawn from `lo..hi`.
pub fn sorted_distinct<R: Rng>(rng: &mut R, len: usize, lo: f64, hi: f64) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..len).map(|_| rng.gen_range(lo..hi)).collect();
        v.sort_by(f64::total_cmp);
        if v.windows(2).all(|w| w[0] < w[1]) {
            return v;
        }
    }
}

/// Random `K×L` constellation with `K, L ≤ max_dim` and at most `max_n`
/// exposures, every PD in `(0, 1)`.
pub fn random_constellation<R: Rng>(
    rng: &mut R,
    max_dim: usize,
    max_n: u64,
) -> ExposureConstellation {
    loop {
        let k = rng.gen_range(1..=max_dim);
        let l = rng.gen_range(1..=max_dim);
        let pd = sorted_distinct(rng, k, 0.001, 0.4);
        let rho = sorted_distinct(rng, l, 0.0, 0.7);
        let cap = (max_n / (k * l) as u64).max(1);
        let counts: Vec<u64> = (0..k * l).map(|_| rng.gen_range(0..=cap)).collect();
        let total: u64 = counts.iter().sum();
        if total >= 1 && total <= max_n {
            return ExposureConstellation::new(pd, rho, counts).unwrap();
        }
    }
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}
