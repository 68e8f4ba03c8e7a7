mod common;

use common::{random_constellation, sorted_distinct};
use poolcorr::corrmap::{default_corr_bounds, default_corr_from_asset};
use poolcorr::implied::{global_adjustment_factor, implied_rho_multibucket, implied_rho_single};
use poolcorr::poolvar::{
    var_dr_grid, var_dr_homogeneous_default, var_dr_multibucket, var_dr_single_asset,
    ExposureConstellation,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SLACK: f64 = 1e-12;

fn within(v: f64, lo: f64, hi: f64) -> bool {
    v >= lo - SLACK * lo.abs().max(1e-300) && v <= hi + SLACK * hi.abs()
}

#[test]
fn single_inversion_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..300 {
        let p = 10f64.powf(rng.gen_range(-3.0..-0.3));
        let n = 10u64.pow(rng.gen_range(0..10)) * rng.gen_range(2..10);
        let rho = rng.gen_range(0.01..0.95);
        let v = var_dr_single_asset(p, rho, n).unwrap();
        let r = implied_rho_single(v, p, n).unwrap();
        assert!((r.rho_tilde - rho).abs() <= 1e-9, "p={p} n={n} rho={rho}: {r:?}");
    }
}

#[test]
fn multibucket_inversion_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..100 {
        let k = rng.gen_range(1..=5);
        let p = sorted_distinct(&mut rng, k, 1e-3, 0.5);
        let n: Vec<u64> = (0..k).map(|_| rng.gen_range(1..10_000_000)).collect();
        let rho = rng.gen_range(0.01..0.95);
        let v = var_dr_multibucket(&p, &n, rho).unwrap();
        let r = implied_rho_multibucket(v, &p, &n).unwrap();
        assert!((r.rho_tilde - rho).abs() <= 1e-9, "{p:?} {n:?} {rho}: {r:?}");
    }
}

#[test]
fn adjustment_factor_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..30 {
        let c = random_constellation(&mut rng, 6, 1_000_000);
        let rho_max = c.rho_values().iter().cloned().fold(0.0, f64::max);
        if rho_max < 0.05 {
            continue;
        }
        let alpha = rng.gen_range(0.2..(1.0 / rho_max).min(1.5));
        let target = var_dr_grid(&c.scale_rho(alpha).unwrap()).variance;
        let got = global_adjustment_factor(&c, target).unwrap();
        assert!((got - alpha).abs() <= 1e-9, "{c:?}: {got} vs {alpha}");
    }
}

#[test]
fn single_asset_variance_within_varbound() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for _ in 0..2000 {
        let p = 10f64.powf(rng.gen_range(-5.0..0.0)).min(0.999);
        let n = rng.gen_range(1..1_000_000_000);
        let rho = rng.gen_range(0.0..=1.0);
        let v = var_dr_single_asset(p, rho, n).unwrap();
        let s2 = p * (1.0 - p);
        assert!(within(v, s2 / n as f64, s2), "p={p} n={n} rho={rho}: {v}");
    }
}

#[test]
fn homogeneous_default_variance_within_drbound() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    for _ in 0..2000 {
        let p = rng.gen_range(1e-5..0.999);
        let n = rng.gen_range(1..1_000_000_000);
        let rho_d = rng.gen_range(0.0..=1.0);
        let v = var_dr_homogeneous_default(p, rho_d, n).unwrap();
        let s2 = p * (1.0 - p);
        assert!(within(v, s2 / n as f64, s2), "p={p} n={n} rho_d={rho_d}: {v}");
    }
}

#[test]
fn mapped_default_correlation_within_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    for _ in 0..2000 {
        let pi = 10f64.powf(rng.gen_range(-4.0..-0.01));
        let pj = 10f64.powf(rng.gen_range(-4.0..-0.01));
        let rho = rng.gen_range(-1.0..=1.0);
        let b = default_corr_bounds(pi, pj).unwrap();
        let d = default_corr_from_asset(pi, pj, rho).unwrap();
        assert!(d >= b.lower - SLACK && d <= b.upper + SLACK, "{pi} {pj} {rho}: {d} {b:?}");
        assert!(b.lower <= 0.0 && b.upper <= 1.0 && b.lower >= -1.0);
    }
}

#[test]
fn copula_bounds_attained_at_perfect_correlation() {
    let mut rng = ChaCha8Rng::seed_from_u64(27);
    for _ in 0..500 {
        let pi = rng.gen_range(1e-3..0.999);
        let pj = rng.gen_range(1e-3..0.999);
        let b = default_corr_bounds(pi, pj).unwrap();
        let up = default_corr_from_asset(pi, pj, 1.0).unwrap();
        let lo = default_corr_from_asset(pi, pj, -1.0).unwrap();
        assert!((up - b.upper).abs() <= 1e-10, "{pi} {pj}: {up} {b:?}");
        assert!((lo - b.lower).abs() <= 1e-10, "{pi} {pj}: {lo} {b:?}");
    }
}

#[test]
fn variance_nonincreasing_in_pool_size() {
    let mut rng = ChaCha8Rng::seed_from_u64(28);
    for _ in 0..500 {
        let p = rng.gen_range(1e-4..0.9);
        let rho = rng.gen_range(0.0..1.0);
        let mut prev = f64::INFINITY;
        for n in [1, 2, 5, 10, 100, 1000, 1_000_000, 1_000_000_000] {
            let v = var_dr_single_asset(p, rho, n).unwrap();
            assert!(v <= prev * (1.0 + SLACK), "p={p} rho={rho} n={n}");
            prev = v;
        }
    }
}

#[test]
fn variance_strictly_increasing_in_correlation() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    for _ in 0..200 {
        let p = rng.gen_range(1e-3..0.9);
        let n = rng.gen_range(2..1_000_000);
        let rhos = [0.0, 0.05, 0.2, 0.5, 0.8, 0.99];
        let single: Vec<f64> = rhos.iter().map(|&r| var_dr_single_asset(p, r, n).unwrap()).collect();
        assert!(single.windows(2).all(|w| w[1] > w[0]), "p={p} n={n}: {single:?}");

        let ps = sorted_distinct(&mut rng, 3, 1e-3, 0.5);
        let ns = [n, n + 7, 3 * n];
        let multi: Vec<f64> = rhos.iter().map(|&r| var_dr_multibucket(&ps, &ns, r).unwrap()).collect();
        assert!(multi.windows(2).all(|w| w[1] > w[0]), "{ps:?}: {multi:?}");

        let c = ExposureConstellation::new(ps.clone(), vec![0.1, 0.3], vec![n, 1, 2, n, 5, 9]).unwrap();
        let grid: Vec<f64> = [0.5, 1.0, 2.0, 3.0]
            .iter()
            .map(|&a| var_dr_grid(&c.scale_rho(a).unwrap()).variance)
            .collect();
        assert!(grid.windows(2).all(|w| w[1] > w[0]), "{c:?}: {grid:?}");
    }
}
