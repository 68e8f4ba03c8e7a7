use poolcorr::corrmap::{asset_corr_from_default, default_corr_from_asset};
use poolcorr::gaussian::phi_inv;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn bvn_density(h: f64, k: f64, r: f64) -> f64 {
    let s = 1.0 - r * r;
    (-(h * h - 2.0 * r * h * k + k * k) / (2.0 * s)).exp() / (2.0 * PI * s.sqrt())
}

// dΦ₂/dρ is the bivariate density, so a covariance known to ~1e-16 pins ρ
// down to ~1e-16/φ₂. Near ρᴬ = 1 with very different PDs that is far coarser
// than 1e-9; the bound below adds this conditioning term.
#[test]
fn inversion_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut ill = 0;
    for _ in 0..1000 {
        let p_i: f64 = rng.gen_range(1e-4..0.9999);
        let p_j: f64 = rng.gen_range(1e-4..0.9999);
        let r: f64 = rng.gen_range(0.0..0.99);
        let d = default_corr_from_asset(p_i, p_j, r).unwrap();
        let back = asset_corr_from_default(p_i, p_j, d).unwrap();
        let slack = 4e-16 / bvn_density(phi_inv(p_i), phi_inv(p_j), r);
        if slack > 1e-9 {
            ill += 1;
        }
        assert!(
            (back - r).abs() <= 1e-9 + slack,
            "p_i={p_i} p_j={p_j} r={r} back={back}"
        );
    }
    println!("{ill} of 1000 draws are ill-conditioned beyond 1e-9");
    assert!(ill < 100);
}

#[test]
fn inversion_round_trip_well_conditioned() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let p_i: f64 = rng.gen_range(1e-4..0.5);
        let p_j: f64 = rng.gen_range(1e-4..0.5);
        let r: f64 = rng.gen_range(0.0..0.9);
        let d = default_corr_from_asset(p_i, p_j, r).unwrap();
        let back = asset_corr_from_default(p_i, p_j, d).unwrap();
        assert!((back - r).abs() <= 1e-9, "p_i={p_i} p_j={p_j} r={r} back={back}");
    }
}
