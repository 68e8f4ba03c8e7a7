//! Monte Carlo estimate of the default-rate variance of a constellation,
//! simulated directly from the one-factor model.
//!
//! Normal variates come from inverting uniforms through [`phi_inv`], so the
//! oracle never touches the bivariate normal code it is meant to check.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;

use crate::constellation::{build_constellation, BuildParams, InputConfiguration, Spread};
use crate::error::{Error, Result};
use crate::gaussian::{phi, phi_inv};
use crate::poolvar::{var_dr_grid, DefaultRateMoments, ExposureConstellation};
use crate::summation::CompensatedSum;

/// Largest pool simulated exposure by exposure under [`SimulationMode::Auto`].
pub const EXPOSURE_LEVEL_LIMIT: u64 = 1_000;

/// Trials per RNG stream.
const CHUNK: u64 = 4_096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimulationMode {
    /// Every exposure draws its own idiosyncratic shock.
    Exposures,
    /// Cell default counts drawn as binomials given the common factor.
    ConditionalBinomial,
    /// Per-trial default rate replaced by its expectation given the common
    /// factor; estimates the `n → ∞` variance.
    ConditionalExpectation,
    /// Exposures up to [`EXPOSURE_LEVEL_LIMIT`], binomials above.
    Auto,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSpec {
    pub constellation: ExposureConstellation,
    pub trials: u64,
    pub seed: u64,
    pub mode: SimulationMode,
}

impl SimulationSpec {
    pub fn new(constellation: ExposureConstellation, trials: u64, seed: u64) -> Self {
        Self {
            constellation,
            trials,
            seed,
            mode: SimulationMode::Auto,
        }
    }

    pub fn with_mode(mut self, mode: SimulationMode) -> Self {
        self.mode = mode;
        self
    }

    /// Mode after resolving [`SimulationMode::Auto`].
    pub fn effective_mode(&self) -> SimulationMode {
        match self.mode {
            SimulationMode::Auto if self.constellation.n() <= EXPOSURE_LEVEL_LIMIT => {
                SimulationMode::Exposures
            }
            SimulationMode::Auto => SimulationMode::ConditionalBinomial,
            m => m,
        }
    }

    /// Analytic counterpart of the simulated quantity.
    pub fn analytic_variance(&self) -> f64 {
        let m: DefaultRateMoments = var_dr_grid(&self.constellation);
        match self.effective_mode() {
            SimulationMode::ConditionalExpectation => m.systematic,
            _ => m.variance,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub variance: f64,
    pub standard_error: f64,
    pub mean: f64,
    pub trials: u64,
    pub mode: SimulationMode,
    pub warning: Option<String>,
}

impl SimulationResult {
    /// `(variance − analytic) / standard_error`; zero when both agree exactly.
    pub fn z_score(&self, analytic: f64) -> f64 {
        let d = self.variance - analytic;
        if d == 0.0 {
            0.0
        } else if self.standard_error > 0.0 {
            d / self.standard_error
        } else {
            f64::INFINITY.copysign(d)
        }
    }
}

// Uniform on the open interval (0, 1).
#[inline]
fn open_uniform(rng: &mut ChaCha8Rng) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

#[inline]
fn normal(rng: &mut ChaCha8Rng) -> f64 {
    phi_inv(open_uniform(rng))
}

struct Cell {
    c: f64,
    p: f64,
    sqrt_rho: f64,
    sqrt_one_minus: f64,
    count: u64,
}

impl Cell {
    fn conditional_pd(&self, z: f64) -> f64 {
        if self.p <= 0.0 {
            return 0.0;
        }
        if self.p >= 1.0 {
            return 1.0;
        }
        let num = self.c - self.sqrt_rho * z;
        if self.sqrt_one_minus == 0.0 {
            return if num > 0.0 { 1.0 } else { 0.0 };
        }
        phi(num / self.sqrt_one_minus)
    }
}

fn cells(c: &ExposureConstellation) -> Vec<Cell> {
    let th = c.thresholds();
    let mut out = Vec::new();
    for k in 0..c.k() {
        for l in 0..c.l() {
            let count = c.count(k, l);
            if count == 0 {
                continue;
            }
            let r = c.rho_values()[l];
            out.push(Cell {
                c: th[k],
                p: c.pd_values()[k],
                sqrt_rho: r.sqrt(),
                sqrt_one_minus: (1.0 - r).sqrt(),
                count,
            });
        }
    }
    out
}

fn trial(cells: &[Cell], n: f64, mode: SimulationMode, rng: &mut ChaCha8Rng) -> f64 {
    let z = normal(rng);
    match mode {
        SimulationMode::Exposures => {
            let mut defaults = 0u64;
            for cell in cells {
                for _ in 0..cell.count {
                    let y = cell.sqrt_rho * z + cell.sqrt_one_minus * normal(rng);
                    if y < cell.c {
                        defaults += 1;
                    }
                }
            }
            defaults as f64 / n
        }
        SimulationMode::ConditionalBinomial => {
            let mut defaults = 0u64;
            for cell in cells {
                let q = cell.conditional_pd(z);
                defaults += if q <= 0.0 {
                    0
                } else if q >= 1.0 {
                    cell.count
                } else {
                    Binomial::new(cell.count, q).expect("q in (0,1)").sample(rng)
                };
            }
            defaults as f64 / n
        }
        SimulationMode::ConditionalExpectation => {
            let mut acc = CompensatedSum::new();
            for cell in cells {
                acc += cell.count as f64 * cell.conditional_pd(z);
            }
            acc.value() / n
        }
        SimulationMode::Auto => unreachable!("resolved before simulation"),
    }
}

/// Sample variance of the simulated default rate and its standard error.
///
/// Trials are split into chunks of fixed size; chunk `j` draws from a
/// ChaCha8 stream `j` keyed by `seed`, so the result does not depend on the
/// number of worker threads.
pub fn simulate_variance(spec: &SimulationSpec) -> Result<SimulationResult> {
    if spec.trials < 2 {
        return Err(Error::Domain {
            name: "trials",
            value: spec.trials as f64,
            expected: ">= 2",
        });
    }
    let mode = spec.effective_mode();
    let cells = cells(&spec.constellation);
    let n = spec.constellation.n() as f64;
    let chunks = spec.trials.div_ceil(CHUNK);
    let samples: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|j| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(j);
            let len = CHUNK.min(spec.trials - j * CHUNK);
            (0..len).map(|_| trial(&cells, n, mode, &mut rng)).collect()
        })
        .collect();
    let t = spec.trials as f64;
    let mean = samples.iter().flatten().copied().collect::<CompensatedSum>().value() / t;
    let mut m2 = CompensatedSum::new();
    let mut m4 = CompensatedSum::new();
    for &x in samples.iter().flatten() {
        let d = (x - mean) * (x - mean);
        m2 += d;
        m4 += d * d;
    }
    let variance = m2.value() / (t - 1.0);
    let m4 = m4.value() / t;
    let se2 = (m4 - variance * variance * (t - 3.0) / (t - 1.0)) / t;
    let standard_error = se2.max(0.0).sqrt();
    let warning = if spec.trials < 1_000 {
        Some(format!("only {} trials; standard error is unreliable", spec.trials))
    } else if variance > 0.0 && standard_error > 0.1 * variance {
        Some(format!(
            "relative standard error {:.3} exceeds 10%",
            standard_error / variance
        ))
    } else {
        None
    };
    Ok(SimulationResult {
        variance,
        standard_error,
        mean,
        trials: spec.trials,
        mode,
        warning,
    })
}

/// Named entry of [`regression_battery`].
#[derive(Debug, Clone, PartialEq)]
pub struct BatteryEntry {
    pub name: &'static str,
    pub spec: SimulationSpec,
}

fn built(cfg: InputConfiguration, k: usize, l: usize) -> ExposureConstellation {
    let params = BuildParams {
        k,
        l,
        g: 100_000,
        ..Default::default()
    };
    build_constellation(&cfg, &params).expect("battery configuration is feasible")
}

fn cfg(n: u64, p: f64, sp: f64, rho: f64, sr: f64, tau: f64) -> InputConfiguration {
    InputConfiguration {
        n,
        p_mean: p,
        p_spread: Spread::normalized(sp),
        rho_mean: rho,
        rho_spread: sr,
        tau,
    }
}

/// Twelve fixed constellations covering homogeneous pools, PD-only and
/// correlation-only spreads, and joint grids with nonzero τ, in all three
/// simulation modes.
pub fn regression_battery(seed: u64) -> Vec<BatteryEntry> {
    use SimulationMode::*;
    let hom = |p, r, n| ExposureConstellation::homogeneous(p, r, n).expect("valid");
    let two_by_two = ExposureConstellation::new(
        vec![0.01, 0.08],
        vec![0.05, 0.3],
        vec![300_000_000, 200_000_000, 100_000_000, 400_000_000],
    )
    .expect("valid");
    let entries: Vec<(&'static str, ExposureConstellation, u64, SimulationMode)> = vec![
        ("homogeneous p=5% rho=0 n=200", hom(0.05, 0.0, 200), 100_000, Exposures),
        ("homogeneous p=5% rho=12% n=100", hom(0.05, 0.12, 100), 200_000, Exposures),
        ("homogeneous p=5% rho=12% n=1e6", hom(0.05, 0.12, 1_000_000), 100_000, ConditionalBinomial),
        ("homogeneous p=1% rho=24% n=1e9", hom(0.01, 0.24, 1_000_000_000), 1_000_000, ConditionalExpectation),
        ("pd spread K=8 n=120", built(cfg(120, 0.03, 0.2, 0.15, 0.0, 0.0), 8, 1), 200_000, Exposures),
        ("pd spread K=20 n=1e5", built(cfg(100_000, 0.02, 0.3, 0.12, 0.0, 0.0), 20, 1), 200_000, ConditionalBinomial),
        ("rho spread L=8 n=150", built(cfg(150, 0.04, 0.0, 0.2, 0.4, 0.0), 1, 8), 200_000, Exposures),
        ("rho spread L=20 n=1e9", built(cfg(1_000_000_000, 0.001, 0.0, 0.08, 0.8, 0.0), 1, 20), 1_000_000, ConditionalExpectation),
        ("grid 2x2 n=1e9", two_by_two, 1_000_000, ConditionalExpectation),
        ("grid 6x5 tau=-0.4 n=200", built(cfg(200, 0.05, 0.2, 0.15, 0.3, -0.4), 6, 5), 200_000, Exposures),
        ("grid 10x8 tau=0.4 n=1e5", built(cfg(100_000, 0.02, 0.2, 0.12, 0.3, 0.4), 10, 8), 200_000, ConditionalBinomial),
        ("grid 12x10 tau=-0.2 n=1e9", built(cfg(1_000_000_000, 0.05, 0.2, 0.2, 0.2, -0.2), 12, 10), 1_000_000, ConditionalExpectation),
    ];
    entries
        .into_iter()
        .enumerate()
        .map(|(i, (name, c, trials, mode))| BatteryEntry {
            name,
            spec: SimulationSpec {
                constellation: c,
                trials,
                seed: seed.wrapping_add(i as u64),
                mode,
            },
        })
        .collect()
}
