//! Univariate and bivariate standard normal distribution functions.
//!
//! `Φ` is evaluated through `erfc` and is accurate to a few ulps. `Φ⁻¹` uses
//! Wichura's AS 241 rational approximation followed by one Halley step.
//! `Φ₂` follows Genz's formulation of the Drezner–Wesolowsky method:
//! Gauss–Legendre quadrature of the `asin` representation for `|ρ| < 0.925`
//! and a series plus quadrature on the complementary integral above that.
//! Degenerate cases (`ρ = 0, ±1`, infinite limits) use closed forms.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::OnceLock;

use crate::error::{check_corr, check_finite, check_unit, Error, Result};
use crate::quadrature::gauss_legendre;

const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

/// A probability in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Probability(f64);

impl Probability {
    pub fn new(value: f64) -> Result<Self> {
        check_unit("probability", value).map(Self)
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }

    /// `√(p(1−p))`, the standard deviation of a default indicator.
    pub fn indicator_sd(self) -> f64 {
        (self.0 * (1.0 - self.0)).sqrt()
    }
}

impl From<Probability> for f64 {
    fn from(p: Probability) -> f64 {
        p.0
    }
}

/// A correlation coefficient in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct CorrelationCoefficient(f64);

impl CorrelationCoefficient {
    pub fn new(value: f64) -> Result<Self> {
        check_corr("correlation", value).map(Self)
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

impl From<CorrelationCoefficient> for f64 {
    fn from(r: CorrelationCoefficient) -> f64 {
        r.0
    }
}

/// Standard normal density.
#[inline]
pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / SQRT_2PI
}

/// `Φ(x)` without argument checks; `±∞` map to 1 and 0.
#[inline]
pub fn phi(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal CDF `Φ(x)`.
pub fn std_normal_cdf(x: f64) -> Result<f64> {
    check_finite("x", x).map(phi)
}

const A: [f64; 8] = [
    3.387_132_872_796_366_608,
    1.331_416_678_917_843_774_5e2,
    1.971_590_950_306_551_442_7e3,
    1.373_169_376_550_946_112_5e4,
    4.592_195_393_154_987_145_7e4,
    6.726_577_092_700_870_085_3e4,
    3.343_057_558_358_812_810_5e4,
    2.509_080_928_730_122_672_7e3,
];
const B: [f64; 8] = [
    1.0,
    4.231_333_070_160_091_125_2e1,
    6.871_870_074_920_579_083e2,
    5.394_196_021_424_751_107_7e3,
    2.121_379_430_158_659_586_7e4,
    3.930_789_580_009_271_061e4,
    2.872_908_573_572_194_267_4e4,
    5.226_495_278_852_854_561e3,
];
const C: [f64; 8] = [
    1.423_437_110_749_683_577_34,
    4.630_337_846_156_545_295_9,
    5.769_497_221_460_691_405_5,
    3.647_848_324_763_204_605_04,
    1.270_458_252_452_368_382_58,
    2.417_807_251_774_506_117_7e-1,
    2.272_384_498_926_918_458_33e-2,
    7.745_450_142_783_414_076_4e-4,
];
const D: [f64; 8] = [
    1.0,
    2.053_191_626_637_758_821_87,
    1.676_384_830_183_803_849_4,
    6.897_673_349_851_000_045_5e-1,
    1.481_039_764_274_800_745_9e-1,
    1.519_866_656_361_645_719_66e-2,
    5.475_938_084_995_344_946e-4,
    1.050_750_071_644_416_843_24e-9,
];
const E: [f64; 8] = [
    6.657_904_643_501_103_777_2,
    5.463_784_911_164_114_369_9,
    1.784_826_539_917_291_335_8,
    2.965_605_718_285_048_912_3e-1,
    2.653_218_952_657_612_309_3e-2,
    1.242_660_947_388_078_438_6e-3,
    2.711_555_568_743_487_578_15e-5,
    2.010_334_399_292_288_132_65e-7,
];
const F: [f64; 8] = [
    1.0,
    5.998_322_065_558_879_376_9e-1,
    1.369_298_809_227_358_053_1e-1,
    1.487_536_129_085_061_485_25e-2,
    7.868_691_311_456_132_591e-4,
    1.846_318_317_510_054_681_8e-5,
    1.421_511_758_316_445_888_7e-7,
    2.044_263_103_389_939_785_64e-15,
];

#[inline]
fn poly(coef: &[f64; 8], x: f64) -> f64 {
    coef.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// `Φ⁻¹(p)` for `p` strictly inside (0, 1), without argument checks.
pub fn phi_inv(p: f64) -> f64 {
    let q = p - 0.5;
    let mut x = if q.abs() <= 0.425 {
        let r = 0.180_625 - q * q;
        q * poly(&A, r) / poly(&B, r)
    } else {
        let r = if q < 0.0 { p } else { 1.0 - p };
        let r = (-r.ln()).sqrt();
        let v = if r <= 5.0 {
            let r = r - 1.6;
            poly(&C, r) / poly(&D, r)
        } else {
            let r = r - 5.0;
            poly(&E, r) / poly(&F, r)
        };
        if q < 0.0 {
            -v
        } else {
            v
        }
    };
    // Halley polish; the residual is formed on whichever tail keeps precision.
    if x.is_finite() && x.abs() < 37.0 {
        let e = if x <= 0.0 {
            phi(x) - p
        } else {
            (1.0 - p) - phi(-x)
        };
        let e = if x <= 0.0 { e } else { -e };
        let u = e * SQRT_2PI * (0.5 * x * x).exp();
        x -= u / (1.0 + 0.5 * x * u);
    }
    x
}

/// Standard normal quantile `Φ⁻¹(p)`.
///
/// `p ∈ {0, 1}` yields [`Error::Boundary`]: callers treat the infinite
/// thresholds as never-default / sure-default explicitly.
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    let p = check_unit("p", p)?;
    if p == 0.0 || p == 1.0 {
        return Err(Error::Boundary { name: "p", value: p });
    }
    Ok(phi_inv(p))
}

/// Default threshold `Φ⁻¹(p)` extended to the closed interval: `p = 0` gives
/// `-∞` (never defaults), `p = 1` gives `+∞` (always defaults).
#[inline]
pub fn default_threshold(p: f64) -> f64 {
    if p <= 0.0 {
        f64::NEG_INFINITY
    } else if p >= 1.0 {
        f64::INFINITY
    } else {
        phi_inv(p)
    }
}

/// Bivariate standard normal CDF `Φ₂(h, k; ρ) = P(X ≤ h, Y ≤ k)`.
///
/// `h` and `k` may be `±∞`.
pub fn bivariate_normal_cdf(h: f64, k: f64, rho: f64) -> Result<f64> {
    if h.is_nan() {
        return Err(Error::Domain { name: "h", value: h, expected: "not NaN" });
    }
    if k.is_nan() {
        return Err(Error::Domain { name: "k", value: k, expected: "not NaN" });
    }
    Ok(BivariateNormal::new(rho)?.cdf(h, k))
}

struct Rule {
    /// `1 ± x_i` abscissae mapped to (0, 2).
    x: Vec<f64>,
    w: Vec<f64>,
}

fn rule(points: usize) -> &'static Rule {
    static R6: OnceLock<Rule> = OnceLock::new();
    static R12: OnceLock<Rule> = OnceLock::new();
    static R20: OnceLock<Rule> = OnceLock::new();
    let cell = match points {
        6 => &R6,
        12 => &R12,
        _ => &R20,
    };
    cell.get_or_init(|| {
        let (nodes, weights) = gauss_legendre(points);
        Rule {
            x: nodes.iter().map(|t| 1.0 + t).collect(),
            w: weights,
        }
    })
}

#[derive(Debug, Clone)]
enum Kind {
    Independent,
    Comonotone,
    Countermonotone,
    /// `|ρ| < 0.925`: `sn_i = sin(asin(ρ)·x_i/2)` with scaled weights.
    Moderate {
        sn: Vec<f64>,
        inv_cos2: Vec<f64>,
        w: Vec<f64>,
    },
    Strong {
        rho: f64,
        x: &'static [f64],
        w: &'static [f64],
    },
}

/// `Φ₂(·, ·; ρ)` for one fixed `ρ`, with the `ρ`-dependent quadrature
/// constants precomputed. Use this when evaluating many `(h, k)` pairs at
/// the same correlation.
#[derive(Debug, Clone)]
pub struct BivariateNormal {
    rho: f64,
    kind: Kind,
}

impl BivariateNormal {
    pub fn new(rho: f64) -> Result<Self> {
        let rho = check_corr("rho", rho)?;
        let kind = if rho == 0.0 {
            Kind::Independent
        } else if rho == 1.0 {
            Kind::Comonotone
        } else if rho == -1.0 {
            Kind::Countermonotone
        } else {
            let points = if rho.abs() < 0.3 {
                6
            } else if rho.abs() < 0.75 {
                12
            } else {
                20
            };
            let r = rule(points);
            if rho.abs() < 0.925 {
                let half_asr = rho.asin() / 2.0;
                let scale = half_asr / (2.0 * PI);
                let sn: Vec<f64> = r.x.iter().map(|&x| (half_asr * x).sin()).collect();
                let inv_cos2 = sn.iter().map(|s| 1.0 / (1.0 - s * s)).collect();
                // each half of the symmetric rule reuses the same weights
                let w = r.w.iter().map(|w| w * scale).collect();
                Kind::Moderate { sn, inv_cos2, w }
            } else {
                Kind::Strong {
                    rho,
                    x: &r.x,
                    w: &r.w,
                }
            }
        };
        Ok(Self { rho, kind })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// `Φ₂(h, k; ρ)`.
    pub fn cdf(&self, h: f64, k: f64) -> f64 {
        let (h, k) = if h <= k { (h, k) } else { (k, h) };
        if h == f64::NEG_INFINITY || k == f64::NEG_INFINITY {
            return 0.0;
        }
        if h == f64::INFINITY {
            return phi(k);
        }
        if k == f64::INFINITY {
            return phi(h);
        }
        match &self.kind {
            Kind::Independent => phi(h) * phi(k),
            Kind::Comonotone => phi(h.min(k)),
            Kind::Countermonotone => (phi(h) - phi(-k)).max(0.0),
            Kind::Moderate { .. } => {
                let (ph, pk) = (phi(h), phi(k));
                frechet_clamp(ph * pk + self.moderate_excess(h, k), ph, pk)
            }
            Kind::Strong { rho, x, w } => {
                frechet_clamp(upper_orthant_strong(-h, -k, *rho, x, w), phi(h), phi(k))
            }
        }
    }

    /// `Φ₂(h, k; ρ) − Φ(h)Φ(k)`, the covariance of the two threshold
    /// indicators. For moderate `ρ` this is evaluated directly, avoiding the
    /// cancellation of forming `Φ₂` first.
    pub fn excess(&self, h: f64, k: f64) -> f64 {
        let (h, k) = if h <= k { (h, k) } else { (k, h) };
        if h.is_infinite() || k.is_infinite() {
            return 0.0;
        }
        match &self.kind {
            Kind::Independent => 0.0,
            Kind::Moderate { .. } => self.moderate_excess(h, k),
            _ => self.cdf(h, k) - phi(h) * phi(k),
        }
    }

    #[inline]
    fn moderate_excess(&self, h: f64, k: f64) -> f64 {
        let Kind::Moderate { sn, inv_cos2, w } = &self.kind else {
            unreachable!()
        };
        let hk = h * k;
        let hs = 0.5 * (h * h + k * k);
        let n = w.len();
        let mut acc = 0.0;
        for i in 0..n {
            let a = (sn[i] * hk - hs) * inv_cos2[i];
            acc += w[i] * a.exp();
        }
        acc
    }
}

// Keeps rounding from pushing a joint probability outside its marginal bounds.
#[inline]
fn frechet_clamp(v: f64, ph: f64, pk: f64) -> f64 {
    v.min(ph.min(pk)).max((ph + pk - 1.0).max(0.0))
}

/// Genz's complementary formulation for `|ρ| ≥ 0.925`, returning
/// `P(X > h, Y > k)`.
fn upper_orthant_strong(h: f64, k: f64, r: f64, x: &[f64], w: &[f64]) -> f64 {
    let two_pi = 2.0 * PI;
    let (mut k, mut hk) = (k, h * k);
    if r < 0.0 {
        k = -k;
        hk = -hk;
    }
    let mut bvn = 0.0;
    let as_ = (1.0 - r) * (1.0 + r);
    let mut a = as_.sqrt();
    let bs = (h - k) * (h - k);
    let c = (4.0 - hk) / 8.0;
    let d = (12.0 - hk) / 80.0;
    let asr = -(bs / as_ + hk) / 2.0;
    if asr > -100.0 {
        bvn = a * asr.exp() * (1.0 - c * (bs - as_) * (1.0 - d * bs) / 3.0 + c * d * as_ * as_);
    }
    if hk > -100.0 {
        let b = bs.sqrt();
        let sp = SQRT_2PI * phi(-b / a);
        bvn -= (-hk / 2.0).exp() * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0);
    }
    a /= 2.0;
    let mut acc = 0.0;
    for (xi, wi) in x.iter().zip(w) {
        let xs = (a * xi) * (a * xi);
        let asr = -(bs / xs + hk) / 2.0;
        if asr > -100.0 {
            let sp = 1.0 + c * xs * (1.0 + 5.0 * d * xs);
            let rs = (1.0 - xs).sqrt();
            let ep = (-(hk / 2.0) * xs / ((1.0 + rs) * (1.0 + rs))).exp() / rs;
            acc += asr.exp() * (sp - ep) * wi;
        }
    }
    bvn = (a * acc - bvn) / two_pi;
    if r > 0.0 {
        bvn + phi(-h.max(k))
    } else if h >= k {
        -bvn
    } else {
        let l = if h < 0.0 {
            phi(k) - phi(h)
        } else {
            phi(-h) - phi(-k)
        };
        l - bvn
    }
}
