//! Moment-level pool descriptions, their discretization into exposure
//! constellations, and the reverse diagnosis.

use std::fmt::Write as _;

use crate::error::{check_corr, check_unit, Error, Result};
use crate::gaussian::{phi, phi_inv, BivariateNormal};
use crate::root::{solve_increasing, Tolerance};
use crate::special::{incomplete_beta, incomplete_beta_complement};
use crate::summation::CompensatedSum;

pub use crate::poolvar::ExposureConstellation;

/// Normalization of a PD spread.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpreadConvention {
    /// `s = σ / √(m(1−m))`.
    Normalized,
    /// `c_v = σ / m`.
    CoefficientOfVariation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spread {
    pub value: f64,
    pub convention: SpreadConvention,
}

impl Spread {
    pub fn normalized(s: f64) -> Self {
        Self {
            value: s,
            convention: SpreadConvention::Normalized,
        }
    }

    pub fn coefficient_of_variation(cv: f64) -> Self {
        Self {
            value: cv,
            convention: SpreadConvention::CoefficientOfVariation,
        }
    }

    pub fn sigma(&self, mean: f64) -> f64 {
        match self.convention {
            SpreadConvention::Normalized => self.value * (mean * (1.0 - mean)).sqrt(),
            SpreadConvention::CoefficientOfVariation => self.value * mean,
        }
    }

    /// The equivalent normalized spread `s`.
    pub fn normalized_value(&self, mean: f64) -> f64 {
        match self.convention {
            SpreadConvention::Normalized => self.value,
            SpreadConvention::CoefficientOfVariation => {
                let max = (mean * (1.0 - mean)).sqrt();
                if max > 0.0 {
                    self.sigma(mean) / max
                } else {
                    0.0
                }
            }
        }
    }
}

/// Moment summary `{n, p̄, σ(p), ρ̄ᴬ, σ(ρᴬ), τ}` of a pool.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputConfiguration {
    pub n: u64,
    pub p_mean: f64,
    pub p_spread: Spread,
    pub rho_mean: f64,
    /// Normalized spread `s(ρᴬ)`.
    pub rho_spread: f64,
    /// Exposure-weighted Pearson correlation between PD and asset correlation.
    pub tau: f64,
}

impl InputConfiguration {
    pub fn homogeneous(n: u64, p: f64, rho: f64) -> Self {
        Self {
            n,
            p_mean: p,
            p_spread: Spread::normalized(0.0),
            rho_mean: rho,
            rho_spread: 0.0,
            tau: 0.0,
        }
    }

    pub fn p_sigma(&self) -> f64 {
        self.p_spread.sigma(self.p_mean)
    }

    pub fn rho_sigma(&self) -> f64 {
        self.rho_spread * (self.rho_mean * (1.0 - self.rho_mean)).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Domain {
                name: "n",
                value: 0.0,
                expected: ">= 1",
            });
        }
        check_unit("p_mean", self.p_mean)?;
        check_unit("rho_mean", self.rho_mean)?;
        check_corr("tau", self.tau)?;
        if !(self.p_spread.value >= 0.0) {
            return Err(Error::Domain {
                name: "p_spread",
                value: self.p_spread.value,
                expected: ">= 0",
            });
        }
        let s = self.p_spread.normalized_value(self.p_mean);
        if s > 1.0 + 1e-12 {
            return Err(Error::Infeasible(format!(
                "PD spread s(p) = {s} exceeds 1 for mean {}",
                self.p_mean
            )));
        }
        if !(0.0..=1.0).contains(&self.rho_spread) {
            return Err(Error::Infeasible(format!(
                "correlation spread s(rho) = {} outside [0, 1]",
                self.rho_spread
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CentralAnchor {
    Mean,
    Median,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarginalFamily {
    Beta,
    TwoPoint,
    LognormalClipped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Allocation {
    /// Exposures placed at the quantile midpoints `(i + ½)/n` of the joint
    /// cell distribution, cells in row-major order.
    Systematic,
    /// Hamilton apportionment, see [`allocate_counts`].
    LargestRemainder,
    /// Systematic placement, reworked by [`refine_counts`] when the mean of a
    /// small pool drifts too far.
    Refined,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildParams {
    pub k: usize,
    pub l: usize,
    /// Resolution of the cell-edge search: edges are located to within
    /// `1/g` of their target cumulative position.
    pub g: u64,
    pub p_mid: CentralAnchor,
    pub pd_family: MarginalFamily,
    pub rho_family: MarginalFamily,
    pub allocation: Allocation,
}

impl Default for BuildParams {
    fn default() -> Self {
        Self {
            k: 200,
            l: 100,
            g: 1_000_000,
            p_mid: CentralAnchor::Median,
            pd_family: MarginalFamily::Beta,
            rho_family: MarginalFamily::Beta,
            allocation: Allocation::Refined,
        }
    }
}

impl BuildParams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.l == 0 {
            return Err(Error::Domain {
                name: "K, L",
                value: self.k.min(self.l) as f64,
                expected: ">= 1",
            });
        }
        if (self.g as usize) < self.k.max(self.l) {
            return Err(Error::Domain {
                name: "g",
                value: self.g as f64,
                expected: ">= max(K, L)",
            });
        }
        Ok(())
    }
}

/// Discrete marginal: strictly increasing `values` with positive `weights`
/// summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginal {
    pub values: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Marginal {
    fn atom(v: f64) -> Self {
        Self {
            values: vec![v],
            weights: vec![1.0],
        }
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().zip(&self.weights).map(|(v, w)| v * w).collect::<CompensatedSum>().value()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.values
            .iter()
            .zip(&self.weights)
            .map(|(v, w)| w * (v - m) * (v - m))
            .collect::<CompensatedSum>()
            .value()
    }

    /// Sort, merge equal values and drop empty cells.
    fn normalize(mut cells: Vec<(f64, f64)>) -> Self {
        cells.retain(|c| c.1 > 0.0);
        cells.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut values: Vec<f64> = Vec::with_capacity(cells.len());
        let mut weights: Vec<f64> = Vec::with_capacity(cells.len());
        for (v, w) in cells {
            if values.last() == Some(&v) {
                *weights.last_mut().expect("nonempty") += w;
            } else {
                values.push(v);
                weights.push(w);
            }
        }
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        Self { values, weights }
    }
}

/// Discretize a distribution on `support` with the given mean and
/// normalized spread `s = σ/√((m−lo)(hi−m))` into at most `buckets` cells.
///
/// `s = 0` gives a single atom at the mean and `s = 1` the two support
/// endpoints with weights matching the mean. Uses `g = 10⁶` for the edge
/// resolution; see [`discretize_marginal_with`].
pub fn discretize_marginal(
    mean: f64,
    spread_s: f64,
    buckets: usize,
    family: MarginalFamily,
    support: (f64, f64),
) -> Result<Marginal> {
    discretize_marginal_with(mean, spread_s, buckets, family, support, 1_000_000)
}

pub fn discretize_marginal_with(
    mean: f64,
    spread_s: f64,
    buckets: usize,
    family: MarginalFamily,
    support: (f64, f64),
    g: u64,
) -> Result<Marginal> {
    let (lo, hi) = support;
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Domain {
            name: "support",
            value: hi - lo,
            expected: "finite interval with lo < hi",
        });
    }
    if buckets == 0 {
        return Err(Error::Domain {
            name: "buckets",
            value: 0.0,
            expected: ">= 1",
        });
    }
    if !(mean >= lo && mean <= hi) {
        return Err(Error::Infeasible(format!("mean {mean} outside support [{lo}, {hi}]")));
    }
    if !(0.0..=1.0 + 1e-12).contains(&spread_s) {
        return Err(Error::Infeasible(format!("normalized spread {spread_s} outside [0, 1]")));
    }
    let width = hi - lo;
    let m = (mean - lo) / width;
    let s = spread_s.min(1.0);
    let to_support = |u: f64| lo + width * u;
    if s == 0.0 || m == 0.0 || m == 1.0 {
        if s > 0.0 {
            return Err(Error::Infeasible(format!(
                "mean {mean} on the support boundary admits no spread"
            )));
        }
        return Ok(Marginal::atom(mean));
    }
    if s == 1.0 {
        return Ok(Marginal::normalize(vec![(lo, 1.0 - m), (hi, m)]));
    }
    let unit = match family {
        MarginalFamily::Beta => beta_cells(m, s, buckets, g),
        MarginalFamily::TwoPoint => two_point_cells(m, s),
        MarginalFamily::LognormalClipped => lognormal_cells(m, s, buckets)?,
    };
    let cells = unit.into_iter().map(|(v, w)| (to_support(v).clamp(lo, hi), w)).collect();
    Ok(Marginal::normalize(cells))
}

/// Beta shape parameters with mean `m` and normalized spread `s` on [0, 1].
pub fn beta_parameters(m: f64, s: f64) -> (f64, f64) {
    let nu = 1.0 / (s * s) - 1.0;
    (m * nu, (1.0 - m) * nu)
}

/// A point in (0, 1) carried with its complement.
#[derive(Debug, Clone, Copy)]
struct Edge {
    x: f64,
    xc: f64,
}

impl Edge {
    const ZERO: Edge = Edge { x: 0.0, xc: 1.0 };
    const ONE: Edge = Edge { x: 1.0, xc: 0.0 };

    /// Two-sided exponential map of `t ∈ ℝ` onto (0, 1).
    fn from_t(t: f64) -> Self {
        if t <= 0.0 {
            let x = 0.5 * t.exp();
            Edge { x, xc: 1.0 - x }
        } else {
            let xc = 0.5 * (-t).exp();
            Edge { x: 1.0 - xc, xc }
        }
    }
}

struct BetaDist {
    a: f64,
    b: f64,
    m: f64,
}

impl BetaDist {
    fn cdf(&self, e: Edge) -> f64 {
        incomplete_beta(self.a, self.b, e.x, e.xc)
    }
    fn sf(&self, e: Edge) -> f64 {
        incomplete_beta_complement(self.a, self.b, e.x, e.xc)
    }
    /// `∫₀ˣ u f(u) du / m`.
    fn cdf1(&self, e: Edge) -> f64 {
        incomplete_beta(self.a + 1.0, self.b, e.x, e.xc)
    }
    fn sf1(&self, e: Edge) -> f64 {
        incomplete_beta_complement(self.a + 1.0, self.b, e.x, e.xc)
    }
}

/// Cells with edges equally spaced in the measure `(F(x) + V(x) + x)/3`,
/// where `V` is the share of variance below `x`; values are exact
/// conditional means.
fn beta_cells(m: f64, s: f64, buckets: usize, g: u64) -> Vec<(f64, f64)> {
    let (a, b) = beta_parameters(m, s);
    let dist = BetaDist { a, b, m };
    let sigma2 = s * s * m * (1.0 - m);
    let second = m * (a + 1.0) / (a + b + 1.0);
    let mixed = |e: Edge| {
        let (f, v) = if e.x <= m {
            let f = dist.cdf(e);
            let e1 = m * dist.cdf1(e);
            let e2 = second * incomplete_beta(a + 2.0, b, e.x, e.xc);
            (f, (e2 - 2.0 * m * e1 + m * m * f) / sigma2)
        } else {
            let sf = dist.sf(e);
            let e1 = m * dist.sf1(e);
            let e2 = second * incomplete_beta_complement(a + 2.0, b, e.x, e.xc);
            (1.0 - sf, 1.0 - (e2 - 2.0 * m * e1 + m * m * sf) / sigma2)
        };
        (f + v.clamp(0.0, 1.0) + e.x) / 3.0
    };
    let resolution = 1.0 / g as f64;
    let mut edges = Vec::with_capacity(buckets + 1);
    edges.push(Edge::ZERO);
    let (mut t_floor, t_top) = (-760.0, 760.0);
    for j in 1..buckets {
        let target = j as f64 / buckets as f64;
        let (mut t_lo, mut t_hi) = (t_floor, t_top);
        for _ in 0..200 {
            let t_mid = 0.5 * (t_lo + t_hi);
            if mixed(Edge::from_t(t_mid)) < target {
                t_lo = t_mid;
            } else {
                t_hi = t_mid;
            }
            let span = mixed(Edge::from_t(t_hi)) - mixed(Edge::from_t(t_lo));
            if span <= resolution || t_hi - t_lo <= 1e-13 * t_hi.abs().max(1.0) {
                break;
            }
        }
        let t = 0.5 * (t_lo + t_hi);
        t_floor = t;
        edges.push(Edge::from_t(t));
    }
    edges.push(Edge::ONE);

    let mut cells = Vec::with_capacity(buckets);
    for w in edges.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let (prob, first) = if lo.x >= m {
            (dist.sf(lo) - dist.sf(hi), dist.sf1(lo) - dist.sf1(hi))
        } else {
            (dist.cdf(hi) - dist.cdf(lo), dist.cdf1(hi) - dist.cdf1(lo))
        };
        if prob > 0.0 {
            let v = (dist.m * first / prob).clamp(lo.x, hi.x);
            cells.push((v, prob));
        }
    }
    cells
}

/// Atoms `m(1−s)` and `m + s(1−m)` with weights `1−m` and `m`.
fn two_point_cells(m: f64, s: f64) -> Vec<(f64, f64)> {
    vec![(m * (1.0 - s), 1.0 - m), (m + s * (1.0 - m), m)]
}

/// Lognormal moment-matched on the unbounded scale, equiprobable quantile
/// cells, mass above 1 moved to 1.
fn lognormal_cells(m: f64, s: f64, buckets: usize) -> Result<Vec<(f64, f64)>> {
    let sigma = s * (m * (1.0 - m)).sqrt();
    let v = (1.0 + sigma * sigma / (m * m)).ln();
    let sd = v.sqrt();
    let mu = m.ln() - 0.5 * v;
    // P(X ≤ x) and E[X; X ≤ x] through the standardized log
    let z_of = |x: f64| (x.ln() - mu) / sd;
    let z_one = z_of(1.0);
    let mut cells = Vec::with_capacity(buckets + 1);
    let mut prev_p = 0.0;
    let mut prev_z = f64::NEG_INFINITY;
    let kk = buckets as f64;
    for j in 1..=buckets {
        let p = j as f64 / kk;
        let mut z = if j == buckets { f64::INFINITY } else { phi_inv(p) };
        let mut p_hi = p;
        let clipped = z >= z_one;
        if clipped {
            z = z_one;
            p_hi = phi(z_one);
        }
        let w = p_hi - prev_p;
        if w > 0.0 {
            let first = m * (phi(z - sd) - if prev_z.is_finite() { phi(prev_z - sd) } else { 0.0 });
            cells.push(((first / w).min(1.0), w));
        }
        prev_p = p_hi;
        prev_z = z;
        if clipped {
            cells.push((1.0, 1.0 - p_hi));
            break;
        }
    }
    if cells.is_empty() {
        return Err(Error::Infeasible("lognormal discretization produced no cells".into()));
    }
    Ok(cells)
}

/// Joint cell probabilities of two discrete marginals coupled by a Gaussian
/// copula with parameter `theta`, row-major over `(pd, rho)`.
pub fn joint_weights(pd: &Marginal, rho: &Marginal, theta: f64) -> Result<Vec<f64>> {
    let theta = check_corr("theta", theta)?;
    let (kk, ll) = (pd.values.len(), rho.values.len());
    if theta == 0.0 || kk == 1 || ll == 1 {
        let mut w = Vec::with_capacity(kk * ll);
        for wp in &pd.weights {
            for wr in &rho.weights {
                w.push(wp * wr);
            }
        }
        return Ok(w);
    }
    let a = normal_edges(&pd.weights);
    let b = normal_edges(&rho.weights);
    let bvn = BivariateNormal::new(theta)?;
    // F[i][j] = Φ₂(a_i, b_j, θ) over the (K+1)×(L+1) edge lattice
    let mut f = vec![0.0; (kk + 1) * (ll + 1)];
    for i in 0..=kk {
        for j in 0..=ll {
            f[i * (ll + 1) + j] = bvn.cdf(a[i], b[j]);
        }
    }
    let mut w = Vec::with_capacity(kk * ll);
    for i in 0..kk {
        for j in 0..ll {
            let at = |ii: usize, jj: usize| f[ii * (ll + 1) + jj];
            let v = at(i + 1, j + 1) - at(i, j + 1) - at(i + 1, j) + at(i, j);
            w.push(v.max(0.0));
        }
    }
    let total: f64 = w.iter().sum();
    for x in &mut w {
        *x /= total;
    }
    Ok(w)
}

/// Normal quantiles of the cumulative weights, computed from whichever tail
/// is smaller.
fn normal_edges(weights: &[f64]) -> Vec<f64> {
    let n = weights.len();
    let mut below = vec![0.0; n + 1];
    let mut acc = CompensatedSum::new();
    for (i, w) in weights.iter().enumerate() {
        acc += *w;
        below[i + 1] = acc.value();
    }
    let mut above = vec![0.0; n + 1];
    let mut acc = CompensatedSum::new();
    for i in (0..n).rev() {
        acc += weights[i];
        above[i] = acc.value();
    }
    (0..=n)
        .map(|i| {
            if i == 0 {
                f64::NEG_INFINITY
            } else if i == n {
                f64::INFINITY
            } else if below[i] <= 0.5 {
                phi_inv(below[i])
            } else {
                -phi_inv(above[i])
            }
        })
        .collect()
}

/// Exposure-weighted Pearson correlation of cell coordinates.
fn weighted_pearson(pd: &[f64], rho: &[f64], w: &[f64]) -> f64 {
    let ll = rho.len();
    let (mut mp, mut mr) = (CompensatedSum::new(), CompensatedSum::new());
    for (i, p) in pd.iter().enumerate() {
        for (j, r) in rho.iter().enumerate() {
            let x = w[i * ll + j];
            mp += x * p;
            mr += x * r;
        }
    }
    let (mp, mr) = (mp.value(), mr.value());
    let (mut cov, mut vp, mut vr) = (CompensatedSum::new(), CompensatedSum::new(), CompensatedSum::new());
    for (i, p) in pd.iter().enumerate() {
        for (j, r) in rho.iter().enumerate() {
            let x = w[i * ll + j];
            cov += x * (p - mp) * (r - mr);
            vp += x * (p - mp) * (p - mp);
            vr += x * (r - mr) * (r - mr);
        }
    }
    let denom = (vp.value() * vr.value()).sqrt();
    if denom > 0.0 {
        (cov.value() / denom).clamp(-1.0, 1.0)
    } else {
        0.0
    }
}

/// Copula parameter whose joint weights have Pearson correlation `tau`.
pub fn calibrate_copula(pd: &Marginal, rho: &Marginal, tau: f64) -> Result<f64> {
    let tau = check_corr("tau", tau)?;
    if tau == 0.0 || pd.values.len() == 1 || rho.values.len() == 1 {
        if tau != 0.0 {
            return Err(Error::Infeasible(format!(
                "tau = {tau} requested but one marginal is a single atom"
            )));
        }
        return Ok(0.0);
    }
    let pearson = |theta: f64| {
        let w = joint_weights(pd, rho, theta).expect("theta in [-1, 1]");
        weighted_pearson(&pd.values, &rho.values, &w)
    };
    let tol = Tolerance {
        x_abs: 1e-12,
        f_rel: 1e-9,
        f_floor: 1e-9,
        max_iter: 200,
    };
    match solve_increasing(pearson, tau, -1.0, 1.0, tol) {
        Ok(r) => Ok(r.x),
        Err(Error::OutOfRange { lower, upper, .. }) => Err(Error::Infeasible(format!(
            "tau = {tau} outside the attainable range [{lower:.6}, {upper:.6}] for these marginals"
        ))),
        Err(e) => Err(e),
    }
}

/// Integer apportionment of `n` by largest remainder.
///
/// Each cell receives `⌊n·w⌋`; the leftover units go to the largest
/// fractional parts, ties resolved toward the later cell in row-major order.
pub fn allocate_counts(weights: &[f64], n: u64) -> Result<Vec<u64>> {
    check_weights(weights)?;
    let total: f64 = weights.iter().sum();
    let nf = n as f64;
    let mut counts = Vec::with_capacity(weights.len());
    let mut rema: Vec<(f64, usize)> = Vec::with_capacity(weights.len());
    let mut assigned: u64 = 0;
    for (i, w) in weights.iter().enumerate() {
        let q = nf * (w / total);
        let fl = q.floor();
        counts.push(fl as u64);
        assigned += fl as u64;
        rema.push((q - fl, i));
    }
    let mut left = n.saturating_sub(assigned) as usize;
    rema.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.cmp(&a.1)));
    for &(_, i) in rema.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    Ok(counts)
}

/// Quantile-midpoint allocation: the `i`-th of `n` exposures goes to the
/// cell whose cumulative weight interval contains `(i + ½)/n`.
pub fn allocate_systematic(weights: &[f64], n: u64) -> Result<Vec<u64>> {
    check_weights(weights)?;
    let total: f64 = weights.iter().sum();
    let nf = n as f64;
    let mut acc = CompensatedSum::new();
    let mut prev: u64 = 0;
    let mut counts = Vec::with_capacity(weights.len());
    for (i, w) in weights.iter().enumerate() {
        acc += *w;
        let upto = if i + 1 == weights.len() {
            n
        } else {
            ((nf * (acc.value() / total) + 0.5).floor() as u64).min(n)
        };
        let upto = upto.max(prev);
        counts.push(upto - prev);
        prev = upto;
    }
    Ok(counts)
}

/// Relative drift of the PD or correlation mean above which
/// [`refine_counts`] reworks an allocation.
pub const REFINE_TRIGGER: f64 = 0.2;

const REFINE_MAX_MOVES: usize = 100_000;

// Count-weighted sums of a constellation, centered on the target means.
#[derive(Clone, Copy)]
struct MomentSums {
    x: f64,
    xx: f64,
    y: f64,
    yy: f64,
    xy: f64,
}

struct MomentTarget {
    n: f64,
    p_mean: f64,
    p_sigma: f64,
    rho_mean: f64,
    rho_sigma: f64,
    tau: Option<f64>,
}

impl MomentTarget {
    // Relative errors of (p̄, σ(p), ρ̄, σ(ρ)) and the absolute error of τ.
    fn errors(&self, s: &MomentSums) -> [f64; 5] {
        let mx = s.x / self.n;
        let my = s.y / self.n;
        let vx = (s.xx / self.n - mx * mx).max(0.0);
        let vy = (s.yy / self.n - my * my).max(0.0);
        let rel = |d: f64, scale: f64| if scale > 0.0 { d / scale } else { d };
        let tau = match self.tau {
            Some(t) if vx > 0.0 && vy > 0.0 => (s.xy / self.n - mx * my) / (vx * vy).sqrt() - t,
            Some(t) => t,
            None => 0.0,
        };
        [
            rel(mx, self.p_mean),
            rel(vx.sqrt() - self.p_sigma, self.p_sigma),
            rel(my, self.rho_mean),
            rel(vy.sqrt() - self.rho_sigma, self.rho_sigma),
            tau,
        ]
    }

    fn mean_drift(&self, s: &MomentSums) -> f64 {
        let e = self.errors(s);
        e[0].abs().max(e[2].abs())
    }

    fn mean_objective(&self, s: &MomentSums) -> f64 {
        let e = self.errors(s);
        e[0] * e[0] + e[2] * e[2]
    }

    fn objective(&self, s: &MomentSums) -> f64 {
        self.errors(s).iter().map(|e| e * e).sum()
    }
}

/// Drift correction for small pools.
///
/// When the exposure-weighted PD or correlation mean of `counts` is off its
/// target by more than [`REFINE_TRIGGER`] (relative), single exposures are
/// moved between cells, best move first. Moves that bring both means inside
/// the trigger win; among those, and afterwards, the summed squared errors
/// of both means, both spreads and τ decide, and the means never leave the
/// trigger again. Allocations within the trigger are left
/// untouched.
pub fn refine_counts(counts: &mut [u64], pd: &[f64], rho: &[f64], cfg: &InputConfiguration) {
    let ll = rho.len();
    debug_assert_eq!(counts.len(), pd.len() * ll);
    let target = MomentTarget {
        n: counts.iter().sum::<u64>() as f64,
        p_mean: cfg.p_mean,
        p_sigma: if pd.len() > 1 { cfg.p_sigma() } else { 0.0 },
        rho_mean: cfg.rho_mean,
        rho_sigma: if ll > 1 { cfg.rho_sigma() } else { 0.0 },
        tau: (pd.len() > 1 && ll > 1).then_some(cfg.tau),
    };
    let cell = |i: usize| (pd[i / ll] - cfg.p_mean, rho[i % ll] - cfg.rho_mean);
    let mut sums = MomentSums {
        x: 0.0,
        xx: 0.0,
        y: 0.0,
        yy: 0.0,
        xy: 0.0,
    };
    for (i, &c) in counts.iter().enumerate() {
        let (x, y) = cell(i);
        let c = c as f64;
        sums.x += c * x;
        sums.xx += c * x * x;
        sums.y += c * y;
        sums.yy += c * y * y;
        sums.xy += c * x * y;
    }
    if !(target.mean_drift(&sums) > REFINE_TRIGGER) {
        return;
    }
    // States inside the drift envelope rank ahead of those outside; inside
    // by the full objective, outside by the mean errors alone.
    let key = |s: &MomentSums| {
        if target.mean_drift(s) <= REFINE_TRIGGER {
            (0u8, target.objective(s))
        } else {
            (1u8, target.mean_objective(s))
        }
    };
    let better = |a: (u8, f64), b: (u8, f64)| a.0 < b.0 || (a.0 == b.0 && a.1 < b.1 * (1.0 - 1e-12));
    for _ in 0..REFINE_MAX_MOVES {
        let current = key(&sums);
        let mut best: Option<((u8, f64), usize, usize, MomentSums)> = None;
        for from in (0..counts.len()).filter(|&i| counts[i] > 0) {
            let (fx, fy) = cell(from);
            for to in (0..counts.len()).filter(|&i| i != from) {
                let (tx, ty) = cell(to);
                let s = MomentSums {
                    x: sums.x - fx + tx,
                    xx: sums.xx - fx * fx + tx * tx,
                    y: sums.y - fy + ty,
                    yy: sums.yy - fy * fy + ty * ty,
                    xy: sums.xy - fx * fy + tx * ty,
                };
                let k = key(&s);
                if better(k, best.map_or(current, |b| b.0)) {
                    best = Some((k, from, to, s));
                }
            }
        }
        let Some((_, from, to, s)) = best else { return };
        counts[from] -= 1;
        counts[to] += 1;
        sums = s;
    }
}

fn check_weights(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::Domain {
            name: "weights",
            value: 0.0,
            expected: "at least one cell",
        });
    }
    for &w in weights {
        if !(w >= 0.0 && w.is_finite()) {
            return Err(Error::Domain {
                name: "weight",
                value: w,
                expected: "finite and >= 0",
            });
        }
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Domain {
            name: "sum(weights)",
            value: total,
            expected: "> 0",
        });
    }
    Ok(())
}

/// Constellation realizing `cfg` on a `K×L` grid.
pub fn build_constellation(cfg: &InputConfiguration, params: &BuildParams) -> Result<ExposureConstellation> {
    cfg.validate()?;
    params.validate()?;
    let s_p = cfg.p_spread.normalized_value(cfg.p_mean).min(1.0);
    let pd = discretize_marginal_with(cfg.p_mean, s_p, params.k, params.pd_family, (0.0, 1.0), params.g)?;
    let rho = discretize_marginal_with(
        cfg.rho_mean,
        cfg.rho_spread,
        params.l,
        params.rho_family,
        (0.0, 1.0),
        params.g,
    )?;
    let theta = calibrate_copula(&pd, &rho, cfg.tau)?;
    let w = joint_weights(&pd, &rho, theta)?;
    let counts = match params.allocation {
        Allocation::Systematic => allocate_systematic(&w, cfg.n)?,
        Allocation::LargestRemainder => allocate_counts(&w, cfg.n)?,
        Allocation::Refined => {
            let mut counts = allocate_systematic(&w, cfg.n)?;
            refine_counts(&mut counts, &pd.values, &rho.values, cfg);
            counts
        }
    };
    let ll = rho.values.len();
    let cells = counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(i, &c)| (pd.values[i / ll], rho.values[i % ll], c));
    ExposureConstellation::from_cells(cells)
}

/// Achieved moments of a constellation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnosis {
    /// Achieved configuration; spreads in the normalized convention.
    pub achieved: InputConfiguration,
    pub p_sigma: f64,
    pub rho_sigma: f64,
    pub p_median: f64,
    pub k_effective: usize,
    pub l_effective: usize,
}

/// Relative deviation of each achieved moment from its target (absolute
/// when the target is zero).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentErrors {
    pub p_mean: f64,
    pub p_sigma: f64,
    pub rho_mean: f64,
    pub rho_sigma: f64,
    pub tau: f64,
}

impl MomentErrors {
    pub fn max(&self) -> f64 {
        [self.p_mean, self.p_sigma, self.rho_mean, self.rho_sigma, self.tau]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

/// Outcome of checking a constellation against its input configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Check {
    pub diagnosis: Diagnosis,
    pub errors: MomentErrors,
    /// Reported central PD (mean or median per [`BuildParams::p_mid`]).
    pub anchor: f64,
    pub pass: bool,
}

pub const DIAGNOSIS_TOLERANCE: f64 = 0.01;

pub fn diagnose(c: &ExposureConstellation) -> Diagnosis {
    let w = c.weights();
    let (kk, ll) = (c.k(), c.l());
    let p_mean = c.mean_pd();
    let rho_mean = c.mean_rho();
    let mut vp = CompensatedSum::new();
    let mut vr = CompensatedSum::new();
    let mut row_w = vec![0.0; kk];
    for k in 0..kk {
        for l in 0..ll {
            let x = w[k * ll + l];
            row_w[k] += x;
            vp += x * (c.pd_values()[k] - p_mean).powi(2);
            vr += x * (c.rho_values()[l] - rho_mean).powi(2);
        }
    }
    let p_sigma = vp.value().max(0.0).sqrt();
    let rho_sigma = vr.value().max(0.0).sqrt();
    let tau = weighted_pearson(c.pd_values(), c.rho_values(), &w);
    let mut cum = 0.0;
    let mut p_median = c.pd_values()[kk - 1];
    for k in 0..kk {
        cum += row_w[k];
        if cum >= 0.5 {
            p_median = c.pd_values()[k];
            break;
        }
    }
    let norm = |sigma: f64, m: f64| {
        let max = (m * (1.0 - m)).sqrt();
        if max > 0.0 {
            sigma / max
        } else {
            0.0
        }
    };
    let k_effective = row_w.iter().filter(|&&x| x > 0.0).count();
    let l_effective = (0..ll).filter(|&l| (0..kk).any(|k| c.count(k, l) > 0)).count();
    Diagnosis {
        achieved: InputConfiguration {
            n: c.n(),
            p_mean,
            p_spread: Spread::normalized(norm(p_sigma, p_mean)),
            rho_mean,
            rho_spread: norm(rho_sigma, rho_mean),
            tau,
        },
        p_sigma,
        rho_sigma,
        p_median,
        k_effective,
        l_effective,
    }
}

impl Diagnosis {
    pub fn errors(&self, target: &InputConfiguration) -> MomentErrors {
        let rel = |got: f64, want: f64| {
            if want == 0.0 {
                got.abs()
            } else {
                ((got - want) / want).abs()
            }
        };
        MomentErrors {
            p_mean: rel(self.achieved.p_mean, target.p_mean),
            p_sigma: rel(self.p_sigma, target.p_sigma()),
            rho_mean: rel(self.achieved.rho_mean, target.rho_mean),
            rho_sigma: rel(self.rho_sigma, target.rho_sigma()),
            tau: rel(self.achieved.tau, target.tau),
        }
    }

    pub fn check(&self, target: &InputConfiguration, anchor: CentralAnchor, tolerance: f64) -> Check {
        let errors = self.errors(target);
        Check {
            diagnosis: *self,
            errors,
            anchor: match anchor {
                CentralAnchor::Mean => self.achieved.p_mean,
                CentralAnchor::Median => self.p_median,
            },
            pass: errors.max() <= tolerance,
        }
    }
}

/// Plain-text form: `K L n`, then `K` PD lines, `L` correlation lines and
/// `K·L` lines `k l n_kl` (1-based indices). Reals use 17 significant digits.
pub fn write_constellation(c: &ExposureConstellation) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} {} {}", c.k(), c.l(), c.n());
    for p in c.pd_values() {
        let _ = writeln!(out, "{p:.16e}");
    }
    for r in c.rho_values() {
        let _ = writeln!(out, "{r:.16e}");
    }
    for k in 0..c.k() {
        for l in 0..c.l() {
            let _ = writeln!(out, "{} {} {}", k + 1, l + 1, c.count(k, l));
        }
    }
    out
}

pub fn parse_constellation(text: &str) -> Result<ExposureConstellation> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let parse_err = |line: usize, message: String| Error::Parse { line, message };
    let (hl, header) = lines.next().ok_or_else(|| parse_err(1, "empty input".into()))?;
    let head: Vec<&str> = header.split_whitespace().collect();
    if head.len() != 3 {
        return Err(parse_err(hl, format!("expected `K L n`, found `{header}`")));
    }
    let num = |line: usize, s: &str| -> Result<u64> {
        s.parse::<u64>()
            .map_err(|e| parse_err(line, format!("`{s}`: {e}")))
    };
    let kk = num(hl, head[0])? as usize;
    let ll = num(hl, head[1])? as usize;
    let n = num(hl, head[2])?;
    let mut real = |what: &str| -> Result<f64> {
        let (ln, s) = lines
            .next()
            .ok_or_else(|| parse_err(0, format!("unexpected end of input reading {what}")))?;
        s.parse::<f64>().map_err(|e| parse_err(ln, format!("`{s}`: {e}")))
    };
    let pd: Vec<f64> = (0..kk).map(|_| real("PD values")).collect::<Result<_>>()?;
    let rho: Vec<f64> = (0..ll).map(|_| real("correlation values")).collect::<Result<_>>()?;
    let mut counts = vec![0u64; kk * ll];
    let mut seen = vec![false; kk * ll];
    for _ in 0..kk * ll {
        let (ln, s) = lines
            .next()
            .ok_or_else(|| parse_err(0, "unexpected end of input reading counts".into()))?;
        let f: Vec<&str> = s.split_whitespace().collect();
        if f.len() != 3 {
            return Err(parse_err(ln, format!("expected `k l n_kl`, found `{s}`")));
        }
        let (k, l, c) = (num(ln, f[0])? as usize, num(ln, f[1])? as usize, num(ln, f[2])?);
        if k == 0 || k > kk || l == 0 || l > ll {
            return Err(parse_err(ln, format!("cell ({k}, {l}) outside the {kk}x{ll} grid")));
        }
        let idx = (k - 1) * ll + (l - 1);
        if seen[idx] {
            return Err(parse_err(ln, format!("cell ({k}, {l}) listed twice")));
        }
        seen[idx] = true;
        counts[idx] = c;
    }
    if let Some((ln, s)) = lines.next() {
        return Err(parse_err(ln, format!("trailing content `{s}`")));
    }
    let c = ExposureConstellation::new(pd, rho, counts)?;
    if c.n() != n {
        return Err(parse_err(hl, format!("header total {n} but counts sum to {}", c.n())));
    }
    Ok(c)
}
