//! Default-rate variance of homogeneous, PD-bucketed and PD×ρ grid pools
//! under a single systematic factor.
//!
//! Asset-based formulas are evaluated through the indicator covariance
//! `Φ₂(h,k,ρ) − Φ(h)Φ(k)` rather than `Φ₂` itself, which keeps the
//! `Φ₂ − p̄²` difference free of cancellation at small PDs.

use rayon::prelude::*;

use crate::corrmap::default_corr_bounds;
use crate::error::{check_corr, check_open_unit, check_unit, Error, Result};
use crate::gaussian::{default_threshold, phi, std_normal_pdf, BivariateNormal};
use crate::quadrature::integrate_adaptive;
use crate::summation::CompensatedSum;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DefaultRateMoments {
    pub mean: f64,
    pub variance: f64,
    /// Infinitely granular part of the variance (the `n → ∞` limit).
    pub systematic: f64,
}

/// A pool of `n` exposures sharing PD `p` and asset correlation `rho_a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomogeneousPool {
    pub p: f64,
    pub rho_a: f64,
    pub n: u64,
}

impl HomogeneousPool {
    pub fn new(p: f64, rho_a: f64, n: u64) -> Result<Self> {
        check_open_unit("p", p)?;
        check_unit("rho_a", rho_a)?;
        check_count(n)?;
        Ok(Self { p, rho_a, n })
    }

    pub fn sigma(&self) -> f64 {
        (self.p * (1.0 - self.p)).sqrt()
    }

    pub fn variance(&self) -> f64 {
        single_asset_variance(self.p, self.rho_a, self.n)
    }
}

fn check_count(n: u64) -> Result<u64> {
    if n == 0 {
        Err(Error::Domain {
            name: "n",
            value: 0.0,
            expected: ">= 1",
        })
    } else {
        Ok(n)
    }
}

/// Discrete pool description: `counts[k*L + l]` exposures carry PD
/// `pd_values[k]` and asset correlation `rho_values[l]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureConstellation {
    pd_values: Vec<f64>,
    rho_values: Vec<f64>,
    counts: Vec<u64>,
    n: u64,
}

impl ExposureConstellation {
    /// PDs may include the degenerate values 0 and 1 (never and sure
    /// default); both axes must be strictly increasing.
    pub fn new(pd_values: Vec<f64>, rho_values: Vec<f64>, counts: Vec<u64>) -> Result<Self> {
        let (k, l) = (pd_values.len(), rho_values.len());
        if k == 0 || l == 0 {
            return Err(Error::InvalidConstellation("empty PD or correlation axis".into()));
        }
        if counts.len() != k * l {
            return Err(Error::DimensionMismatch(format!(
                "{} counts for a {k}x{l} grid",
                counts.len()
            )));
        }
        for &p in &pd_values {
            check_unit("p_k", p)?;
        }
        for &r in &rho_values {
            check_unit("rho_l", r)?;
        }
        if pd_values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConstellation("PD values not strictly increasing".into()));
        }
        if rho_values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConstellation(
                "correlation values not strictly increasing".into(),
            ));
        }
        let n = counts
            .iter()
            .try_fold(0u64, |acc, &c| acc.checked_add(c))
            .ok_or_else(|| Error::InvalidConstellation("total count overflows".into()))?;
        if n == 0 {
            return Err(Error::InvalidConstellation("no exposures".into()));
        }
        Ok(Self {
            pd_values,
            rho_values,
            counts,
            n,
        })
    }

    /// Build from unordered `(p, rho, count)` cells; equal coordinates are merged.
    pub fn from_cells<I: IntoIterator<Item = (f64, f64, u64)>>(cells: I) -> Result<Self> {
        let cells: Vec<_> = cells.into_iter().collect();
        let mut ps: Vec<f64> = cells.iter().map(|c| c.0).collect();
        let mut rs: Vec<f64> = cells.iter().map(|c| c.1).collect();
        for v in [&mut ps, &mut rs] {
            v.sort_by(f64::total_cmp);
            v.dedup();
        }
        let mut counts = vec![0u64; ps.len() * rs.len()];
        for (p, r, c) in cells {
            let k = ps.partition_point(|&x| x < p);
            let l = rs.partition_point(|&x| x < r);
            counts[k * rs.len() + l] += c;
        }
        Self::new(ps, rs, counts)
    }

    pub fn homogeneous(p: f64, rho_a: f64, n: u64) -> Result<Self> {
        check_count(n)?;
        Self::new(vec![p], vec![rho_a], vec![n])
    }

    pub fn k(&self) -> usize {
        self.pd_values.len()
    }

    pub fn l(&self) -> usize {
        self.rho_values.len()
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn pd_values(&self) -> &[f64] {
        &self.pd_values
    }

    pub fn rho_values(&self) -> &[f64] {
        &self.rho_values
    }

    /// Row-major `K×L` counts.
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn count(&self, k: usize, l: usize) -> u64 {
        self.counts[k * self.l() + l]
    }

    pub fn thresholds(&self) -> Vec<f64> {
        self.pd_values.iter().map(|&p| default_threshold(p)).collect()
    }

    /// Exposure shares `n_kl / n`, row-major.
    pub fn weights(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }

    pub fn mean_pd(&self) -> f64 {
        let l = self.l();
        let mut acc = CompensatedSum::new();
        for (k, &p) in self.pd_values.iter().enumerate() {
            let row: u64 = self.counts[k * l..(k + 1) * l].iter().sum();
            acc += p * row as f64;
        }
        acc.value() / self.n as f64
    }

    /// Exposure-weighted mean asset correlation.
    pub fn mean_rho(&self) -> f64 {
        let l = self.l();
        let mut acc = CompensatedSum::new();
        for (j, &r) in self.rho_values.iter().enumerate() {
            let col: u64 = (0..self.k()).map(|k| self.counts[k * l + j]).sum();
            acc += r * col as f64;
        }
        acc.value() / self.n as f64
    }

    /// Same counts and PDs with every asset correlation multiplied by `alpha`.
    pub fn scale_rho(&self, alpha: f64) -> Result<Self> {
        let rho: Vec<f64> = self.rho_values.iter().map(|r| r * alpha).collect();
        if alpha <= 0.0 {
            return Err(Error::Domain {
                name: "alpha",
                value: alpha,
                expected: "> 0 (axis must stay strictly increasing)",
            });
        }
        Self::new(self.pd_values.clone(), rho, self.counts.clone())
    }
}

/// `σ²ρᴰ + σ²(1−ρᴰ)/n` for a pool with common PD and default correlation.
pub fn var_dr_homogeneous_default(p: f64, rho_d: f64, n: u64) -> Result<f64> {
    let p = check_open_unit("p", p)?;
    let rho_d = check_unit("rho_d", rho_d)?;
    let n = check_count(n)? as f64;
    let s2 = p * (1.0 - p);
    Ok(s2 * rho_d + s2 * (1.0 - rho_d) / n)
}

/// Covariance of two default rates with standard deviations `sigma_a`, `sigma_b`.
pub fn cov_dr(sigma_a: f64, sigma_b: f64, rho_d_ab: f64) -> Result<f64> {
    for (name, s) in [("sigma_a", sigma_a), ("sigma_b", sigma_b)] {
        if !(s.is_finite() && s >= 0.0) {
            return Err(Error::Domain {
                name,
                value: s,
                expected: "finite and >= 0",
            });
        }
    }
    let r = check_corr("rho_d_ab", rho_d_ab)?;
    Ok(sigma_a * sigma_b * r)
}

/// Variance of the pooled default rate of `K` buckets from a default
/// correlation matrix (`rho_d[k][k]` is the within-bucket correlation).
pub fn var_dr_combined_default(p_k: &[f64], n_k: &[u64], rho_d: &[Vec<f64>]) -> Result<f64> {
    let k = p_k.len();
    if n_k.len() != k || rho_d.len() != k || rho_d.iter().any(|r| r.len() != k) {
        return Err(Error::DimensionMismatch(format!(
            "{k} PDs, {} counts, {}-row correlation matrix",
            n_k.len(),
            rho_d.len()
        )));
    }
    for &p in p_k {
        check_open_unit("p_k", p)?;
    }
    for i in 0..k {
        for j in 0..k {
            let r = check_corr("rho_d", rho_d[i][j])?;
            if r != rho_d[j][i] {
                return Err(Error::Asymmetric { row: i, col: j });
            }
            let b = default_corr_bounds(p_k[i], p_k[j])?;
            if r < b.lower - 1e-12 || r > b.upper + 1e-12 {
                return Err(Error::Unattainable {
                    value: r,
                    lower: b.lower,
                    upper: b.upper,
                });
            }
        }
    }
    let n: u64 = n_k.iter().sum();
    check_count(n)?;
    let nf = n as f64;
    let sigma: Vec<f64> = p_k.iter().map(|p| (p * (1.0 - p)).sqrt()).collect();
    let mut cross = CompensatedSum::new();
    let mut own = CompensatedSum::new();
    for i in 0..k {
        let ni = n_k[i] as f64;
        for j in 0..k {
            cross += ni * n_k[j] as f64 * sigma[i] * sigma[j] * rho_d[i][j];
        }
        own += ni * sigma[i] * sigma[i] * (1.0 - rho_d[i][i]);
    }
    Ok(cross.value() / (nf * nf) + own.value() / (nf * nf))
}

/// `Φ₂(c,c,ρᴬ) − p² + (p − Φ₂(c,c,ρᴬ))/n` for a homogeneous pool.
pub fn var_dr_single_asset(p: f64, rho_a: f64, n: u64) -> Result<f64> {
    let p = check_open_unit("p", p)?;
    let rho_a = check_unit("rho_a", rho_a)?;
    check_count(n)?;
    Ok(single_asset_variance(p, rho_a, n))
}

/// Single-bucket variance for any `rho ∈ [−1, 1]`; negative values give the
/// analytic continuation below the independence bound.
pub(crate) fn single_asset_variance(p: f64, rho: f64, n: u64) -> f64 {
    let c = default_threshold(p);
    let e = BivariateNormal::new(rho.clamp(-1.0, 1.0))
        .expect("clamped correlation")
        .excess(c, c);
    let inv_n = 1.0 / n as f64;
    e * (1.0 - inv_n) + p * (1.0 - p) * inv_n
}

/// The two algebraically equal multi-bucket expressions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultibucketForms {
    /// Full double sum plus the `(p̄ − Σ n_k Φ₂(c_k,c_k)/n)/n` correction.
    pub multibucket: f64,
    /// Off-diagonal pairs plus the `n_k(n_k−1)` self-bucket term.
    pub inverter: f64,
}

fn check_buckets(p_k: &[f64], n_k: &[u64]) -> Result<u64> {
    if p_k.len() != n_k.len() || p_k.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "{} PDs and {} counts",
            p_k.len(),
            n_k.len()
        )));
    }
    for &p in p_k {
        check_open_unit("p_k", p)?;
    }
    check_count(n_k.iter().sum())
}

pub fn multibucket_forms(p_k: &[f64], n_k: &[u64], rho_a: f64) -> Result<MultibucketForms> {
    let n = check_buckets(p_k, n_k)?;
    let rho_a = check_unit("rho_a", rho_a)?;
    Ok(multibucket_forms_unchecked(p_k, n_k, n, rho_a))
}

fn multibucket_forms_unchecked(p_k: &[f64], n_k: &[u64], n: u64, rho_a: f64) -> MultibucketForms {
    let bvn = BivariateNormal::new(rho_a).expect("validated correlation");
    let c: Vec<f64> = p_k.iter().map(|&p| default_threshold(p)).collect();
    let nf = n as f64;
    let w: Vec<f64> = n_k.iter().map(|&m| m as f64 / nf).collect();
    let kk = p_k.len();

    let mut sys = CompensatedSum::new();
    let mut diag = CompensatedSum::new();
    let mut off = CompensatedSum::new();
    let mut own = CompensatedSum::new();
    let mut binom = CompensatedSum::new();
    for i in 0..kk {
        let e_ii = bvn.excess(c[i], c[i]);
        let ni = n_k[i] as f64;
        let var_i = p_k[i] * (1.0 - p_k[i]);
        sys += w[i] * w[i] * e_ii;
        diag += w[i] * (var_i - e_ii);
        own += ni * (ni - 1.0) * e_ii;
        binom += ni * var_i;
        for j in i + 1..kk {
            let e_ij = bvn.excess(c[i], c[j]);
            sys += 2.0 * w[i] * w[j] * e_ij;
            off += 2.0 * ni * n_k[j] as f64 * e_ij;
        }
    }
    let multibucket = sys.value() + diag.value() / nf;
    let mut inv = off;
    inv.merge(&own);
    inv.merge(&binom);
    let inverter = inv.value() / (nf * nf);
    MultibucketForms {
        multibucket,
        inverter,
    }
}

/// Variance of a pool with `K` PD buckets and one common asset correlation.
pub fn var_dr_multibucket(p_k: &[f64], n_k: &[u64], rho_a: f64) -> Result<f64> {
    let forms = multibucket_forms(p_k, n_k, rho_a)?;
    debug_assert!(
        (forms.multibucket - forms.inverter).abs()
            <= 1e-12 * forms.inverter.abs().max(f64::MIN_POSITIVE),
        "{forms:?}"
    );
    Ok(forms.inverter)
}

/// Evaluation route for the grid variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GridMethod {
    /// Exact when the number of distinct `Φ₂` evaluations is at most
    /// [`EXACT_PAIR_LIMIT`], otherwise the factor integral.
    #[default]
    Auto,
    /// Double sum of `Φ₂` over all pairs of cells.
    Exact,
    /// Adaptive quadrature of the conditional default rate over the factor.
    FactorIntegral,
}

pub const EXACT_PAIR_LIMIT: usize = 2_000_000;

/// Mean and variance of the default rate of a PD×ρ grid under one factor.
pub fn var_dr_grid(c: &ExposureConstellation) -> DefaultRateMoments {
    var_dr_grid_with(c, GridMethod::Auto)
}

pub fn var_dr_grid_with(c: &ExposureConstellation, method: GridMethod) -> DefaultRateMoments {
    grid_moments(
        &c.pd_values,
        &c.rho_values,
        &c.weights(),
        c.n,
        method,
    )
}

/// Grid moments for arbitrary (unsorted, possibly repeated) axes.
pub(crate) fn grid_moments(
    pd: &[f64],
    rho: &[f64],
    weights: &[f64],
    n: u64,
    method: GridMethod,
) -> DefaultRateMoments {
    let cells = Cells::compact(pd, rho, weights);
    let mean = cells.mean_pd();
    let systematic = match method {
        GridMethod::Exact => cells.systematic_exact(),
        GridMethod::FactorIntegral => cells.systematic_factor(mean),
        GridMethod::Auto => {
            if cells.exact_pairs() <= EXACT_PAIR_LIMIT {
                cells.systematic_exact()
            } else {
                cells.systematic_factor(mean)
            }
        }
    };
    let idio = cells.idiosyncratic();
    let variance = systematic + idio / n as f64;
    DefaultRateMoments {
        mean,
        variance: variance.max(0.0),
        systematic: systematic.max(0.0),
    }
}

/// Non-empty rows and columns of a grid.
struct Cells {
    p: Vec<f64>,
    c: Vec<f64>,
    rho: Vec<f64>,
    /// row-major over the compacted axes
    w: Vec<f64>,
}

impl Cells {
    fn compact(pd: &[f64], rho: &[f64], weights: &[f64]) -> Self {
        let l_full = rho.len();
        let rows: Vec<usize> = (0..pd.len())
            .filter(|&k| weights[k * l_full..(k + 1) * l_full].iter().any(|&w| w > 0.0))
            .collect();
        let cols: Vec<usize> = (0..l_full)
            .filter(|&l| (0..pd.len()).any(|k| weights[k * l_full + l] > 0.0))
            .collect();
        let mut w = Vec::with_capacity(rows.len() * cols.len());
        for &k in &rows {
            for &l in &cols {
                w.push(weights[k * l_full + l]);
            }
        }
        let p: Vec<f64> = rows.iter().map(|&k| pd[k]).collect();
        Self {
            c: p.iter().map(|&x| default_threshold(x)).collect(),
            p,
            rho: cols.iter().map(|&l| rho[l]).collect(),
            w,
        }
    }

    fn k(&self) -> usize {
        self.p.len()
    }

    fn l(&self) -> usize {
        self.rho.len()
    }

    fn w(&self, k: usize, l: usize) -> f64 {
        self.w[k * self.l() + l]
    }

    fn exact_pairs(&self) -> usize {
        let (k, l) = (self.k(), self.l());
        (k * (k + 1) / 2).saturating_mul(l * (l + 1) / 2)
    }

    fn mean_pd(&self) -> f64 {
        let mut acc = CompensatedSum::new();
        for k in 0..self.k() {
            for l in 0..self.l() {
                acc += self.w(k, l) * self.p[k];
            }
        }
        acc.value()
    }

    /// `Σ w_kl (p_k(1−p_k) − cov(c_k,c_k,ρ_l))`, the coefficient of `1/n`.
    fn idiosyncratic(&self) -> f64 {
        let mut acc = CompensatedSum::new();
        for l in 0..self.l() {
            let bvn = BivariateNormal::new(self.rho[l]).expect("validated correlation");
            for k in 0..self.k() {
                let w = self.w(k, l);
                if w > 0.0 {
                    let p = self.p[k];
                    acc += w * (p * (1.0 - p) - bvn.excess(self.c[k], self.c[k]));
                }
            }
        }
        acc.value()
    }

    /// `Σ_{kl} Σ_{ij} w_kl w_ij cov(c_k, c_i, √ρ_l √ρ_j)`.
    fn systematic_exact(&self) -> f64 {
        let (kk, ll) = (self.k(), self.l());
        let pairs: Vec<(usize, usize)> =
            (0..ll).flat_map(|l| (l..ll).map(move |j| (l, j))).collect();
        let partial: Vec<CompensatedSum> = pairs
            .par_iter()
            .map(|&(l, j)| {
                let mut acc = CompensatedSum::new();
                let r = (self.rho[l].sqrt() * self.rho[j].sqrt()).min(1.0);
                if r == 0.0 {
                    return acc;
                }
                let bvn = BivariateNormal::new(r).expect("correlation in [0, 1]");
                let scale = if l == j { 1.0 } else { 2.0 };
                for k in 0..kk {
                    let (wkl, wkj) = (self.w(k, l), self.w(k, j));
                    if wkl == 0.0 && wkj == 0.0 {
                        continue;
                    }
                    acc += scale * wkl * wkj * bvn.excess(self.c[k], self.c[k]);
                    for i in k + 1..kk {
                        let m = wkl * self.w(i, j) + self.w(i, l) * wkj;
                        if m != 0.0 {
                            acc += scale * m * bvn.excess(self.c[k], self.c[i]);
                        }
                    }
                }
                acc
            })
            .collect();
        let mut total = CompensatedSum::new();
        for s in &partial {
            total.merge(s);
        }
        total.value()
    }

    /// `∫ φ(z) (D(z) − p̄)² dz` with `D(z)` the default rate conditional on
    /// the factor.
    fn systematic_factor(&self, mean: f64) -> f64 {
        let (kk, ll) = (self.k(), self.l());
        let cols: Vec<(f64, f64, Vec<(f64, f64)>)> = (0..ll)
            .map(|l| {
                let r = self.rho[l];
                let cells = (0..kk)
                    .filter(|&k| self.w(k, l) > 0.0)
                    .map(|k| (self.c[k], self.w(k, l)))
                    .collect();
                (r.sqrt(), (1.0 - r).sqrt(), cells)
            })
            .collect();
        let conditional = |z: f64| -> f64 {
            let mut acc = CompensatedSum::new();
            for (sr, sq, cells) in &cols {
                for &(c, w) in cells {
                    acc += w * conditional_pd(c, *sr, *sq, z);
                }
            }
            acc.value()
        };
        const Z_MAX: f64 = 14.0;
        let mut breaks: Vec<f64> = vec![-Z_MAX, -6.0, -3.0, 0.0, 3.0, 6.0, Z_MAX];
        for (l, (_, sq, _)) in cols.iter().enumerate() {
            if *sq == 0.0 || self.rho[l] > 0.999 {
                let sr = self.rho[l].sqrt();
                breaks.extend(
                    (0..kk)
                        .filter(|&k| self.w(k, l) > 0.0 && self.c[k].is_finite())
                        .map(|k| self.c[k] / sr)
                        .filter(|z| z.abs() < Z_MAX),
                );
            }
        }
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let r = integrate_adaptive(
            |z| {
                let d = conditional(z) - mean;
                std_normal_pdf(z) * d * d
            },
            &breaks,
            1e-300,
            1e-13,
            200_000,
        );
        r.value
    }
}

/// `Φ((c − √ρ z)/√(1−ρ))` with the `ρ = 1` step and infinite thresholds.
#[inline]
pub(crate) fn conditional_pd(c: f64, sqrt_rho: f64, sqrt_one_minus: f64, z: f64) -> f64 {
    if c == f64::NEG_INFINITY {
        return 0.0;
    }
    if c == f64::INFINITY {
        return 1.0;
    }
    let num = c - sqrt_rho * z;
    if sqrt_one_minus == 0.0 {
        return if num > 0.0 {
            1.0
        } else if num < 0.0 {
            0.0
        } else {
            0.5
        };
    }
    phi(num / sqrt_one_minus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corrmap::default_corr_from_asset;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs())
    }

    #[test]
    fn homogeneous_default_examples() {
        assert!(close(var_dr_homogeneous_default(0.1, 0.0, 10).unwrap(), 0.009, 1e-15));
        assert!(close(var_dr_homogeneous_default(0.1, 1.0, 7).unwrap(), 0.09, 1e-15));
        let v = var_dr_homogeneous_default(0.02, 0.03, 50).unwrap();
        assert!(close(v, 0.000_968_24, 1e-12), "{v}");
        assert!(var_dr_homogeneous_default(0.1, -0.1, 10).is_err());
    }

    #[test]
    fn cov_examples() {
        assert_eq!(cov_dr(0.1, 0.2, 0.0).unwrap(), 0.0);
        assert!(close(cov_dr(0.1, 0.2, 1.0).unwrap(), 0.02, 1e-15));
        let s = |p: f64| (p * (1.0 - p)).sqrt();
        let v = cov_dr(s(0.02), s(0.05), 0.04).unwrap();
        assert!(close(v, 0.0196f64.sqrt() * 0.0475f64.sqrt() * 0.04, 1e-15));
        assert!((v - 0.14 * 0.217_944_947_177_033_7 * 0.04).abs() < 1e-17);
    }

    #[test]
    fn combined_collapses() {
        let v = var_dr_combined_default(&[0.02], &[50], &[vec![0.03]]).unwrap();
        assert!(close(v, var_dr_homogeneous_default(0.02, 0.03, 50).unwrap(), 1e-15));
        let p = [0.01, 0.02, 0.05];
        let nk = [10, 20, 30];
        let z = vec![vec![0.0; 3]; 3];
        let v = var_dr_combined_default(&p, &nk, &z).unwrap();
        let want: f64 = p.iter().zip(&nk).map(|(p, &m)| m as f64 * p * (1.0 - p)).sum::<f64>() / 3600.0;
        assert!(close(v, want, 1e-15));
        let mut asym = z.clone();
        asym[0][1] = 0.01;
        assert!(matches!(
            var_dr_combined_default(&p, &nk, &asym),
            Err(Error::Asymmetric { .. })
        ));
        assert!(var_dr_combined_default(&p, &nk[..2], &z).is_err());
    }

    #[test]
    fn single_asset_edges() {
        for &p in &[0.001, 0.02, 0.3, 0.5, 0.9] {
            for &n in &[1u64, 7, 1000, 1_000_000_000] {
                let lo = p * (1.0 - p) / n as f64;
                let hi = p * (1.0 - p);
                assert!(close(var_dr_single_asset(p, 0.0, n).unwrap(), lo, 1e-14));
                assert!(close(var_dr_single_asset(p, 1.0, n).unwrap(), hi, 1e-14));
            }
        }
    }

    #[test]
    fn multibucket_examples() {
        let f = multibucket_forms(&[0.02], &[10], 0.12).unwrap();
        let s = var_dr_single_asset(0.02, 0.12, 10).unwrap();
        assert!(close(f.inverter, s, 1e-14) && close(f.multibucket, s, 1e-14));
        let p = [0.01, 0.02, 0.05];
        let nk = [100, 200, 300];
        let v0 = var_dr_multibucket(&p, &nk, 0.0).unwrap();
        let want: f64 = p.iter().zip(&nk).map(|(p, &m)| m as f64 * p * (1.0 - p)).sum::<f64>() / 360_000.0;
        assert!(close(v0, want, 1e-14));
        let v = var_dr_multibucket(&p, &nk, 0.12).unwrap();
        let rd: Vec<Vec<f64>> = p
            .iter()
            .map(|&a| p.iter().map(|&b| default_corr_from_asset(a, b, 0.12).unwrap()).collect())
            .collect();
        let vc = var_dr_combined_default(&p, &nk, &rd).unwrap();
        assert!(close(v, vc, 1e-12), "{v} {vc}");
    }

    #[test]
    fn grid_collapses() {
        let c = ExposureConstellation::homogeneous(0.02, 0.12, 1000).unwrap();
        let g = var_dr_grid(&c);
        assert!(close(g.variance, var_dr_single_asset(0.02, 0.12, 1000).unwrap(), 1e-14));
        assert!(close(g.mean, 0.02, 1e-15));
        let p = vec![0.01, 0.02, 0.05];
        let c = ExposureConstellation::new(p.clone(), vec![0.12], vec![100, 200, 300]).unwrap();
        let g = var_dr_grid(&c);
        assert!(close(g.variance, var_dr_multibucket(&p, &[100, 200, 300], 0.12).unwrap(), 1e-14));
    }

    #[test]
    fn grid_routes_agree() {
        let c = ExposureConstellation::new(
            vec![0.0, 0.003, 0.02, 0.1, 0.4, 1.0],
            vec![0.0, 0.05, 0.2, 0.6, 0.97, 1.0],
            (0..36).map(|i| (i * 7919 % 13) as u64 * 1000 + 1).collect(),
        )
        .unwrap();
        let a = var_dr_grid_with(&c, GridMethod::Exact);
        let b = var_dr_grid_with(&c, GridMethod::FactorIntegral);
        assert!(close(a.systematic, b.systematic, 1e-11), "{a:?} {b:?}");
        assert!(close(a.variance, b.variance, 1e-11));
    }

    #[test]
    fn constellation_validation() {
        assert!(ExposureConstellation::new(vec![0.2, 0.1], vec![0.1], vec![1, 1]).is_err());
        assert!(ExposureConstellation::new(vec![0.1], vec![0.1, 0.1], vec![1, 1]).is_err());
        assert!(ExposureConstellation::new(vec![0.1], vec![0.1], vec![0]).is_err());
        assert!(ExposureConstellation::new(vec![0.1], vec![0.1], vec![1, 2]).is_err());
        assert!(ExposureConstellation::new(vec![1.1], vec![0.1], vec![1]).is_err());
        let c = ExposureConstellation::from_cells([(0.2, 0.1, 3), (0.1, 0.3, 2), (0.2, 0.1, 1)]).unwrap();
        assert_eq!(c.pd_values(), &[0.1, 0.2]);
        assert_eq!(c.counts(), &[0, 2, 4, 0]);
        assert_eq!(c.n(), 6);
    }
}
