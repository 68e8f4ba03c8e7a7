//! Combined PD and correlation spread versus the product of the separate effects.

use poolcorr::constellation::{BuildParams, InputConfiguration, Spread, SpreadConvention};
use rayon::prelude::*;

use crate::spec::{CellStatus, ExperimentSpec, Field};
use crate::sweep::{evaluate, Cell, SweepTable};

/// Allowed excess of the combined reduction over the product.
pub const STACKING_SLACK: f64 = 0.005;

pub const COLUMNS: [&str; 4] = ["rho_only", "pd_only", "product", "combined"];

#[derive(Debug, Clone, PartialEq)]
pub struct StackingRow {
    pub p_mean: f64,
    /// Correlation spread only.
    pub rho_only: Cell,
    /// PD spread only.
    pub pd_only: Cell,
    pub combined: Cell,
}

impl StackingRow {
    pub fn product(&self) -> Option<f64> {
        Some(self.rho_only.value()? * self.pd_only.value()?)
    }

    /// `None` unless all three evaluations succeeded.
    pub fn holds(&self) -> Option<bool> {
        Some(self.combined.value()? <= self.product()? + STACKING_SLACK)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StackingTable {
    pub title: Option<String>,
    pub rho_mean: f64,
    pub s_p: f64,
    pub s_rho: f64,
    pub labels: Vec<String>,
    pub rows: Vec<StackingRow>,
}

impl StackingTable {
    pub fn violations(&self) -> Vec<&StackingRow> {
        self.rows
            .iter()
            .filter(|r| r.holds() == Some(false))
            .collect()
    }

    pub fn all_evaluated(&self) -> bool {
        self.rows.iter().all(|r| r.holds().is_some())
    }

    /// Four-column view for the emitters.
    pub fn to_sweep_table(&self) -> SweepTable {
        let cells = self
            .rows
            .iter()
            .map(|r| {
                let product = match r.product() {
                    Some(v) => Cell {
                        status: CellStatus::Ok,
                        rho_percent: Some(v),
                        rho_tilde: None,
                        variance: None,
                        message: None,
                    },
                    None => Cell {
                        status: CellStatus::Infeasible,
                        rho_percent: None,
                        rho_tilde: None,
                        variance: None,
                        message: Some("a factor is missing".into()),
                    },
                };
                vec![
                    r.rho_only.clone(),
                    r.pd_only.clone(),
                    product,
                    r.combined.clone(),
                ]
            })
            .collect();
        SweepTable {
            title: self.title.clone(),
            row_name: "p_mean".into(),
            col_name: "effect".into(),
            row_labels: self.labels.clone(),
            col_labels: COLUMNS.iter().map(|s| s.to_string()).collect(),
            col_values: (0..COLUMNS.len()).map(|i| i as f64).collect(),
            cells,
        }
    }
}

/// Evaluates the three spread variants at each mean PD, with `τ = 0`.
///
/// `base` supplies `n` and `params` the grid; its spreads and `τ` are ignored.
pub fn run_stacking_check(
    base: &InputConfiguration,
    params: &BuildParams,
    p_means: &[f64],
    rho_mean: f64,
    s_p: f64,
    s_rho: f64,
) -> StackingTable {
    let variants = [(0.0, s_rho), (s_p, 0.0), (s_p, s_rho)];
    let cells: Vec<Cell> = (0..p_means.len() * 3)
        .into_par_iter()
        .map(|idx| {
            let (sp, sr) = variants[idx % 3];
            let cfg = InputConfiguration {
                p_mean: p_means[idx / 3],
                p_spread: Spread::normalized(sp),
                rho_mean,
                rho_spread: sr,
                tau: 0.0,
                ..*base
            };
            evaluate(&cfg, params)
        })
        .collect();
    let rows = cells
        .chunks(3)
        .zip(p_means)
        .map(|(c, &p_mean)| StackingRow {
            p_mean,
            rho_only: c[0].clone(),
            pd_only: c[1].clone(),
            combined: c[2].clone(),
        })
        .collect();
    StackingTable {
        title: None,
        rho_mean,
        s_p,
        s_rho,
        labels: p_means.iter().map(|p| p.to_string()).collect(),
        rows,
    }
}

/// Stacking check driven by a spec with an `axis.p_mean` list; the spec's
/// `p_spread` and `rho_spread` are the two spreads.
pub fn run_stacking_spec(spec: &ExperimentSpec) -> Result<StackingTable, String> {
    let axis = match spec.axes.as_slice() {
        [a] if a.field == Field::PMean => a,
        _ => return Err("a stacking spec needs exactly one axis, `axis.p_mean`".into()),
    };
    if spec.base.p_spread.convention != SpreadConvention::Normalized {
        return Err("stacking checks use the normalized PD spread".into());
    }
    let s_p = spec.base.p_spread.value;
    let mut t = run_stacking_check(
        &spec.base,
        &spec.params,
        &axis.values,
        spec.base.rho_mean,
        s_p,
        spec.base.rho_spread,
    );
    t.title = spec.title.clone();
    t.labels = axis.labels.clone();
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_spread_gives_one_hundred_percent_everywhere() {
        let base = InputConfiguration::homogeneous(1_000_000_000, 0.01, 0.04);
        let params = BuildParams {
            k: 20,
            l: 10,
            ..Default::default()
        };
        let t = run_stacking_check(&base, &params, &[0.01, 0.2], 0.04, 0.0, 0.0);
        for r in &t.rows {
            for v in [
                r.rho_only.value(),
                r.pd_only.value(),
                r.product(),
                r.combined.value(),
            ] {
                assert!((v.unwrap() - 1.0).abs() < 1e-6);
            }
            assert_eq!(r.holds(), Some(true));
        }
        let st = t.to_sweep_table();
        assert_eq!((st.rows(), st.cols()), (2, 4));
    }
}
