//! Grids of implied-correlation evaluations.

use poolcorr::constellation::{build_constellation, BuildParams, InputConfiguration};
use poolcorr::implied::rho_percent_for_configuration;
use poolcorr::poolvar::var_dr_grid;
use poolcorr::Error;
use rayon::prelude::*;

use crate::spec::{CellStatus, ExperimentSpec, Field};

/// Result of one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub status: CellStatus,
    /// Measured over actual asset correlation, as a fraction.
    pub rho_percent: Option<f64>,
    pub rho_tilde: Option<f64>,
    pub variance: Option<f64>,
    pub message: Option<String>,
}

impl Cell {
    fn failed(status: CellStatus, err: &Error) -> Self {
        Self {
            status,
            rho_percent: None,
            rho_tilde: None,
            variance: None,
            message: Some(err.to_string()),
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self.status {
            CellStatus::Ok => self.rho_percent,
            _ => None,
        }
    }
}

/// Builds the constellation for `cfg` and backs out its implied correlation.
pub fn evaluate(cfg: &InputConfiguration, params: &BuildParams) -> Cell {
    let c = match build_constellation(cfg, params) {
        Ok(c) => c,
        Err(e) => return Cell::failed(CellStatus::Infeasible, &e),
    };
    let variance = var_dr_grid(&c).variance;
    match rho_percent_for_configuration(&c, c.mean_rho()) {
        Ok(r) => Cell {
            status: CellStatus::Ok,
            rho_percent: r.rho_percent,
            rho_tilde: Some(r.rho_tilde),
            variance: Some(variance),
            message: None,
        },
        Err(e @ (Error::OutOfRange { .. } | Error::Unattainable { .. })) => Cell {
            variance: Some(variance),
            ..Cell::failed(CellStatus::OutOfVarbound, &e)
        },
        Err(e) => Cell {
            variance: Some(variance),
            ..Cell::failed(CellStatus::Infeasible, &e)
        },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub title: Option<String>,
    pub row_name: String,
    pub col_name: String,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    /// Numeric column coordinates, used as the chart's x axis.
    pub col_values: Vec<f64>,
    /// Row-major.
    pub cells: Vec<Vec<Cell>>,
}

impl SweepTable {
    pub fn rows(&self) -> usize {
        self.row_labels.len()
    }

    pub fn cols(&self) -> usize {
        self.col_labels.len()
    }

    pub fn value(&self, row: usize, col: usize) -> Option<f64> {
        self.cells[row][col].value()
    }

    pub fn status(&self, row: usize, col: usize) -> CellStatus {
        self.cells[row][col].status
    }

    pub fn iter_cells(&self) -> impl Iterator<Item = (usize, usize, &Cell)> {
        self.cells
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().enumerate().map(move |(j, c)| (i, j, c)))
    }

    pub fn count(&self, status: CellStatus) -> usize {
        self.iter_cells()
            .filter(|(_, _, c)| c.status == status)
            .count()
    }
}

struct Dim {
    name: String,
    field: Option<Field>,
    values: Vec<f64>,
    labels: Vec<String>,
}

fn dims(spec: &ExperimentSpec) -> (Dim, Dim) {
    let mut it = spec.axes.iter().map(|a| Dim {
        name: a.field.name().to_string(),
        field: Some(a.field),
        values: a.values.clone(),
        labels: a.labels.clone(),
    });
    let single = |name: &str| Dim {
        name: name.to_string(),
        field: None,
        values: vec![0.0],
        labels: vec![name.to_string()],
    };
    let rows = it.next().unwrap_or_else(|| single("configuration"));
    let cols = it.next().unwrap_or_else(|| single("rho_percent"));
    (rows, cols)
}

/// Evaluates every grid cell of `spec` on the current rayon pool.
///
/// Cell failures are recorded in the table and never abort the sweep.
pub fn run_sweep(spec: &ExperimentSpec) -> SweepTable {
    let (rows, cols) = dims(spec);
    let (nr, nc) = (rows.values.len(), cols.values.len());
    let flat: Vec<Cell> = (0..nr * nc)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / nc, idx % nc);
            let mut cfg = spec.base;
            let mut params = spec.params;
            if let Some(f) = rows.field {
                f.apply(rows.values[i], &mut cfg, &mut params);
            }
            if let Some(f) = cols.field {
                f.apply(cols.values[j], &mut cfg, &mut params);
            }
            evaluate(&cfg, &params)
        })
        .collect();
    let mut it = flat.into_iter();
    let cells = (0..nr).map(|_| it.by_ref().take(nc).collect()).collect();
    SweepTable {
        title: spec.title.clone(),
        row_name: rows.name,
        col_name: cols.name,
        row_labels: rows.labels,
        col_labels: cols.labels,
        col_values: cols.values,
        cells,
    }
}

/// Whether every cell is ok or has a status the spec allows to be blank.
pub fn sweep_succeeded(spec: &ExperimentSpec, table: &SweepTable) -> bool {
    table
        .iter_cells()
        .all(|(_, _, c)| spec.is_allowed(c.status))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_homogeneous_cell_is_one_hundred_percent() {
        let spec: ExperimentSpec = "n = 1e9\np_mean = 2%\nrho_mean = 12%\nk = 10\nl = 10"
            .parse()
            .unwrap();
        let t = run_sweep(&spec);
        assert_eq!((t.rows(), t.cols()), (1, 1));
        let v = t.value(0, 0).unwrap();
        assert!((v - 1.0).abs() < 1e-6, "{v}");
    }

    #[test]
    fn statuses_classified() {
        let spec: ExperimentSpec = "
            n = 2
            k = 1000
            l = 1
            rho_mean = 12%
            p_spread = 20%
            allow_blank = out_of_varbound
            axis.p_mean = 0.01%, 50%
            axis.rho_spread = 0, 150%
        "
        .parse()
        .unwrap();
        let t = run_sweep(&spec);
        assert_eq!(t.status(0, 0), CellStatus::OutOfVarbound);
        assert_eq!(t.status(1, 0), CellStatus::Ok);
        assert_eq!(t.status(0, 1), CellStatus::Infeasible);
        assert!(t.cells[0][1].message.is_some());
        assert!(!sweep_succeeded(&spec, &t));
        assert_eq!(t.count(CellStatus::Infeasible), 2);
    }

    #[test]
    fn evaluation_order_does_not_matter() {
        let spec: ExperimentSpec = "
            k = 50
            l = 20
            p_spread = 30%
            rho_spread = 30%
            axis.p_mean = 1%, 5%
            axis.tau = -0.2, 0, 0.2
        "
        .parse()
        .unwrap();
        let t = run_sweep(&spec);
        for (i, j, c) in t.iter_cells() {
            let (cfg, params) = spec.point(&[spec.axes[0].values[i], spec.axes[1].values[j]]);
            assert_eq!(&evaluate(&cfg, &params), c);
        }
    }
}
