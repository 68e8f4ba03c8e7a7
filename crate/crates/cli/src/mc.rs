//! Monte Carlo validation report.

use poolcorr::mc_oracle::{simulate_variance, BatteryEntry, SimulationMode};

/// Largest accepted |z| between simulated and analytic variance.
pub const Z_LIMIT: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct McLine {
    pub name: String,
    pub mode: SimulationMode,
    pub trials: u64,
    pub analytic: f64,
    pub simulated: f64,
    pub standard_error: f64,
    pub z: f64,
    pub warning: Option<String>,
    pub error: Option<String>,
}

impl McLine {
    pub fn passed(&self) -> bool {
        self.error.is_none() && self.z.abs() <= Z_LIMIT
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McReport {
    pub lines: Vec<McLine>,
}

impl McReport {
    pub fn passed(&self) -> bool {
        self.lines.iter().all(McLine::passed)
    }

    pub fn max_abs_z(&self) -> f64 {
        self.lines.iter().map(|l| l.z.abs()).fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,mode,trials,analytic,simulated,standard_error,z,status\n");
        for l in &self.lines {
            let status = match (&l.error, l.passed()) {
                (Some(e), _) => format!("error: {e}"),
                (None, true) => "ok".into(),
                (None, false) => "fail".into(),
            };
            out.push_str(&format!(
                "{},{:?},{},{:.6e},{:.6e},{:.6e},{:.3},{}\n",
                l.name,
                l.mode,
                l.trials,
                l.analytic,
                l.simulated,
                l.standard_error,
                l.z,
                status.replace(',', ";")
            ));
        }
        out
    }
}

/// Simulates every entry and compares it with its analytic variance.
pub fn run_mc_check(battery: &[BatteryEntry]) -> McReport {
    let lines = battery
        .iter()
        .map(|e| {
            let analytic = e.spec.analytic_variance();
            let mode = e.spec.effective_mode();
            match simulate_variance(&e.spec) {
                Ok(r) => McLine {
                    name: e.name.to_string(),
                    mode,
                    trials: r.trials,
                    analytic,
                    simulated: r.variance,
                    standard_error: r.standard_error,
                    z: r.z_score(analytic),
                    warning: r.warning,
                    error: None,
                },
                Err(err) => McLine {
                    name: e.name.to_string(),
                    mode,
                    trials: e.spec.trials,
                    analytic,
                    simulated: f64::NAN,
                    standard_error: f64::NAN,
                    z: f64::NAN,
                    warning: None,
                    error: Some(err.to_string()),
                },
            }
        })
        .collect();
    McReport { lines }
}
