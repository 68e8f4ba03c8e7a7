//! Experiment spec files.
//!
//! A spec is a plain-text list of `key = value` lines. Blank lines and lines
//! starting with `#` are ignored. Numbers may carry a `%` suffix. Sweep axes
//! are declared as `axis.<field> = v1, v2, ...`; the first axis gives the
//! table rows and the second the columns.
//!
//! ```text
//! title = PD spread at 12% asset correlation
//! n = 1e9
//! k = 1000
//! l = 1
//! rho_mean = 12%
//! axis.p_mean = 0.01%, 1%, 50%
//! axis.p_spread = 2%, 20%, 95%
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use poolcorr::constellation::{
    Allocation, BuildParams, CentralAnchor, InputConfiguration, MarginalFamily, Spread,
    SpreadConvention,
};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("line {line}: expected `key = value`, found `{text}`")]
    Syntax { line: usize, text: String },

    #[error("line {line}: `{key}` is set more than once")]
    Duplicate { line: usize, key: String },

    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },

    #[error("line {line}: invalid value for `{key}`: {message}")]
    Value {
        line: usize,
        key: String,
        message: String,
    },

    #[error("{0}")]
    Invalid(String),

    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, SpecError>;

/// Parameters that a sweep axis may vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Field {
    N,
    PMean,
    PSpread,
    RhoMean,
    RhoSpread,
    Tau,
    K,
    L,
    G,
}

impl Field {
    pub const ALL: [Field; 9] = [
        Field::N,
        Field::PMean,
        Field::PSpread,
        Field::RhoMean,
        Field::RhoSpread,
        Field::Tau,
        Field::K,
        Field::L,
        Field::G,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Field::N => "n",
            Field::PMean => "p_mean",
            Field::PSpread => "p_spread",
            Field::RhoMean => "rho_mean",
            Field::RhoSpread => "rho_spread",
            Field::Tau => "tau",
            Field::K => "k",
            Field::L => "l",
            Field::G => "g",
        }
    }

    fn is_count(self) -> bool {
        matches!(self, Field::N | Field::K | Field::L | Field::G)
    }

    /// Writes `value` into the configuration or build parameters.
    pub fn apply(self, value: f64, cfg: &mut InputConfiguration, params: &mut BuildParams) {
        match self {
            Field::N => cfg.n = value as u64,
            Field::PMean => cfg.p_mean = value,
            Field::PSpread => cfg.p_spread.value = value,
            Field::RhoMean => cfg.rho_mean = value,
            Field::RhoSpread => cfg.rho_spread = value,
            Field::Tau => cfg.tau = value,
            Field::K => params.k = value as usize,
            Field::L => params.l = value as usize,
            Field::G => params.g = value as u64,
        }
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Field {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Field::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| format!("`{s}` is not a sweepable field"))
    }
}

/// One sweep dimension. `labels` keep the tokens as written in the spec.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub field: Field,
    pub values: Vec<f64>,
    pub labels: Vec<String>,
}

/// Outcome class of a sweep cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellStatus {
    Ok,
    /// The configuration could not be turned into a constellation.
    Infeasible,
    /// The pool variance cannot be inverted for a homogeneous correlation.
    OutOfVarbound,
}

impl CellStatus {
    pub fn name(self) -> &'static str {
        match self {
            CellStatus::Ok => "ok",
            CellStatus::Infeasible => "infeasible",
            CellStatus::OutOfVarbound => "out_of_varbound",
        }
    }
}

impl fmt::Display for CellStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub title: Option<String>,
    pub base: InputConfiguration,
    pub params: BuildParams,
    /// Rows first, then columns; at most two.
    pub axes: Vec<Axis>,
    /// Non-ok statuses that still count as success for the exit code.
    pub allow_blank: Vec<CellStatus>,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            title: None,
            base: InputConfiguration {
                n: 1_000_000_000,
                p_mean: 0.01,
                p_spread: Spread::normalized(0.0),
                rho_mean: 0.12,
                rho_spread: 0.0,
                tau: 0.0,
            },
            params: BuildParams::default(),
            axes: Vec::new(),
            allow_blank: Vec::new(),
            out: None,
        }
    }
}

impl ExperimentSpec {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| SpecError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        text.parse()
    }

    pub fn axis(&self, field: Field) -> Option<&Axis> {
        self.axes.iter().find(|a| a.field == field)
    }

    /// Configuration and build parameters at one grid point.
    pub fn point(&self, coords: &[f64]) -> (InputConfiguration, BuildParams) {
        let mut cfg = self.base;
        let mut params = self.params;
        for (axis, &v) in self.axes.iter().zip(coords) {
            axis.field.apply(v, &mut cfg, &mut params);
        }
        (cfg, params)
    }

    pub fn is_allowed(&self, status: CellStatus) -> bool {
        status == CellStatus::Ok || self.allow_blank.contains(&status)
    }
}

/// One `key = value` line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

/// Splits a spec into entries, rejecting malformed and duplicate keys.
pub fn parse_entries(text: &str) -> Result<Vec<Entry>> {
    let mut out: Vec<Entry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let t = raw.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let (key, value) = t.split_once('=').ok_or_else(|| SpecError::Syntax {
            line,
            text: t.to_string(),
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(SpecError::Syntax {
                line,
                text: t.to_string(),
            });
        }
        if out.iter().any(|e| e.key == key) {
            return Err(SpecError::Duplicate {
                line,
                key: key.to_string(),
            });
        }
        out.push(Entry {
            line,
            key: key.to_string(),
            value: value.trim().to_string(),
        });
    }
    Ok(out)
}

/// A real number, optionally written as a percentage.
pub fn parse_number(s: &str) -> std::result::Result<f64, String> {
    let s = s.trim();
    let (body, scale) = match s.strip_suffix('%') {
        Some(b) => (b.trim_end(), 0.01),
        None => (s, 1.0),
    };
    let v: f64 = body.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if !v.is_finite() {
        return Err(format!("`{s}` is not finite"));
    }
    Ok(v * scale)
}

fn parse_count(s: &str) -> std::result::Result<f64, String> {
    let v = parse_number(s)?;
    if v < 1.0 || v.fract() != 0.0 || v > u64::MAX as f64 {
        return Err(format!("`{}` is not a positive integer", s.trim()));
    }
    Ok(v)
}

fn parse_field_value(field: Field, s: &str) -> std::result::Result<f64, String> {
    if field.is_count() {
        parse_count(s)
    } else {
        parse_number(s)
    }
}

fn parse_list(s: &str) -> Vec<&str> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .collect()
}

impl FromStr for ExperimentSpec {
    type Err = SpecError;

    fn from_str(text: &str) -> Result<Self> {
        let mut spec = ExperimentSpec::default();
        for e in parse_entries(text)? {
            let bad = |message: String| SpecError::Value {
                line: e.line,
                key: e.key.clone(),
                message,
            };
            if let Some(name) = e.key.strip_prefix("axis.") {
                let field: Field = name.parse().map_err(bad)?;
                let labels = parse_list(&e.value);
                if labels.is_empty() {
                    return Err(bad("empty value list".into()));
                }
                let values = labels
                    .iter()
                    .map(|t| parse_field_value(field, t))
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(bad)?;
                spec.axes.push(Axis {
                    field,
                    values,
                    labels: labels.into_iter().map(String::from).collect(),
                });
                continue;
            }
            if let Ok(field) = e.key.parse::<Field>() {
                let v = parse_field_value(field, &e.value).map_err(bad)?;
                field.apply(v, &mut spec.base, &mut spec.params);
                continue;
            }
            let v = e.value.as_str();
            match e.key.as_str() {
                "title" => spec.title = Some(v.to_string()),
                "out" => spec.out = Some(PathBuf::from(v)),
                "spread_convention" => {
                    spec.base.p_spread.convention = match v {
                        "normalized" | "s" => SpreadConvention::Normalized,
                        "cv" | "coefficient_of_variation" => {
                            SpreadConvention::CoefficientOfVariation
                        }
                        _ => return Err(bad(format!("`{v}`; expected normalized or cv"))),
                    }
                }
                "p_mid" => {
                    spec.params.p_mid = match v {
                        "mean" => CentralAnchor::Mean,
                        "median" => CentralAnchor::Median,
                        _ => return Err(bad(format!("`{v}`; expected mean or median"))),
                    }
                }
                "pd_family" => spec.params.pd_family = parse_family(v).map_err(bad)?,
                "rho_family" => spec.params.rho_family = parse_family(v).map_err(bad)?,
                "allocation" => {
                    spec.params.allocation = match v {
                        "refined" => Allocation::Refined,
                        "systematic" => Allocation::Systematic,
                        "largest_remainder" => Allocation::LargestRemainder,
                        _ => {
                            return Err(bad(format!(
                                "`{v}`; expected refined, systematic or largest_remainder"
                            )))
                        }
                    }
                }
                "allow_blank" => {
                    spec.allow_blank.clear();
                    for t in parse_list(v) {
                        match t {
                            "none" => {}
                            "all" => spec
                                .allow_blank
                                .extend([CellStatus::Infeasible, CellStatus::OutOfVarbound]),
                            "infeasible" => spec.allow_blank.push(CellStatus::Infeasible),
                            "out_of_varbound" => spec.allow_blank.push(CellStatus::OutOfVarbound),
                            _ => {
                                return Err(bad(format!(
                                    "`{t}`; expected none, all, infeasible or out_of_varbound"
                                )))
                            }
                        }
                    }
                }
                _ => {
                    return Err(SpecError::UnknownKey {
                        line: e.line,
                        key: e.key.clone(),
                    })
                }
            }
        }
        if spec.axes.len() > 2 {
            return Err(SpecError::Invalid(format!(
                "{} axes declared; a table has at most two",
                spec.axes.len()
            )));
        }
        Ok(spec)
    }
}

fn parse_family(v: &str) -> std::result::Result<MarginalFamily, String> {
    match v {
        "beta" => Ok(MarginalFamily::Beta),
        "two_point" => Ok(MarginalFamily::TwoPoint),
        "lognormal_clipped" => Ok(MarginalFamily::LognormalClipped),
        _ => Err(format!(
            "`{v}`; expected beta, two_point or lognormal_clipped"
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_and_percentages() {
        assert_eq!(parse_number("0.25").unwrap(), 0.25);
        assert!((parse_number("12%").unwrap() - 0.12).abs() < 1e-17);
        assert!((parse_number(" 0.01 %").unwrap() - 1e-4).abs() < 1e-19);
        assert!(parse_number("abc").is_err());
        assert!(parse_number("inf").is_err());
        assert_eq!(parse_count("1e9").unwrap(), 1e9);
        assert!(parse_count("2.5").is_err());
        assert!(parse_count("0").is_err());
    }

    #[test]
    fn full_spec() {
        let s: ExperimentSpec = "
            # comment
            title = demo
            n = 1e9
            k = 1000
            l = 1
            rho_mean = 12%
            spread_convention = cv
            allow_blank = out_of_varbound
            axis.p_mean = 0.01%, 50%
            axis.p_spread = 10%,20%,40%
        "
        .parse()
        .unwrap();
        assert_eq!(s.title.as_deref(), Some("demo"));
        assert_eq!(s.base.n, 1_000_000_000);
        assert_eq!((s.params.k, s.params.l), (1000, 1));
        assert_eq!(
            s.base.p_spread.convention,
            SpreadConvention::CoefficientOfVariation
        );
        assert_eq!(s.axes.len(), 2);
        assert_eq!(s.axes[0].field, Field::PMean);
        assert_eq!(s.axes[1].labels, vec!["10%", "20%", "40%"]);
        assert!(s.is_allowed(CellStatus::OutOfVarbound));
        assert!(!s.is_allowed(CellStatus::Infeasible));
        let (cfg, _) = s.point(&[0.5, 0.4]);
        assert_eq!((cfg.p_mean, cfg.p_spread.value), (0.5, 0.4));
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(matches!(
            "n = 1\nn = 2".parse::<ExperimentSpec>(),
            Err(SpecError::Duplicate { line: 2, .. })
        ));
        assert!(matches!(
            "colour = red".parse::<ExperimentSpec>(),
            Err(SpecError::UnknownKey { .. })
        ));
        assert!(matches!(
            "just text".parse::<ExperimentSpec>(),
            Err(SpecError::Syntax { line: 1, .. })
        ));
        assert!(matches!(
            "axis.color = 1".parse::<ExperimentSpec>(),
            Err(SpecError::Value { .. })
        ));
        assert!(matches!(
            "axis.tau = 0\naxis.tau = 1".parse::<ExperimentSpec>(),
            Err(SpecError::Duplicate { .. })
        ));
        assert!(matches!(
            "axis.tau = 0\naxis.n = 1\naxis.k = 2".parse::<ExperimentSpec>(),
            Err(SpecError::Invalid(_))
        ));
    }
}
