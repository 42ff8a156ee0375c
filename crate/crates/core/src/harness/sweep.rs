//! One-parameter sweeps over an experiment config.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;

use super::config::ExperimentConfig;
use super::run::execute;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Beta,
    /// Horizon; the step size is held fixed.
    T,
    D,
    Steps,
    PFloor,
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "beta" => Ok(SweepParam::Beta),
            "T" => Ok(SweepParam::T),
            "d" => Ok(SweepParam::D),
            "steps" => Ok(SweepParam::Steps),
            "p_floor" => Ok(SweepParam::PFloor),
            other => Err(Error::config(
                "param",
                format!(
                    "unknown sweep parameter `{other}` (expected beta, T, d, steps or p_floor)"
                ),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

impl SweepSpec {
    pub fn new(param: SweepParam, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::config("values", "sweep needs at least one value"));
        }
        Ok(SweepSpec { param, values })
    }
}

/// One sweep point. Failed points keep their error message and NaN metrics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub regret: f64,
    pub stderr: f64,
    pub bound: f64,
    pub violated: bool,
    pub error: Option<String>,
}

fn as_count(param: &str, v: f64) -> Result<usize> {
    if v >= 1.0 && v.fract() == 0.0 && v <= usize::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(Error::config(
            param,
            format!("{param} must be a positive integer, got {v}"),
        ))
    }
}

/// The config for one sweep point.
pub fn sweep_point(
    base: &ExperimentConfig,
    param: SweepParam,
    value: f64,
) -> Result<ExperimentConfig> {
    let mut cfg = base.clone();
    match param {
        SweepParam::Beta => {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::config("beta", "beta must be positive or auto"));
            }
            cfg.beta_spec = super::config::BetaSpec::Value(value);
        }
        SweepParam::T => {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::config("T", "T must be positive"));
            }
            cfg.set_horizon(value);
        }
        SweepParam::D => cfg.d = as_count("d", value)?,
        SweepParam::Steps => {
            cfg.steps = as_count("steps", value)?;
            cfg.steps_given = true;
        }
        SweepParam::PFloor => cfg.p_floor = value,
    }
    cfg.revalidate()?;
    Ok(cfg)
}

/// Runs every point in order. Per-point failures are recorded, not propagated.
pub fn run_sweep(base: &ExperimentConfig, spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    if spec.values.is_empty() {
        return Err(Error::config("values", "sweep needs at least one value"));
    }
    Ok(spec
        .values
        .iter()
        .map(
            |&value| match sweep_point(base, spec.param, value).and_then(|cfg| execute(&cfg)) {
                Ok(out) => SweepRow {
                    value,
                    regret: out.report.measured_regret,
                    stderr: out.report.stderr,
                    bound: out.report.theoretical_bound,
                    violated: out.report.bound_violated,
                    error: None,
                },
                Err(e) => SweepRow {
                    value,
                    regret: f64::NAN,
                    stderr: f64::NAN,
                    bound: f64::NAN,
                    violated: false,
                    error: Some(e.to_string()),
                },
            },
        )
        .collect())
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("value,regret,stderr,bound,violated,error\n");
    for r in rows {
        let error = r.error.as_deref().unwrap_or("").replace('"', "'");
        let _ = writeln!(
            out,
            "{},{},{},{},{},\"{}\"",
            r.value, r.regret, r.stderr, r.bound, r.violated, error
        );
    }
    out
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::parse_config;

    fn olo() -> ExperimentConfig {
        parse_config(r#"{"problem":"olo","d":3,"T":2,"steps":200,"adversary":{"kind":"sinusoid"}}"#)
            .unwrap()
    }

    #[test]
    fn empty_sweep_is_rejected() {
        assert!(SweepSpec::new(SweepParam::Beta, vec![]).is_err());
        let spec = SweepSpec {
            param: SweepParam::Beta,
            values: vec![],
        };
        assert!(run_sweep(&olo(), &spec).is_err());
    }

    #[test]
    fn bad_points_are_recorded() {
        let spec = SweepSpec::new(SweepParam::Beta, vec![1.0, -2.0, 10.0]).unwrap();
        let rows = run_sweep(&olo(), &spec).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows[0].error.is_none() && rows[2].error.is_none());
        assert!(rows[1]
            .error
            .as_deref()
            .unwrap()
            .contains("beta must be positive"));
        assert!(rows[2].bound < rows[0].bound);
        let csv = sweep_csv(&rows);
        assert!(csv.starts_with("value,regret,stderr,bound,violated"));
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn d_sweep_needs_generic_adversary() {
        let spec = SweepSpec::new(SweepParam::D, vec![2.0, 4.0, 2.5]).unwrap();
        let rows = run_sweep(&olo(), &spec).unwrap();
        assert!(rows[0].error.is_none() && rows[1].error.is_none());
        assert!(rows[2].error.is_some());
        let fixed =
            parse_config(r#"{"problem":"olo","d":2,"T":1,"steps":10,"adversary":{"kind":"constant","values":[1,0]}}"#)
                .unwrap();
        let rows = run_sweep(&fixed, &spec).unwrap();
        assert!(rows[1].error.as_deref().unwrap().contains("dimension"));
    }

    #[test]
    fn slope_of_power_law() {
        let x = [5.0, 10.0, 20.0, 40.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.sqrt()).collect();
        assert!((loglog_slope(&x, &y) - 0.5).abs() < 1e-12);
    }
}
