//! JSON experiment configuration.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::bandit::{bandit_beta, DEFAULT_P_FLOOR};
use crate::error::{Error, Result};
use crate::linbandit::{default_gamma, linbandit_beta, load_arms, ArmSet};
use crate::olo::{beta_schedule_olo, OloMode, MAX_BETA};
use crate::rewards::{RewardPath, RewardSchedule};

pub const DEFAULT_STEPS_PER_UNIT: f64 = 1e4;
pub const DEFAULT_N_PATHS: usize = 1000;

const KNOWN_KEYS: &[&str] = &[
    "problem",
    "mode",
    "d",
    "T",
    "T_rounds",
    "beta",
    "steps",
    "n_paths",
    "master_seed",
    "adversary",
    "arms_file",
    "arms",
    "random_arms",
    "p_floor",
    "gamma",
    "output",
    "trace",
    "threads",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Problem {
    Olo,
    Bandit,
    Linbandit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Continuous,
    Discrete,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(untagged)]
pub enum BetaSpec {
    Value(f64),
    #[serde(serialize_with = "serialize_auto")]
    Auto,
}

fn serialize_auto<S: serde::Serializer>(s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str("auto")
}

/// Adversary description as written in the config.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AdversarySpec {
    Constant {
        values: Vec<f64>,
    },
    PiecewiseConstant {
        breakpoints: Vec<f64>,
        values: Vec<Vec<f64>>,
    },
    /// Omitted parameters fall back to the staggered sinusoid of dimension `d`.
    Sinusoid {
        #[serde(skip_serializing_if = "Option::is_none")]
        omega: Option<Vec<f64>>,
        #[serde(skip_serializing_if = "Option::is_none")]
        phase: Option<Vec<f64>>,
    },
    FromFile {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomArms {
    pub k: usize,
    #[serde(default)]
    pub seed: u64,
}

/// Where a linear-bandit arm set comes from.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ArmsSpec {
    File(PathBuf),
    Inline(Vec<Vec<f64>>),
    Random(RandomArms),
}

/// A validated experiment with defaults applied and β resolved.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub problem: Problem,
    pub mode: Mode,
    pub d: usize,
    /// Continuous horizon `T`, or the number of rounds in discrete mode.
    pub horizon: f64,
    pub beta_spec: BetaSpec,
    pub beta: f64,
    /// Grid steps (continuous) or rounds (discrete).
    pub steps: usize,
    /// Whether `steps` was given explicitly rather than derived from `T`.
    pub steps_given: bool,
    pub n_paths: usize,
    pub master_seed: u64,
    pub adversary: AdversarySpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub arms: Option<ArmsSpec>,
    pub p_floor: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    pub output: String,
    pub trace: bool,
    #[serde(skip)]
    pub threads: Option<usize>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    problem: Problem,
    #[serde(default)]
    mode: Mode,
    d: usize,
    #[serde(rename = "T")]
    t: Option<f64>,
    #[serde(rename = "T_rounds")]
    t_rounds: Option<usize>,
    beta: Option<Value>,
    steps: Option<usize>,
    n_paths: Option<usize>,
    master_seed: Option<u64>,
    adversary: Value,
    arms_file: Option<PathBuf>,
    arms: Option<Vec<Vec<f64>>>,
    random_arms: Option<RandomArms>,
    p_floor: Option<f64>,
    gamma: Option<f64>,
    output: Option<String>,
    #[serde(default)]
    trace: bool,
    threads: Option<usize>,
}

/// Parses a JSON config, resolving relative file paths against the working directory.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    parse_config_in(text, Path::new("."))
}

/// Parses a JSON config, resolving relative file paths against `base_dir`.
pub fn parse_config_in(text: &str, base_dir: &Path) -> Result<ExperimentConfig> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| Error::config("", format!("invalid JSON: {e}")))?;
    parse_config_value(value, base_dir)
}

/// Parses an already-decoded JSON object. Used to apply CLI overrides before validation.
pub fn parse_config_value(value: Value, base_dir: &Path) -> Result<ExperimentConfig> {
    let map = match &value {
        Value::Object(m) => m,
        _ => return Err(Error::config("", "config must be a JSON object")),
    };
    check_keys(map)?;
    let raw: RawConfig = serde_path_to_error::deserialize(value.clone()).map_err(|e| {
        let path = e.path().to_string();
        Error::config(path, e.into_inner().to_string())
    })?;
    resolve(raw, base_dir)
}

fn check_keys(map: &Map<String, Value>) -> Result<()> {
    for key in map.keys() {
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(Error::config(key.clone(), format!("unknown field: {key}")));
        }
    }
    for key in ["problem", "d", "adversary"] {
        if !map.contains_key(key) {
            return Err(Error::config(key, format!("missing field: {key}")));
        }
    }
    Ok(())
}

fn parse_beta(value: Option<&Value>) -> Result<BetaSpec> {
    const MSG: &str = "beta must be positive or auto";
    match value {
        None => Ok(BetaSpec::Auto),
        Some(Value::String(s)) if s == "auto" => Ok(BetaSpec::Auto),
        Some(Value::Number(n)) => match n.as_f64() {
            Some(b) if b > 0.0 && b.is_finite() => Ok(BetaSpec::Value(b)),
            _ => Err(Error::config("beta", MSG)),
        },
        Some(_) => Err(Error::config("beta", MSG)),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstantFields {
    values: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PiecewiseFields {
    breakpoints: Vec<f64>,
    values: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SinusoidFields {
    omega: Option<Vec<f64>>,
    phase: Option<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FileFields {
    path: PathBuf,
}

fn fields<T: serde::de::DeserializeOwned>(value: Value) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let inner = e.path().to_string();
        let path = if inner == "." {
            "adversary".to_string()
        } else {
            format!("adversary.{inner}")
        };
        Error::config(path, e.into_inner().to_string())
    })
}

// Tagged enums lose field paths in serde errors, so the tag is dispatched by hand.
fn parse_adversary(value: Value) -> Result<AdversarySpec> {
    let Value::Object(mut map) = value else {
        return Err(Error::config("adversary", "adversary must be an object"));
    };
    let kind = match map.remove("kind") {
        Some(Value::String(k)) => k,
        Some(_) => return Err(Error::config("adversary.kind", "kind must be a string")),
        None => return Err(Error::config("adversary.kind", "missing field: kind")),
    };
    let rest = Value::Object(map);
    Ok(match kind.as_str() {
        "constant" => {
            let f: ConstantFields = fields(rest)?;
            AdversarySpec::Constant { values: f.values }
        }
        "piecewise_constant" => {
            let f: PiecewiseFields = fields(rest)?;
            AdversarySpec::PiecewiseConstant {
                breakpoints: f.breakpoints,
                values: f.values,
            }
        }
        "sinusoid" => {
            let f: SinusoidFields = fields(rest)?;
            AdversarySpec::Sinusoid {
                omega: f.omega,
                phase: f.phase,
            }
        }
        "from_file" => {
            let f: FileFields = fields(rest)?;
            AdversarySpec::FromFile { path: f.path }
        }
        other => {
            return Err(Error::config(
                "adversary.kind",
                format!("unknown adversary `{other}` (expected constant, piecewise_constant, sinusoid or from_file)"),
            ))
        }
    })
}

fn resolve(raw: RawConfig, base_dir: &Path) -> Result<ExperimentConfig> {
    let beta_spec = parse_beta(raw.beta.as_ref())?;
    let (horizon, steps, steps_given) = match raw.mode {
        Mode::Continuous => {
            if raw.t_rounds.is_some() {
                return Err(Error::config(
                    "T_rounds",
                    "T_rounds applies to discrete mode; use T",
                ));
            }
            let t = raw
                .t
                .ok_or_else(|| Error::config("T", "missing field: T"))?;
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::config("T", "T must be positive"));
            }
            match raw.steps {
                Some(0) => return Err(Error::config("steps", "steps must be positive")),
                Some(s) => (t, s, true),
                None => (t, default_steps(t), false),
            }
        }
        Mode::Discrete => {
            if raw.t.is_some() {
                return Err(Error::config(
                    "T",
                    "T applies to continuous mode; use T_rounds",
                ));
            }
            if raw.steps.is_some() {
                return Err(Error::config("steps", "steps applies to continuous mode"));
            }
            let rounds = raw
                .t_rounds
                .ok_or_else(|| Error::config("T_rounds", "missing field: T_rounds"))?;
            if rounds == 0 {
                return Err(Error::config("T_rounds", "T_rounds must be at least 1"));
            }
            (rounds as f64, rounds, false)
        }
    };

    let arms = match (raw.arms_file, raw.arms, raw.random_arms) {
        (None, None, None) => None,
        (Some(f), None, None) => Some(ArmsSpec::File(f)),
        (None, Some(a), None) => Some(ArmsSpec::Inline(a)),
        (None, None, Some(r)) => Some(ArmsSpec::Random(r)),
        _ => {
            return Err(Error::config(
                "arms_file",
                "give at most one of arms_file, arms, random_arms",
            ))
        }
    };
    match (raw.problem, &arms) {
        (Problem::Linbandit, None) => {
            return Err(Error::config(
                "arms_file",
                "linbandit needs arms_file, arms or random_arms",
            ))
        }
        (Problem::Olo | Problem::Bandit, Some(_)) => {
            return Err(Error::config(
                "arms_file",
                "arm sets only apply to linbandit",
            ))
        }
        _ => {}
    }

    let p_floor = raw.p_floor.unwrap_or(DEFAULT_P_FLOOR);
    let n_paths = raw.n_paths.unwrap_or(DEFAULT_N_PATHS);
    if n_paths == 0 {
        return Err(Error::config("n_paths", "n_paths must be at least 1"));
    }
    if let Some(g) = raw.gamma {
        if !(0.0..=1.0).contains(&g) {
            return Err(Error::config("gamma", "gamma must lie in [0, 1]"));
        }
        if !(raw.problem == Problem::Linbandit && raw.mode == Mode::Discrete) {
            return Err(Error::config(
                "gamma",
                "gamma applies to discrete linbandit only",
            ));
        }
    }
    if raw.threads == Some(0) {
        return Err(Error::config("threads", "threads must be at least 1"));
    }

    let mut cfg = ExperimentConfig {
        problem: raw.problem,
        mode: raw.mode,
        d: raw.d,
        horizon,
        beta_spec,
        beta: f64::NAN,
        steps,
        steps_given,
        n_paths,
        master_seed: raw.master_seed.unwrap_or(0),
        adversary: parse_adversary(raw.adversary)?,
        arms,
        p_floor,
        gamma: raw.gamma,
        output: raw.output.unwrap_or_else(|| "ctlearn".to_string()),
        trace: raw.trace,
        threads: raw.threads,
        base_dir: base_dir.to_path_buf(),
    };
    cfg.revalidate()?;
    Ok(cfg)
}

fn default_steps(t: f64) -> usize {
    ((DEFAULT_STEPS_PER_UNIT * t).round() as usize).max(1)
}

impl ExperimentConfig {
    /// Re-resolves β and rechecks every invariant, e.g. after a sweep changed a field.
    pub fn revalidate(&mut self) -> Result<()> {
        let min_d = if self.problem == Problem::Olo { 2 } else { 1 };
        if self.d < min_d {
            return Err(Error::config("d", format!("d must be at least {min_d}")));
        }
        let floor_limit = match self.problem {
            Problem::Linbandit => self.arm_set()?.k(),
            _ => self.d,
        };
        if !(self.p_floor > 0.0 && (floor_limit == 1 || self.p_floor < 1.0 / floor_limit as f64)) {
            return Err(Error::config(
                "p_floor",
                format!("p_floor must lie in (0, 1/{floor_limit})"),
            ));
        }
        self.beta = self.resolve_beta()?;
        let path = self.reward_path()?;
        if path.dim() != self.d {
            return Err(Error::config(
                "adversary",
                format!(
                    "adversary has dimension {}, expected d = {}",
                    path.dim(),
                    self.d
                ),
            ));
        }
        if let Problem::Linbandit = self.problem {
            let arms = self.arm_set()?;
            if arms.d() != self.d {
                return Err(Error::config(
                    "arms_file",
                    format!("arms have dimension {}, expected d = {}", arms.d(), self.d),
                ));
            }
        }
        Ok(())
    }

    fn resolve_beta(&self) -> Result<f64> {
        let beta = match self.beta_spec {
            BetaSpec::Value(b) => b,
            BetaSpec::Auto => {
                let b = match (self.problem, self.mode) {
                    (Problem::Olo, Mode::Continuous) => {
                        beta_schedule_olo(self.d, self.horizon, OloMode::Continuous)
                    }
                    (Problem::Olo, Mode::Discrete) => {
                        beta_schedule_olo(self.d, self.horizon, OloMode::Discrete)
                    }
                    (Problem::Bandit, _) => bandit_beta(self.d, self.horizon),
                    (Problem::Linbandit, _) => {
                        linbandit_beta(self.arm_set()?.k(), self.d, self.horizon)
                    }
                };
                if b.is_nan() || b <= 0.0 {
                    return Err(Error::config(
                        "beta",
                        "beta = auto is undefined here (the schedule gives 0); set beta explicitly",
                    ));
                }
                b
            }
        };
        if beta > MAX_BETA {
            return Err(Error::config(
                "beta",
                format!("beta must not exceed {MAX_BETA}"),
            ));
        }
        Ok(beta)
    }

    fn resolve_path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Builds the adversary over this config's horizon.
    pub fn reward_path(&self) -> Result<RewardPath> {
        let horizon = self.horizon;
        let at = |e: Error| Error::config("adversary", e.to_string());
        match &self.adversary {
            AdversarySpec::Constant { values } => {
                RewardPath::constant(values.clone(), horizon).map_err(at)
            }
            AdversarySpec::PiecewiseConstant {
                breakpoints,
                values,
            } => {
                let schedule =
                    RewardSchedule::new(breakpoints.clone(), values.clone()).map_err(at)?;
                RewardPath::piecewise(schedule, horizon).map_err(at)
            }
            AdversarySpec::Sinusoid {
                omega: None,
                phase: None,
            } => RewardPath::staggered_sinusoid(self.d, horizon).map_err(at),
            AdversarySpec::Sinusoid { omega, phase } => {
                let omega = omega.clone().unwrap_or_else(|| vec![1.0; self.d]);
                let phase = phase.clone().unwrap_or_else(|| vec![0.0; omega.len()]);
                RewardPath::sinusoidal(omega, phase, horizon).map_err(at)
            }
            AdversarySpec::FromFile { path } => {
                RewardPath::from_file(&self.resolve_path(path), horizon).map_err(at)
            }
        }
    }

    /// Loads or generates the arm set (linbandit only).
    pub fn arm_set(&self) -> Result<ArmSet> {
        let at = |e: Error| Error::config("arms_file", e.to_string());
        match &self.arms {
            None => Err(Error::config("arms_file", "no arm set configured")),
            Some(ArmsSpec::File(p)) => {
                let full = self.resolve_path(p);
                let text = std::fs::read_to_string(&full)
                    .map_err(|e| Error::config("arms_file", format!("{}: {e}", full.display())))?;
                load_arms(&text).map_err(at)
            }
            Some(ArmsSpec::Inline(rows)) => {
                let d = rows.first().map(Vec::len).unwrap_or(0);
                if rows.iter().any(|r| r.len() != d) {
                    return Err(Error::config(
                        "arms",
                        "arm rows must all have the same length",
                    ));
                }
                let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                ArmSet::new(DMatrix::from_row_slice(rows.len(), d, &flat))
                    .map_err(|e| Error::config("arms", e.to_string()))
            }
            Some(ArmsSpec::Random(r)) => ArmSet::random(r.k, self.d, r.seed)
                .map_err(|e| Error::config("random_arms", e.to_string())),
        }
    }

    /// Exploration rate for discrete linbandit runs.
    pub fn resolved_gamma(&self, k: usize) -> f64 {
        self.gamma
            .unwrap_or_else(|| default_gamma(k, self.d, self.steps))
    }

    /// Changes the horizon, keeping the step size when `steps` was explicit.
    pub fn set_horizon(&mut self, horizon: f64) {
        match self.mode {
            Mode::Discrete => {
                self.steps = (horizon.round() as usize).max(1);
                self.horizon = self.steps as f64;
            }
            Mode::Continuous => {
                self.steps = if self.steps_given {
                    let h = self.horizon / self.steps as f64;
                    ((horizon / h).round() as usize).max(1)
                } else {
                    default_steps(horizon)
                };
                self.horizon = horizon;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bandit_json(extra: &str) -> String {
        format!(
            r#"{{"problem":"bandit","d":3,"T":10,"adversary":{{"kind":"constant","values":[1,0.5,0]}}{extra}}}"#
        )
    }

    #[test]
    fn auto_beta_for_bandit() {
        let cfg = parse_config(&bandit_json(r#","beta":"auto""#)).unwrap();
        assert!((cfg.beta - 0.270_630_410_790_326).abs() < 1e-12);
        assert_eq!(cfg.steps, 100_000);
        assert_eq!(cfg.n_paths, 1000);
        assert_eq!(cfg.p_floor, 1e-6);
        assert!(!cfg.steps_given);
    }

    #[test]
    fn error_messages_name_fields() {
        let err = parse_config(r#"{"d":3,"T":1,"adversary":{"kind":"constant","values":[1,0,0]}}"#)
            .unwrap_err();
        assert!(err.to_string().contains("missing field: problem"), "{err}");

        let err = parse_config(&bandit_json(r#","beta":-1"#)).unwrap_err();
        assert!(
            err.to_string().contains("beta must be positive or auto"),
            "{err}"
        );

        let err = parse_config(&bandit_json(r#","colour":1"#)).unwrap_err();
        assert!(err.to_string().contains("unknown field: colour"), "{err}");

        let err = parse_config(&bandit_json(r#","n_paths":"many""#)).unwrap_err();
        match err {
            Error::Config { path, .. } => assert_eq!(path, "n_paths"),
            other => panic!("{other}"),
        }

        let err = parse_config(
            r#"{"problem":"bandit","d":2,"T":1,"adversary":{"kind":"constant","values":[1,"x"]}}"#,
        )
        .unwrap_err();
        match err {
            Error::Config { path, .. } => assert_eq!(path, "adversary.values[1]"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn dimension_and_file_checks() {
        let err = parse_config(
            r#"{"problem":"olo","d":4,"T":1,"adversary":{"kind":"constant","values":[1,0,0]}}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("dimension 3"), "{err}");
        let err = parse_config(
            r#"{"problem":"linbandit","d":2,"T":1,"arms_file":"/nonexistent/arms.csv","adversary":{"kind":"sinusoid"}}"#,
        )
        .unwrap_err();
        assert!(
            matches!(err, Error::Config { ref path, .. } if path == "arms_file"),
            "{err}"
        );
    }

    #[test]
    fn discrete_and_linbandit_resolution() {
        let cfg = parse_config(
            r#"{"problem":"olo","mode":"discrete","d":4,"T_rounds":100,"adversary":{"kind":"sinusoid"}}"#,
        )
        .unwrap();
        assert!((cfg.beta - 0.166_510_922_231_539_55).abs() < 1e-15);
        let cfg = parse_config(
            r#"{"problem":"linbandit","d":3,"T":10,"random_arms":{"k":16,"seed":1},"adversary":{"kind":"sinusoid"}}"#,
        )
        .unwrap();
        assert!((cfg.beta - (2.0 * 16f64.ln() / 30.0).sqrt()).abs() < 1e-15);
        let err = parse_config(
            r#"{"problem":"bandit","d":1,"T":10,"adversary":{"kind":"constant","values":[1]}}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("set beta explicitly"), "{err}");
    }

    #[test]
    fn horizon_changes_keep_step_size() {
        let mut cfg = parse_config(&bandit_json(r#","steps":2000"#)).unwrap();
        cfg.set_horizon(40.0);
        assert_eq!(cfg.steps, 8000);
        cfg.revalidate().unwrap();
        assert!((cfg.beta - (2.0 * 3f64.ln() / 120.0).sqrt()).abs() < 1e-15);
    }
}
