//! Running a configured experiment and writing its artifacts.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use serde::Serialize;

use super::config::{ExperimentConfig, Mode, Problem};
use crate::bandit::{
    run_continuous_bandit, run_discrete_exp3, simulate_bandit_path, trace_csv, BanditRunConfig,
};
use crate::error::{Error, Result};
use crate::linbandit::{
    run_continuous_linbandit, run_discrete_linbandit, simulate_linbandit_path, LinBanditRunConfig,
};
use crate::numerics::TimeGrid;
use crate::olo::{run_continuous_ftrl, run_discrete_ftrl, OloRunConfig};
use crate::report::{CurvePoint, RegretReport, RunOutcome};

/// Output of `git describe` at build time.
pub const BUILD: &str = env!("CTLEARN_GIT_DESCRIBE");

/// Runs `f` on a dedicated pool of `threads` workers, or the global pool if `None`.
pub fn with_workers<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Domain(format!("cannot start worker pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Runs the experiment without touching the filesystem.
pub fn execute(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    with_workers(cfg.threads, || execute_here(cfg))?
}

fn execute_here(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let path = cfg.reward_path()?;
    let grid = TimeGrid::new(cfg.horizon, cfg.steps)?;
    match (cfg.problem, cfg.mode) {
        (Problem::Olo, Mode::Continuous) => {
            run_continuous_ftrl(&OloRunConfig::new(cfg.beta, grid, path)?)
        }
        (Problem::Olo, Mode::Discrete) => run_discrete_ftrl(cfg.beta, &path.tabulate(&grid)?),
        (Problem::Bandit, Mode::Continuous) => run_continuous_bandit(&bandit_config(cfg)?),
        (Problem::Bandit, Mode::Discrete) => run_discrete_exp3(
            cfg.beta,
            &path.tabulate(&grid)?,
            cfg.n_paths,
            cfg.master_seed,
        ),
        (Problem::Linbandit, Mode::Continuous) => run_continuous_linbandit(&linbandit_config(cfg)?),
        (Problem::Linbandit, Mode::Discrete) => {
            let arms = cfg.arm_set()?;
            let gamma = cfg.resolved_gamma(arms.k());
            run_discrete_linbandit(
                &arms,
                cfg.beta,
                gamma,
                &path.tabulate(&grid)?,
                cfg.n_paths,
                cfg.master_seed,
            )
        }
    }
}

fn bandit_config(cfg: &ExperimentConfig) -> Result<BanditRunConfig> {
    let grid = TimeGrid::new(cfg.horizon, cfg.steps)?;
    BanditRunConfig::new(
        cfg.beta,
        grid,
        cfg.reward_path()?,
        cfg.n_paths,
        cfg.master_seed,
        cfg.p_floor,
    )
}

fn linbandit_config(cfg: &ExperimentConfig) -> Result<LinBanditRunConfig> {
    let grid = TimeGrid::new(cfg.horizon, cfg.steps)?;
    LinBanditRunConfig::new(
        cfg.arm_set()?,
        cfg.beta,
        grid,
        cfg.reward_path()?,
        cfg.n_paths,
        cfg.master_seed,
        cfg.p_floor,
    )
}

#[derive(Serialize)]
struct ReportFile<'a> {
    report: &'a RegretReport,
    config: &'a ExperimentConfig,
    build: &'a str,
    /// Kept last so everything above it is reproducible byte for byte.
    wall_time_s: f64,
}

/// Files written by [`run_experiment`].
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub outcome: RunOutcome,
    pub report_path: PathBuf,
    pub curve_path: PathBuf,
    pub trace_path: Option<PathBuf>,
}

pub fn curve_csv(curve: &[CurvePoint]) -> String {
    let mut out = String::from("t,regret\n");
    for p in curve {
        let _ = writeln!(out, "{},{}", p.t, p.regret);
    }
    out
}

/// Report JSON with the config echo, build identifier and wall time.
pub fn report_json(
    report: &RegretReport,
    cfg: &ExperimentConfig,
    wall_time_s: f64,
) -> Result<String> {
    let file = ReportFile {
        report,
        config: cfg,
        build: BUILD,
        wall_time_s,
    };
    serde_json::to_string_pretty(&file).map_err(|e| Error::Io(e.to_string()))
}

/// Drops the trailing `wall_time_s` line so two report files can be compared exactly.
pub fn strip_wall_time(report_json: &str) -> String {
    report_json
        .lines()
        .filter(|l| !l.trim_start().starts_with("\"wall_time_s\""))
        .collect::<Vec<_>>()
        .join("\n")
}

fn trace_text(cfg: &ExperimentConfig) -> Result<Option<String>> {
    if !cfg.trace || cfg.mode != Mode::Continuous {
        return Ok(None);
    }
    match cfg.problem {
        Problem::Olo => Ok(None),
        Problem::Bandit => Ok(Some(trace_csv(&simulate_bandit_path(
            &bandit_config(cfg)?,
            0,
        )?))),
        Problem::Linbandit => {
            let lcfg = linbandit_config(cfg)?;
            let rows = simulate_linbandit_path(&lcfg, 0)?;
            let k = lcfg.arms.k();
            let mut out = String::from("step,t");
            for a in 1..=k {
                let _ = write!(out, ",p_{a}");
            }
            out.push('\n');
            for (i, p) in rows.iter().enumerate() {
                let _ = write!(out, "{i},{}", lcfg.grid.t(i));
                for v in p {
                    let _ = write!(out, ",{v}");
                }
                out.push('\n');
            }
            Ok(Some(out))
        }
    }
}

/// Runs the experiment and writes `<output>_report.json`, `<output>_curve.csv`
/// and, when tracing, `<output>_trace.csv` (path 0 only).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let start = Instant::now();
    let outcome = execute(cfg)?;
    let trace = with_workers(cfg.threads, || trace_text(cfg))??;
    let wall = start.elapsed().as_secs_f64();

    let prefix = &cfg.output;
    let report_path = PathBuf::from(format!("{prefix}_report.json"));
    let curve_path = PathBuf::from(format!("{prefix}_curve.csv"));
    if let Some(parent) = report_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(
        &report_path,
        report_json(&outcome.report, cfg, wall)? + "\n",
    )?;
    std::fs::write(&curve_path, curve_csv(&outcome.curve))?;
    let trace_path = match trace {
        Some(text) => {
            let p = PathBuf::from(format!("{prefix}_trace.csv"));
            std::fs::write(&p, text)?;
            Some(p)
        }
        None => None,
    };
    Ok(Artifacts {
        outcome,
        report_path,
        curve_path,
        trace_path,
    })
}
