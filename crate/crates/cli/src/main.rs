use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ctlearn::harness::{
    parse_config_value, run_experiment, run_sweep, run_verify_suite, sweep_csv, with_workers,
    ExperimentConfig, SweepParam, SweepSpec,
};
use ctlearn::Error;
use serde_json::Value;

const EXIT_VIOLATION: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(
    name = "ctlearn",
    version,
    about = "Continuous-time online learning simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its report and regret curve.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run every built-in verification suite.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        threads: Option<usize>,
        /// Print the summary as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Run an experiment once per value of one parameter.
    Sweep {
        config: PathBuf,
        /// One of beta, T, d, steps, p_floor.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        values: Vec<f64>,
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    /// Output path prefix.
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    threads: Option<usize>,
}

enum Failure {
    Violation,
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. } => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn load_config(path: &Path, overrides: &Overrides) -> Result<ExperimentConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut value: Value = serde_json::from_str(&text)
        .map_err(|e| Failure::Config(format!("{}: invalid JSON: {e}", path.display())))?;
    if let Value::Object(map) = &mut value {
        if let Some(v) = overrides.seed {
            map.insert("master_seed".into(), v.into());
        }
        if let Some(v) = overrides.paths {
            map.insert("n_paths".into(), v.into());
        }
        if let Some(v) = overrides.steps {
            map.insert("steps".into(), v.into());
        }
        if let Some(v) = &overrides.out {
            map.insert("output".into(), v.clone().into());
        }
        if let Some(v) = overrides.threads {
            map.insert("threads".into(), v.into());
        }
    }
    let base = path.parent().unwrap_or(Path::new("."));
    Ok(parse_config_value(value, base)?)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { config, overrides } => {
            let cfg = load_config(&config, &overrides)?;
            let artifacts = run_experiment(&cfg)?;
            let r = &artifacts.outcome.report;
            println!("measured_regret     {}", r.measured_regret);
            println!("theoretical_bound   {}", r.theoretical_bound);
            println!("stderr              {}", r.stderr);
            println!("bound_violated      {}", r.bound_violated);
            println!("report              {}", artifacts.report_path.display());
            println!("curve               {}", artifacts.curve_path.display());
            if let Some(p) = &artifacts.trace_path {
                println!("trace               {}", p.display());
            }
            Ok(())
        }
        Command::Verify {
            seed,
            threads,
            json,
        } => {
            if threads == Some(0) {
                return Err(Failure::Config("--threads must be at least 1".into()));
            }
            let report = with_workers(threads, || run_verify_suite(seed))??;
            if json {
                let text = serde_json::to_string_pretty(&report)
                    .map_err(|e| Failure::Runtime(e.to_string()))?;
                println!("{text}");
            } else {
                print!("{}", report.table());
            }
            if report.passed() {
                Ok(())
            } else {
                Err(Failure::Violation)
            }
        }
        Command::Sweep {
            config,
            param,
            values,
            overrides,
        } => {
            let cfg = load_config(&config, &overrides)?;
            let spec = SweepSpec::new(param.parse::<SweepParam>()?, values)?;
            let rows = run_sweep(&cfg, &spec)?;
            let csv = sweep_csv(&rows);
            let path = format!("{}_sweep.csv", cfg.output);
            std::fs::write(&path, &csv).map_err(|e| Failure::Runtime(format!("{path}: {e}")))?;
            print!("{csv}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Violation) => ExitCode::from(EXIT_VIOLATION),
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
