//! `bids` command-line driver.
//!
//! Exit codes: 0 on success, 1 for configuration or usage errors, 2 when a run
//! fails.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use bids_core::baseline::{np_schedule, Hyperbox};
use bids_core::exec::Execution;
use bids_core::geometry::{GridUnits, ProjectedInterval, Schedule, ScheduleParams};
use bids_core::harness::{self, ExperimentConfig, SweepParam};
use bids_core::replay::{self, ReplayConfig};
use bids_core::sir::{sade_fit, ScoreFunction};
use bids_core::Error;
use clap::{Args, Parser, Subcommand};
use serde_json::Value;

#[derive(Debug, Parser)]
#[command(name = "bids", version, about = "Batched single-index contextual bandit experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment described by a JSON config.
    Simulate(SimulateArgs),
    /// Replay a labeled CSV dataset as a bandit problem.
    Replay(ReplayArgs),
    /// Print the resolved schedule as JSON.
    Schedule(ScheduleArgs),
    /// Fit an index direction to a CSV with SADE.
    SadeFit(SadeArgs),
    /// Run one experiment per value of theta or sigma.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Override any config field, e.g. `--set T=50000` or `--set policy=np_baseline`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Run replicates one after another.
    #[arg(long)]
    sequential: bool,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_parser = parse_sweep_param)]
    param: SweepParam,
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<String>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "label")]
    label: String,
    /// JSON replay config; flags below take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// bids, np_baseline, bids_oracle or label_oracle.
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Use the features as given instead of standardizing them.
    #[arg(long)]
    raw: bool,
    #[arg(long)]
    sequential: bool,
}

#[derive(Debug, Args)]
struct ScheduleArgs {
    #[arg(long = "T")]
    horizon: u64,
    #[arg(long = "M", default_value_t = 5)]
    batches: usize,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    a_scale: f64,
    #[arg(long = "c-B", default_value_t = harness::DEFAULT_C_B)]
    c_b: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    lower: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    upper: f64,
    /// projected or normalized
    #[arg(long, default_value = "normalized", value_parser = parse_units)]
    units: GridUnits,
    /// Covariate dimension; above 1 prints the hypercube baseline schedule.
    #[arg(long, default_value_t = 1)]
    dim: usize,
}

#[derive(Debug, Args)]
struct SadeArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "y")]
    response: String,
    #[arg(long, default_value_t = 10)]
    slices: usize,
    #[arg(long, default_value_t = 1e-6)]
    ridge: f64,
    /// Standardize the features first; the direction is then in standardized units.
    #[arg(long)]
    standardize: bool,
}

fn parse_sweep_param(s: &str) -> Result<SweepParam, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_units(s: &str) -> Result<GridUnits, String> {
    serde_json::from_value(Value::String(s.into())).map_err(|_| format!("unknown grid units '{s}'"))
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config_error() {
            Failure::Config(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

// stdout may be a closed pipe (`bids schedule ... | head`)
macro_rules! say {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout().lock(), $($t)*);
    }};
}

/// Parse `argv` (including the program name) and run; returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let outcome = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Replay(a) => replay_cmd(a),
        Command::Schedule(a) => schedule(a),
        Command::SadeFit(a) => sade(a),
        Command::Sweep(a) => sweep(a),
    };
    match outcome {
        Ok(()) => 0,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            1
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            2
        }
    }
}

fn execution(sequential: bool) -> Execution {
    if sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

fn read_json(path: &Path) -> CliResult<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

/// Apply `key=value` pairs to a JSON object. Values are parsed as JSON when
/// possible and kept as strings otherwise; dotted keys reach nested objects.
fn apply_sets(mut root: Value, sets: &[String]) -> CliResult<Value> {
    for s in sets {
        let (key, raw) = s
            .split_once('=')
            .ok_or_else(|| Failure::Config(format!("--set expects KEY=VALUE, got '{s}'")))?;
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.into()));
        let mut node = &mut root;
        let parts: Vec<&str> = key.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let obj = node
                .as_object_mut()
                .ok_or_else(|| Failure::Config(format!("--set {key}: '{part}' is not inside an object")))?;
            if i + 1 == parts.len() {
                obj.insert(part.to_string(), value.clone());
                break;
            }
            node = obj
                .entry(part.to_string())
                .or_insert_with(|| Value::Object(Default::default()));
        }
    }
    Ok(root)
}

fn experiment_config(path: &Path, o: &Overrides) -> CliResult<ExperimentConfig> {
    let mut json = apply_sets(read_json(path)?, &o.set)?;
    let obj = json
        .as_object_mut()
        .ok_or_else(|| Failure::Config(format!("{}: config must be a JSON object", path.display())))?;
    if let Some(seed) = o.seed {
        obj.insert("seed".into(), seed.into());
    }
    if let Some(n) = o.replicates {
        obj.insert("replicates".into(), n.into());
    }
    if let Some(out) = &o.out {
        obj.insert("out".into(), out.to_string_lossy().into_owned().into());
    }
    let cfg: ExperimentConfig =
        serde_json::from_value(json).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cfg: &ExperimentConfig) -> CliResult<PathBuf> {
    cfg.out
        .clone()
        .ok_or_else(|| Failure::Config("no output directory: set \"out\" in the config or pass --out".into()))
}

fn simulate(a: SimulateArgs) -> CliResult {
    let cfg = experiment_config(&a.config, &a.overrides)?;
    let dir = out_dir(&cfg)?;
    let res = harness::run_experiment(&cfg, execution(a.overrides.sequential))?;
    harness::write_outputs(&dir, &res)?;
    say!(
        "{} replicates, mean final average regret {:.6}; outputs in {}",
        res.replicates.len(),
        res.mean_final_avg_regret(),
        dir.display()
    );
    Ok(())
}

// `1.571` is how pi/2 is usually written on a command line
fn snap_theta(param: SweepParam, v: f64) -> f64 {
    let half_pi = std::f64::consts::FRAC_PI_2;
    if param == SweepParam::Theta && (v - half_pi).abs() < 5e-4 {
        half_pi
    } else {
        v
    }
}

fn sweep(a: SweepArgs) -> CliResult {
    let cfg = experiment_config(&a.config, &a.overrides)?;
    let dir = out_dir(&cfg)?;
    let values = a
        .values
        .iter()
        .map(|s| {
            let s = s.trim();
            s.parse::<f64>()
                .map(|v| (s.to_string(), snap_theta(a.param, v)))
                .map_err(|_| Failure::Config(format!("--values: '{s}' is not a number")))
        })
        .collect::<CliResult<Vec<_>>>()?;
    for (_, v) in &values {
        harness::with_param(&cfg, a.param, *v)?.validate()?;
    }
    let results = harness::sweep(&cfg, a.param, &values, &dir, execution(a.overrides.sequential))?;
    for ((label, _), r) in values.iter().zip(&results) {
        say!("{label}: mean final average regret {:.6}", r.mean_final_avg_regret());
    }
    Ok(())
}

fn replay_cmd(a: ReplayArgs) -> CliResult {
    let mut json = match &a.config {
        Some(p) => read_json(p)?,
        None => Value::Object(Default::default()),
    };
    json = apply_sets(json, &a.set)?;
    let obj = json
        .as_object_mut()
        .ok_or_else(|| Failure::Config("replay config must be a JSON object".into()))?;
    if let Some(p) = &a.policy {
        obj.insert("policy".into(), p.as_str().into());
    }
    if let Some(n) = a.trials {
        obj.insert("trials".into(), n.into());
    }
    if let Some(s) = a.seed {
        obj.insert("seed".into(), s.into());
    }
    let config: ReplayConfig =
        serde_json::from_value(json).map_err(|e| Failure::Config(format!("replay config: {e}")))?;
    let ds = replay::load_csv(&a.data, &a.label, !a.raw)?;
    let res = replay::run_replay(&ds, &config, execution(a.sequential))?;
    say!(
        "final rolling error {:.6} over {} rows",
        res.final_rolling_error(),
        ds.len()
    );
    if let Some(dir) = &a.out {
        replay::write_replay(dir, &ds, &config, !a.raw, &res)?;
        say!("outputs in {}", dir.display());
    }
    Ok(())
}

fn schedule(a: ScheduleArgs) -> CliResult {
    let params = ScheduleParams {
        horizon: a.horizon,
        batches: a.batches,
        alpha: a.alpha,
        a_scale: a.a_scale,
        c_b: a.c_b,
        exponent: 3,
        grid_units: a.units,
    };
    let s: Schedule = if a.dim > 1 {
        np_schedule(&params, &Hyperbox::cube(a.dim, a.lower, a.upper)?)?
    } else {
        Schedule::new(&params, ProjectedInterval::new(a.lower, a.upper)?)?
    };
    let text = serde_json::to_string_pretty(&s).map_err(|e| Failure::Runtime(e.to_string()))?;
    say!("{text}");
    Ok(())
}

fn sade(a: SadeArgs) -> CliResult {
    let ds = replay::load_csv(&a.data, &a.response, a.standardize)?;
    let ys = ds
        .labels
        .iter()
        .map(|&l| {
            let s = &ds.classes[l];
            s.parse::<f64>()
                .map_err(|_| Failure::Config(format!("{}: response '{s}' is not numeric", a.data.display())))
        })
        .collect::<CliResult<Vec<f64>>>()?;
    let score = ScoreFunction::empirical_gaussian(&ds.features, a.ridge)?;
    let fit = sade_fit(&ds.features, &ys, &score, a.slices)?;
    let out = serde_json::json!({
        "features": ds.feature_names,
        "direction": fit.direction,
        "eigenvalues": fit.eigenvalues,
        "slice_counts": fit.slice_counts,
        "y_range": fit.y_range,
        "n": fit.n,
        "standardized": a.standardize,
    });
    say!(
        "{}",
        serde_json::to_string_pretty(&out).map_err(|e| Failure::Runtime(e.to_string()))?
    );
    Ok(())
}
