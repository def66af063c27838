//! Experiment orchestration: configuration, seed fan-out, replicate loop and
//! output files.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::baseline::Hyperbox;
use crate::envs::{self, CovariateKind, Environment, Link, Sampler};
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::geometry::{GridUnits, ProjectedInterval, Schedule, ScheduleParams};
use crate::metrics::{self, AggregateRow, RegretTrace, TraceRow};
use crate::phased::{DirectionPlan, Family, PhasedConfig, PhasedPolicy, Region, RegionPlan, ScorePlan};
use crate::policy::EliminationReport;
use crate::replay::interval_from_pilot;
use crate::rng::{self, Stream};
use crate::sir::{perturb_direction, sin_angle, Direction};

/// Default batch-size constant, with widths measured as fractions of the interval.
pub const DEFAULT_C_B: f64 = 1.0;

fn one() -> f64 {
    1.0
}

fn ten() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Mode {
    /// Direction supplied up front, `β₀` rotated by `theta`.
    Pilot {
        #[serde(default)]
        theta: f64,
    },
    /// Direction estimated from an initial phase of `round(scale · T^{2/3})` rounds.
    Estimate {
        #[serde(default = "one")]
        t_init_scale: f64,
        #[serde(default = "ten")]
        slices: usize,
    },
}

impl Default for Mode {
    fn default() -> Self {
        Mode::Pilot { theta: 0.0 }
    }
}

fn default_normal_sd() -> f64 {
    5f64.sqrt()
}

fn default_c_f() -> f64 {
    envs::HardInstance::DEFAULT_C_F
}

fn default_covariates() -> CovariateKind {
    CovariateKind::TruncatedNormal
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvSpec {
    Setting {
        setting: u8,
        dim: usize,
        #[serde(default = "default_covariates")]
        covariates: CovariateKind,
        /// Per-coordinate sd of the untruncated normal covariates.
        #[serde(default = "default_normal_sd")]
        normal_sd: f64,
    },
    Hard {
        dim: usize,
        h: f64,
        #[serde(default = "one")]
        alpha: f64,
        #[serde(default = "default_c_f")]
        c_f: f64,
    },
    /// Arms with constant means over uniform covariates on `[-1, 1]^dim`.
    Constant { dim: usize, means: Vec<f64> },
}

impl Default for EnvSpec {
    fn default() -> Self {
        EnvSpec::Setting {
            setting: 1,
            dim: 5,
            covariates: default_covariates(),
            normal_sd: default_normal_sd(),
        }
    }
}

impl EnvSpec {
    pub fn dim(&self) -> usize {
        match self {
            EnvSpec::Setting { dim, .. } | EnvSpec::Hard { dim, .. } | EnvSpec::Constant { dim, .. } => *dim,
        }
    }

    pub fn build<R: Rng + ?Sized>(&self, sigma: f64, rng: &mut R) -> Result<Environment> {
        match self {
            EnvSpec::Setting {
                setting,
                dim,
                covariates,
                normal_sd,
            } => {
                let sampler = envs::setting_sampler(*covariates, *dim, *normal_sd)?;
                envs::make_setting(*setting, *dim, sigma, sampler, None, rng)
            }
            EnvSpec::Hard { dim, h, alpha, c_f } => envs::make_hard(*dim, *h, *alpha, *c_f, sigma, rng),
            EnvSpec::Constant { dim, means } => Environment::new(
                "constant",
                Direction::axis(*dim, 0),
                means.iter().map(|&value| Link::Constant { value }).collect(),
                Sampler::uniform_cube(*dim, 1.0)?,
                sigma,
            )
            .map(|e| e.with_index_bounds(-1.0, 1.0)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Bids,
    NpBaseline,
    /// Single-index policy handed the true direction.
    BidsOracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalSource {
    /// The known range of `x·β` (or of each coordinate for the baseline).
    #[default]
    True,
    /// Observed range of a pilot sample expanded by `expansion`.
    Estimated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub env: EnvSpec,
    #[serde(rename = "T")]
    pub horizon: u64,
    #[serde(rename = "M")]
    pub batches: usize,
    pub alpha: f64,
    pub a_scale: f64,
    #[serde(rename = "c_B")]
    pub c_b: f64,
    pub grid_units: GridUnits,
    pub sigma: f64,
    pub replicates: usize,
    pub seed: u64,
    pub policy: PolicyKind,
    pub interval: IntervalSource,
    pub expansion: f64,
    /// Unlabeled draws used to estimate the region when no initial phase exists.
    pub pilot_samples: usize,
    pub out: Option<PathBuf>,
    /// Write one CSV per replicate next to the aggregate.
    pub per_replicate_csv: bool,
    pub reports: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: Mode::default(),
            env: EnvSpec::default(),
            horizon: 100_000,
            batches: 5,
            alpha: 1.0,
            a_scale: 1.0,
            c_b: DEFAULT_C_B,
            grid_units: GridUnits::Normalized,
            sigma: 0.1,
            replicates: 20,
            seed: 0,
            policy: PolicyKind::Bids,
            interval: IntervalSource::True,
            expansion: 1.2,
            pilot_samples: 1000,
            out: None,
            per_replicate_csv: true,
            reports: true,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.replicates == 0 {
            return bad("replicates must be >= 1".into());
        }
        if !(self.sigma >= 0.0) {
            return bad(format!("sigma must be >= 0, got {}", self.sigma));
        }
        if self.env.dim() == 0 {
            return bad("env dimension must be >= 1".into());
        }
        if !(self.expansion >= 1.0) {
            return bad(format!("expansion must be >= 1, got {}", self.expansion));
        }
        match self.mode {
            Mode::Pilot { theta } if !(0.0..=std::f64::consts::FRAC_PI_2).contains(&theta) => {
                return bad(format!("theta must lie in [0, pi/2], got {theta}"));
            }
            Mode::Estimate { t_init_scale, slices } => {
                if !(t_init_scale > 0.0) || slices < 2 {
                    return bad("estimate mode needs t_init_scale > 0 and slices >= 2".into());
                }
                if self.batches < 3 {
                    return bad("estimate mode needs M >= 3".into());
                }
            }
            _ => {}
        }
        if self.interval == IntervalSource::Estimated && self.pilot_samples < 2 {
            return bad("pilot_samples must be >= 2".into());
        }
        // surface schedule errors (T, M, alpha, a_scale, c_B) before running
        Schedule::new(&self.schedule_params(), ProjectedInterval::new(0.0, 1.0)?)?;
        Ok(())
    }

    pub fn schedule_params(&self) -> ScheduleParams {
        ScheduleParams {
            horizon: self.horizon,
            batches: self.batches,
            alpha: self.alpha,
            a_scale: self.a_scale,
            c_b: self.c_b,
            exponent: 3,
            grid_units: self.grid_units,
        }
    }

    /// Rounds spent in the initial phase by the single-index policy.
    pub fn t_init(&self) -> u64 {
        match (self.mode.clone(), self.policy) {
            (Mode::Estimate { t_init_scale, .. }, PolicyKind::Bids) => {
                (t_init_scale * (self.horizon as f64).powf(2.0 / 3.0)).round() as u64
            }
            _ => 0,
        }
    }
}

/// Result of one replicate.
#[derive(Debug, Clone, Serialize)]
pub struct ReplicateOutcome {
    pub index: usize,
    pub seed: u64,
    pub beta: Direction,
    /// Direction used by the single-index policy.
    pub direction: Option<Direction>,
    pub sin_angle: Option<f64>,
    pub t_init: u64,
    pub initial_regret: f64,
    pub schedule: Option<Schedule>,
    pub final_regret: f64,
    pub final_avg_regret: f64,
    pub final_inferior: u64,
    pub clamped_rounds: u64,
    #[serde(skip)]
    pub rows: Vec<TraceRow>,
    #[serde(skip)]
    pub reports: Vec<EliminationReport>,
}

fn pilot_region(
    env: &Environment,
    config: &ExperimentConfig,
    family: Family,
    beta: &Direction,
    seed: u64,
) -> Result<Region> {
    let mut rng = rng::stream_rng(seed, Stream::Pilot);
    let xs = (0..config.pilot_samples)
        .map(|_| env.sample_x(&mut rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(match family {
        Family::Bids => {
            let proj: Vec<f64> = xs.iter().map(|x| beta.project(x)).collect();
            Region::Interval(interval_from_pilot(&proj, config.expansion)?)
        }
        Family::Nonparametric => {
            let all: Vec<f64> = xs.iter().flatten().copied().collect();
            let i = interval_from_pilot(&all, config.expansion)?;
            Region::Box(Hyperbox::cube(env.dim(), i.lower, i.upper)?)
        }
    })
}

fn true_region(env: &Environment, family: Family) -> Result<Region> {
    Ok(match family {
        Family::Bids => Region::Interval(ProjectedInterval::new(env.index_bounds.0, env.index_bounds.1)?),
        Family::Nonparametric => {
            let (lo, hi) = env.sampler.support();
            Region::Box(Hyperbox::new(lo, hi)?)
        }
    })
}

/// Build the policy a replicate runs.
pub fn build_policy(config: &ExperimentConfig, env: &Environment, seed: u64) -> Result<PhasedPolicy> {
    let family = match config.policy {
        PolicyKind::NpBaseline => Family::Nonparametric,
        _ => Family::Bids,
    };
    let t_init = config.t_init();
    let direction = match (config.policy, &config.mode) {
        (PolicyKind::NpBaseline, _) | (PolicyKind::BidsOracle, _) => DirectionPlan::Fixed(env.beta.clone()),
        (PolicyKind::Bids, Mode::Pilot { theta }) => {
            let mut rng = rng::stream_rng(seed, Stream::Policy);
            DirectionPlan::Fixed(perturb_direction(&env.beta, *theta, &mut rng)?)
        }
        (PolicyKind::Bids, Mode::Estimate { slices, .. }) => DirectionPlan::Estimate {
            score: ScorePlan::Known(env.sampler.score()?),
            slices: *slices,
        },
    };
    let region = match (config.interval, t_init) {
        (IntervalSource::True, _) => RegionPlan::Fixed(true_region(env, family)?),
        (IntervalSource::Estimated, 0) => {
            let beta = match &direction {
                DirectionPlan::Fixed(d) => d.clone(),
                DirectionPlan::Estimate { .. } => env.beta.clone(),
            };
            RegionPlan::Fixed(pilot_region(env, config, family, &beta, seed)?)
        }
        (IntervalSource::Estimated, _) => RegionPlan::Pilot {
            expansion: config.expansion,
        },
    };
    PhasedPolicy::new(PhasedConfig {
        family,
        arms: env.arms(),
        dim: env.dim(),
        horizon: config.horizon,
        t_init,
        params: config.schedule_params(),
        direction,
        region,
    })
}

/// Run replicate `index` and return its outcome together with the full trace.
pub fn run_replicate(config: &ExperimentConfig, index: usize, ts: &[usize]) -> Result<(ReplicateOutcome, RegretTrace)> {
    let seed = rng::replicate_seed(config.seed, index);
    let wrap = |e: Error| Error::Replicate {
        index,
        seed,
        source: Box::new(e),
    };
    let env = config
        .env
        .build(config.sigma, &mut rng::stream_rng(seed, Stream::Environment))
        .map_err(wrap)?;
    let mut policy = build_policy(config, &env, seed).map_err(wrap)?;
    let mut cov_rng = rng::stream_rng(seed, Stream::Covariates);
    let mut noise_rng = rng::stream_rng(seed, Stream::Noise);
    let horizon = config.horizon as usize;
    let mut trace = RegretTrace::with_capacity(horizon);
    let mut reports = Vec::new();
    let t_init = policy.config().t_init as usize;
    let mut run = || -> Result<()> {
        for _ in 0..horizon {
            let x = env.sample_x(&mut cov_rng)?;
            let z: f64 = noise_rng.sample(StandardNormal);
            let arm = policy.choose(&x)?;
            let y = env.reward(arm, &x, z);
            trace.push(env.oracle_regret(&x, arm));
            let r = policy.observe(&x, arm, y)?;
            if config.reports {
                reports.extend(r);
            }
        }
        Ok(())
    };
    run().map_err(wrap)?;
    let direction = policy.direction().cloned();
    let outcome = ReplicateOutcome {
        index,
        seed,
        sin_angle: direction.as_ref().map(|d| sin_angle(d, &env.beta)),
        beta: env.beta.clone(),
        direction,
        t_init: t_init as u64,
        initial_regret: if t_init > 0 { trace.cumulative[t_init - 1] } else { 0.0 },
        schedule: policy.schedule().cloned(),
        final_regret: trace.final_regret(),
        final_avg_regret: trace.final_average(),
        final_inferior: trace.inferior.last().copied().unwrap_or(0),
        clamped_rounds: policy.clamped_rounds(),
        rows: trace.rows(ts).collect(),
        reports,
    };
    Ok((outcome, trace))
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub replicates: Vec<ReplicateOutcome>,
    pub aggregate: Vec<AggregateRow>,
}

impl ExperimentResult {
    pub fn final_avg_regrets(&self) -> Vec<f64> {
        self.replicates.iter().map(|r| r.final_avg_regret).collect()
    }

    pub fn mean_final_avg_regret(&self) -> f64 {
        let v = self.final_avg_regrets();
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Mean and standard error per row across replicates.
pub fn aggregate_rows(per_replicate: &[Vec<TraceRow>]) -> Vec<AggregateRow> {
    let traces: Vec<RegretTrace> = per_replicate
        .iter()
        .map(|rows| RegretTrace {
            cumulative: rows.iter().map(|r| r.cum_regret).collect(),
            inferior: rows.iter().map(|r| r.inferior_count).collect(),
        })
        .collect();
    let idx: Vec<usize> = (1..=per_replicate[0].len()).collect();
    let mut out = metrics::aggregate(&traces, &idx).expect("rows share one length");
    for (row, src) in out.iter_mut().zip(&per_replicate[0]) {
        row.t = src.t;
        row.mean_avg_regret = row.mean_cum_regret / src.t as f64;
        row.se_avg_regret = row.se_cum_regret / src.t as f64;
    }
    out
}

pub fn run_experiment(config: &ExperimentConfig, execution: Execution) -> Result<ExperimentResult> {
    config.validate()?;
    let ts = metrics::sample_points(config.horizon as usize, metrics::MAX_ROWS);
    let outcomes = map_indexed(execution, config.replicates, |i| {
        run_replicate(config, i, &ts).map(|(o, _)| o)
    });
    let replicates = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
    let rows: Vec<Vec<TraceRow>> = replicates.iter().map(|r| r.rows.clone()).collect();
    Ok(ExperimentResult {
        aggregate: aggregate_rows(&rows),
        config: config.clone(),
        replicates,
    })
}

#[derive(Serialize)]
struct Metadata<'a> {
    config: &'a ExperimentConfig,
    policy: PolicyKind,
    generator: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<&'static str>,
    mean_final_avg_regret: f64,
    replicates: &'a [ReplicateOutcome],
}

#[derive(Serialize)]
struct ReportLine<'a> {
    replicate: usize,
    #[serde(flatten)]
    report: &'a EliminationReport,
}

const NP_NOTE: &str =
    "nonparametric baseline approximated by successive elimination on hypercubes with schedule exponent d+2";

/// Write metadata, aggregate, per-replicate CSVs and elimination reports into `dir`.
pub fn write_outputs(dir: &Path, result: &ExperimentResult) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta = Metadata {
        config: &result.config,
        policy: result.config.policy,
        generator: rng::GENERATOR,
        note: (result.config.policy == PolicyKind::NpBaseline).then_some(NP_NOTE),
        mean_final_avg_regret: result.mean_final_avg_regret(),
        replicates: &result.replicates,
    };
    metrics::write_json(&dir.join("metadata.json"), &meta)?;
    metrics::write_aggregate_csv(&dir.join("aggregate.csv"), &result.aggregate)?;
    if result.config.per_replicate_csv {
        for r in &result.replicates {
            let path = dir.join(format!("replicate_{:03}.csv", r.index));
            let mut w = csv::Writer::from_path(&path).map_err(|e| match e.into_kind() {
                csv::ErrorKind::Io(io) => Error::io(&path, io),
                other => Error::Config(format!("{other:?}")),
            })?;
            for row in &r.rows {
                w.serialize(row)?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
        }
    }
    if result.config.reports {
        let lines = result.replicates.iter().flat_map(|r| {
            r.reports.iter().map(move |report| ReportLine {
                replicate: r.index,
                report,
            })
        });
        metrics::write_json_lines(&dir.join("reports.jsonl"), lines)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Theta,
    Sigma,
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "theta" => Ok(SweepParam::Theta),
            "sigma" => Ok(SweepParam::Sigma),
            other => Err(Error::Config(format!(
                "unknown sweep parameter '{other}' (theta or sigma)"
            ))),
        }
    }
}

/// Config with `param` set to `value`.
pub fn with_param(base: &ExperimentConfig, param: SweepParam, value: f64) -> Result<ExperimentConfig> {
    let mut c = base.clone();
    match param {
        SweepParam::Sigma => c.sigma = value,
        SweepParam::Theta => match &mut c.mode {
            Mode::Pilot { theta } => *theta = value,
            Mode::Estimate { .. } => return Err(Error::Config("theta sweeps need pilot mode".into())),
        },
    }
    Ok(c)
}

/// Run one experiment per value; each lands in `<out>/<param>_<label>`.
pub fn sweep(
    base: &ExperimentConfig,
    param: SweepParam,
    values: &[(String, f64)],
    out: &Path,
    execution: Execution,
) -> Result<Vec<ExperimentResult>> {
    let name = match param {
        SweepParam::Theta => "theta",
        SweepParam::Sigma => "sigma",
    };
    values
        .iter()
        .map(|(label, v)| {
            let cfg = with_param(base, param, *v)?;
            let res = run_experiment(&cfg, execution)?;
            write_outputs(&out.join(format!("{name}_{label}")), &res)?;
            Ok(res)
        })
        .collect()
}
