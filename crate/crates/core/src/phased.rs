//! Two-phase wrapper shared by the simulation harness and dataset replay.
//!
//! For the first `t_init` rounds arms are pulled cyclically (`arm = t mod K`)
//! and the observations are kept. At `t_init` the wrapper fixes the direction
//! (given, or SADE per arm fused with equal weights) and the partitioned region
//! (given, or the observed range expanded by a factor `C`), schedules the
//! remaining `M - 1` batches over `T - t_init` rounds and hands over to the
//! elimination policy. With `t_init = 0` the policy runs all `M` batches.

use serde::{Deserialize, Serialize};

use crate::baseline::{np_schedule, Hyperbox, HypercubePartition, NpPolicy};
use crate::error::{Error, Result};
use crate::geometry::{ProjectedInterval, Schedule, ScheduleParams};
use crate::policy::{BidsPolicy, EliminationReport, SuccessiveElimination};
use crate::replay::interval_from_pilot;
use crate::sir::{fused_direction, ArmSamples, Direction, ScoreFunction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Bids,
    Nonparametric,
}

#[derive(Debug, Clone)]
pub enum ScorePlan {
    Known(ScoreFunction),
    /// Gaussian score from the initial-phase covariates, with a relative ridge.
    Empirical {
        ridge: f64,
    },
}

#[derive(Debug, Clone)]
pub enum DirectionPlan {
    Fixed(Direction),
    Estimate { score: ScorePlan, slices: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    Interval(ProjectedInterval),
    Box(Hyperbox),
}

#[derive(Debug, Clone, PartialEq)]
pub enum RegionPlan {
    Fixed(Region),
    /// Range seen during the initial phase, expanded by `expansion`.
    Pilot {
        expansion: f64,
    },
}

#[derive(Debug, Clone)]
pub struct PhasedConfig {
    pub family: Family,
    pub arms: usize,
    pub dim: usize,
    /// Total rounds including the initial phase; `params.horizon` is ignored.
    pub horizon: u64,
    pub t_init: u64,
    /// Schedule template; `batches` counts the initial phase when `t_init > 0`.
    pub params: ScheduleParams,
    pub direction: DirectionPlan,
    pub region: RegionPlan,
}

#[derive(Debug, Clone)]
enum Inner {
    Bids(BidsPolicy),
    Np(NpPolicy),
}

#[derive(Debug, Clone)]
pub struct PhasedPolicy {
    config: PhasedConfig,
    round: u64,
    samples: Vec<ArmSamples>,
    inner: Option<Inner>,
    direction: Option<Direction>,
}

/// Smallest phase length that leaves every per-arm SADE fit two points per slice.
pub fn min_initial_rounds(slices: usize, arms: usize) -> u64 {
    4 * slices as u64 * arms as u64
}

impl PhasedPolicy {
    pub fn new(config: PhasedConfig) -> Result<Self> {
        if config.arms < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 arms, got {}",
                config.arms
            )));
        }
        if config.t_init >= config.horizon {
            return Err(Error::InvalidParameter(format!(
                "initial phase ({}) must be shorter than the horizon ({})",
                config.t_init, config.horizon
            )));
        }
        if config.t_init > 0 && config.params.batches < 3 {
            return Err(Error::InvalidParameter(
                "an initial phase needs M >= 3 so that two batches remain".into(),
            ));
        }
        if config.t_init == 0 && matches!(config.region, RegionPlan::Pilot { .. }) {
            return Err(Error::InvalidParameter("a pilot region needs an initial phase".into()));
        }
        if let (Family::Bids, DirectionPlan::Estimate { slices, .. }) = (config.family, &config.direction) {
            let need = min_initial_rounds(*slices, config.arms);
            if config.t_init < need {
                return Err(Error::InvalidParameter(format!(
                    "initial phase of {} rounds is below 4HK = {need}",
                    config.t_init
                )));
            }
        }
        let mut p = Self {
            samples: vec![ArmSamples::default(); config.arms],
            round: 0,
            inner: None,
            direction: None,
            config,
        };
        if p.config.t_init == 0 {
            p.start()?;
        }
        Ok(p)
    }

    pub fn config(&self) -> &PhasedConfig {
        &self.config
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    /// Direction in use once the initial phase is over (single-index family only).
    pub fn direction(&self) -> Option<&Direction> {
        self.direction.as_ref()
    }

    pub fn schedule(&self) -> Option<&Schedule> {
        match self.inner.as_ref()? {
            Inner::Bids(p) => Some(p.schedule()),
            Inner::Np(p) => Some(p.schedule()),
        }
    }

    pub fn clamped_rounds(&self) -> u64 {
        match &self.inner {
            Some(Inner::Bids(p)) => p.clamped_rounds(),
            Some(Inner::Np(p)) => p.clamped_rounds(),
            None => 0,
        }
    }

    fn start(&mut self) -> Result<()> {
        let c = &self.config;
        let phases = if c.t_init > 0 {
            c.params.batches - 1
        } else {
            c.params.batches
        };
        let params = ScheduleParams {
            horizon: c.horizon - c.t_init,
            batches: phases,
            ..c.params.clone()
        };
        let pilot_xs = || self.samples.iter().flat_map(|s| s.xs.iter());
        match c.family {
            Family::Bids => {
                let direction = match &c.direction {
                    DirectionPlan::Fixed(d) => d.clone(),
                    DirectionPlan::Estimate { score, slices } => {
                        let score = match score {
                            ScorePlan::Known(s) => s.clone(),
                            ScorePlan::Empirical { ridge } => {
                                let xs: Vec<Vec<f64>> = pilot_xs().cloned().collect();
                                ScoreFunction::empirical_gaussian(&xs, *ridge)?
                            }
                        };
                        fused_direction(&self.samples, &score, *slices)?
                    }
                };
                let interval = match &c.region {
                    RegionPlan::Fixed(Region::Interval(i)) => *i,
                    RegionPlan::Fixed(Region::Box(_)) => {
                        return Err(Error::InvalidParameter("single-index policy needs an interval".into()));
                    }
                    RegionPlan::Pilot { expansion } => {
                        let proj: Vec<f64> = pilot_xs().map(|x| direction.project(x)).collect();
                        interval_from_pilot(&proj, *expansion)?
                    }
                };
                let schedule = Schedule::new(&params, interval)?;
                self.direction = Some(direction.clone());
                self.inner = Some(Inner::Bids(BidsPolicy::bids(schedule, direction, c.arms)?));
            }
            Family::Nonparametric => {
                let region = match &c.region {
                    RegionPlan::Fixed(Region::Box(b)) => b.clone(),
                    RegionPlan::Fixed(Region::Interval(i)) => Hyperbox::cube(c.dim, i.lower, i.upper)?,
                    RegionPlan::Pilot { expansion } => {
                        let all: Vec<f64> = pilot_xs().flat_map(|x| x.iter().copied()).collect();
                        let i = interval_from_pilot(&all, *expansion)?;
                        Hyperbox::cube(c.dim, i.lower, i.upper)?
                    }
                };
                let schedule = np_schedule(&params, &region)?;
                self.inner = Some(Inner::Np(SuccessiveElimination::new(
                    HypercubePartition::new(schedule, region)?,
                    c.arms,
                )?));
            }
        }
        for s in &mut self.samples {
            *s = ArmSamples::default();
        }
        Ok(())
    }

    pub fn choose(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.config.dim {
            return Err(Error::DimensionMismatch {
                expected: self.config.dim,
                actual: x.len(),
            });
        }
        match &self.inner {
            None => Ok((self.round % self.config.arms as u64) as usize),
            Some(Inner::Bids(p)) => p.choose(x),
            Some(Inner::Np(p)) => p.choose(x),
        }
    }

    pub fn observe(&mut self, x: &[f64], arm: usize, reward: f64) -> Result<Vec<EliminationReport>> {
        if self.round >= self.config.horizon {
            return Err(Error::InvalidParameter("observation past the horizon".into()));
        }
        self.round += 1;
        match &mut self.inner {
            None => {
                let s = &mut self.samples[arm];
                s.xs.push(x.to_vec());
                s.ys.push(reward);
                if self.round == self.config.t_init {
                    self.start()?;
                }
                Ok(Vec::new())
            }
            Some(inner) => {
                let mut reports = match inner {
                    Inner::Bids(p) => p.observe(x, arm, reward)?,
                    Inner::Np(p) => p.observe(x, arm, reward)?,
                };
                if self.config.t_init > 0 {
                    reports.iter_mut().for_each(|r| r.batch += 1);
                }
                Ok(reports)
            }
        }
    }
}
