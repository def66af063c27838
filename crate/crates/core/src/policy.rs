//! Batched successive elimination over a hierarchical partition.
//!
//! Within a batch every live bin pulls its active arms round-robin. At the end
//! of batch `i` each live bin (all of them born at batch `i`) compares its
//! arms' empirical means against the threshold `U`; a bin left with one arm is
//! frozen on it, any other bin is replaced by its children, which inherit the
//! surviving arms. Rewards may be recorded as they arrive: the choices inside a
//! batch depend only on visit counts, so this is equivalent to revealing them
//! at the batch boundary.
//!
//! [`SuccessiveElimination`] is generic over the partition; [`BidsPolicy`]
//! instantiates it on intervals of the projected covariate `x·β`.

use std::collections::BTreeMap;
use std::fmt::Debug;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{BinId, ProjectedInterval, Schedule};
use crate::sir::Direction;

/// `4 sqrt(2 ln(2 T w) / m)`; infinite when `m = 0` or `2 T w <= 1`.
pub fn threshold_u(m: u64, horizon: u64, width: f64) -> f64 {
    let arg = 2.0 * horizon as f64 * width;
    if m == 0 || !(arg > 1.0) {
        return f64::INFINITY;
    }
    4.0 * (2.0 * arg.ln() / m as f64).sqrt()
}

/// Index of a bin as it appears in reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(untagged)]
pub enum BinIndex {
    Scalar(u64),
    Multi(Vec<u64>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EliminationReport {
    pub batch: usize,
    pub bin_layer: usize,
    pub bin_index: BinIndex,
    pub eliminated_arms: Vec<usize>,
    pub survivors: Vec<usize>,
    pub split: bool,
}

/// A nested family of partitions with `batches` layers.
pub trait Partition {
    type Bin: Copy + Ord + Debug;
    /// Per-round location data, computed once and coarsened to each layer.
    type Key;

    fn schedule(&self) -> &Schedule;
    fn dim(&self) -> usize;
    fn key(&self, x: &[f64]) -> Self::Key;
    fn bin_at(&self, key: &Self::Key, layer: usize) -> Self::Bin;
    fn layer_of(&self, bin: Self::Bin) -> usize;
    fn roots(&self) -> Vec<Self::Bin>;
    fn children(&self, bin: Self::Bin) -> Result<Vec<Self::Bin>>;
    /// Bin size entering the elimination threshold.
    fn threshold_width(&self, layer: usize) -> f64;
    fn report_index(&self, bin: Self::Bin) -> BinIndex;
    /// Whether `x` falls outside the partitioned region and had to be clamped.
    fn clamped(&self, _x: &[f64]) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinState {
    /// Active arms in their fixed pull order.
    pub active: Vec<usize>,
    pub visits: u64,
    pub pulls: Vec<u64>,
    pub sums: Vec<f64>,
}

impl BinState {
    fn new(active: Vec<usize>, arms: usize) -> Self {
        Self {
            active,
            visits: 0,
            pulls: vec![0; arms],
            sums: vec![0.0; arms],
        }
    }

    pub fn mean(&self, arm: usize) -> Option<f64> {
        (self.pulls[arm] > 0).then(|| self.sums[arm] / self.pulls[arm] as f64)
    }

    /// Arm for the next visit.
    pub fn next_arm(&self) -> usize {
        self.active[(self.visits % self.active.len() as u64) as usize]
    }

    /// Arms eliminated against threshold `u`; arms never pulled are kept.
    pub fn eliminate(&self, u: f64) -> Vec<usize> {
        let best = self
            .active
            .iter()
            .filter_map(|&a| self.mean(a))
            .fold(f64::NEG_INFINITY, f64::max);
        self.active
            .iter()
            .copied()
            .filter(|&a| self.mean(a).is_some_and(|m| best - m > u))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Frozen {
    pub arm: usize,
    pub visits: u64,
}

/// Where a covariate landed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cover<B> {
    Live(B),
    Frozen(B, usize),
}

/// Successive elimination with dynamic binning on a generic partition.
#[derive(Debug, Clone)]
pub struct SuccessiveElimination<P: Partition> {
    partition: P,
    arms: usize,
    live: BTreeMap<P::Bin, BinState>,
    frozen: BTreeMap<P::Bin, Frozen>,
    /// Current batch, 1-based; `batches + 1` never occurs.
    batch: usize,
    round: u64,
    clamped: u64,
}

impl<P: Partition> SuccessiveElimination<P> {
    pub fn new(partition: P, arms: usize) -> Result<Self> {
        if arms < 2 {
            return Err(Error::InvalidParameter(format!("need at least 2 arms, got {arms}")));
        }
        let all: Vec<usize> = (0..arms).collect();
        let live = partition
            .roots()
            .into_iter()
            .map(|b| (b, BinState::new(all.clone(), arms)))
            .collect();
        Ok(Self {
            partition,
            arms,
            live,
            frozen: BTreeMap::new(),
            batch: 1,
            round: 0,
            clamped: 0,
        })
    }

    pub fn partition(&self) -> &P {
        &self.partition
    }

    pub fn schedule(&self) -> &Schedule {
        self.partition.schedule()
    }

    pub fn arms(&self) -> usize {
        self.arms
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Rounds whose covariate had to be clamped onto the partition.
    pub fn clamped_rounds(&self) -> u64 {
        self.clamped
    }

    pub fn live_bins(&self) -> &BTreeMap<P::Bin, BinState> {
        &self.live
    }

    pub fn frozen_bins(&self) -> &BTreeMap<P::Bin, Frozen> {
        &self.frozen
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.partition.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.partition.dim(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    pub fn locate(&self, x: &[f64]) -> Result<Cover<P::Bin>> {
        self.check_dim(x)?;
        let key = self.partition.key(x);
        for layer in 1..self.batch {
            let bin = self.partition.bin_at(&key, layer);
            if let Some(f) = self.frozen.get(&bin) {
                return Ok(Cover::Frozen(bin, f.arm));
            }
        }
        let bin = self.partition.bin_at(&key, self.batch);
        if self.live.contains_key(&bin) {
            Ok(Cover::Live(bin))
        } else {
            // coverage is maintained by end_batch, so this is unreachable
            panic!("no live or frozen bin covers {bin:?} at batch {}", self.batch)
        }
    }

    pub fn choose(&self, x: &[f64]) -> Result<usize> {
        Ok(match self.locate(x)? {
            Cover::Frozen(_, arm) => arm,
            Cover::Live(bin) => self.live[&bin].next_arm(),
        })
    }

    pub fn record(&mut self, x: &[f64], arm: usize, reward: f64) -> Result<()> {
        if arm >= self.arms {
            return Err(Error::InvalidParameter(format!("arm {arm} out of range")));
        }
        if self.partition.clamped(x) {
            self.clamped += 1;
        }
        match self.locate(x)? {
            Cover::Frozen(bin, _) => {
                self.frozen.get_mut(&bin).unwrap().visits += 1;
            }
            Cover::Live(bin) => {
                let s = self.live.get_mut(&bin).unwrap();
                s.visits += 1;
                s.pulls[arm] += 1;
                s.sums[arm] += reward;
            }
        }
        self.round += 1;
        Ok(())
    }

    /// True when the current round is the end of a batch that still has an
    /// elimination step (`t = t_i`, `i < M`).
    pub fn at_boundary(&self) -> bool {
        let s = self.schedule();
        self.batch < s.batches && self.round == s.grid[self.batch]
    }

    pub fn end_batch(&mut self) -> Result<Vec<EliminationReport>> {
        let schedule = self.partition.schedule();
        if self.batch >= schedule.batches {
            return Err(Error::NotAtBoundary {
                round: self.round,
                next: schedule.horizon,
            });
        }
        let boundary = schedule.grid[self.batch];
        if self.round != boundary {
            return Err(Error::NotAtBoundary {
                round: self.round,
                next: boundary,
            });
        }
        let horizon = schedule.horizon;
        let batch = self.batch;
        let width = self.partition.threshold_width(batch);
        let mut reports = Vec::with_capacity(self.live.len());
        let mut next = BTreeMap::new();
        for (bin, state) in std::mem::take(&mut self.live) {
            let eliminated = if state.active.len() > 1 {
                state.eliminate(threshold_u(state.visits, horizon, width))
            } else {
                Vec::new()
            };
            let survivors: Vec<usize> = state
                .active
                .iter()
                .copied()
                .filter(|a| !eliminated.contains(a))
                .collect();
            let split = survivors.len() > 1;
            if split {
                for child in self.partition.children(bin)? {
                    next.insert(child, BinState::new(survivors.clone(), self.arms));
                }
            } else {
                self.frozen.insert(
                    bin,
                    Frozen {
                        arm: survivors[0],
                        visits: state.visits,
                    },
                );
            }
            reports.push(EliminationReport {
                batch,
                bin_layer: self.partition.layer_of(bin),
                bin_index: self.partition.report_index(bin),
                eliminated_arms: eliminated,
                survivors,
                split,
            });
        }
        self.live = next;
        self.batch += 1;
        Ok(reports)
    }

    /// Run every elimination step due at the current round.
    pub fn sync(&mut self) -> Result<Vec<EliminationReport>> {
        let mut out = Vec::new();
        while self.at_boundary() {
            out.extend(self.end_batch()?);
        }
        Ok(out)
    }

    /// Record a reward, then run any elimination step now due.
    pub fn observe(&mut self, x: &[f64], arm: usize, reward: f64) -> Result<Vec<EliminationReport>> {
        self.record(x, arm, reward)?;
        self.sync()
    }
}

/// Partition of covariate space into slabs of `x·β`.
#[derive(Debug, Clone)]
pub struct ProjectedPartition {
    schedule: Schedule,
    direction: Direction,
}

impl ProjectedPartition {
    pub fn new(schedule: Schedule, direction: Direction) -> Self {
        Self { schedule, direction }
    }

    pub fn direction(&self) -> &Direction {
        &self.direction
    }

    pub fn interval(&self) -> &ProjectedInterval {
        &self.schedule.interval
    }
}

impl Partition for ProjectedPartition {
    type Bin = BinId;
    type Key = u64;

    fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    fn dim(&self) -> usize {
        self.direction.dim()
    }

    fn key(&self, x: &[f64]) -> u64 {
        let u = self.schedule.interval.clamp(self.direction.project(x));
        self.schedule.finest_index(u)
    }

    fn bin_at(&self, key: &u64, layer: usize) -> BinId {
        BinId::new(layer, self.schedule.coarsen(*key, layer))
    }

    fn layer_of(&self, bin: BinId) -> usize {
        bin.layer
    }

    fn roots(&self) -> Vec<BinId> {
        (0..self.schedule.layer_count(1)).map(|i| BinId::new(1, i)).collect()
    }

    fn children(&self, bin: BinId) -> Result<Vec<BinId>> {
        self.schedule.children_of(bin)
    }

    fn threshold_width(&self, layer: usize) -> f64 {
        self.schedule.width(layer)
    }

    fn report_index(&self, bin: BinId) -> BinIndex {
        BinIndex::Scalar(bin.index)
    }

    fn clamped(&self, x: &[f64]) -> bool {
        !self.schedule.interval.contains(self.direction.project(x))
    }
}

/// The single-index policy: successive elimination on projected slabs.
pub type BidsPolicy = SuccessiveElimination<ProjectedPartition>;

impl BidsPolicy {
    pub fn bids(schedule: Schedule, direction: Direction, arms: usize) -> Result<Self> {
        SuccessiveElimination::new(ProjectedPartition::new(schedule, direction), arms)
    }
}
