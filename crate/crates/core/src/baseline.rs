//! Nonparametric baseline: successive elimination on hypercubes of the full
//! covariate space.
//!
//! This approximates the batched nonparametric policy by substituting the
//! exponent `d + 2` for `3` in the split and batch-size rules; splitting a
//! layer-`i` cube produces `b_i^d` children. With `d = 1` and equal intervals
//! it makes exactly the same decisions as the single-index policy with
//! direction `(1)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ProjectedInterval, Schedule, ScheduleParams};
use crate::policy::{BinIndex, Partition, SuccessiveElimination};

/// Axis-aligned box `[lower_j, upper_j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperbox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Hyperbox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                actual: upper.len(),
            });
        }
        for (l, u) in lower.iter().zip(&upper) {
            ProjectedInterval::new(*l, *u)?;
        }
        Ok(Self { lower, upper })
    }

    pub fn cube(dim: usize, lower: f64, upper: f64) -> Result<Self> {
        Self::new(vec![lower; dim], vec![upper; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| v >= l && v <= u)
    }

    /// Geometric-mean edge length.
    pub fn edge(&self) -> f64 {
        let first = self.upper[0] - self.lower[0];
        if self.lower.iter().zip(&self.upper).all(|(l, u)| u - l == first) {
            return first;
        }
        let log_sum: f64 = self.lower.iter().zip(&self.upper).map(|(l, u)| (u - l).ln()).sum();
        (log_sum / self.dim() as f64).exp()
    }

    /// One-dimensional interval standing in for the box in the schedule.
    pub fn reference_interval(&self) -> Result<ProjectedInterval> {
        let uniform = self.lower.iter().all(|l| *l == self.lower[0]) && self.upper.iter().all(|u| *u == self.upper[0]);
        if uniform {
            ProjectedInterval::new(self.lower[0], self.upper[0])
        } else {
            let lo = self.lower.iter().sum::<f64>() / self.dim() as f64;
            ProjectedInterval::new(lo, lo + self.edge())
        }
    }
}

/// Schedule parameters with the exponent raised to `d + 2`.
pub fn np_params(base: &ScheduleParams, dim: usize) -> ScheduleParams {
    ScheduleParams {
        exponent: dim as u32 + 2,
        ..base.clone()
    }
}

/// The baseline schedule for a box in `R^d`.
pub fn np_schedule(base: &ScheduleParams, region: &Hyperbox) -> Result<Schedule> {
    Schedule::new(&np_params(base, region.dim()), region.reference_interval()?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HyperBinId {
    pub layer: usize,
    /// Mixed-radix code of the per-axis indices, first axis most significant.
    pub code: u64,
}

#[derive(Debug, Clone)]
pub struct HypercubePartition {
    schedule: Schedule,
    region: Hyperbox,
    finest: u64,
}

impl HypercubePartition {
    pub fn new(schedule: Schedule, region: Hyperbox) -> Result<Self> {
        let finest = schedule.layer_count(schedule.batches);
        if finest.checked_pow(region.dim() as u32).is_none() {
            return Err(Error::InvalidParameter(format!(
                "{finest}^{} cubes overflow the bin index",
                region.dim()
            )));
        }
        Ok(Self {
            schedule,
            region,
            finest,
        })
    }

    pub fn region(&self) -> &Hyperbox {
        &self.region
    }

    fn axis_index(&self, axis: usize, v: f64) -> u64 {
        let (l, u) = (self.region.lower[axis], self.region.upper[axis]);
        let r = (v.clamp(l, u) - l) / (u - l);
        let idx = (r * self.finest as f64).floor();
        if idx <= 0.0 {
            0
        } else {
            (idx as u64).min(self.finest - 1)
        }
    }

    fn encode(&self, layer: usize, idx: impl Iterator<Item = u64>) -> HyperBinId {
        let n = self.schedule.layer_count(layer);
        HyperBinId {
            layer,
            code: idx.fold(0, |acc, i| acc * n + i),
        }
    }

    /// Per-axis indices of a cube.
    pub fn multi_index(&self, bin: HyperBinId) -> Vec<u64> {
        let n = self.schedule.layer_count(bin.layer);
        let mut out = vec![0; self.region.dim()];
        let mut c = bin.code;
        for slot in out.iter_mut().rev() {
            *slot = c % n;
            c /= n;
        }
        out
    }

    pub fn bin_of(&self, x: &[f64], layer: usize) -> HyperBinId {
        self.bin_at(&self.key(x), layer)
    }
}

impl Partition for HypercubePartition {
    type Bin = HyperBinId;
    type Key = Vec<u64>;

    fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    fn dim(&self) -> usize {
        self.region.dim()
    }

    fn key(&self, x: &[f64]) -> Vec<u64> {
        x.iter().enumerate().map(|(j, &v)| self.axis_index(j, v)).collect()
    }

    fn bin_at(&self, key: &Vec<u64>, layer: usize) -> HyperBinId {
        let ratio = self.finest / self.schedule.layer_count(layer);
        self.encode(layer, key.iter().map(|i| i / ratio))
    }

    fn layer_of(&self, bin: HyperBinId) -> usize {
        bin.layer
    }

    fn roots(&self) -> Vec<HyperBinId> {
        let n = self.schedule.layer_count(1);
        let total = n.pow(self.region.dim() as u32);
        (0..total).map(|code| HyperBinId { layer: 1, code }).collect()
    }

    fn children(&self, bin: HyperBinId) -> Result<Vec<HyperBinId>> {
        if bin.layer >= self.schedule.batches {
            return Err(Error::LeafBin { layer: bin.layer });
        }
        let b = self.schedule.split_after(bin.layer);
        let base = self.multi_index(bin);
        let d = base.len();
        let count = b.pow(d as u32);
        Ok((0..count)
            .map(|mut o| {
                let mut offs = vec![0; d];
                for slot in offs.iter_mut().rev() {
                    *slot = o % b;
                    o /= b;
                }
                self.encode(bin.layer + 1, base.iter().zip(offs).map(|(i, j)| i * b + j))
            })
            .collect())
    }

    fn threshold_width(&self, layer: usize) -> f64 {
        self.region.edge() / self.schedule.layer_count(layer) as f64
    }

    fn report_index(&self, bin: HyperBinId) -> BinIndex {
        BinIndex::Multi(self.multi_index(bin))
    }

    fn clamped(&self, x: &[f64]) -> bool {
        !self.region.contains(x)
    }
}

pub type NpPolicy = SuccessiveElimination<HypercubePartition>;

impl NpPolicy {
    pub fn nonparametric(base: &ScheduleParams, region: Hyperbox, arms: usize) -> Result<Self> {
        let schedule = np_schedule(base, &region)?;
        SuccessiveElimination::new(HypercubePartition::new(schedule, region)?, arms)
    }
}
