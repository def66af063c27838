//! Index-projected hierarchical partition and batch schedules.
//!
//! A schedule fixes, for a horizon `T` and `M` batches, the split factors
//! `b_0..b_{M-2}`, the per-layer bin widths `w_1..w_M` over a projected
//! interval and the batch grid `0 = t_0 <= t_1 <= ... <= t_M = T`.
//!
//! Layer `i` (1-based) splits the interval into `n_i = b_0 * ... * b_{i-1}`
//! equal bins. Only `M - 1` factors exist, so the last layer repeats the
//! previous one (`b_{M-1} = 1`).
//!
//! The same machinery drives the nonparametric baseline: the exponent `3`
//! in the split and batch-size rules becomes `d + 2` there.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponent of the single-index schedule (one projected dimension plus two).
pub const INDEX_EXPONENT: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectedInterval {
    pub lower: f64,
    pub upper: f64,
}

impl ProjectedInterval {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite()) || lower >= upper {
            return Err(Error::InvalidParameter(format!(
                "interval requires finite lower < upper, got [{lower}, {upper}]"
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, u: f64) -> bool {
        u >= self.lower && u <= self.upper
    }

    pub fn clamp(&self, u: f64) -> f64 {
        u.clamp(self.lower, self.upper)
    }
}

/// Units in which bin widths enter the batch-size rule.
///
/// `Projected` evaluates `c_B w^-e log(2 T w)` with widths in projected
/// units. `Normalized` evaluates it with widths as fractions of the interval
/// length, which makes the grid invariant to rescaling the covariates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridUnits {
    Projected,
    #[default]
    Normalized,
}

/// Snap to the nearest integer when within 1e-9 (relative), else floor.
///
/// Perfect powers such as `8^(2/3)` land a few ulps below the integer in
/// floating point; exact arithmetic floors them to the integer itself.
fn floor_snapped(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r
    } else {
        x.floor()
    }
}

fn check_schedule_inputs(horizon: u64, batches: usize, alpha: f64, a_scale: f64) -> Result<()> {
    if horizon < 2 {
        return Err(Error::InvalidParameter(format!("horizon must be >= 2, got {horizon}")));
    }
    if batches < 2 {
        return Err(Error::InvalidParameter(format!(
            "batch count must be >= 2, got {batches}"
        )));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "margin alpha must lie in (0, 1], got {alpha}"
        )));
    }
    if !(a_scale > 0.0 && a_scale.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "a_scale must be positive, got {a_scale}"
        )));
    }
    Ok(())
}

/// `gamma = (1 + alpha) / exponent`.
pub fn gamma(alpha: f64, exponent: u32) -> f64 {
    (1.0 + alpha) / exponent as f64
}

/// Regret exponent `(1 - gamma) / (1 - gamma^M)`.
pub fn rate_exponent(alpha: f64, batches: usize, exponent: u32) -> f64 {
    let g = gamma(alpha, exponent);
    (1.0 - g) / (1.0 - g.powi(batches as i32))
}

/// Split factors `b_0..b_{M-2}` for the single-index partition.
pub fn compute_split_factors(horizon: u64, batches: usize, alpha: f64, a_scale: f64) -> Result<Vec<u64>> {
    split_factors_with_exponent(horizon, batches, alpha, a_scale, INDEX_EXPONENT)
}

/// Split factors with a general exponent `e`:
/// `a = a_scale * T^((1-g)/(1-g^M))`, `b_0 = floor(a^(1/e))`,
/// `b_i = floor(b_{i-1}^g)`, all clamped at 1.
pub fn split_factors_with_exponent(
    horizon: u64,
    batches: usize,
    alpha: f64,
    a_scale: f64,
    exponent: u32,
) -> Result<Vec<u64>> {
    check_schedule_inputs(horizon, batches, alpha, a_scale)?;
    if exponent == 0 {
        return Err(Error::InvalidParameter("schedule exponent must be >= 1".into()));
    }
    let g = gamma(alpha, exponent);
    let a = a_scale * (horizon as f64).powf(rate_exponent(alpha, batches, exponent));
    let mut factors = Vec::with_capacity(batches - 1);
    let b0 = floor_snapped(a.powf(1.0 / exponent as f64)).max(1.0);
    factors.push(b0 as u64);
    for i in 1..batches - 1 {
        let prev = factors[i - 1] as f64;
        factors.push(floor_snapped(prev.powf(g)).max(1.0) as u64);
    }
    Ok(factors)
}

/// Number of bins in each layer `1..=M` given `M - 1` split factors.
pub fn layer_counts(split_factors: &[u64]) -> Vec<u64> {
    let m = split_factors.len() + 1;
    let mut counts = Vec::with_capacity(m);
    let mut n: u64 = 1;
    for i in 0..m {
        if i < split_factors.len() {
            n = n.saturating_mul(split_factors[i]);
        }
        counts.push(n);
    }
    counts
}

/// Widths `w_1..w_M`, `w_i = |I| / n_i`. The last layer inherits `w_{M-1}`.
pub fn compute_widths(interval: &ProjectedInterval, split_factors: &[u64]) -> Vec<f64> {
    let length = interval.width();
    layer_counts(split_factors)
        .into_iter()
        .map(|n| length / n as f64)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleWarning {
    /// Batch `batch` (1-based) received zero rounds.
    EmptyBatch { batch: usize },
    /// The batch lengths add up to at least the horizon; later batches collapse onto `T`.
    Saturated { requested: u64, horizon: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    /// `t_0..t_M`.
    pub points: Vec<u64>,
    /// Unclipped batch lengths `Δ_1..Δ_{M-1}`.
    pub deltas: Vec<u64>,
    pub warnings: Vec<ScheduleWarning>,
}

impl Grid {
    pub fn is_degenerate(&self) -> bool {
        !self.warnings.is_empty()
    }
}

/// Batch grid for the single-index schedule (exponent 3).
pub fn compute_grid(horizon: u64, widths: &[f64], c_b: f64) -> Result<Grid> {
    grid_with_exponent(horizon, widths, c_b, INDEX_EXPONENT)
}

/// `Δ_i = floor(c_B * w_i^-e * ln(2 T w_i))` for `1 <= i <= M-1`; `Δ_i = 0`
/// when `2 T w_i <= 1`. Cumulative sums are clipped at `T` and `t_M = T`.
pub fn grid_with_exponent(horizon: u64, widths: &[f64], c_b: f64, exponent: u32) -> Result<Grid> {
    if !(c_b > 0.0 && c_b.is_finite()) {
        return Err(Error::InvalidParameter(format!("c_B must be positive, got {c_b}")));
    }
    if widths.len() < 2 {
        return Err(Error::InvalidParameter("a grid needs at least two layers".into()));
    }
    let batches = widths.len();
    let t = horizon as f64;
    let mut points = Vec::with_capacity(batches + 1);
    let mut deltas = Vec::with_capacity(batches - 1);
    let mut warnings = Vec::new();
    points.push(0u64);
    let mut requested: u64 = 0;
    for (i, &w) in widths[..batches - 1].iter().enumerate() {
        let arg = 2.0 * t * w;
        let delta = if arg <= 1.0 {
            0
        } else {
            let raw = (c_b * w.powi(-(exponent as i32)) * arg.ln()).floor();
            if raw >= u64::MAX as f64 {
                u64::MAX
            } else {
                raw as u64
            }
        };
        if delta == 0 {
            warnings.push(ScheduleWarning::EmptyBatch { batch: i + 1 });
        }
        deltas.push(delta);
        requested = requested.saturating_add(delta);
        let prev = *points.last().unwrap();
        points.push(prev.saturating_add(delta).min(horizon));
    }
    if requested >= horizon {
        warnings.push(ScheduleWarning::Saturated { requested, horizon });
    }
    points.push(horizon);
    Ok(Grid {
        points,
        deltas,
        warnings,
    })
}

/// Inputs of a schedule, independent of the interval it will partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub horizon: u64,
    pub batches: usize,
    pub alpha: f64,
    pub a_scale: f64,
    pub c_b: f64,
    pub exponent: u32,
    pub grid_units: GridUnits,
}

impl ScheduleParams {
    pub fn new(horizon: u64, batches: usize, alpha: f64) -> Self {
        Self {
            horizon,
            batches,
            alpha,
            a_scale: 1.0,
            c_b: 1.0,
            exponent: INDEX_EXPONENT,
            grid_units: GridUnits::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BinId {
    /// 1-based layer.
    pub layer: usize,
    pub index: u64,
}

impl BinId {
    pub fn new(layer: usize, index: u64) -> Self {
        Self { layer, index }
    }
}

/// Immutable schedule plus the layer structure it induces on an interval.
#[derive(Debug, Clone, Serialize)]
pub struct Schedule {
    #[serde(rename = "T")]
    pub horizon: u64,
    #[serde(rename = "M")]
    pub batches: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub a_scale: f64,
    #[serde(rename = "c_B")]
    pub c_b: f64,
    pub exponent: u32,
    pub grid_units: GridUnits,
    pub interval: ProjectedInterval,
    pub split_factors: Vec<u64>,
    pub widths: Vec<f64>,
    pub grid: Vec<u64>,
    pub warnings: Vec<ScheduleWarning>,
    #[serde(skip)]
    layer_counts: Vec<u64>,
}

impl Schedule {
    pub fn new(params: &ScheduleParams, interval: ProjectedInterval) -> Result<Self> {
        let factors = split_factors_with_exponent(
            params.horizon,
            params.batches,
            params.alpha,
            params.a_scale,
            params.exponent,
        )?;
        let widths = compute_widths(&interval, &factors);
        let grid_widths: Vec<f64> = match params.grid_units {
            GridUnits::Projected => widths.clone(),
            GridUnits::Normalized => widths.iter().map(|w| w / interval.width()).collect(),
        };
        let grid = grid_with_exponent(params.horizon, &grid_widths, params.c_b, params.exponent)?;
        for w in &grid.warnings {
            log::warn!("degenerate schedule: {w:?}");
        }
        Ok(Self {
            horizon: params.horizon,
            batches: params.batches,
            alpha: params.alpha,
            gamma: gamma(params.alpha, params.exponent),
            a_scale: params.a_scale,
            c_b: params.c_b,
            exponent: params.exponent,
            grid_units: params.grid_units,
            interval,
            layer_counts: layer_counts(&factors),
            split_factors: factors,
            widths,
            grid: grid.points,
            warnings: grid.warnings,
        })
    }

    /// Build a schedule from explicit factors and grid points.
    pub fn from_parts(interval: ProjectedInterval, split_factors: Vec<u64>, grid: Vec<u64>) -> Result<Self> {
        if split_factors.is_empty() || split_factors.contains(&0) {
            return Err(Error::InvalidParameter(
                "split factors must be non-empty and >= 1".into(),
            ));
        }
        let batches = split_factors.len() + 1;
        if grid.len() != batches + 1 || grid[0] != 0 || grid.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidParameter(format!(
                "grid must hold {} nondecreasing points starting at 0",
                batches + 1
            )));
        }
        let horizon = *grid.last().unwrap();
        Ok(Self {
            horizon,
            batches,
            alpha: 1.0,
            gamma: gamma(1.0, INDEX_EXPONENT),
            a_scale: 1.0,
            c_b: 1.0,
            exponent: INDEX_EXPONENT,
            grid_units: GridUnits::Projected,
            interval,
            widths: compute_widths(&interval, &split_factors),
            layer_counts: layer_counts(&split_factors),
            split_factors,
            grid,
            warnings: Vec::new(),
        })
    }

    pub fn is_degenerate(&self) -> bool {
        !self.warnings.is_empty()
    }

    /// Bins in layer `layer` (1-based).
    pub fn layer_count(&self, layer: usize) -> u64 {
        self.layer_counts[layer - 1]
    }

    /// Children per bin of layer `layer`; 1 for the pass-through last split.
    pub fn split_after(&self, layer: usize) -> u64 {
        self.split_factors.get(layer).copied().unwrap_or(1)
    }

    pub fn width(&self, layer: usize) -> f64 {
        self.widths[layer - 1]
    }

    fn check_layer(&self, layer: usize) -> Result<()> {
        if layer == 0 || layer > self.batches {
            return Err(Error::InvalidParameter(format!(
                "layer {layer} outside 1..={}",
                self.batches
            )));
        }
        Ok(())
    }

    /// Index of `u` in the finest layer, half-open bins with the last one closed.
    pub(crate) fn finest_index(&self, u: f64) -> u64 {
        let n = *self.layer_counts.last().unwrap();
        let r = (u - self.interval.lower) / self.interval.width();
        let idx = (r * n as f64).floor();
        if idx <= 0.0 {
            0
        } else {
            (idx as u64).min(n - 1)
        }
    }

    /// Coarsen a finest-layer index to `layer`.
    pub(crate) fn coarsen(&self, finest: u64, layer: usize) -> u64 {
        let n = *self.layer_counts.last().unwrap();
        finest / (n / self.layer_counts[layer - 1])
    }

    pub fn bin_of(&self, u: f64, layer: usize) -> Result<BinId> {
        self.check_layer(layer)?;
        if !self.interval.contains(u) {
            return Err(Error::OutOfRange {
                value: u,
                lower: self.interval.lower,
                upper: self.interval.upper,
            });
        }
        Ok(BinId::new(layer, self.coarsen(self.finest_index(u), layer)))
    }

    pub fn parent_of(&self, bin: BinId) -> Option<BinId> {
        if bin.layer <= 1 {
            return None;
        }
        Some(BinId::new(bin.layer - 1, bin.index / self.split_after(bin.layer - 1)))
    }

    pub fn children_of(&self, bin: BinId) -> Result<Vec<BinId>> {
        self.check_layer(bin.layer)?;
        if bin.layer == self.batches {
            return Err(Error::LeafBin { layer: bin.layer });
        }
        let b = self.split_after(bin.layer);
        Ok((0..b).map(|j| BinId::new(bin.layer + 1, bin.index * b + j)).collect())
    }

    /// `[lo, hi)` extent of a bin; the last bin of a layer ends exactly at `upper`.
    pub fn extent(&self, bin: BinId) -> (f64, f64) {
        let n = self.layer_count(bin.layer);
        let length = self.interval.width();
        let lo = self.interval.lower + length * (bin.index as f64 / n as f64);
        let hi = if bin.index + 1 == n {
            self.interval.upper
        } else {
            self.interval.lower + length * ((bin.index + 1) as f64 / n as f64)
        };
        (lo, hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> ProjectedInterval {
        ProjectedInterval::new(0.0, 1.0).unwrap()
    }

    #[test]
    fn split_factors_reference_points() {
        assert_eq!(compute_split_factors(1_000_000, 5, 1.0, 1.0).unwrap(), vec![5, 2, 1, 1]);
        assert_eq!(compute_split_factors(1_000_000, 2, 1.0, 1.0).unwrap(), vec![15]);
        assert_eq!(compute_split_factors(2, 2, 1.0, 1.0).unwrap(), vec![1]);
    }

    #[test]
    fn split_factor_preconditions() {
        assert!(compute_split_factors(1, 5, 1.0, 1.0).is_err());
        assert!(compute_split_factors(100, 1, 1.0, 1.0).is_err());
        assert!(compute_split_factors(100, 3, 0.0, 1.0).is_err());
        assert!(compute_split_factors(100, 3, 1.5, 1.0).is_err());
        assert!(compute_split_factors(100, 3, 1.0, 0.0).is_err());
    }

    #[test]
    fn perfect_powers_floor_exactly() {
        // 8^(2/3) = 4 and 27^(2/3) = 9 in exact arithmetic.
        assert_eq!(floor_snapped(8f64.powf(gamma(1.0, 3))), 4.0);
        assert_eq!(floor_snapped(27f64.powf(gamma(1.0, 3))), 9.0);
        assert_eq!(floor_snapped(3.999), 3.0);
    }

    #[test]
    fn widths_examples() {
        assert_eq!(compute_widths(&unit(), &[4]), vec![0.25, 0.25]);
        let i = ProjectedInterval::new(0.0, 8.0).unwrap();
        assert_eq!(compute_widths(&i, &[2, 2]), vec![4.0, 2.0, 2.0]);
        let i = ProjectedInterval::new(-1.0, 1.0).unwrap();
        assert_eq!(compute_widths(&i, &[5, 2, 1, 1]), vec![0.4, 0.2, 0.2, 0.2, 0.2]);
    }

    #[test]
    fn grid_examples() {
        let g = compute_grid(10_000, &[0.25, 0.25], 1.0).unwrap();
        assert_eq!(g.deltas[0], 545);
        assert_eq!(g.points, vec![0, 545, 10_000]);
        assert!(!g.is_degenerate());

        let g = compute_grid(100, &[1.0, 1.0], 1.0).unwrap();
        assert_eq!(g.deltas[0], 5);

        let g = compute_grid(10, &[10.0, 10.0], 1.0).unwrap();
        assert_eq!(g.deltas[0], 0);
        assert!(g.warnings.contains(&ScheduleWarning::EmptyBatch { batch: 1 }));
    }

    #[test]
    fn grid_clips_at_horizon() {
        let g = compute_grid(50, &[0.1, 0.05, 0.05], 1.0).unwrap();
        assert_eq!(g.points[0], 0);
        assert_eq!(*g.points.last().unwrap(), 50);
        assert!(g.points.windows(2).all(|w| w[0] <= w[1]));
        assert!(g
            .warnings
            .iter()
            .any(|w| matches!(w, ScheduleWarning::Saturated { .. })));
    }

    #[test]
    fn bin_of_examples() {
        let s = Schedule::from_parts(unit(), vec![4], vec![0, 10, 20]).unwrap();
        assert_eq!(s.bin_of(0.3, 1).unwrap().index, 1);
        assert_eq!(s.bin_of(1.0, 1).unwrap().index, 3);
        assert_eq!(s.bin_of(0.25, 1).unwrap().index, 1);
        assert_eq!(s.bin_of(0.0, 1).unwrap().index, 0);
        assert!(matches!(s.bin_of(1.01, 1), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn children_examples() {
        let s = Schedule::from_parts(unit(), vec![4, 2, 1], vec![0, 1, 2, 3, 4]).unwrap();
        assert_eq!(
            s.children_of(BinId::new(1, 0)).unwrap(),
            vec![BinId::new(2, 0), BinId::new(2, 1)]
        );
        assert_eq!(
            s.children_of(BinId::new(1, 3)).unwrap(),
            vec![BinId::new(2, 6), BinId::new(2, 7)]
        );
        assert_eq!(s.children_of(BinId::new(2, 5)).unwrap(), vec![BinId::new(3, 5)]);
        // the final layer repeats layer M-1
        assert_eq!(s.children_of(BinId::new(3, 5)).unwrap(), vec![BinId::new(4, 5)]);
        assert!(matches!(
            s.children_of(BinId::new(4, 0)),
            Err(Error::LeafBin { layer: 4 })
        ));
    }

    #[test]
    fn extents_tile_the_interval() {
        let i = ProjectedInterval::new(-1.3, 2.9).unwrap();
        let s = Schedule::from_parts(i, vec![3, 2, 2], vec![0, 1, 2, 3, 4]).unwrap();
        for layer in 1..=4 {
            let n = s.layer_count(layer);
            let mut prev_hi = i.lower;
            for idx in 0..n {
                let (lo, hi) = s.extent(BinId::new(layer, idx));
                assert_eq!(lo, prev_hi);
                assert!(hi > lo);
                prev_hi = hi;
            }
            assert_eq!(prev_hi, i.upper);
        }
    }

    #[test]
    fn schedule_serializes_named_fields() {
        let s = Schedule::new(
            &ScheduleParams::new(1_000_000, 5, 1.0),
            ProjectedInterval::new(-1.0, 1.0).unwrap(),
        )
        .unwrap();
        let v = serde_json::to_value(&s).unwrap();
        for key in [
            "T",
            "M",
            "alpha",
            "gamma",
            "a_scale",
            "c_B",
            "split_factors",
            "widths",
            "grid",
        ] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["split_factors"], serde_json::json!([5, 2, 1, 1]));
        assert_eq!(v["grid"][5], serde_json::json!(1_000_000));
    }
}
