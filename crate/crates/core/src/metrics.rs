//! Regret traces, aggregation and rate fitting.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// Per-round cumulative regret and inferior-pull count of one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegretTrace {
    pub cumulative: Vec<f64>,
    pub inferior: Vec<u64>,
}

impl RegretTrace {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            cumulative: Vec::with_capacity(n),
            inferior: Vec::with_capacity(n),
        }
    }

    pub fn len(&self) -> usize {
        self.cumulative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cumulative.is_empty()
    }

    /// Append one round.
    pub fn accumulate(&mut self, gap: f64, was_inferior: bool) {
        debug_assert!(gap >= 0.0);
        let c = self.cumulative.last().copied().unwrap_or(0.0);
        let i = self.inferior.last().copied().unwrap_or(0);
        self.cumulative.push(c + gap);
        self.inferior.push(i + was_inferior as u64);
    }

    /// Append a round whose inferiority is `gap > 0`.
    pub fn push(&mut self, gap: f64) {
        self.accumulate(gap, gap > 0.0);
    }

    pub fn final_regret(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    pub fn final_average(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.final_regret() / self.len() as f64
        }
    }

    /// Rows `(t, cum, avg, inferior)` at 1-based rounds `ts`.
    pub fn rows<'a>(&'a self, ts: &'a [usize]) -> impl Iterator<Item = TraceRow> + 'a {
        ts.iter().map(move |&t| TraceRow {
            t,
            cum_regret: self.cumulative[t - 1],
            avg_regret: self.cumulative[t - 1] / t as f64,
            inferior_count: self.inferior[t - 1],
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub t: usize,
    pub cum_regret: f64,
    pub avg_regret: f64,
    pub inferior_count: u64,
}

pub const MAX_ROWS: usize = 2000;

/// 1-based rounds kept when writing a trace of length `n`: a uniform stride
/// chosen so at most `max_rows` rows remain, always ending at `n`.
pub fn sample_points(n: usize, max_rows: usize) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    let stride = n.div_ceil(max_rows.max(1));
    let mut ts: Vec<usize> = (1..=n / stride).map(|i| i * stride).collect();
    if ts.last() != Some(&n) {
        if ts.len() == max_rows {
            ts.pop();
        }
        ts.push(n);
    }
    ts
}

/// Mean and standard error across replicates at selected rounds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub t: usize,
    pub mean_cum_regret: f64,
    pub se_cum_regret: f64,
    pub mean_avg_regret: f64,
    pub se_avg_regret: f64,
    pub mean_inferior: f64,
    pub se_inferior: f64,
    pub min_cum_regret: f64,
    pub max_cum_regret: f64,
}

fn mean_se(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

pub fn aggregate(traces: &[RegretTrace], ts: &[usize]) -> Result<Vec<AggregateRow>> {
    if traces.is_empty() {
        return Err(Error::InvalidParameter("nothing to aggregate".into()));
    }
    let n = traces[0].len();
    if let Some(bad) = traces.iter().find(|t| t.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: bad.len(),
        });
    }
    if ts.iter().any(|&t| t == 0 || t > n) {
        return Err(Error::InvalidParameter("aggregation point outside the trace".into()));
    }
    Ok(ts
        .iter()
        .map(|&t| {
            let cum = traces.iter().map(move |r| r.cumulative[t - 1]);
            let (mc, sc) = mean_se(cum.clone());
            let (mi, si) = mean_se(traces.iter().map(move |r| r.inferior[t - 1] as f64));
            AggregateRow {
                t,
                mean_cum_regret: mc,
                se_cum_regret: sc,
                mean_avg_regret: mc / t as f64,
                se_avg_regret: sc / t as f64,
                mean_inferior: mi,
                se_inferior: si,
                min_cum_regret: cum.clone().fold(f64::INFINITY, f64::min),
                max_cum_regret: cum.fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect())
}

/// Log-log least-squares fit of final regret against horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// True when `1` was added to every regret to make the logs finite.
    pub smoothed: bool,
}

/// Slope of `ln R` on `ln T`.
pub fn fit_rate(points: &[(f64, f64)]) -> Result<f64> {
    fit_rate_full(points).map(|f| f.slope)
}

pub fn fit_rate_full(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 3 {
        return Err(Error::InsufficientData {
            have: points.len(),
            need: 3,
        });
    }
    for (i, &(t, r)) in points.iter().enumerate() {
        if !(t > 0.0) {
            return Err(Error::NonPositive { index: i, value: t });
        }
        if !(r > 0.0) {
            return Err(Error::NonPositive { index: i, value: r });
        }
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("horizons must not all be equal".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok(RateFit {
        slope,
        intercept: my - slope * mx,
        smoothed: false,
    })
}

/// [`fit_rate_full`] on `R + 1`, for runs whose regret can be zero.
pub fn fit_rate_smoothed(points: &[(f64, f64)]) -> Result<RateFit> {
    let shifted: Vec<(f64, f64)> = points.iter().map(|&(t, r)| (t, r + 1.0)).collect();
    fit_rate_full(&shifted).map(|f| RateFit { smoothed: true, ..f })
}

fn create(path: &Path) -> Result<std::fs::File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::File::create(path).map_err(|e| Error::io(path, e))
}

pub fn write_trace_csv(path: &Path, trace: &RegretTrace, ts: &[usize]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for row in trace.rows(ts) {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_aggregate_csv(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n").map_err(|e| Error::io(path, e))
}

pub fn write_json_lines<T: Serialize>(path: &Path, values: impl IntoIterator<Item = T>) -> Result<()> {
    let mut f = std::io::BufWriter::new(create(path)?);
    for v in values {
        serde_json::to_writer(&mut f, &v)?;
        f.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    f.flush().map_err(|e| Error::io(path, e))
}
