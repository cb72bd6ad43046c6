//! Empirical distribution and summary statistics of latency samples.

use serde::Serialize;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum StatsError {
    #[error("no samples")]
    EmptySamples,
    #[error("sample {0} is negative or not finite")]
    InvalidSample(usize),
}

fn check(samples: &[f64]) -> Result<(), StatsError> {
    if samples.is_empty() {
        return Err(StatsError::EmptySamples);
    }
    match samples.iter().position(|v| !v.is_finite() || *v < 0.0) {
        Some(i) => Err(StatsError::InvalidSample(i)),
        None => Ok(()),
    }
}

fn sorted(samples: &[f64]) -> Vec<f64> {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Step points `(x, F(x))` of the empirical CDF: one per distinct sample
/// value, `x` strictly increasing, the last `F` equal to 1.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EcdfTable {
    pub points: Vec<(f64, f64)>,
}

impl EcdfTable {
    /// `F(x)` = fraction of samples `<= x`.
    pub fn eval(&self, x: f64) -> f64 {
        match self.points.partition_point(|&(px, _)| px <= x) {
            0 => 0.0,
            i => self.points[i - 1].1,
        }
    }
}

pub fn compute_ecdf(samples: &[f64]) -> Result<EcdfTable, StatsError> {
    check(samples)?;
    let v = sorted(samples);
    let n = v.len() as f64;
    let mut points: Vec<(f64, f64)> = Vec::new();
    for (i, &x) in v.iter().enumerate() {
        let p = (i + 1) as f64 / n;
        match points.last_mut() {
            Some(last) if last.0 == x => last.1 = p,
            _ => points.push((x, p)),
        }
    }
    Ok(EcdfTable { points })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SummaryStats {
    pub n: usize,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p90_ms: f64,
    pub p99_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
    pub stddev_ms: f64,
}

/// Nearest-rank percentile: the `ceil(pct/100 * n)`-th order statistic.
pub fn nearest_rank(sorted: &[f64], pct: u32) -> f64 {
    let n = sorted.len();
    let rank = (pct as usize * n).div_ceil(100).clamp(1, n);
    sorted[rank - 1]
}

pub fn median(samples: &[f64]) -> Result<f64, StatsError> {
    check(samples)?;
    Ok(nearest_rank(&sorted(samples), 50))
}

/// Sample standard deviation (n - 1 denominator, 0 for a single sample).
pub fn summarize(samples: &[f64]) -> Result<SummaryStats, StatsError> {
    check(samples)?;
    let v = sorted(samples);
    let n = v.len();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let stddev = if n > 1 {
        let ss: f64 = samples.iter().map(|x| (x - mean) * (x - mean)).sum();
        (ss / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(SummaryStats {
        n,
        mean_ms: mean,
        p50_ms: nearest_rank(&v, 50),
        p90_ms: nearest_rank(&v, 90),
        p99_ms: nearest_rank(&v, 99),
        min_ms: v[0],
        max_ms: v[n - 1],
        stddev_ms: stddev,
    })
}
