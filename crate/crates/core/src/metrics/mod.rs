//! Measurement: accuracy, relative loss, smoothing, relative time, volatility
//! and progress, plus the simulated timing model and bound checker.

pub mod bound;
pub mod history;
pub mod timing;

use serde::{Deserialize, Serialize};

use crate::data::SparseDataset;
use crate::error::{config, Result};
use crate::Scalar;

pub use bound::{check_theorem2_bound, BoundReport, ConvergenceBound};
pub use history::{IterationRecord, RunHistory, RunMetadata};
pub use timing::{Charge, TimingModel, LATENCY_SCENARIOS};

/// Fraction of samples with `sign(xᵀw) = y`, where `sign(0) = +1`.
pub fn accuracy<T: Scalar>(w: &[T], ds: &SparseDataset<T>) -> f64 {
    if ds.n_samples() == 0 {
        return 0.0;
    }
    let hits = ds
        .samples()
        .iter()
        .zip(ds.labels())
        .filter(|(x, &y)| {
            let pred = if x.dot(w) >= T::zero() { T::one() } else { -T::one() };
            pred == y
        })
        .count();
    hits as f64 / ds.n_samples() as f64
}

/// `(P − P*) / P*`
pub fn relative_loss(p: f64, p_star: f64) -> Result<f64> {
    if !(p_star > 0.0) {
        return Err(config("relative loss needs a positive reference"));
    }
    Ok((p - p_star) / p_star)
}

/// Trailing mean over the last `min(ω, t+1)` points. `ω < 2` is the identity.
pub fn moving_average(series: &[f64], window: usize) -> Vec<f64> {
    if window < 2 {
        return series.to_vec();
    }
    (0..series.len())
        .map(|t| {
            let lo = (t + 1).saturating_sub(window);
            series[lo..=t].iter().sum::<f64>() / (t + 1 - lo) as f64
        })
        .collect()
}

/// Population standard deviation of consecutive differences.
pub fn volatility(series: &[f64]) -> Result<f64> {
    if series.len() < 2 {
        return Err(config("volatility needs at least two values"));
    }
    let diffs: Vec<f64> = series.windows(2).map(|w| w[1] - w[0]).collect();
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n;
    Ok(var.sqrt())
}

/// First index where the series has covered `fraction` of the distance from
/// its first value to its minimum.
pub fn iterations_to_progress(series: &[f64], fraction: f64) -> usize {
    let Some(&first) = series.first() else {
        return 0;
    };
    let min = series.iter().copied().fold(f64::INFINITY, f64::min);
    let target = first - fraction * (first - min);
    series.iter().position(|&v| v <= target).unwrap_or(series.len() - 1)
}

/// Relative time `T_R` and relative iteration `t_R` for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeSeries {
    pub time: Vec<f64>,
    pub iteration: Vec<f64>,
}

/// `T_R = T / max_runs(final T)` and `t_R = t / (t_max − ω)`, where `t_max` is
/// the longest run and `t` counts from 1.
pub fn relative_measures(cumulative_times: &[Vec<f64>], window: usize) -> Vec<RelativeSeries> {
    let t_final_max = cumulative_times
        .iter()
        .filter_map(|c| c.last().copied())
        .fold(0.0, f64::max);
    let t_max = cumulative_times.iter().map(Vec::len).max().unwrap_or(0);
    let denom = if window < 2 || window >= t_max { t_max } else { t_max - window } as f64;
    cumulative_times
        .iter()
        .map(|c| RelativeSeries {
            time: c
                .iter()
                .map(|&v| if t_final_max > 0.0 { v / t_final_max } else { 0.0 })
                .collect(),
            iteration: (1..=c.len()).map(|t| t as f64 / denom.max(1.0)).collect(),
        })
        .collect()
}
