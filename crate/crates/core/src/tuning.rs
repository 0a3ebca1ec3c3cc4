//! Log-uniform random search and Gray Relational Analysis over seven run
//! metrics.

use std::io::Write;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::metrics::history::RunHistory;
use crate::metrics::timing::LATENCY_SCENARIOS;
use crate::metrics::{iterations_to_progress, moving_average, volatility};
use crate::rng::{self, tags};

/// Distinguishing coefficient of the grey relational coefficient.
pub const GRA_ZETA: f64 = 0.5;
pub const N_METRICS: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: f64,
    pub max: f64,
}

impl Bounds {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min > 0.0 && min <= max && max.is_finite()) {
            return Err(config(format!("invalid search bounds [{min}, {max}]")));
        }
        Ok(Self { min, max })
    }
}

/// `count` values `10^u` with `u` uniform on `[log₁₀ min, log₁₀ max]`.
pub fn sample_log_uniform(bounds: Bounds, seed: u64, count: usize) -> Result<Vec<f64>> {
    let b = Bounds::new(bounds.min, bounds.max)?;
    let (lo, hi) = (b.min.log10(), b.max.log10());
    let mut r = rng::stream(seed, tags::SEARCH, &[]);
    Ok((0..count)
        .map(|_| {
            let u = if hi > lo { r.random_range(lo..=hi) } else { lo };
            10f64.powf(u).clamp(b.min, b.max)
        })
        .collect())
}

/// `H = ⌈IIC·N / clients⌉`, at least 1.
pub fn inner_iterations(iic: f64, n: usize, total_clients: usize) -> usize {
    let h = (iic * n as f64 / total_clients.max(1) as f64).ceil();
    if h.is_finite() && h >= 1.0 {
        h as usize
    } else {
        1
    }
}

/// One sampled hyperparameter point. `a` and `b` are the FedAvg learning-rate
/// constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperConfig {
    pub iic: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub iic: Bounds,
    pub a: Option<Bounds>,
    pub b: Option<Bounds>,
}

impl SearchSpace {
    pub fn hyfdca(total_clients: usize, n: usize) -> Self {
        let lo = (total_clients as f64 / n as f64).min(1.0);
        Self { iic: Bounds { min: lo, max: 1.0 }, a: None, b: None }
    }

    pub fn fedavg(total_clients: usize, n: usize) -> Self {
        let lo = (total_clients as f64 / n as f64).min(5.0);
        let lr = Bounds { min: 1e-5, max: 25.0 };
        Self { iic: Bounds { min: lo, max: 5.0 }, a: Some(lr), b: Some(lr) }
    }

    /// `count` points; each coordinate is drawn from its own stream.
    pub fn sample(&self, seed: u64, count: usize) -> Result<Vec<HyperConfig>> {
        let sub = |k: u64| rng::derive_seed(seed, tags::SEARCH, &[k]);
        let iic = sample_log_uniform(self.iic, sub(0), count)?;
        let a = self.a.map(|b| sample_log_uniform(b, sub(1), count)).transpose()?;
        let b = self.b.map(|b| sample_log_uniform(b, sub(2), count)).transpose()?;
        Ok((0..count)
            .map(|j| HyperConfig { iic: iic[j], a: a.as_ref().map(|v| v[j]), b: b.as_ref().map(|v| v[j]) })
            .collect())
    }
}

/// The seven GRA metrics of one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricVector {
    /// Mean runtime per iteration at 0, 0.2575 and 0.8 s latency per round trip.
    pub runtime_per_iter: [f64; 3],
    /// Mean of the last five loss values.
    pub final_loss: f64,
    pub max_accuracy: f64,
    pub volatility: f64,
    pub iters_to_90: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    SmallerBetter,
    LargerBetter,
}

pub const ORIENTATIONS: [Orientation; N_METRICS] = [
    Orientation::SmallerBetter,
    Orientation::SmallerBetter,
    Orientation::SmallerBetter,
    Orientation::SmallerBetter,
    Orientation::LargerBetter,
    Orientation::SmallerBetter,
    Orientation::SmallerBetter,
];

impl MetricVector {
    pub fn values(&self) -> [f64; N_METRICS] {
        let r = self.runtime_per_iter;
        [r[0], r[1], r[2], self.final_loss, self.max_accuracy, self.volatility, self.iters_to_90]
    }

    pub fn from_history(h: &RunHistory) -> Result<Self> {
        if h.rows.len() < 2 {
            return Err(config("metrics need at least two iterations"));
        }
        let n = h.rows.len() as f64;
        let mean_work = h.rows.iter().map(|r| r.compute_s + r.enc_s).sum::<f64>() / n;
        let rtc = h.meta.timing.rtc_per_iteration;
        let loss = h.primal_series();
        let tail = &loss[loss.len().saturating_sub(5)..];
        Ok(Self {
            runtime_per_iter: LATENCY_SCENARIOS.map(|l| mean_work + rtc * l),
            final_loss: tail.iter().sum::<f64>() / tail.len() as f64,
            max_accuracy: h.rows.iter().map(|r| r.accuracy).fold(f64::NEG_INFINITY, f64::max),
            volatility: volatility(&loss)?,
            iters_to_90: iterations_to_progress(&loss, 0.9) as f64,
        })
    }
}

/// Non-finite loss, or final smoothed loss above ten times the initial loss.
pub fn is_divergent(h: &RunHistory, window: usize) -> bool {
    let loss = h.primal_series();
    if loss.is_empty() || loss.iter().any(|v| !v.is_finite()) {
        return true;
    }
    let smooth = moving_average(&loss, window);
    smooth[smooth.len() - 1] > 10.0 * loss[0]
}

/// Grey relational grades with distinguishing coefficient `zeta`. Each column
/// is min–max normalized with its ideal at 1; a constant column is ideal for
/// every run.
pub fn gra_grades_with<const M: usize>(
    rows: &[[f64; M]],
    orientation: &[Orientation; M],
    zeta: f64,
) -> Result<Vec<f64>> {
    if rows.is_empty() {
        return Err(config("grey relational analysis needs at least one run"));
    }
    let mut delta = vec![[0.0; M]; rows.len()];
    for j in 0..M {
        let col = rows.iter().map(|r| r[j]);
        let lo = col.clone().fold(f64::INFINITY, f64::min);
        let hi = col.fold(f64::NEG_INFINITY, f64::max);
        for (d, r) in delta.iter_mut().zip(rows) {
            let norm = if hi > lo {
                match orientation[j] {
                    Orientation::LargerBetter => (r[j] - lo) / (hi - lo),
                    Orientation::SmallerBetter => (hi - r[j]) / (hi - lo),
                }
            } else {
                1.0
            };
            d[j] = 1.0 - norm;
        }
    }
    let all = delta.iter().flatten();
    let dmin = all.clone().copied().fold(f64::INFINITY, f64::min);
    let dmax = all.copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(delta
        .iter()
        .map(|d| {
            let xi = d.iter().map(|&v| if dmax > 0.0 { (dmin + zeta * dmax) / (v + zeta * dmax) } else { 1.0 });
            xi.sum::<f64>() / M as f64
        })
        .collect())
}

pub fn gra_grades(rows: &[[f64; N_METRICS]]) -> Result<Vec<f64>> {
    gra_grades_with(rows, &ORIENTATIONS, GRA_ZETA)
}

/// Index of the highest grade; ties go to the earliest.
pub fn argmax_first(grades: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &g) in grades.iter().enumerate() {
        if best.is_none_or(|b| g > grades[b]) {
            best = Some(i);
        }
    }
    best
}

/// Best configuration by grey relational grade.
pub fn gra_select(runs: &[(HyperConfig, MetricVector)]) -> Result<HyperConfig> {
    let rows: Vec<_> = runs.iter().map(|(_, m)| m.values()).collect();
    let grades = gra_grades(&rows)?;
    Ok(runs[argmax_first(&grades).expect("non-empty")].0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRecord {
    pub config: HyperConfig,
    pub metrics: Option<MetricVector>,
    pub divergent: bool,
    pub grade: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub records: Vec<SearchRecord>,
    pub histories: Vec<RunHistory>,
    /// Index into `records` of the selected point.
    pub best: usize,
}

/// Evaluates every point (up to `jobs` at a time), drops divergent runs and
/// grades the rest. Results are in input order whatever the parallelism.
pub fn random_search<F>(points: &[HyperConfig], jobs: usize, divergence_window: usize, eval: F) -> Result<SearchOutcome>
where
    F: Fn(&HyperConfig) -> Result<RunHistory> + Sync,
{
    if points.is_empty() {
        return Err(config("random search needs at least one point"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| config(format!("thread pool: {e}")))?;
    let histories: Vec<RunHistory> =
        pool.install(|| points.par_iter().map(&eval).collect::<Result<Vec<_>>>())?;
    let mut records: Vec<SearchRecord> = points
        .iter()
        .zip(&histories)
        .map(|(c, h)| {
            let divergent = is_divergent(h, divergence_window);
            let metrics = if divergent { None } else { MetricVector::from_history(h).ok() };
            SearchRecord { config: *c, divergent: divergent || metrics.is_none(), metrics, grade: None }
        })
        .collect();
    let kept: Vec<usize> = (0..records.len()).filter(|&i| !records[i].divergent).collect();
    if kept.is_empty() {
        return Err(config("every search point diverged"));
    }
    let rows: Vec<_> = kept.iter().map(|&i| records[i].metrics.expect("kept").values()).collect();
    let grades = gra_grades(&rows)?;
    for (&i, &g) in kept.iter().zip(&grades) {
        records[i].grade = Some(g);
    }
    let best = kept[argmax_first(&grades).expect("non-empty")];
    Ok(SearchOutcome { records, histories, best })
}

/// One CSV row per point: hyperparameters, the seven metrics, grade and
/// divergence flag.
pub fn write_search_csv<W: Write>(records: &[SearchRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "iic",
        "a",
        "b",
        "runtime_0",
        "runtime_0.2575",
        "runtime_0.8",
        "final_loss",
        "max_accuracy",
        "volatility",
        "iters_to_90",
        "grade",
        "divergent",
    ])?;
    let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
    for r in records {
        let mut row = vec![r.config.iic.to_string(), opt(r.config.a), opt(r.config.b)];
        match &r.metrics {
            Some(m) => row.extend(m.values().iter().map(|v| v.to_string())),
            None => row.extend(std::iter::repeat_n(String::new(), N_METRICS)),
        }
        row.push(opt(r.grade));
        row.push(r.divergent.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn log_uniform_examples() {
        assert!(sample_log_uniform(Bounds { min: 1.0, max: 1.0 }, 3, 10).unwrap().iter().all(|&v| v == 1.0));
        let b = Bounds { min: 1e-5, max: 25.0 };
        assert!(sample_log_uniform(b, 4, 10_000).unwrap().iter().all(|&v| (1e-5..=25.0).contains(&v)));
        assert!(sample_log_uniform(Bounds { min: 0.0, max: 1.0 }, 0, 1).is_err());
    }

    #[test]
    fn log_uniform_median_and_geometric_midpoint() {
        let mut v = sample_log_uniform(Bounds { min: 0.01, max: 100.0 }, 11, 100_000).unwrap();
        let below = v.iter().filter(|&&x| x < 1.0).count() as f64 / 1e5;
        assert!((below - 0.5).abs() < 0.01);
        v.sort_by(f64::total_cmp);
        let median = v[50_000];
        assert!((median - 1.0).abs() < 0.1, "{median}");
        let w = sample_log_uniform(Bounds { min: 3.0, max: 300.0 }, 12, 100_000).unwrap();
        let below = w.iter().filter(|&&x| x < 30.0).count() as f64 / 1e5;
        assert!((below - 0.5).abs() < 0.01);
    }

    #[test]
    fn inner_iteration_examples() {
        assert_eq!(inner_iterations(0.1, 1000, 10), 10);
        assert_eq!(inner_iterations(0.0001876, 70_000, 5), 3);
        assert_eq!(inner_iterations(1e-12, 10, 10), 1);
    }

    fn mv(v: [f64; 7]) -> MetricVector {
        MetricVector {
            runtime_per_iter: [v[0], v[1], v[2]],
            final_loss: v[3],
            max_accuracy: v[4],
            volatility: v[5],
            iters_to_90: v[6],
        }
    }

    fn hc(iic: f64) -> HyperConfig {
        HyperConfig { iic, a: None, b: None }
    }

    #[test]
    fn dominating_run_has_unit_grade() {
        let good = [1.0, 2.0, 3.0, 0.1, 0.9, 0.01, 5.0];
        let bad = [2.0, 3.0, 4.0, 0.2, 0.8, 0.02, 9.0];
        let mid = [1.5, 2.5, 3.5, 0.15, 0.85, 0.015, 7.0];
        let g = gra_grades(&[bad, good, mid]).unwrap();
        assert_eq!(g[1], 1.0);
        let sel = gra_select(&[(hc(0.1), mv(bad)), (hc(0.2), mv(good)), (hc(0.3), mv(mid))]).unwrap();
        assert_eq!(sel.iic, 0.2);
    }

    #[test]
    fn two_by_two_example() {
        // normalized A = (1, 0), B = (0, 1)
        let orient = [Orientation::LargerBetter; 2];
        let rows = [[1.0, 0.0], [0.0, 1.0]];
        let g = gra_grades_with(&rows, &orient, GRA_ZETA).unwrap();
        // ξ = 1 at the ideal and (0 + ½)/(1 + ½) = ⅓ at the worst
        assert_eq!(g, vec![2.0 / 3.0, 2.0 / 3.0]);
        assert_eq!(argmax_first(&g), Some(0));
        let g1 = gra_grades_with(&rows, &orient, 1.0).unwrap();
        assert_eq!(g1, vec![0.75, 0.75]);
    }

    #[test]
    fn single_run_is_selected() {
        let only = [f64::MAX, 1.0, 1.0, 1e9, 0.0, 5.0, 1e6];
        assert_eq!(gra_select(&[(hc(0.7), mv(only))]).unwrap().iic, 0.7);
        assert!(gra_select(&[]).is_err());
    }

    #[test]
    fn search_space_shapes() {
        let s = SearchSpace::fedavg(8, 2000);
        let pts = s.sample(1, 20).unwrap();
        assert!(pts.iter().all(|p| p.a.is_some() && p.b.is_some() && p.iic >= 0.004 && p.iic <= 5.0));
        assert_eq!(pts, s.sample(1, 20).unwrap());
        let h = SearchSpace::hyfdca(8, 2000).sample(1, 5).unwrap();
        assert!(h.iter().all(|p| p.a.is_none() && p.iic <= 1.0));
    }

    proptest! {
        #[test]
        fn selection_ignores_affine_rescaling(
            raw in prop::collection::vec(prop::array::uniform7(0.0f64..10.0), 1..8),
            col in 0usize..7, scale in 0.1f64..10.0, shift in -5.0f64..5.0,
        ) {
            let base = gra_grades(&raw).unwrap();
            let moved: Vec<_> = raw.iter().map(|r| { let mut r = *r; r[col] = r[col] * scale + shift; r }).collect();
            let after = gra_grades(&moved).unwrap();
            let pick = argmax_first(&base).unwrap();
            let top = after.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(after[pick] >= top - 1e-9);
        }
    }
}
