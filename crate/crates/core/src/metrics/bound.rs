//! Dual suboptimality bound for full participation with `γ = 1`.

use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::metrics::history::RunHistory;

/// `bound(t) = 2G / (1 + (P·H / 2N)(t − t₀))` with `G = 2L²/λ` and
/// `t₀ = max(0, ⌈ln(ε⁰/G)⌉)`. `P = 1` under full participation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceBound {
    pub g: f64,
    pub t0: usize,
    pub rate: f64,
}

impl ConvergenceBound {
    pub fn new(lambda: f64, lipschitz: f64, h: usize, n: usize, participation: f64, eps0: f64) -> Result<Self> {
        if !(lambda > 0.0) || n == 0 {
            return Err(config("bound needs lambda > 0 and N ≥ 1"));
        }
        let g = 2.0 * lipschitz * lipschitz / lambda;
        let t0 = if eps0 > 0.0 { (eps0 / g).ln().ceil().max(0.0) as usize } else { 0 };
        let rate = participation * h as f64 / (2.0 * n as f64);
        Ok(Self { g, t0, rate })
    }

    pub fn at(&self, t: usize) -> f64 {
        let dt = t as f64 - self.t0 as f64;
        2.0 * self.g / (1.0 + self.rate * dt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub bound: ConvergenceBound,
    /// `max_t mean ε_D(t) / bound(t)` over `t ≥ t₀`.
    pub max_ratio: f64,
    pub worst_t: usize,
    pub passed: bool,
}

/// Mean dual suboptimality across runs at each recorded iteration, with the
/// initial value `ε⁰ = D* − D(0) = D*` at index 0.
pub fn mean_dual_suboptimality(histories: &[RunHistory], d_star: f64) -> Result<Vec<f64>> {
    let first = histories.first().ok_or_else(|| config("no histories supplied"))?;
    let len = first.rows.len();
    let mut mean = vec![0.0; len + 1];
    for h in histories {
        let dual = h.dual_series().ok_or_else(|| config("history has no dual values"))?;
        if dual.len() != len {
            return Err(config("histories have different lengths"));
        }
        mean[0] += d_star;
        for (m, d) in mean[1..].iter_mut().zip(&dual) {
            *m += d_star - d;
        }
    }
    let k = histories.len() as f64;
    Ok(mean.into_iter().map(|v| v / k).collect())
}

/// Checks mean `ε_D(t)` against the bound over all recorded `t ≥ t₀`.
/// `d_star` is the dual optimum from the centralized oracle.
pub fn check_theorem2_bound(
    histories: &[RunHistory],
    d_star: Option<f64>,
    h: usize,
    n: usize,
    lambda: f64,
    lipschitz: f64,
    participation: f64,
) -> Result<BoundReport> {
    let d_star = d_star.ok_or_else(|| config("the bound check needs the oracle dual optimum"))?;
    let eps = mean_dual_suboptimality(histories, d_star)?;
    let bound = ConvergenceBound::new(lambda, lipschitz, h, n, participation, eps[0])?;
    let mut max_ratio = f64::NEG_INFINITY;
    let mut worst_t = bound.t0;
    for (t, &e) in eps.iter().enumerate().skip(bound.t0) {
        let r = e / bound.at(t);
        if r > max_ratio {
            max_ratio = r;
            worst_t = t;
        }
    }
    Ok(BoundReport { bound, max_ratio, worst_t, passed: max_ratio <= 1.0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bound_shape() {
        let b = ConvergenceBound::new(0.01, 1.0, 10, 200, 1.0, 1.0).unwrap();
        assert_eq!(b.g, 200.0);
        assert_eq!(b.t0, 0);
        assert_eq!(b.at(0), 400.0);
        assert!(b.at(11) < b.at(10));
        assert!((b.at(40) - 400.0 / (1.0 + 0.025 * 40.0)).abs() < 1e-12);
    }

    #[test]
    fn t0_from_large_initial_gap() {
        let b = ConvergenceBound::new(2.0, 1.0, 1, 1, 1.0, 10.0).unwrap();
        // G = 1, ln(10) ≈ 2.30
        assert_eq!(b.t0, 3);
        assert_eq!(b.at(3), 2.0);
    }

    #[test]
    fn tiny_lambda_makes_the_bound_loose() {
        let b = ConvergenceBound::new(1e-12, 1.0, 1, 10, 1.0, 1.0).unwrap();
        assert!(b.at(1000) > 1e9);
    }

    #[test]
    fn missing_oracle_is_an_error() {
        assert!(check_theorem2_bound(&[], None, 1, 1, 1.0, 1.0, 1.0).is_err());
    }
}
