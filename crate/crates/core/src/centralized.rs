//! Single-machine SDCA: the reference optimum for federated runs and the
//! regularization sweep.

use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{train_validation_split, SparseDataset};
use crate::error::{config, Result};
use crate::metrics::accuracy;
use crate::objective::{
    closed_form_dual_step, dual_objective, dual_objective_with_primal, primal_objective, ClosedFormOptions,
    Regularization,
};
use crate::rng::{self, tags};
use crate::Scalar;

pub const DEFAULT_GAP_TARGET: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralRun {
    pub lambda: f64,
    pub w_star: Vec<f64>,
    pub alpha_star: Vec<f64>,
    pub p_star: f64,
    pub d_star: f64,
    /// Coordinate steps taken.
    pub iterations: usize,
    pub gap: f64,
    pub converged: bool,
}

impl CentralRun {
    pub fn save_json(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer_pretty(f, self)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        Ok(serde_json::from_reader(f)?)
    }
}

/// Uniform random coordinate ascent with the exact one-dimensional maximizer
/// (true `‖xᵢ‖²` in the quadratic term). The gap is checked once per epoch;
/// stops after `iterations` steps or at `gap ≤ gap_target`.
pub fn run_sdca_central<T: Scalar>(
    ds: &SparseDataset<T>,
    reg: &Regularization<T>,
    iterations: usize,
    seed: u64,
    gap_target: f64,
) -> Result<CentralRun> {
    let n = ds.n_samples();
    if n == 0 || reg.n() != n {
        return Err(config("regularization sample count must match a non-empty dataset"));
    }
    let opts = ClosedFormOptions { exact_norm: true, ..Default::default() };
    let norms: Vec<T> = ds.samples().iter().map(|x| x.norm_sq()).collect();
    let scale = T::one() / reg.lambda_n();
    let mut alpha = vec![T::zero(); n];
    let mut w = vec![T::zero(); ds.n_features()];
    let mut r = rng::stream(seed, tags::CENTRAL, &[]);
    let mut steps = 0;
    let check = |alpha: &[T], w: &[T]| -> Result<f64> {
        let p = primal_objective(w, ds, reg)?;
        let d = dual_objective_with_primal(alpha, w, ds, reg)?;
        Ok((p - d).to_f64_lossy())
    };
    while steps < iterations {
        let epoch = n.min(iterations - steps);
        for _ in 0..epoch {
            let i = r.random_range(0..n);
            let x = ds.sample(i);
            let delta = closed_form_dual_step(ds.label(i), alpha[i], x.dot(&w), reg, norms[i], opts)?;
            if !delta.is_zero() {
                alpha[i] += delta;
                x.axpy_into(delta * scale, &mut w);
            }
        }
        steps += epoch;
        if check(&alpha, &w)? <= gap_target {
            break;
        }
    }
    // refresh w from α to remove accumulated drift before reporting
    let w = crate::objective::dual_to_primal(&alpha, ds, reg)?;
    let p = primal_objective(&w, ds, reg)?;
    let d = dual_objective(&alpha, ds, reg)?;
    let gap = (p - d).to_f64_lossy();
    Ok(CentralRun {
        lambda: reg.lambda().to_f64_lossy(),
        w_star: w.iter().map(|v| v.to_f64_lossy()).collect(),
        alpha_star: alpha.iter().map(|v| v.to_f64_lossy()).collect(),
        p_star: p.to_f64_lossy(),
        d_star: d.to_f64_lossy(),
        iterations: steps,
        gap,
        converged: gap <= gap_target,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSelection {
    pub best: f64,
    /// `(λ, validation accuracy)` per candidate, in input order.
    pub scores: Vec<(f64, f64)>,
}

/// Trains centrally for each candidate on a seeded split and returns the λ
/// with the highest validation accuracy; ties go to the smaller λ.
pub fn tune_lambda<T: Scalar>(
    ds: &SparseDataset<T>,
    candidates: &[f64],
    split_seed: u64,
    train_fraction: f64,
    iterations: usize,
) -> Result<LambdaSelection> {
    if candidates.is_empty() {
        return Err(config("no lambda candidates"));
    }
    let (train, val) = train_validation_split(ds, train_fraction, split_seed)?;
    let mut scores = Vec::with_capacity(candidates.len());
    for &lambda in candidates {
        let reg = Regularization::new(T::lit(lambda), train.n_samples())?;
        let run = run_sdca_central(&train, &reg, iterations, split_seed, DEFAULT_GAP_TARGET)?;
        let w: Vec<T> = run.w_star.iter().map(|&v| T::lit(v)).collect();
        let eval = if val.n_samples() > 0 { &val } else { &train };
        scores.push((lambda, accuracy(&w, eval)));
    }
    let mut best = scores[0];
    for &s in &scores[1..] {
        if s.1 > best.1 || (s.1 == best.1 && s.0 < best.0) {
            best = s;
        }
    }
    Ok(LambdaSelection { best: best.0, scores })
}
