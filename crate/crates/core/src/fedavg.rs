//! FedAvg adapted to hybrid partitions: local SGD on each client's block of
//! samples and features, then a per-feature mean over the clients that hold
//! the feature.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::hyfdca::layout::FederatedLayout;
use crate::hyfdca::ledger::LedgerCounts;
use crate::hyfdca::schedule::{Schedule, StopRule};
use crate::hyfdca::FederatedProblem;
use crate::metrics::history::{IterationRecord, RunHistory, RunMetadata};
use crate::metrics::timing::TimingModel;
use crate::objective::{hinge_subgradient, primal_objective};
use crate::rng::{self, tags};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FedAvgParams {
    /// `H`, local SGD steps per round.
    pub inner_iterations: usize,
    pub a: f64,
    pub b: f64,
    pub seed: u64,
}

impl Default for FedAvgParams {
    fn default() -> Self {
        Self { inner_iterations: 1, a: 1.0, b: 1.0, seed: 0 }
    }
}

impl FedAvgParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0) || !(self.b >= 0.0) || !self.a.is_finite() || !self.b.is_finite() {
            return Err(config("learning rate constants need a > 0 and b ≥ 0"));
        }
        if self.inner_iterations == 0 {
            return Err(config("FedAvg needs at least one local step"));
        }
        Ok(())
    }

    /// `γ_t = a / (b + √t)`
    pub fn learning_rate(&self, t: usize) -> f64 {
        self.a / (self.b + (t as f64).sqrt())
    }
}

/// `H` SGD steps with replacement on client `k`'s rows, starting from `w_k`
/// (in the client's feature order). Returns the operation count.
pub fn local_sgd<T: Scalar>(
    layout: &FederatedLayout<T>,
    labels: &[T],
    k: usize,
    w_k: &mut [T],
    lambda: T,
    params: &FedAvgParams,
    t: usize,
) -> u64 {
    let cd = &layout.clients[k];
    if cd.samples.is_empty() {
        return 0;
    }
    let gamma = T::lit(params.learning_rate(t));
    let mut r = rng::stream(params.seed, tags::SGD, &[t as u64, k as u64]);
    let shrink = T::one() - gamma * lambda;
    let mut ops = 0u64;
    for _ in 0..params.inner_iterations {
        let pos = r.random_range(0..cd.samples.len());
        let row = &cd.rows[pos];
        let y = labels[cd.samples[pos]];
        let g = hinge_subgradient(y, row.dot(w_k));
        for v in w_k.iter_mut() {
            *v *= shrink;
        }
        if !g.is_zero() {
            row.axpy_into(-gamma * g, w_k);
        }
        ops += (w_k.len() + 4 * row.nnz()) as u64;
    }
    ops
}

/// Per-feature mean of the active clients' weights; features without an
/// active holder keep their value in `previous`.
pub fn average_overlaps<T: Scalar>(
    layout: &FederatedLayout<T>,
    locals: &[(usize, Vec<T>)],
    previous: &[T],
) -> Vec<T> {
    let mut sum = vec![T::zero(); previous.len()];
    let mut count = vec![0usize; previous.len()];
    for (k, w_k) in locals {
        for (&m, &v) in layout.clients[*k].features.iter().zip(w_k) {
            sum[m] += v;
            count[m] += 1;
        }
    }
    sum.iter()
        .zip(&count)
        .zip(previous)
        .map(|((&s, &c), &p)| if c == 0 { p } else { s / T::from_count(c) })
        .collect()
}

pub fn run_fedavg<T: Scalar>(
    problem: FederatedProblem<'_, T>,
    params: FedAvgParams,
    schedule: Schedule,
    timing: TimingModel,
    stop: StopRule,
) -> Result<RunHistory> {
    params.validate()?;
    let k_total = problem.partition.n_clients();
    schedule.validate(k_total)?;
    let ds = problem.train;
    let layout = FederatedLayout::new(ds, problem.partition);
    let lambda = problem.reg.lambda();
    let mut w = vec![T::zero(); ds.n_features()];
    let mut rows = Vec::new();
    let mut cum_s = 0.0;
    let mut t = 0;
    while !stop.should_stop(rows.len(), cum_s) {
        t += 1;
        let active = schedule.active(t, k_total);
        let mut locals = Vec::with_capacity(active.len());
        let mut max_ops = 0;
        for &k in &active {
            let mut w_k: Vec<T> = layout.clients[k].features.iter().map(|&m| w[m]).collect();
            let ops = local_sgd(&layout, ds.labels(), k, &mut w_k, lambda, &params, t);
            max_ops = max_ops.max(ops);
            locals.push((k, w_k));
        }
        w = average_overlaps(&layout, &locals, &w);
        let charge = if active.is_empty() {
            Default::default()
        } else {
            timing.charge(max_ops, &LedgerCounts::default())
        };
        cum_s += charge.total();
        let p = primal_objective(&w, ds, &problem.reg)?;
        rows.push(IterationRecord {
            t,
            primal: p.to_f64_lossy(),
            dual: None,
            gap: None,
            accuracy: problem.accuracy(&w),
            compute_s: charge.compute_s,
            enc_s: charge.enc_s,
            latency_s: charge.latency_s,
            cum_s,
            active: active.len(),
            counts: LedgerCounts::default(),
            skipped: active.is_empty(),
        });
    }
    let meta = RunMetadata {
        algorithm: "fedavg".into(),
        seed: params.seed,
        dataset: ds.name().to_string(),
        n_samples: ds.n_samples(),
        n_features: ds.n_features(),
        lambda: lambda.to_f64_lossy(),
        partition: Some(problem.partition.summary(ds)),
        schedule,
        params: serde_json::to_value(params).unwrap_or(serde_json::Value::Null),
        timing,
        ledger_totals: LedgerCounts::default(),
        audit: None,
    };
    Ok(RunHistory { meta, rows, final_w: w.iter().map(|v| v.to_f64_lossy()).collect() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_dataset, SparseDataset, SparseVector};
    use crate::partition::{partition_horizontal, ClientHolding, HeldFeatures, Partition, Scheme};
    use proptest::prelude::*;

    fn two_client_layout(f0: Vec<usize>, f1: Vec<usize>, m: usize) -> FederatedLayout<f64> {
        let ds = SparseDataset::new("o", m, vec![SparseVector::new(), SparseVector::new()], vec![1.0, -1.0]).unwrap();
        let clients = vec![
            ClientHolding::new(vec![0], HeldFeatures::Rectangular(f0)).unwrap(),
            ClientHolding::new(vec![1], HeldFeatures::Rectangular(f1)).unwrap(),
        ];
        let p = Partition::from_holdings(Scheme::Vertical, 1, 2, 2, m, clients).unwrap();
        FederatedLayout::new(&ds, &p)
    }

    #[test]
    fn learning_rate_examples() {
        let p = FedAvgParams { a: 1.0, b: 0.0, ..Default::default() };
        assert_eq!(p.learning_rate(1), 1.0);
        let q = FedAvgParams { a: 2.0, b: 3.0, ..Default::default() };
        assert!((1..100).all(|t| q.learning_rate(t + 1) < q.learning_rate(t)));
    }

    #[test]
    fn averaging_examples() {
        let lay = two_client_layout(vec![0, 1], vec![2], 4);
        let w = average_overlaps(&lay, &[(0, vec![0.1, 0.2]), (1, vec![0.3])], &[9.0; 4]);
        assert_eq!(w, vec![0.1, 0.2, 0.3, 9.0]);
        let lay = two_client_layout(vec![0], vec![0], 1);
        let w = average_overlaps(&lay, &[(0, vec![0.2]), (1, vec![0.4])], &[0.0]);
        assert!((w[0] - 0.3).abs() < 1e-15);
        let w = average_overlaps(&lay, &[], &[0.7]);
        assert_eq!(w, vec![0.7]);
    }

    #[test]
    fn satisfied_margin_only_shrinks() {
        let ds = SparseDataset::new("m", 1, vec![SparseVector::from_dense(&[1.0])], vec![1.0]).unwrap();
        let p = partition_horizontal(&ds, 1).unwrap();
        let lay = FederatedLayout::new(&ds, &p);
        let params = FedAvgParams { inner_iterations: 1, a: 0.5, b: 0.0, seed: 0 };
        let mut w = vec![4.0];
        local_sgd(&lay, ds.labels(), 0, &mut w, 0.1, &params, 1);
        assert_eq!(w, vec![4.0 * (1.0 - 0.5 * 0.1)]);
    }

    #[test]
    fn single_client_equals_plain_sgd() {
        let ds = synth_dataset::<f64>(4, 50, 6, 0.1, 0.0).unwrap();
        let p = partition_horizontal(&ds, 1).unwrap();
        let prob = FederatedProblem::new(&ds, &p, 0.01).unwrap();
        let params = FedAvgParams { inner_iterations: 1, a: 0.5, b: 1.0, seed: 3 };
        let hist = run_fedavg(prob, params, Schedule::Full, TimingModel::fedavg(0.0), StopRule::Iterations(100)).unwrap();

        let lambda = 0.01;
        let mut w = vec![0.0f64; 6];
        for t in 1..=100usize {
            let mut r = rng::stream(3, tags::SGD, &[t as u64, 0]);
            let i = r.random_range(0..50);
            let x = ds.sample(i);
            let y = ds.label(i);
            let gamma = 0.5 / (1.0 + (t as f64).sqrt());
            let margin: f64 = x.iter().map(|(m, v)| v * w[m]).sum();
            let g = if y * margin > 1.0 { 0.0 } else { -y };
            for v in w.iter_mut() {
                *v *= 1.0 - gamma * lambda;
            }
            for (m, v) in x.iter() {
                w[m] -= gamma * g * v;
            }
            let p = primal_objective(&w, &ds, &prob.reg).unwrap();
            assert!((hist.rows[t - 1].primal - p).abs() <= 1e-12);
        }
        for (a, b) in hist.final_w.iter().zip(&w) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn loss_decreases_on_separable_data() {
        let ds = synth_dataset::<f64>(5, 200, 10, 0.2, 0.0).unwrap();
        let p = partition_horizontal(&ds, 1).unwrap();
        let prob = FederatedProblem::new(&ds, &p, 0.01).unwrap();
        let params = FedAvgParams { inner_iterations: 10, a: 1.0, b: 1.0, seed: 1 };
        let h = run_fedavg(prob, params, Schedule::Full, TimingModel::fedavg(0.0), StopRule::Iterations(200)).unwrap();
        assert!(h.rows.last().unwrap().primal < 0.5 * h.rows[0].primal.max(1.0));
        assert!(h.rows.iter().all(|r| r.enc_s == 0.0));
    }

    #[test]
    fn same_seed_same_history() {
        let ds = synth_dataset::<f64>(5, 60, 10, 0.1, 0.0).unwrap();
        let p = partition_horizontal(&ds, 4).unwrap();
        let prob = FederatedProblem::new(&ds, &p, 0.01).unwrap();
        let params = FedAvgParams { inner_iterations: 3, a: 0.3, b: 2.0, seed: 6 };
        let s = Schedule::RandomFraction { fraction: 0.5, seed: 2 };
        let a = run_fedavg(prob, params, s, TimingModel::fedavg(0.8), StopRule::Iterations(40)).unwrap();
        let b = run_fedavg(prob, params, s, TimingModel::fedavg(0.8), StopRule::Iterations(40)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows[0].latency_s, 0.8);
    }

    proptest! {
        #[test]
        fn averaging_is_permutation_invariant_and_idempotent(
            v0 in prop::collection::vec(-5.0f64..5.0, 3),
            v1 in prop::collection::vec(-5.0f64..5.0, 2),
        ) {
            let lay = two_client_layout(vec![0, 1, 2], vec![1, 3], 4);
            let prev = [0.5; 4];
            let a = average_overlaps(&lay, &[(0, v0.clone()), (1, v1.clone())], &prev);
            let b = average_overlaps(&lay, &[(1, v1.clone()), (0, v0.clone())], &prev);
            prop_assert_eq!(&a, &b);
            let same = average_overlaps(&lay, &[(0, v0.clone()), (0, v0.clone())], &prev);
            let once = average_overlaps(&lay, &[(0, v0.clone())], &prev);
            prop_assert_eq!(same, once);
        }
    }
}
