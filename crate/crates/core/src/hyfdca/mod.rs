//! Hybrid federated dual coordinate ascent.
//!
//! The engine keeps the server state (encrypted `α₀`, plaintext `w₀`, cached
//! per-client primal contributions `ŵ` and encrypted inner-product parts) and
//! one local state per client. Every value that crosses the client/server
//! boundary goes through the [`ledger::EncryptionLedger`] and is recorded in
//! the [`ledger::PrivacyAudit`].

pub mod layout;
pub mod ledger;
pub mod schedule;

use log::warn;
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::data::SparseDataset;
use crate::error::{config, Error, Result};
use crate::metrics::history::{IterationRecord, RunHistory, RunMetadata};
use crate::metrics::timing::TimingModel;
use crate::metrics::accuracy;
use crate::objective::{
    closed_form_dual_step, dual_direction, dual_objective, is_dual_feasible, line_search_dual_step,
    primal_objective, ClosedFormOptions, LineSearchInput, Regularization,
};
use crate::partition::Partition;
use crate::rng::{self, tags};
use crate::Scalar;

pub use layout::FederatedLayout;
pub use ledger::{Ciphertext, CipherCosts, EncryptionLedger, LedgerCounts, PrivacyAudit};
pub use schedule::{GammaSchedule, Schedule, StepScale, StopRule};

/// Training data, validation data and partition shared by the federated
/// algorithms.
#[derive(Debug, Clone, Copy)]
pub struct FederatedProblem<'a, T> {
    pub train: &'a SparseDataset<T>,
    pub validation: Option<&'a SparseDataset<T>>,
    pub partition: &'a Partition,
    pub reg: Regularization<T>,
}

impl<'a, T: Scalar> FederatedProblem<'a, T> {
    pub fn new(train: &'a SparseDataset<T>, partition: &'a Partition, lambda: T) -> Result<Self> {
        partition.validate(train)?;
        let reg = Regularization::new(lambda, train.n_samples())?;
        Ok(Self { train, validation: None, partition, reg })
    }

    pub fn with_validation(mut self, validation: &'a SparseDataset<T>) -> Result<Self> {
        if validation.n_features() != self.train.n_features() {
            return Err(Error::Dimension { expected: self.train.n_features(), found: validation.n_features() });
        }
        self.validation = Some(validation);
        Ok(self)
    }

    /// Accuracy on the validation split, or on the training data without one.
    pub fn accuracy(&self, w: &[T]) -> f64 {
        accuracy(w, self.validation.unwrap_or(self.train))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DualStep {
    #[default]
    ClosedForm,
    LineSearch,
}

/// Which ciphertexts move each round.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferPolicy {
    /// Every inner product of an active client's samples and every dual entry
    /// of its samples are exchanged each round.
    #[default]
    Protocol,
    /// Inner products only for the sampled coordinates; dual entries only
    /// when they changed since the client last saw them.
    OnDemand,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyfdcaParams {
    /// `H`, coordinates each active client updates per round.
    pub inner_iterations: usize,
    pub gamma: GammaSchedule,
    pub step_scale: StepScale,
    pub dual_step: DualStep,
    pub closed_form: ClosedFormOptions,
    pub transfer: TransferPolicy,
    /// Run a second inner-product exchange at the end of each round.
    pub second_inner_product: bool,
    pub seed: u64,
}

impl Default for HyfdcaParams {
    fn default() -> Self {
        Self {
            inner_iterations: 1,
            gamma: GammaSchedule::Constant,
            step_scale: StepScale::SampleFraction,
            dual_step: DualStep::ClosedForm,
            closed_form: ClosedFormOptions::default(),
            transfer: TransferPolicy::Protocol,
            second_inner_product: false,
            seed: 0,
        }
    }
}

struct ServerState<T> {
    alpha: Vec<Ciphertext<T>>,
    version: Vec<u64>,
    w0: Vec<T>,
    w_hat: Vec<Vec<T>>,
    ip: Vec<Vec<Ciphertext<T>>>,
}

struct ClientState<T> {
    alpha: Vec<T>,
    seen: Vec<u64>,
    w: Vec<T>,
    ip: Vec<T>,
    c: T,
}

pub struct HyfdcaEngine<'a, T: Scalar> {
    problem: FederatedProblem<'a, T>,
    layout: FederatedLayout<T>,
    params: HyfdcaParams,
    schedule: Schedule,
    timing: TimingModel,
    server: ServerState<T>,
    clients: Vec<ClientState<T>>,
    ledger: EncryptionLedger,
    audit: PrivacyAudit,
    ops: Vec<u64>,
    prev_active: Vec<bool>,
    t: usize,
    cum_s: f64,
    totals: LedgerCounts,
}

impl<'a, T: Scalar> HyfdcaEngine<'a, T> {
    pub fn new(
        problem: FederatedProblem<'a, T>,
        params: HyfdcaParams,
        schedule: Schedule,
        timing: TimingModel,
    ) -> Result<Self> {
        let k_total = problem.partition.n_clients();
        if k_total == 0 {
            return Err(config("partition has no clients"));
        }
        schedule.validate(k_total)?;
        let layout = FederatedLayout::new(problem.train, problem.partition);
        let n = problem.train.n_samples();
        let max_local = layout.clients.iter().map(|c| c.samples.len()).max().unwrap_or(0);
        if params.inner_iterations > max_local {
            warn!("H = {} exceeds the largest client sample count {max_local}", params.inner_iterations);
        }
        let p = schedule.participation(k_total);
        if p * params.inner_iterations as f64 > n as f64 {
            warn!("P·H = {} exceeds N = {n}", p * params.inner_iterations as f64);
        }
        let server = ServerState {
            alpha: vec![Ciphertext::zero(); n],
            version: vec![0; n],
            w0: vec![T::zero(); problem.train.n_features()],
            w_hat: layout.clients.iter().map(|c| vec![T::zero(); c.features.len()]).collect(),
            ip: layout.clients.iter().map(|c| vec![Ciphertext::zero(); c.samples.len()]).collect(),
        };
        let clients = layout
            .clients
            .iter()
            .map(|c| ClientState {
                alpha: vec![T::zero(); c.samples.len()],
                seen: vec![0; c.samples.len()],
                w: vec![T::zero(); c.features.len()],
                ip: vec![T::zero(); c.samples.len()],
                c: match params.step_scale {
                    StepScale::SampleFraction => T::from_count(c.samples.len()) / T::from_count(n),
                    StepScale::One => T::one(),
                },
            })
            .collect();
        Ok(Self {
            problem,
            layout,
            params,
            schedule,
            timing,
            server,
            clients,
            ledger: EncryptionLedger::new(),
            audit: PrivacyAudit::default(),
            ops: vec![0; k_total],
            prev_active: vec![false; k_total],
            t: 0,
            cum_s: 0.0,
            totals: LedgerCounts::default(),
        })
    }

    pub fn iteration(&self) -> usize {
        self.t
    }

    pub fn audit(&self) -> &PrivacyAudit {
        &self.audit
    }

    pub fn layout(&self) -> &FederatedLayout<T> {
        &self.layout
    }

    /// Server primal weights `w₀`.
    pub fn w0(&self) -> &[T] {
        &self.server.w0
    }

    /// Plaintext view of the server's dual vector, for measurement.
    pub fn alpha0(&self) -> Vec<T> {
        self.server.alpha.iter().map(Ciphertext::peek).collect()
    }

    /// Cached primal contribution `ŵ_{0,k,·}` in client `k`'s feature order.
    pub fn cached_contribution(&self, k: usize) -> &[T] {
        &self.server.w_hat[k]
    }

    /// Client `k`'s local dual copy, aligned with its sample list.
    pub fn client_alpha(&self, k: usize) -> &[T] {
        &self.clients[k].alpha
    }

    /// Client `k`'s local primal copy, aligned with its feature list.
    pub fn client_w(&self, k: usize) -> &[T] {
        &self.clients[k].w
    }

    /// Decrypted inner products client `k` last received, aligned with its
    /// sample list.
    pub fn client_inner_products(&self, k: usize) -> &[T] {
        &self.clients[k].ip
    }

    pub fn ledger_counts(&self) -> LedgerCounts {
        self.ledger.counts()
    }

    /// Sends `enc(α₀)` entries of each client's samples; with
    /// [`TransferPolicy::OnDemand`] only entries it has not seen yet.
    fn sync_alpha(&mut self, clients: &[usize]) {
        let on_demand = self.params.transfer == TransferPolicy::OnDemand;
        for &k in clients {
            let cd = &self.layout.clients[k];
            let st = &mut self.clients[k];
            for (pos, &i) in cd.samples.iter().enumerate() {
                if on_demand && st.seen[pos] == self.server.version[i] {
                    continue;
                }
                self.audit.alpha_deliveries += 1;
                if self.problem.partition.client(k).sample_position(i).is_none() {
                    self.audit.alpha_out_of_scope += 1;
                }
                st.alpha[pos] = self.ledger.decrypt(self.server.alpha[i]);
                st.seen[pos] = self.server.version[i];
            }
        }
    }

    /// Clients in `clients` refresh their contributions `ŵ_k`, the server
    /// rebuilds `w₀` from every cached contribution and sends each of those
    /// clients `w₀` restricted to its features.
    pub fn primal_aggregation(&mut self, clients: &[usize]) {
        for &k in clients {
            let cd = &self.layout.clients[k];
            let st = &self.clients[k];
            let mut local = vec![T::zero(); cd.features.len()];
            for (row, &a) in cd.rows.iter().zip(&st.alpha) {
                if !a.is_zero() {
                    row.axpy_into(a, &mut local);
                }
            }
            self.ops[k] += 2 * cd.nnz as u64;
            self.audit.primal_uploads += local.len() as u64;
            self.server.w_hat[k] = local;
        }
        let scale = T::one() / self.problem.reg.lambda_n();
        for (m, holders) in self.layout.feature_holders.iter().enumerate() {
            let s: T = holders.iter().map(|&(k, f)| self.server.w_hat[k][f]).sum();
            self.server.w0[m] = s * scale;
        }
        for &k in clients {
            let cd = &self.layout.clients[k];
            let st = &mut self.clients[k];
            for (f, &m) in cd.features.iter().enumerate() {
                self.audit.w_deliveries += 1;
                if self.problem.partition.client(k).feature_position(m).is_none() {
                    self.audit.w_out_of_scope += 1;
                }
                st.w[f] = self.server.w0[m];
            }
        }
    }

    /// Active clients encrypt `x_{k,i}ᵀw_k` for the requested local sample
    /// positions; the server adds the parts of every holder (cached parts for
    /// inactive holders) and each requesting client decrypts the totals.
    pub fn secure_inner_product(&mut self, clients: &[usize], positions: &[Vec<usize>]) {
        let n = self.problem.train.n_samples();
        let mut wanted = vec![false; n];
        for (&k, pos_list) in clients.iter().zip(positions) {
            let cd = &self.layout.clients[k];
            let st = &self.clients[k];
            for &pos in pos_list {
                let row = &cd.rows[pos];
                let part = row.dot(&st.w);
                self.ops[k] += 2 * row.nnz() as u64;
                self.audit.ip_uploads += 1;
                let c = self.ledger.encrypt(part);
                self.audit.ip_uploads_encrypted += 1;
                self.server.ip[k][pos] = c;
                wanted[cd.samples[pos]] = true;
            }
        }
        let mut totals: Vec<Option<Ciphertext<T>>> = vec![None; n];
        for (i, holders) in self.layout.sample_holders.iter().enumerate() {
            if !wanted[i] {
                continue;
            }
            let mut acc: Option<Ciphertext<T>> = None;
            for &(k, pos) in holders {
                let part = self.server.ip[k][pos];
                acc = Some(match acc {
                    None => part,
                    Some(a) => self.ledger.add(a, part),
                });
            }
            totals[i] = acc;
        }
        for (&k, pos_list) in clients.iter().zip(positions) {
            let cd = &self.layout.clients[k];
            for &pos in pos_list {
                let i = cd.samples[pos];
                let total = totals[i].expect("requested sample was assembled");
                self.audit.ip_deliveries += 1;
                if self.problem.partition.client(k).sample_position(i).is_none() {
                    self.audit.ip_out_of_scope += 1;
                }
                self.clients[k].ip[pos] = self.ledger.decrypt(total);
            }
        }
    }

    fn all_positions(&self, clients: &[usize]) -> Vec<Vec<usize>> {
        clients.iter().map(|&k| (0..self.layout.clients[k].samples.len()).collect()).collect()
    }

    fn draw_coordinates(&self, k: usize) -> Vec<usize> {
        let n_k = self.layout.clients[k].samples.len();
        let h = self.params.inner_iterations.min(n_k);
        let mut r = rng::stream(self.params.seed, tags::LOCAL_SAMPLES, &[self.t as u64, k as u64]);
        index::sample(&mut r, n_k, h).into_vec()
    }

    /// Local dual method on the drawn coordinates; returns the encrypted,
    /// pre-scaled updates `enc(γ/|𝓑ᵢ| · Δαᵢ)`.
    fn local_updates(&mut self, k: usize, coords: &[usize], gamma: T) -> Result<Vec<(usize, Ciphertext<T>)>> {
        let reg = self.problem.reg;
        let opts = self.params.closed_form;
        let cd = &self.layout.clients[k];
        let st = &self.clients[k];
        let mut deltas = Vec::with_capacity(coords.len());
        for &pos in coords {
            let i = cd.samples[pos];
            let y = self.problem.train.label(i);
            let a = st.alpha[pos];
            let ip = st.ip[pos];
            let q = self.layout.norm_sq[i];
            let delta = match self.params.dual_step {
                DualStep::ClosedForm => st.c * closed_form_dual_step(y, a, ip, &reg, q, opts)?,
                DualStep::LineSearch => {
                    let lambda_n = reg.lambda_n();
                    let local_lambda = if opts.exact_norm && q > T::zero() { lambda_n / q } else { lambda_n };
                    let local_reg = Regularization::new(local_lambda, 1)?;
                    let input = LineSearchInput { y, alpha: a, u: dual_direction(y, ip), margin: ip, c: st.c, gamma };
                    line_search_dual_step(&input, &local_reg).1
                }
            };
            deltas.push((i, delta));
        }
        self.ops[k] += 8 * coords.len() as u64;
        let mut out = Vec::with_capacity(deltas.len());
        for (i, delta) in deltas {
            let share = gamma / T::from_count(self.layout.sample_holders[i].len());
            self.audit.alpha_uploads += 1;
            let c = self.ledger.encrypt(share * delta);
            self.audit.alpha_uploads_encrypted += 1;
            out.push((i, c));
        }
        Ok(out)
    }

    /// One outer iteration.
    pub fn step(&mut self) -> Result<IterationRecord> {
        self.t += 1;
        let t = self.t;
        let k_total = self.clients.len();
        let active = self.schedule.active(t, k_total);
        self.ops.iter_mut().for_each(|o| *o = 0);
        if active.is_empty() {
            self.prev_active.iter_mut().for_each(|a| *a = false);
            return self.record(t, 0, true);
        }

        let returning: Vec<usize> = active.iter().copied().filter(|&k| !self.prev_active[k]).collect();
        self.sync_alpha(&returning);
        self.primal_aggregation(&returning);

        let coords: Vec<Vec<usize>> = active.iter().map(|&k| self.draw_coordinates(k)).collect();
        let positions = match self.params.transfer {
            TransferPolicy::Protocol => self.all_positions(&active),
            TransferPolicy::OnDemand => coords.clone(),
        };
        self.secure_inner_product(&active, &positions);

        let gamma: T = self.params.gamma.gamma(t);
        let mut uploads = Vec::with_capacity(active.len());
        for (&k, c) in active.iter().zip(&coords) {
            uploads.push(self.local_updates(k, c, gamma)?);
        }
        let mut touched = vec![false; self.server.alpha.len()];
        for list in uploads {
            for (i, c) in list {
                self.server.alpha[i] = self.ledger.add(self.server.alpha[i], c);
                touched[i] = true;
            }
        }
        for (i, hit) in touched.into_iter().enumerate() {
            if hit {
                self.server.version[i] += 1;
            }
        }

        self.sync_alpha(&active);
        self.primal_aggregation(&active);
        if self.params.second_inner_product {
            let positions = match self.params.transfer {
                TransferPolicy::Protocol => self.all_positions(&active),
                TransferPolicy::OnDemand => coords,
            };
            self.secure_inner_product(&active, &positions);
        }

        self.prev_active.iter_mut().for_each(|a| *a = false);
        for &k in &active {
            self.prev_active[k] = true;
        }
        let max_ops = active.iter().map(|&k| self.ops[k]).max().unwrap_or(0);
        self.record(t, max_ops, false).map(|mut r| {
            r.active = active.len();
            r
        })
    }

    fn record(&mut self, t: usize, ops: u64, skipped: bool) -> Result<IterationRecord> {
        let counts = self.ledger.take();
        self.totals += counts;
        let charge = if skipped {
            Default::default()
        } else {
            self.timing.charge(ops, &counts)
        };
        self.cum_s += charge.total();

        let alpha = self.alpha0();
        let train = self.problem.train;
        for (i, (&a, &y)) in alpha.iter().zip(train.labels()).enumerate() {
            if !is_dual_feasible(y, a) {
                return Err(Error::Invariant { iteration: t, msg: format!("alpha[{i}] = {a} left the dual box") });
            }
        }
        let p = primal_objective(&self.server.w0, train, &self.problem.reg)?;
        let d = dual_objective(&alpha, train, &self.problem.reg)?;
        let tol = T::lit(1e4) * T::epsilon() * (T::one() + p.abs());
        if d > p + tol {
            return Err(Error::Invariant { iteration: t, msg: format!("dual {d} exceeds primal {p}") });
        }
        Ok(IterationRecord {
            t,
            primal: p.to_f64_lossy(),
            dual: Some(d.to_f64_lossy()),
            gap: Some((p - d).to_f64_lossy()),
            accuracy: self.problem.accuracy(&self.server.w0),
            compute_s: charge.compute_s,
            enc_s: charge.enc_s,
            latency_s: charge.latency_s,
            cum_s: self.cum_s,
            active: 0,
            counts,
            skipped,
        })
    }

    pub fn metadata(&self) -> RunMetadata {
        let ds = self.problem.train;
        RunMetadata {
            algorithm: "hyfdca".into(),
            seed: self.params.seed,
            dataset: ds.name().to_string(),
            n_samples: ds.n_samples(),
            n_features: ds.n_features(),
            lambda: self.problem.reg.lambda().to_f64_lossy(),
            partition: Some(self.problem.partition.summary(ds)),
            schedule: self.schedule,
            params: serde_json::to_value(self.params).unwrap_or(serde_json::Value::Null),
            timing: self.timing,
            ledger_totals: self.totals,
            audit: Some(self.audit),
        }
    }

    pub fn run(mut self, stop: StopRule) -> Result<RunHistory> {
        let mut rows = Vec::new();
        while !stop.should_stop(rows.len(), self.cum_s) {
            rows.push(self.step()?);
        }
        Ok(RunHistory {
            meta: self.metadata(),
            rows,
            final_w: self.server.w0.iter().map(|v| v.to_f64_lossy()).collect(),
        })
    }
}

pub fn run_hyfdca<T: Scalar>(
    problem: FederatedProblem<'_, T>,
    params: HyfdcaParams,
    schedule: Schedule,
    timing: TimingModel,
    stop: StopRule,
) -> Result<RunHistory> {
    HyfdcaEngine::new(problem, params, schedule, timing)?.run(stop)
}
