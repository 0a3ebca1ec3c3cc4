//! Simulated wall-time model: compute, encryption penalty and latency.

use serde::{Deserialize, Serialize};

use crate::hyfdca::ledger::{CipherCosts, LedgerCounts};

/// Latency per round trip for the three connection scenarios.
pub const LATENCY_SCENARIOS: [f64; 3] = [0.0, 0.2575, 0.8];
pub const HYFDCA_RTC: f64 = 4.5;
pub const FEDAVG_RTC: f64 = 1.0;
/// Simulated seconds per counted floating point operation.
pub const DEFAULT_SECONDS_PER_OP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingModel {
    pub latency_per_rtc_s: f64,
    pub rtc_per_iteration: f64,
    pub costs: CipherCosts,
    pub seconds_per_op: f64,
}

/// Time charged for one outer iteration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Charge {
    pub compute_s: f64,
    pub enc_s: f64,
    pub latency_s: f64,
}

impl Charge {
    pub fn total(&self) -> f64 {
        self.compute_s + self.enc_s + self.latency_s
    }
}

impl TimingModel {
    pub fn hyfdca(latency_per_rtc_s: f64) -> Self {
        Self {
            latency_per_rtc_s,
            rtc_per_iteration: HYFDCA_RTC,
            costs: CipherCosts::paillier(),
            seconds_per_op: DEFAULT_SECONDS_PER_OP,
        }
    }

    pub fn fedavg(latency_per_rtc_s: f64) -> Self {
        Self {
            latency_per_rtc_s,
            rtc_per_iteration: FEDAVG_RTC,
            costs: CipherCosts::free(),
            seconds_per_op: DEFAULT_SECONDS_PER_OP,
        }
    }

    pub fn with_latency(mut self, latency_per_rtc_s: f64) -> Self {
        self.latency_per_rtc_s = latency_per_rtc_s;
        self
    }

    pub fn latency_seconds(&self) -> f64 {
        self.rtc_per_iteration * self.latency_per_rtc_s
    }

    pub fn compute_seconds(&self, ops: u64) -> f64 {
        ops as f64 * self.seconds_per_op
    }

    pub fn charge(&self, ops: u64, counts: &LedgerCounts) -> Charge {
        Charge {
            compute_s: self.compute_seconds(ops),
            enc_s: self.costs.seconds(counts),
            latency_s: self.latency_seconds(),
        }
    }
}
