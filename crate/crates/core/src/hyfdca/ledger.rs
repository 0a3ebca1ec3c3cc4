//! Pass-through additive homomorphic encryption with operation accounting,
//! and the audit trail that checks what crosses the client/server boundary.

use serde::{Deserialize, Serialize};

use crate::Scalar;

/// Paillier benchmark costs in seconds.
pub const PAILLIER_ENC_S: f64 = 0.018882;
pub const PAILLIER_DEC_S: f64 = 0.018865;
pub const PAILLIER_ADD_S: f64 = 0.000054;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CipherCosts {
    pub enc_s: f64,
    pub dec_s: f64,
    pub add_s: f64,
}

impl Default for CipherCosts {
    fn default() -> Self {
        Self::paillier()
    }
}

impl CipherCosts {
    pub fn paillier() -> Self {
        Self { enc_s: PAILLIER_ENC_S, dec_s: PAILLIER_DEC_S, add_s: PAILLIER_ADD_S }
    }

    pub fn free() -> Self {
        Self { enc_s: 0.0, dec_s: 0.0, add_s: 0.0 }
    }

    /// `enc·c_enc + dec·c_dec + add·c_add`, summed in that order.
    pub fn seconds(&self, counts: &LedgerCounts) -> f64 {
        counts.enc as f64 * self.enc_s + counts.dec as f64 * self.dec_s + counts.add as f64 * self.add_s
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerCounts {
    pub enc: u64,
    pub dec: u64,
    pub add: u64,
}

impl std::ops::AddAssign for LedgerCounts {
    fn add_assign(&mut self, o: Self) {
        self.enc += o.enc;
        self.dec += o.dec;
        self.add += o.add;
    }
}

/// An encrypted scalar. The plaintext is only reachable through
/// [`EncryptionLedger::decrypt`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ciphertext<T>(T);

impl<T: Scalar> Ciphertext<T> {
    /// Encryption of zero used to initialise server-side buffers. Not charged.
    pub fn zero() -> Self {
        Ciphertext(T::zero())
    }

    /// Measurement-only access for objective evaluation and tests.
    pub(crate) fn peek(&self) -> T {
        self.0
    }
}

/// Counts encryption operations for the current outer iteration.
#[derive(Debug, Clone, Default)]
pub struct EncryptionLedger {
    counts: LedgerCounts,
}

impl EncryptionLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn encrypt<T: Scalar>(&mut self, v: T) -> Ciphertext<T> {
        self.counts.enc += 1;
        Ciphertext(v)
    }

    pub fn decrypt<T: Scalar>(&mut self, c: Ciphertext<T>) -> T {
        self.counts.dec += 1;
        c.0
    }

    pub fn add<T: Scalar>(&mut self, a: Ciphertext<T>, b: Ciphertext<T>) -> Ciphertext<T> {
        self.counts.add += 1;
        Ciphertext(a.0 + b.0)
    }

    pub fn counts(&self) -> LedgerCounts {
        self.counts
    }

    /// Returns the counts so far and starts a new iteration.
    pub fn take(&mut self) -> LedgerCounts {
        std::mem::take(&mut self.counts)
    }
}

/// Tallies of every value that crossed the client/server boundary.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrivacyAudit {
    pub alpha_uploads: u64,
    pub alpha_uploads_encrypted: u64,
    pub ip_uploads: u64,
    pub ip_uploads_encrypted: u64,
    /// Plaintext per-feature primal contributions (not protected by design).
    pub primal_uploads: u64,
    pub alpha_deliveries: u64,
    pub alpha_out_of_scope: u64,
    pub ip_deliveries: u64,
    pub ip_out_of_scope: u64,
    pub w_deliveries: u64,
    pub w_out_of_scope: u64,
}

impl PrivacyAudit {
    pub fn violations(&self) -> u64 {
        (self.alpha_uploads - self.alpha_uploads_encrypted)
            + (self.ip_uploads - self.ip_uploads_encrypted)
            + self.alpha_out_of_scope
            + self.ip_out_of_scope
            + self.w_out_of_scope
    }

    pub fn merge(&mut self, o: &PrivacyAudit) {
        self.alpha_uploads += o.alpha_uploads;
        self.alpha_uploads_encrypted += o.alpha_uploads_encrypted;
        self.ip_uploads += o.ip_uploads;
        self.ip_uploads_encrypted += o.ip_uploads_encrypted;
        self.primal_uploads += o.primal_uploads;
        self.alpha_deliveries += o.alpha_deliveries;
        self.alpha_out_of_scope += o.alpha_out_of_scope;
        self.ip_deliveries += o.ip_deliveries;
        self.ip_out_of_scope += o.ip_out_of_scope;
        self.w_deliveries += o.w_deliveries;
        self.w_out_of_scope += o.w_out_of_scope;
    }
}
