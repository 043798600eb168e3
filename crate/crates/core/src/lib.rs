//! Adversarially fair representation learning at desk scale.
//!
//! The crate trains an encoder/classifier/decoder stack against a
//! group-normalized l1 adversary (LAFTR-style min-max training), audits
//! downstream classifiers with standard group-fairness metrics, runs fair
//! transfer-learning comparisons against representation baselines, and
//! brute-force checks the adversarial upper bounds on small discrete
//! representation spaces.
//!
//! Module map:
//! - [`nn`]: dense networks, manual backprop, Adam
//! - [`data`]: grouped tabular datasets, CSV schemas, splits, synthetic generators
//! - [`metrics`]: demographic parity / equalized odds / MMD / adversarial probes
//! - [`objectives`]: the adversary's group-normalized l1 and cross-entropy objectives
//! - [`trainer`]: alternating min-max training with checkpoints
//! - [`eval`]: freeze-and-probe evaluation, checkpoint selection, gamma sweeps
//! - [`transfer`]: the fair transfer-learning suite and representation audits
//! - [`oracle`]: enumeration oracles for the adversarial bound theorems

pub mod data;
pub mod error;
pub mod eval;
pub mod mat;
pub mod metrics;
pub mod nn;
pub mod objectives;
pub mod oracle;
pub mod trainer;
pub mod transfer;

pub use error::{Error, Result};

/// Crate version embedded in every output artifact.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Stable 64-bit FNV-1a hash used for config fingerprints.
///
/// Kept in-crate so fingerprints never change under std hasher updates.
pub fn fingerprint64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Hex form of [`fingerprint64`], the format embedded in artifacts.
pub fn fingerprint_hex(bytes: &[u8]) -> String {
    format!("{:016x}", fingerprint64(bytes))
}
