//! MMSE-based hybrid analog/digital beamforming (HBF) design and a
//! single-carrier frequency-domain-equalization (SC-FDE) link simulator for
//! broadband mmWave MIMO.
//!
//! The crate is organized around the processing chain:
//!
//! - [`numerics`]: complex dense linear algebra (Hermitian EVD, inversion,
//!   unitary DFT/IDFT) with explicit contracts,
//! - [`channel`]: cluster-ray mmWave channel realizations and per-tone
//!   frequency responses,
//! - [`hbf`]: the EVD-HBF solver (optimal per-tone digital combiners,
//!   EVD-based analog updates, alternating minimization),
//! - [`baselines`]: ideal full-digital and strongest-path comparison schemes,
//! - [`link`]: QAM blocks, cyclic prefix, tap-domain convolution, AWGN and
//!   BER/MSE/PAPR measurement,
//! - [`cli`]: batch experiment orchestration with CSV output,
//! - [`verify`]: the cross-module invariant suites behind `sc-hbf selftest`.

pub mod baselines;
pub mod channel;
pub mod cli;
pub mod hbf;
pub mod link;
pub mod numerics;
pub mod verify;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Incompatible or out-of-range dimensions.
    #[error("dimension error: {0}")]
    Dimension(String),
    /// Matrix singular to working precision.
    #[error("singularity error: {0}")]
    Singular(String),
    /// Invalid configuration or parameter combination.
    #[error("configuration error: {0}")]
    Config(String),
    /// Bit payload not aligned with the modulation order.
    #[error("framing error: {0}")]
    Framing(String),
    /// Metric undefined for the given input (e.g. PAPR of a silent block).
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    /// Malformed config, channel or solution file.
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
