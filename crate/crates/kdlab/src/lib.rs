//! Desk-scale knowledge-distillation laboratory.
//!
//! A self-contained feed-forward classifier with hand-written
//! backpropagation, every distillation loss and logit gradient under study
//! (temperature-scaled KL, its small- and large-temperature limits, rescaled
//! KL, direct logit regression, and the logit-sum term separating them),
//! plus the experiment harnesses (sweeps, sequential chains, noisy labels,
//! TLD bundles) and the diagnostics that measure the outcomes.
//!
//! Everything is deterministic: the same configuration and seed reproduce
//! results bit for bit.

pub mod data;
pub mod diagnostics;
pub mod distill;
pub mod error;
pub mod losses;
pub mod network;
pub mod numerics;
pub mod plot;

pub use error::{Error, Result};
