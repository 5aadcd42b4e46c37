//! Score-augmented training of neural likelihood-to-evidence ratio estimators
//! (NLERs) for stochastic process models with tractable likelihoods.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is pure
//! computation: simulators and exact likelihoods for the SIS epidemic CT-HMM
//! and the anisotropic Gaussian / Student-t spatial processes, a small neural
//! network engine with hand-written backward passes, the adaptive
//! score-augmented training loop, and the likelihood-based evaluation
//! protocol (MLE, likelihood-ratio statistics, Wilks confidence sets).
//!
//! File formats, configuration and the command line live in the `nler`
//! companion crate.

#![no_std]

extern crate alloc;

mod error;

pub mod evaluation;
pub mod models;
pub mod nn;
pub mod numerics;
pub mod rng;
pub mod space;
pub mod training;

pub use error::{Error, Result};
