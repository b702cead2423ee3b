//! # distill-lab
//!
//! A numerical laboratory for curriculum-based knowledge distillation on
//! sparse parities, built around two-layer ReLU MLPs.
//!
//! The crate provides:
//! - exact Boolean Fourier analysis over `{-1,+1}^d` (parities, majority
//!   coefficients, full coefficient tables by enumeration),
//! - sparse-parity tasks and labeled sample streams,
//! - two-layer MLPs with symmetric (mirrored-pair) initialization and
//!   analytic hinge/distillation gradients,
//! - the two-stage teacher trainer, the random-projection curriculum student,
//!   a budget-matched one-shot baseline, and a generic staged-schedule runner,
//! - mechanism diagnostics (weight gaps, projected correlations, gradient
//!   decomposition, Monte-Carlo concentration curves),
//! - a small PCFG pipeline (the cfg3b grammar, sentence sampling, masked-token
//!   corruption),
//! - a config-driven experiment harness with content-hashed result bundles.
//!
//! Everything tolerance-sensitive runs in `f64`. All sampled paths are driven
//! by explicit `ChaCha8` generators so identical seeds reproduce identical
//! results byte for byte, independent of worker count.

pub mod boolean_fourier;
pub mod diagnostics;
pub mod distill;
pub mod error;
pub mod harness;
pub mod mlp;
pub mod parity_data;
pub mod pcfg;
pub mod rng;
pub mod util;

pub use error::{Error, Result};
