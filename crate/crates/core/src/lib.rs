//! Diffusion-based sampling for mixed p-spin Ising Gibbs measures.
//!
//! The sampler runs an Euler-discretized stochastic-localization process whose
//! drift is the mean of a tilted Gibbs measure. That mean is estimated by an
//! AMP pass followed by natural gradient descent on a modified TAP free
//! energy. Around it sit the scalar state-evolution theory (fixed points and
//! thresholds), exact enumeration oracles for small `n`, a Glauber baseline
//! and the Wasserstein / disorder-chaos / stability experiment harnesses.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod amp;
pub mod baselines;
pub mod cli;
pub mod disorder;
pub mod error;
pub mod localization;
pub mod mixture;
pub mod quadrature;
pub mod rng;
pub mod scalar;
pub mod state_evolution;
pub mod tap;

pub use error::{Error, Result};
pub use mixture::MixtureSpec;
