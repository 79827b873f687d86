//! Long-term causal effects of policy changes in two-policy multiagent
//! experiments.
//!
//! Observed population actions are explained by latent behaviors through a
//! quantal level-k model ([`behavioral`]); behaviors evolve by a VAR(1) in
//! additive log-ratio coordinates ([`temporal`]). The [`estimator`] pivots the
//! observed A/B assignment to the all-treated and all-control counterfactuals
//! and integrates over prior draws with self-normalized importance sampling.
//! [`baselines`] holds the naive and difference-in-differences contrasts,
//! [`dataio`] the bundled experimental panel, and [`oracle`] a synthetic
//! generator with brute-force ground truth.

pub mod baselines;
pub mod behavioral;
pub mod dataio;
pub mod error;
pub mod estimator;
pub mod game_model;
pub mod oracle;
pub mod rng;
pub mod temporal;

pub use error::{Error, Result};
