//! Variational message passing (VMP) inference for the smoothed latent
//! Dirichlet allocation topic model.
//!
//! The crate is organized around the LDA Bayesian network: [`ef`] holds
//! the exponential-family primitives, [`model`] the corpus and
//! variational state, [`messages`] the node-to-node message equations,
//! [`engine`] the fixed message-passing schedule, [`ingest`] the corpus
//! readers, and [`eval`] the oracle, synthetic-data, and reporting
//! instruments.

pub mod ef;
pub mod engine;
pub mod eval;
pub mod messages;
pub mod model;
pub mod error;

pub use ef::{
    digamma, dirichlet_expected_log, log_normalize, DirichletParams, LogProbVector, ProbVector,
    DIGAMMA_TOL, NORMALIZATION_TOL,
};
pub use error::{Error, Result};
