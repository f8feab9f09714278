//! Progressive Bayesian confidence tiers for single-subject (N-of-1) daily logs.
//!
//! The crate is organised bottom-up:
//!
//! - [`data`]: the dataset model, CSV/JSONL ingestion and pairwise sample extraction.
//! - [`special`]: log-gamma, incomplete beta/gamma, Student-t and Kolmogorov distributions.
//! - [`inference`]: conjugate normal-inverse-gamma regression and its derived summaries.
//! - [`baselines`]: the Welch t-test and the two frequentist detectors.
//! - [`tier`]: daily classification of factor/outcome pairs into confidence tiers.
//! - [`scoring`]: plausibility scores and the confounder heuristic.
//! - [`generator`]: seeded synthetic datasets with a ground-truth manifest.
//! - [`harness`]: single-dataset evaluation, Monte Carlo replication and sweeps.

pub mod baselines;
pub mod data;
pub mod error;
pub mod generator;
pub mod harness;
pub mod inference;
pub mod rng;
pub mod scoring;
pub mod special;
pub mod tier;

pub use error::{Error, Result};
