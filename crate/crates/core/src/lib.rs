//! Connection-aware Adam (CaAdam) and its Adam-lineage baselines.
//!
//! The crate is organised bottom-up:
//!
//! - [`linalg`]: dense row-major matrices and the seeded generator every
//!   stochastic step draws from.
//! - [`nn`]: dense ReLU networks with exact backpropagation.
//! - [`arch`]: per-layer connection counts and depth, the structural proxies
//!   the connection-aware optimizers consume.
//! - [`scaling`]: the additive, multiplicative and depth-based scale tables.
//! - [`optim`]: SGD, Adagrad, Adadelta, RMSprop, Adam, AdamW, Adamax, Nadam
//!   and CaAdam behind one stepping contract.
//! - [`train`]: mini-batch loop with early stopping and reduce-on-plateau.
//! - [`data`]: CSV ingestion, splits, standardisation, synthetic generators.
//! - [`bench`]: repeated-trial runner, Welch t-tests and comparison reports.

pub mod arch;
pub mod bench;
pub mod data;
pub mod error;
pub mod linalg;
pub mod nn;
pub mod optim;
pub mod scaling;
pub mod train;

pub use error::{Error, Result};
