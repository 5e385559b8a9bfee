//! Dynamic-signature authentication engine.
//!
//! Pipeline: quality gate ([`sigdata`]) → fixed-length features
//! ([`features`]) → map-reduce covariance ([`mapreduce`]) → correlation PCA
//! ([`pca`]) → per-user RPROP ensembles trained in parallel ([`nnet`],
//! [`training`]) → priority-thresholded verification and the template store
//! ([`auth`]). [`eval`] holds the error-rate metrics and speedup timing;
//! [`pipeline`] wires the pieces together for the CLI.

// NaN-rejecting checks are written as `!(x >= lo)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod auth;
pub mod error;
pub mod eval;
pub mod executor;
pub mod features;
pub mod linalg;
pub mod mapreduce;
pub mod nnet;
pub mod pca;
pub mod pipeline;
pub mod sigdata;
pub mod training;

pub use error::{Error, Result};
