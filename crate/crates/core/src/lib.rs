//! Mutual information and MMSE gradients for linear network-coded channels
//! `z = A G B x + n` with circularly-symmetric complex Gaussian noise.
//!
//! The crate is `no_std` (with `alloc`). Parallel execution plugs in through
//! [`exec::BlockRunner`]; the default runner is sequential.

#![no_std]

extern crate alloc;

pub mod engine;
pub mod error;
pub mod estimator;
pub mod exec;
pub mod flowmodel;
pub mod infogradients;
pub mod linalg;
pub mod netgraph;
pub mod quadrature;
pub mod rng;
pub mod scenarios;

pub use error::{Error, Result};
pub use linalg::{CMat, CVec, C64};
