//! Configuration, persistence and orchestration behind the `chemolab`
//! binary.

// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod diag;
pub mod error;
pub mod run_dir;
