#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod linalg;
pub mod randomkit;
pub mod mcmc;
pub mod spatial;
pub mod distreg;
pub mod simstudy;
pub mod selfcheck;
pub mod cli;

pub use error::{Error, Result};

/// Digest of every source file; printed by `--version`.
pub const BUILD_HASH: &str = env!("RSTDR_BUILD_HASH");
/// Digest of the numerical sources only (excludes the command-line front end
/// and self-check suites); keys cached study results.
pub const ENGINE_HASH: &str = env!("RSTDR_ENGINE_HASH");
