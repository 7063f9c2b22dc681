//! Multiple diverse initializations for local trajectory optimizers.
//!
//! A multi-head network predicts `K` candidate control sequences for a problem
//! instance; a selection function or a bank of optimizers turns them into one
//! solution. Appending the classic warm start as an extra candidate makes the
//! result never worse than the warm-start pipeline.

// `!(a > b)` is used on purpose to reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod envs;
pub mod error;
pub mod harness;
pub mod init;
pub mod linalg;
pub mod losses;
pub mod net;
pub mod optim;
pub mod problem;
pub mod seeds;

pub use envs::{Env, EnvId};
pub use error::{Error, Result};
pub use problem::{CandidateSet, ControlProblem, ControlSequence, ProblemInstance, Target, Trajectory};
