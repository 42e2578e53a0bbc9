//! Extragradient-family solvers for variational inequalities and min-max
//! problems: stochastic past-extragradient, Polyak-type adaptive steps,
//! (L0, L1)-adaptive steps, ProxSkip federated methods, and the testbeds
//! and verification suite that exercise them.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fl;
pub mod harness;
pub mod linalg;
pub mod operator;
pub mod par;
pub mod problems;
pub mod rng;
pub mod sampling;
pub mod solvers_eg;
pub mod solvers_l0l1;
pub mod solvers_polyak;

pub use error::{Error, Result};
pub use operator::{
    base_metrics, diverged, eval_full, eval_sampled, metric_relative_error, FiniteSumOperator, Matrix, Oracle, OperatorMeta,
    Point, RunLimits, RunStatus, SamplingVector, Trace, TraceRecord, L0L1,
};
pub use rng::Rng;
