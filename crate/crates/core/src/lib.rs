//! Frame and matrix scaling.
//!
//! [`frame::run`] scales the columns of a full-rank `d × n` frame so that its
//! leverage scores match prescribed marginals, or returns a column set whose
//! rank is too small to carry its marginal mass. [`matrix::run_matrix`] does
//! the same for nonnegative matrices with Hall-violating column sets as
//! certificates.

pub mod error;
pub mod frame;
pub mod instances;
pub mod linalg;
pub mod matrix;
pub mod perceptron;
pub mod regularize;
pub mod update;

pub use error::{Result, ScaleError};
pub use frame::{
    check_infeasibility, run, select_margin_set, IterationRecord, MarginSet, Marginals, Outcome,
    ProxyContext, ScalingResult, SolverConfig, Status,
};
pub use linalg::{leverage_scores, numerical_rank, Frame, GramContext, Scaling};
pub use matrix::{run_matrix, MatrixMarginals, NonnegMatrix};
pub use regularize::{regularize, rho_overestimate, Regularizer};
pub use update::{approx_small_eigen_sum, compute_update, det_local_opt, newton_dinkelbach};
