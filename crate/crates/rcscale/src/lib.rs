//! Matrix (r,c)-scaling toolkit.
//!
//! Given a nonnegative d x n matrix A and positive integral target
//! marginals r, c with equal mass, the solvers here find diagonal X, Y so
//! that X A Y has row sums r and column sums approaching c, by minimizing
//! the convex potential f(x) = sum_i r_i ln <A_i, e^x> - <c, x> over the
//! log-domain column scalings. Alongside the classical RAS sweep sit a
//! linear-coupling first-order method and three second-order methods that
//! minimize a box-constrained Laplacian quadratic per step, via averaged
//! multiplicative weights or projected accelerated gradient descent.

pub mod cli;
pub mod config;
pub mod error;
pub mod firstorder;
pub mod generate;
pub mod lapsolve;
pub mod maxflow;
pub mod mm;
pub mod mwu;
pub mod objective;
pub mod problem;
pub mod scaling3;
pub mod secondorder;
pub mod sparse;
pub mod trace;

pub use config::{SolverConfig, ThresholdMode};
pub use error::{Result, ScaleError};
pub use problem::{
    check_asymptotic_scalability, diameter_bound, DiameterRegime, Feasibility, ScalingInstance,
};
