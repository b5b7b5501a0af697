//! Joint target localization and clock-bias estimation from biased
//! time-of-arrival ranges at two dual-antenna receivers.
//!
//! - [`linalg`]: Householder QR and triangular solves on tiny dense matrices.
//! - [`model`]: anchor geometry and the biased-range measurement model.
//! - [`estimator`]: angle-of-arrival seeding and the recursive Gauss-Newton/QR tracker.
//! - [`crlb`]: Fisher information blocks and Cramér-Rao bounds.
//! - [`sim`]: random-walk trajectories and Monte-Carlo RMSE reports.
//! - [`cli`]: configuration, CSV formats and the command implementations.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod crlb;
pub mod estimator;
pub mod linalg;
pub mod model;
pub mod sim;

pub use crlb::{crlb_at_step, crlb_trajectory, fim_step_blocks, CrlbError, CrlbValues, FimBlocks, Mat2};
pub use estimator::{
    aoa_from_frame, intersect_bearings, jacobian, AoaEstimate, EstimatorError, EstimatorOptions, RecursiveEstimator,
    SolverConfig, StepRecord, StepResult,
};
pub use linalg::{apply_qt, householder_qr, solve_upper_triangular, LinalgError, Mat, QrFactor};
pub use model::{
    bias_matrix, range_vector, synthesize, AnchorArray, ClockBias, MeasurementFrame, NoiseSpec, Point, TargetPosition,
};
pub use sim::{generate_trajectory, run_monte_carlo, run_trial, McReport, McRow, McSpec, TrajectorySpec};
