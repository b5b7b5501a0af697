//! Joint position and clock-bias tracker.
//!
//! At the first step the position is seeded from the two angles of arrival
//! implied by the per-receiver range differences, then refined by
//! Gauss-Newton. Every later step linearizes the range model around the
//! previous estimate and eliminates the position unknowns with a 4x4
//! Householder QR of the Jacobian:
//!
//! ```text
//! Q_k^T [J | A | z_k - f(x~_k)] = [ R_k  F_k  r_k ]
//!                                 [  0   G_k  s_k ]
//! ```
//!
//! The bottom half only involves the biases. Its rows from all past steps
//! are folded into a 2x2 triangular factor `T` and right-hand side `s^`
//! with one more QR per step, so the bias solve `T b = s^` costs O(1)
//! regardless of how many frames have been seen. The position follows from
//! `R_k (x_k - x~_k) = r_k - F_k b`.
//!
//! Linearization points of past steps are frozen once their step commits.
//! Repeated Gauss-Newton passes within one step always restart the bias
//! update from the factor committed at the end of the previous step.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{
    apply_qt, apply_qt_cost, condition_2x2, householder_qr, householder_qr_cost, solve_upper_triangular,
    triangular_solve_cost, LinalgError, Mat, OpCount,
};
use crate::model::{bias_matrix, AnchorArray, ClockBias, MeasurementFrame, Point, TargetPosition};

/// Rows of the Jacobian are checked to have unit length to this tolerance.
const UNIT_ROW_TOL: f64 = 1e-12;

/// Below this determinant the two bearing lines are treated as parallel.
pub const PARALLEL_BEARING_TOL: f64 = 1e-10;

/// An antenna closer than this (meters) to the linearization point makes
/// the Jacobian undefined.
const COINCIDENCE_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("range at receiver {receiver} antenna 1 must be positive, got {value}")]
    InvalidRange { receiver: usize, value: f64 },
    #[error("bearing lines are parallel (|det| = {det:e})")]
    ParallelBearings { det: f64 },
    #[error("position coincides with antenna {antenna}")]
    DegenerateGeometry { antenna: &'static str },
    #[error("ill-conditioned geometry at step {step}: {source}")]
    GeometryIllConditioned { step: usize, source: LinalgError },
    #[error("expected frame for step {expected}, got step {got}")]
    StepOutOfOrder { expected: usize, got: usize },
    #[error("frame {step} contains a non-finite range")]
    NonFiniteFrame { step: usize },
    #[error("step history was not retained")]
    NotAvailable,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

const ANTENNA_LABELS: [&str; 4] = ["p11", "p12", "p21", "p22"];

/// Gauss-Newton controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Stop once the position increment is at most this many meters.
    pub epsilon: f64,
    /// Maximum Gauss-Newton passes per step.
    pub k_max: usize,
    /// Largest tolerated 2-norm condition number of the bias factor `T`.
    pub condition_guard: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { epsilon: 0.05, k_max: 5, condition_guard: 1e8 }
    }
}

/// Angles of arrival at the first antenna of each receiver, measured from
/// that receiver's baseline (first antenna towards second).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AoaEstimate {
    pub alpha11: f64,
    pub alpha21: f64,
}

/// Outcome of one time step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub step: usize,
    pub position: TargetPosition,
    pub bias: ClockBias,
    pub iterations: usize,
    pub converged: bool,
    /// The bias factor was too ill-conditioned to solve; `bias` is the
    /// previous estimate.
    pub bias_held: bool,
}

/// The per-step quantities needed to revisit a past position, kept only
/// when history retention is enabled.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub linearization: Point,
    pub r: Mat,
    pub r_rhs: [f64; 2],
    pub f: Mat,
    pub g: Mat,
    pub s: [f64; 2],
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EstimatorOptions {
    /// Keep a [`StepRecord`] per step so [`RecursiveEstimator::smooth_all`]
    /// can re-solve past positions with the latest bias.
    pub retain_history: bool,
    /// Tally nominal flop and square-root counts per step.
    pub count_ops: bool,
}

/// `r = (x - p)/|x - p|` for every antenna, stacked as a 4x2 matrix.
pub fn jacobian(x: TargetPosition, anchors: &AnchorArray) -> Result<Mat, EstimatorError> {
    let mut j = Mat::zeros(4, 2);
    for (row, p) in anchors.antennas().into_iter().enumerate() {
        let d = x - p;
        let n = d.norm();
        if !(n > COINCIDENCE_TOL) {
            return Err(EstimatorError::DegenerateGeometry { antenna: ANTENNA_LABELS[row] });
        }
        j[(row, 0)] = d.x / n;
        j[(row, 1)] = d.y / n;
        debug_assert!((j[(row, 0)].hypot(j[(row, 1)]) - 1.0).abs() < UNIT_ROW_TOL);
    }
    Ok(j)
}

/// Angle of arrival at `p_i1` from the range difference across the
/// receiver's two antennas (law of cosines). The arccos argument is clamped
/// to `[-1, 1]` since noise can push it slightly outside.
pub fn aoa_from_frame(frame: &MeasurementFrame, anchors: &AnchorArray) -> Result<AoaEstimate, EstimatorError> {
    let a = anchors.spacing;
    let angle = |receiver: usize| -> Result<f64, EstimatorError> {
        let z1 = frame.range(receiver, 1);
        if !(z1 > 0.0) {
            return Err(EstimatorError::InvalidRange { receiver, value: z1 });
        }
        let dz = z1 - frame.range(receiver, 2);
        let arg = (a * a - dz * dz + 2.0 * z1 * dz) / (2.0 * z1 * a);
        Ok(arg.clamp(-1.0, 1.0).acos())
    };
    Ok(AoaEstimate { alpha11: angle(1)?, alpha21: angle(2)? })
}

/// Intersects the two bearing lines through `p11` and `p21`.
///
/// Each angle is taken relative to its receiver's baseline direction, so the
/// absolute bearing is `atan2(p_i2 - p_i1) + alpha_i1`. The target is assumed
/// to lie on the left of both baselines. With baselines along +x this is the
/// usual `Gamma^{-1} [Y cos - X sin]` form.
pub fn intersect_bearings(aoa: &AoaEstimate, anchors: &AnchorArray) -> Result<TargetPosition, EstimatorError> {
    let bearing = |receiver: usize, alpha: f64| {
        let (p1, p2) = anchors.receiver(receiver);
        let base = p2 - p1;
        base.y.atan2(base.x) + alpha
    };
    let t1 = bearing(1, aoa.alpha11);
    let t2 = bearing(2, aoa.alpha21);
    let (s1, c1) = t1.sin_cos();
    let (s2, c2) = t2.sin_cos();
    // gamma = [[-s1, c1], [-s2, c2]]
    let det = -s1 * c2 + c1 * s2;
    if det.abs() < PARALLEL_BEARING_TOL {
        return Err(EstimatorError::ParallelBearings { det });
    }
    let (p1, p2) = (anchors.p11, anchors.p21);
    let h1 = p1.y * c1 - p1.x * s1;
    let h2 = p2.y * c2 - p2.x * s2;
    Ok(Point::new((c2 * h1 - c1 * h2) / det, (s2 * h1 - s1 * h2) / det))
}

/// Starting point when the bearings do not intersect: one meter off the
/// midpoint between the receivers, on the left of the line joining them.
fn fallback_start(anchors: &AnchorArray) -> Point {
    let c1 = anchors.receiver_center(1);
    let c2 = anchors.receiver_center(2);
    let mid = (c1 + c2).scale(0.5);
    let d = c2 - c1;
    let n = d.norm();
    mid + Point::new(-d.y / n, d.x / n)
}

struct Linearization {
    r: Mat,
    f: Mat,
    g: Mat,
    r_rhs: Mat,
    s: Mat,
}

fn linearize(x: Point, frame: &MeasurementFrame, anchors: &AnchorArray) -> Result<Linearization, EstimatorError> {
    let j = jacobian(x, anchors)?;
    let qr = householder_qr(&j)?;
    let resid: Vec<f64> = anchors.antennas().iter().zip(frame.z).map(|(p, z)| z - x.distance(*p)).collect();
    let rhs = bias_matrix().hstack(&Mat::column(&resid))?;
    let t = apply_qt(&qr, &rhs)?;
    Ok(Linearization {
        r: qr.r(),
        f: t.block(0, 0, 2, 2),
        g: t.block(2, 0, 2, 2),
        r_rhs: t.block(0, 2, 2, 1),
        s: t.block(2, 2, 2, 1),
    })
}

fn pass_cost(first: bool) -> OpCount {
    let mut c = OpCount { flops: 4 * 7 + 4, sqrts: 4 };
    c += householder_qr_cost(4, 2);
    c += apply_qt_cost(4, 2, 3);
    if first {
        c += householder_qr_cost(2, 2);
        c += apply_qt_cost(2, 2, 1);
    } else {
        c += householder_qr_cost(4, 2);
        c += apply_qt_cost(4, 2, 1);
    }
    c += triangular_solve_cost(2, 1);
    // r - F b, then the position solve and update
    c.flops += 4 + 2;
    c += triangular_solve_cost(2, 1);
    c.flops += 2;
    c
}

/// Committed recursive state plus what one pass produced.
struct Pass {
    lin: Linearization,
    linearization: Point,
    t: Mat,
    s_hat: Mat,
    discarded_sq: f64,
    bias: ClockBias,
    bias_held: bool,
    position: Point,
}

/// Recursive tracker holding O(1) state per time step.
#[derive(Debug, Clone)]
pub struct RecursiveEstimator {
    anchors: AnchorArray,
    cfg: SolverConfig,
    t: Mat,
    s_hat: Mat,
    residual_sq: f64,
    position: TargetPosition,
    bias: ClockBias,
    k: usize,
    history: Option<Vec<StepRecord>>,
    last_ops: Option<OpCount>,
}

impl RecursiveEstimator {
    /// Processes the first frame with default options.
    pub fn initialize(
        frame: &MeasurementFrame,
        anchors: &AnchorArray,
        cfg: SolverConfig,
    ) -> Result<(Self, StepResult), EstimatorError> {
        Self::initialize_with(frame, anchors, cfg, EstimatorOptions::default())
    }

    /// Seeds the position from the angles of arrival, then runs the same
    /// Gauss-Newton pass as [`step`](Self::step) using the first frame only.
    ///
    /// The frame is normally step 1; a later index is accepted so a stream
    /// whose first frames were unusable can still be started.
    pub fn initialize_with(
        frame: &MeasurementFrame,
        anchors: &AnchorArray,
        cfg: SolverConfig,
        opts: EstimatorOptions,
    ) -> Result<(Self, StepResult), EstimatorError> {
        if frame.step == 0 {
            return Err(EstimatorError::StepOutOfOrder { expected: 1, got: 0 });
        }
        if !frame.is_finite() {
            return Err(EstimatorError::NonFiniteFrame { step: frame.step });
        }
        let aoa = aoa_from_frame(frame, anchors)?;
        let (start, fell_back) = match intersect_bearings(&aoa, anchors) {
            Ok(x) => (x, false),
            Err(EstimatorError::ParallelBearings { .. }) => (fallback_start(anchors), true),
            Err(e) => return Err(e),
        };
        let mut est = Self {
            anchors: *anchors,
            cfg,
            t: Mat::zeros(2, 2),
            s_hat: Mat::zeros(2, 1),
            residual_sq: 0.0,
            position: start,
            bias: ClockBias::default(),
            k: 0,
            history: opts.retain_history.then(Vec::new),
            last_ops: opts.count_ops.then(OpCount::default),
        };
        let mut result = est.run_step(frame, start)?;
        if fell_back {
            result.converged = false;
        }
        Ok((est, result))
    }

    /// Ingests the frame for step `k + 1`.
    ///
    /// On error nothing is committed except the step counter, so the frame
    /// is dropped and the next frame is still accepted.
    pub fn step(&mut self, frame: &MeasurementFrame) -> Result<StepResult, EstimatorError> {
        let expected = self.k + 1;
        if frame.step != expected {
            return Err(EstimatorError::StepOutOfOrder { expected, got: frame.step });
        }
        if !frame.is_finite() {
            self.k = expected;
            return Err(EstimatorError::NonFiniteFrame { step: frame.step });
        }
        let start = self.position;
        match self.run_step(frame, start) {
            Ok(r) => Ok(r),
            Err(e) => {
                self.k = expected;
                Err(e)
            }
        }
    }

    fn run_step(&mut self, frame: &MeasurementFrame, start: Point) -> Result<StepResult, EstimatorError> {
        let step = frame.step;
        let first = self.k == 0;
        let mut x_lin = start;
        let mut converged = false;
        let mut iterations = 0;
        let mut ops = OpCount::default();
        let mut last = None;
        for iter in 1..=self.cfg.k_max.max(1) {
            let pass = self.pass(frame, x_lin, first)?;
            iterations = iter;
            if self.last_ops.is_some() {
                ops += pass_cost(first);
            }
            let increment = (pass.position - x_lin).norm();
            let next = pass.position;
            last = Some(pass);
            if increment <= self.cfg.epsilon {
                converged = true;
                break;
            }
            x_lin = next;
        }
        let pass = last.expect("at least one pass");
        let bias_held = pass.bias_held;

        self.t = pass.t;
        self.s_hat = pass.s_hat;
        self.residual_sq += pass.discarded_sq;
        self.position = pass.position;
        self.bias = pass.bias;
        self.k = step;
        if let Some(h) = self.history.as_mut() {
            h.push(StepRecord {
                step,
                linearization: pass.linearization,
                r: pass.lin.r,
                r_rhs: [pass.lin.r_rhs[(0, 0)], pass.lin.r_rhs[(1, 0)]],
                f: pass.lin.f,
                g: pass.lin.g,
                s: [pass.lin.s[(0, 0)], pass.lin.s[(1, 0)]],
            });
        }
        if let Some(o) = self.last_ops.as_mut() {
            *o = ops;
        }
        Ok(StepResult {
            step,
            position: self.position,
            bias: self.bias,
            iterations,
            converged: converged && !bias_held,
            bias_held,
        })
    }

    /// One Gauss-Newton pass linearized at `x_lin`, built on the committed
    /// factor of the previous step.
    fn pass(&self, frame: &MeasurementFrame, x_lin: Point, first: bool) -> Result<Pass, EstimatorError> {
        let step = frame.step;
        let lin = linearize(x_lin, frame, &self.anchors)?;
        let (t, s_hat, discarded_sq) = if first {
            let qr = householder_qr(&lin.g)?;
            (qr.r(), apply_qt(&qr, &lin.s)?, 0.0)
        } else {
            let stacked = self.t.vstack(&lin.g)?;
            let rhs = self.s_hat.vstack(&lin.s)?;
            let qr = householder_qr(&stacked)?;
            let rotated = apply_qt(&qr, &rhs)?;
            (qr.r(), rotated.block(0, 0, 2, 1), rotated.block(2, 0, 2, 1).norm_sq())
        };

        let (bias, bias_held) = if condition_2x2(&t) > self.cfg.condition_guard {
            (self.bias, true)
        } else {
            let b = solve_upper_triangular(&t, &s_hat)
                .map_err(|source| EstimatorError::GeometryIllConditioned { step, source })?;
            (ClockBias::new(b[(0, 0)], b[(1, 0)]), false)
        };

        let b = Mat::column(&[bias.b1, bias.b2]);
        let rhs = lin.r_rhs.sub(&lin.f.matmul(&b)?);
        let dx = solve_upper_triangular(&lin.r, &rhs)
            .map_err(|source| EstimatorError::GeometryIllConditioned { step, source })?;
        let position = x_lin + Point::new(dx[(0, 0)], dx[(1, 0)]);
        Ok(Pass { lin, linearization: x_lin, t, s_hat, discarded_sq, bias, bias_held, position })
    }

    /// Re-solves every retained step's position with the current bias.
    pub fn smooth_all(&self) -> Result<Vec<TargetPosition>, EstimatorError> {
        let history = self.history.as_ref().ok_or(EstimatorError::NotAvailable)?;
        let b = Mat::column(&[self.bias.b1, self.bias.b2]);
        history
            .iter()
            .map(|rec| {
                let rhs = Mat::column(&rec.r_rhs).sub(&rec.f.matmul(&b)?);
                let dx = solve_upper_triangular(&rec.r, &rhs)
                    .map_err(|source| EstimatorError::GeometryIllConditioned { step: rec.step, source })?;
                Ok(rec.linearization + Point::new(dx[(0, 0)], dx[(1, 0)]))
            })
            .collect()
    }

    pub fn anchors(&self) -> &AnchorArray {
        &self.anchors
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    /// Number of frames consumed so far.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn position(&self) -> TargetPosition {
        self.position
    }

    pub fn bias(&self) -> ClockBias {
        self.bias
    }

    /// Upper triangular bias factor `T_k`.
    pub fn t(&self) -> &Mat {
        &self.t
    }

    /// Rotated bias right-hand side `s^_k`.
    pub fn s_hat(&self) -> [f64; 2] {
        [self.s_hat[(0, 0)], self.s_hat[(1, 0)]]
    }

    /// Accumulated squared norm of the components rotated out of the bias
    /// problem; equals the bias least-squares residual.
    pub fn residual_sq(&self) -> f64 {
        self.residual_sq
    }

    pub fn history(&self) -> Option<&[StepRecord]> {
        self.history.as_deref()
    }

    /// Nominal operation count of the last committed step, when counting is
    /// enabled.
    pub fn last_op_count(&self) -> Option<OpCount> {
        self.last_ops
    }
}
