//! Random-walk trajectories and seeded Monte-Carlo runs of the tracker.
//!
//! All trials share one true trajectory. Trial `m` draws its measurement
//! noise from seed `noise_seed_base + m`. Trials run in parallel, but the
//! per-step squared errors are reduced in fixed chunks of trial indices and
//! the chunk sums are added in index order, so a report is bit-identical for
//! any thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crlb::{crlb_trajectory, CrlbError};
use crate::estimator::{EstimatorError, RecursiveEstimator, SolverConfig, StepResult};
use crate::model::{synthesize, AnchorArray, ClockBias, NoiseSpec, Point, TargetPosition};

/// Trials per reduction chunk.
const REDUCE_CHUNK: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Crlb(#[from] CrlbError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    pub start: Point,
    pub steps: usize,
    /// Sample interval, seconds.
    pub dt: f64,
    /// Per-axis increment standard deviation in m/s; the per-step standard
    /// deviation is `speed_std * dt`.
    pub speed_std: f64,
    pub seed: u64,
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        Self { start: Point::new(0.0, 50.0), steps: 3000, dt: 0.5, speed_std: 0.5, seed: 0 }
    }
}

impl TrajectorySpec {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.steps < 1 {
            return Err(SimError::InvalidSpec("trajectory.steps must be at least 1".into()));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(SimError::InvalidSpec(format!("trajectory.dt must be positive, got {}", self.dt)));
        }
        if !(self.speed_std >= 0.0) || !self.speed_std.is_finite() {
            return Err(SimError::InvalidSpec(format!("trajectory.speed_std must be >= 0, got {}", self.speed_std)));
        }
        if !self.start.is_finite() {
            return Err(SimError::InvalidSpec("trajectory.start must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McSpec {
    pub trials: usize,
    pub noise_seed_base: u64,
    pub solver: SolverConfig,
    pub bias: ClockBias,
    pub sigma: f64,
}

impl Default for McSpec {
    fn default() -> Self {
        Self {
            trials: 5000,
            noise_seed_base: 0,
            solver: SolverConfig::default(),
            bias: ClockBias::new(5.0, -5.0),
            sigma: 1e-2,
        }
    }
}

impl McSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.trials < 1 {
            return Err(SimError::InvalidSpec("mc.trials must be at least 1".into()));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(SimError::InvalidSpec(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        Ok(())
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.noise_seed_base.wrapping_add(trial as u64)
    }
}

/// Random walk starting at `spec.start`. Increments come from stream 0 of
/// a ChaCha20 generator seeded with `spec.seed`, x then y per step.
pub fn generate_trajectory(spec: &TrajectorySpec) -> Vec<TargetPosition> {
    let step_std = spec.speed_std * spec.dt;
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    rng.set_stream(0);
    let mut out = Vec::with_capacity(spec.steps);
    let mut x = spec.start;
    out.push(x);
    for _ in 1..spec.steps {
        let wx: f64 = rng.sample(StandardNormal);
        let wy: f64 = rng.sample(StandardNormal);
        x = x + Point::new(wx * step_std, wy * step_std);
        out.push(x);
    }
    out
}

/// Per-step outputs of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub steps: Vec<StepResult>,
    /// Steps the estimator rejected, with the reason. The matching entry in
    /// `steps` repeats the previous estimate and is flagged unconverged.
    pub failures: Vec<(usize, EstimatorError)>,
}

impl TrialOutcome {
    pub fn unconverged(&self) -> usize {
        self.steps.iter().filter(|s| !s.converged).count()
    }
}

/// Feeds synthesized frames for the whole trajectory into one estimator.
pub fn run_trial(
    trajectory: &[TargetPosition],
    anchors: &AnchorArray,
    bias: ClockBias,
    sigma: f64,
    trial_seed: u64,
    solver: SolverConfig,
) -> TrialOutcome {
    let noise = NoiseSpec { sigma, seed: trial_seed };
    let frames = trajectory.iter().enumerate().map(|(i, &x)| synthesize(x, anchors, bias, noise, i + 1));
    track_frames(frames, anchors, solver)
}

/// Runs the estimator over an ordered stream of frames, recording failures
/// instead of aborting.
pub fn track_frames<I>(frames: I, anchors: &AnchorArray, solver: SolverConfig) -> TrialOutcome
where
    I: IntoIterator<Item = crate::model::MeasurementFrame>,
{
    let mut est: Option<RecursiveEstimator> = None;
    let mut steps = Vec::new();
    let mut failures = Vec::new();
    let mut last = StepResult {
        step: 0,
        position: Point::default(),
        bias: ClockBias::default(),
        iterations: 0,
        converged: false,
        bias_held: false,
    };
    for frame in frames {
        let outcome = match est.as_mut() {
            Some(e) => e.step(&frame),
            None => RecursiveEstimator::initialize(&frame, anchors, solver).map(|(e, r)| {
                est = Some(e);
                r
            }),
        };
        match outcome {
            Ok(r) => {
                last = r;
                steps.push(r);
            }
            Err(e) => {
                failures.push((frame.step, e));
                steps.push(StepResult { step: frame.step, iterations: 0, converged: false, bias_held: false, ..last });
            }
        }
    }
    TrialOutcome { steps, failures }
}

/// One row of a Monte-Carlo report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McRow {
    pub k: usize,
    pub pos_rmse: f64,
    pub pos_crlb_root: f64,
    pub bias1_rmse: f64,
    pub bias1_crlb_root: f64,
    pub bias2_rmse: f64,
    pub bias2_crlb_root: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub trajectory: TrajectorySpec,
    pub mc: McSpec,
    pub anchors: AnchorArray,
    pub rows: Vec<McRow>,
    /// Unconverged or bias-held steps summed over all trials.
    pub unconverged_steps: usize,
    /// Steps the estimator rejected, summed over all trials.
    pub failed_steps: usize,
}

#[derive(Debug, Clone)]
struct ErrorSums {
    pos: Vec<f64>,
    b1: Vec<f64>,
    b2: Vec<f64>,
    unconverged: usize,
    failed: usize,
}

impl ErrorSums {
    fn zeros(n: usize) -> Self {
        Self { pos: vec![0.0; n], b1: vec![0.0; n], b2: vec![0.0; n], unconverged: 0, failed: 0 }
    }

    fn add_trial(&mut self, outcome: &TrialOutcome, truth: &[TargetPosition], bias: ClockBias) {
        for (i, (s, x)) in outcome.steps.iter().zip(truth).enumerate() {
            let d = s.position - *x;
            self.pos[i] += d.x * d.x + d.y * d.y;
            self.b1[i] += (s.bias.b1 - bias.b1).powi(2);
            self.b2[i] += (s.bias.b2 - bias.b2).powi(2);
        }
        self.unconverged += outcome.unconverged();
        self.failed += outcome.failures.len();
    }

    fn merge(&mut self, other: &ErrorSums) {
        for i in 0..self.pos.len() {
            self.pos[i] += other.pos[i];
            self.b1[i] += other.b1[i];
            self.b2[i] += other.b2[i];
        }
        self.unconverged += other.unconverged;
        self.failed += other.failed;
    }
}

/// Runs `mc.trials` independent trials over the trajectory generated from
/// `traj` and reduces them to per-step RMSE next to the CRLB roots.
pub fn run_monte_carlo(traj: &TrajectorySpec, anchors: &AnchorArray, mc: &McSpec) -> Result<McReport, SimError> {
    traj.validate()?;
    mc.validate()?;
    anchors.validate().map_err(|e| SimError::InvalidSpec(e.to_string()))?;
    let truth = generate_trajectory(traj);
    let n = truth.len();

    let n_chunks = mc.trials.div_ceil(REDUCE_CHUNK);
    let partials: Vec<ErrorSums> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut sums = ErrorSums::zeros(n);
            for m in (c * REDUCE_CHUNK)..((c + 1) * REDUCE_CHUNK).min(mc.trials) {
                let outcome = run_trial(&truth, anchors, mc.bias, mc.sigma, mc.trial_seed(m), mc.solver);
                sums.add_trial(&outcome, &truth, mc.bias);
            }
            sums
        })
        .collect();
    let mut total = ErrorSums::zeros(n);
    for p in &partials {
        total.merge(p);
    }

    let bounds = if mc.sigma > 0.0 { Some(crlb_trajectory(&truth, anchors, mc.sigma)?) } else { None };
    let m = mc.trials as f64;
    let rows = (0..n)
        .map(|i| {
            let (pc, b1c, b2c) = bounds.as_ref().map_or((0.0, 0.0, 0.0), |b| (b[i].pos, b[i].bias1, b[i].bias2));
            McRow {
                k: i + 1,
                pos_rmse: (total.pos[i] / m).sqrt(),
                pos_crlb_root: pc.sqrt(),
                bias1_rmse: (total.b1[i] / m).sqrt(),
                bias1_crlb_root: b1c.sqrt(),
                bias2_rmse: (total.b2[i] / m).sqrt(),
                bias2_crlb_root: b2c.sqrt(),
            }
        })
        .collect();

    Ok(McReport {
        trajectory: *traj,
        mc: *mc,
        anchors: *anchors,
        rows,
        unconverged_steps: total.unconverged,
        failed_steps: total.failed,
    })
}
