//! Cramér-Rao bounds for the joint position/bias problem.
//!
//! With parameters `[x_1, .., x_k, b]` the Fisher information is block
//! arrow shaped: a 2x2 block `I_l` per position on the diagonal, a 2x2
//! coupling `I_{l,b}` to the biases in the last block column, and the
//! diagonal bias block `B_k = diag(2k, 2k) / sigma^2`. Eliminating the
//! positions leaves the 2x2 Schur complement
//!
//! ```text
//! S = B_k - sum_l I_{l,b}^T I_l^{-1} I_{l,b}
//! ```
//!
//! whose inverse is the bias block of the inverse FIM. The position block of
//! step `k` is `I_k^{-1} + I_k^{-1} I_{k,b} S^{-1} I_{k,b}^T I_k^{-1}`.
//! Keeping the sum in `S` as a running total makes a whole trajectory O(k).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AnchorArray, TargetPosition};

/// Relative determinant threshold below which a 2x2 block is singular.
pub const SINGULAR_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CrlbError {
    #[error("Fisher information is singular at step {step}")]
    SingularFim { step: usize },
    #[error("position at step {step} coincides with an antenna")]
    DegenerateGeometry { step: usize },
    #[error("noise standard deviation must be positive and finite, got {0}")]
    InvalidSigma(f64),
    #[error("empty trajectory")]
    EmptyTrajectory,
}

/// Plain 2x2 matrix used for the FIM blocks.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Mat2(pub [[f64; 2]; 2]);

impl Mat2 {
    pub const ZERO: Mat2 = Mat2([[0.0; 2]; 2]);

    pub fn diag(a: f64, d: f64) -> Self {
        Mat2([[a, 0.0], [0.0, d]])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[i][j]
    }

    pub fn det(&self) -> f64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn transpose(&self) -> Self {
        let m = self.0;
        Mat2([[m[0][0], m[1][0]], [m[0][1], m[1][1]]])
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().fold(0.0_f64, |a, v| a.max(v.abs()))
    }

    /// Inverse, or `None` when `|det|` is below `tol * scale^2`.
    pub fn inverse_rel(&self, scale: f64, tol: f64) -> Option<Self> {
        let det = self.det();
        if !(det.abs() > tol * scale * scale) {
            return None;
        }
        let m = self.0;
        Some(Mat2([[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]]))
    }

    pub fn mul(&self, o: &Mat2) -> Mat2 {
        let (a, b) = (self.0, o.0);
        let mut out = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Mat2(out)
    }

    pub fn add(&self, o: &Mat2) -> Mat2 {
        let mut out = self.0;
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] += o.0[i][j];
            }
        }
        Mat2(out)
    }

    pub fn sub(&self, o: &Mat2) -> Mat2 {
        self.add(&o.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Mat2 {
        Mat2(self.0.map(|r| r.map(|v| v * s)))
    }
}

/// FIM blocks accumulated over `k` steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FimBlocks {
    pub i_pos: Vec<Mat2>,
    pub i_pos_bias: Vec<Mat2>,
    pub b_bias: Mat2,
    pub sigma: f64,
}

impl FimBlocks {
    pub fn new(sigma: f64) -> Self {
        Self { i_pos: Vec::new(), i_pos_bias: Vec::new(), b_bias: Mat2::ZERO, sigma }
    }

    /// Builds the blocks for the true positions of a trajectory prefix.
    pub fn for_trajectory(trajectory: &[TargetPosition], anchors: &AnchorArray, sigma: f64) -> Result<Self, CrlbError> {
        let mut blocks = Self::new(sigma);
        for &x in trajectory {
            blocks.push(x, anchors)?;
        }
        Ok(blocks)
    }

    pub fn push(&mut self, x: TargetPosition, anchors: &AnchorArray) -> Result<(), CrlbError> {
        let step = self.k() + 1;
        let (ip, ipb) = fim_step_blocks(x, anchors, self.sigma).map_err(|e| match e {
            CrlbError::DegenerateGeometry { .. } => CrlbError::DegenerateGeometry { step },
            other => other,
        })?;
        self.i_pos.push(ip);
        self.i_pos_bias.push(ipb);
        let d = 2.0 * step as f64 / (self.sigma * self.sigma);
        self.b_bias = Mat2::diag(d, d);
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.i_pos.len()
    }
}

/// CRLB values at one step, all in square meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrlbValues {
    /// Sum of the two position variances of the current step.
    pub pos: f64,
    pub bias1: f64,
    pub bias2: f64,
}

/// `I_l` and `I_{l,b}` for a single true position.
///
/// `I_l[m][n] = sum_ij u_ij[m] u_ij[n] / sigma^2` with `u_ij` the unit
/// vector from antenna `ij` to the target; column `i` of `I_{l,b}` sums the
/// direction cosines of receiver `i`'s two antennas.
pub fn fim_step_blocks(x: TargetPosition, anchors: &AnchorArray, sigma: f64) -> Result<(Mat2, Mat2), CrlbError> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(CrlbError::InvalidSigma(sigma));
    }
    let inv_var = 1.0 / (sigma * sigma);
    let mut ip = [[0.0; 2]; 2];
    let mut ipb = [[0.0; 2]; 2];
    for (idx, p) in anchors.antennas().into_iter().enumerate() {
        let dx = x.x - p.x;
        let dy = x.y - p.y;
        let d2 = dx * dx + dy * dy;
        if !(d2 > 0.0) {
            return Err(CrlbError::DegenerateGeometry { step: 0 });
        }
        let d = d2.sqrt();
        ip[0][0] += dx * dx / d2;
        ip[0][1] += dx * dy / d2;
        ip[1][1] += dy * dy / d2;
        let receiver = idx / 2;
        ipb[0][receiver] += dx / d;
        ipb[1][receiver] += dy / d;
    }
    ip[1][0] = ip[0][1];
    Ok((Mat2(ip).scale(inv_var), Mat2(ipb).scale(inv_var)))
}

/// Running state of the block elimination.
#[derive(Debug, Clone, PartialEq)]
struct SchurAccumulator {
    sigma: f64,
    k: usize,
    /// `sum_l I_{l,b}^T I_l^{-1} I_{l,b}`
    eliminated: Mat2,
}

impl SchurAccumulator {
    fn new(sigma: f64) -> Self {
        Self { sigma, k: 0, eliminated: Mat2::ZERO }
    }

    fn info_scale(&self) -> f64 {
        1.0 / (self.sigma * self.sigma)
    }

    /// Folds in step `k + 1` and returns the bounds at that step.
    fn push(&mut self, ip: &Mat2, ipb: &Mat2) -> Result<CrlbValues, CrlbError> {
        let step = self.k + 1;
        let scale = self.info_scale();
        let ip_inv = ip.inverse_rel(4.0 * scale, SINGULAR_TOL).ok_or(CrlbError::SingularFim { step })?;
        let gain = ip_inv.mul(ipb);
        self.eliminated = self.eliminated.add(&ipb.transpose().mul(&gain));
        self.k = step;
        let d = 2.0 * step as f64 * scale;
        let schur = Mat2::diag(d, d).sub(&self.eliminated);
        let schur_inv = schur.inverse_rel(d, SINGULAR_TOL).ok_or(CrlbError::SingularFim { step })?;
        let pos_block = ip_inv.add(&gain.mul(&schur_inv).mul(&gain.transpose()));
        Ok(CrlbValues { pos: pos_block.trace(), bias1: schur_inv.get(0, 0), bias2: schur_inv.get(1, 1) })
    }
}

/// Bounds at the last step covered by `blocks`.
pub fn crlb_at_step(blocks: &FimBlocks) -> Result<CrlbValues, CrlbError> {
    if blocks.k() == 0 {
        return Err(CrlbError::EmptyTrajectory);
    }
    let mut acc = SchurAccumulator::new(blocks.sigma);
    let mut last = None;
    for (ip, ipb) in blocks.i_pos.iter().zip(&blocks.i_pos_bias) {
        last = Some(acc.push(ip, ipb)?);
    }
    Ok(last.expect("non-empty"))
}

/// Bounds at every step of a true trajectory, in O(k) total.
pub fn crlb_trajectory(
    trajectory: &[TargetPosition],
    anchors: &AnchorArray,
    sigma: f64,
) -> Result<Vec<CrlbValues>, CrlbError> {
    if trajectory.is_empty() {
        return Err(CrlbError::EmptyTrajectory);
    }
    let mut acc = SchurAccumulator::new(sigma);
    trajectory
        .iter()
        .enumerate()
        .map(|(l, &x)| {
            let (ip, ipb) = fim_step_blocks(x, anchors, sigma).map_err(|e| match e {
                CrlbError::DegenerateGeometry { .. } => CrlbError::DegenerateGeometry { step: l + 1 },
                other => other,
            })?;
            acc.push(&ip, &ipb)
        })
        .collect()
}
