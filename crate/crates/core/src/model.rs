//! Geometry and biased-range measurement model.
//!
//! Two receivers, each with two antennas a distance `a` apart, observe the
//! target's range through an unknown per-receiver clock bias (already
//! converted to meters) plus white Gaussian noise:
//!
//! ```text
//! z_k = f(x_k) + A b + n_k,   f(x) = [|x - p11|, |x - p12|, |x - p21|, |x - p22|]
//! ```
//!
//! # Noise stream
//!
//! Noise for step `k` under seed `s` comes from a ChaCha20 generator keyed by
//! `seed_from_u64(s)` with its stream id set to `k`. Four standard normal
//! variates (`rand_distr::StandardNormal`) are drawn in channel order
//! `z11, z12, z21, z22` and scaled by `sigma`. Stream 0 is never used for
//! noise; the trajectory generator owns it.

use std::ops::{Add, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Mat;

/// Tolerance on the antenna spacing consistency check, meters.
pub const SPACING_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("antenna spacing must be positive, got {0}")]
    NonPositiveSpacing(f64),
    #[error("antenna positions must be finite")]
    NonFinite,
    #[error("receiver {receiver} antenna separation {actual} differs from spacing {spacing}")]
    SpacingMismatch { receiver: usize, actual: f64, spacing: f64 },
    #[error("receivers are too close: separation {separation} <= spacing {spacing}")]
    CoLocatedAnchors { separation: f64, spacing: f64 },
}

/// A point in the plane (meters). Used for antenna and target positions.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

pub type TargetPosition = Point;

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Point) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn scale(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

/// Relative clock biases of the two receivers, in range units (meters).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClockBias {
    pub b1: f64,
    pub b2: f64,
}

impl ClockBias {
    pub const fn new(b1: f64, b2: f64) -> Self {
        Self { b1, b2 }
    }

    pub fn get(&self, receiver: usize) -> f64 {
        match receiver {
            1 => self.b1,
            2 => self.b2,
            _ => panic!("receiver index must be 1 or 2, got {receiver}"),
        }
    }
}

/// Positions of the four antennas, `p[i][j]` being antenna `j` of receiver
/// `i` (zero based here), and the common spacing `a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorArray {
    pub p11: Point,
    pub p12: Point,
    pub p21: Point,
    pub p22: Point,
    pub spacing: f64,
}

impl AnchorArray {
    /// Validates and builds an anchor array.
    pub fn new(p11: Point, p12: Point, p21: Point, p22: Point, spacing: f64) -> Result<Self, GeometryError> {
        let arr = Self { p11, p12, p21, p22, spacing };
        arr.validate()?;
        Ok(arr)
    }

    /// Two receivers on the line `y = -100` with antennas 2 m apart, the
    /// layout used throughout the experiments.
    pub fn reference_layout() -> Self {
        Self {
            p11: Point::new(-51.0, -100.0),
            p12: Point::new(-49.0, -100.0),
            p21: Point::new(49.0, -100.0),
            p22: Point::new(51.0, -100.0),
            spacing: 2.0,
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !self.antennas().iter().all(|p| p.is_finite()) || !self.spacing.is_finite() {
            return Err(GeometryError::NonFinite);
        }
        if !(self.spacing > 0.0) {
            return Err(GeometryError::NonPositiveSpacing(self.spacing));
        }
        for (receiver, (a, b)) in [(self.p11, self.p12), (self.p21, self.p22)].into_iter().enumerate() {
            let actual = a.distance(b);
            if (actual - self.spacing).abs() > SPACING_TOL {
                return Err(GeometryError::SpacingMismatch { receiver: receiver + 1, actual, spacing: self.spacing });
            }
        }
        let separation = self.p11.distance(self.p21);
        if !(separation > self.spacing) {
            return Err(GeometryError::CoLocatedAnchors { separation, spacing: self.spacing });
        }
        Ok(())
    }

    /// Antennas in measurement order `p11, p12, p21, p22`.
    pub fn antennas(&self) -> [Point; 4] {
        [self.p11, self.p12, self.p21, self.p22]
    }

    /// `(first antenna, second antenna)` of receiver 1 or 2.
    pub fn receiver(&self, receiver: usize) -> (Point, Point) {
        match receiver {
            1 => (self.p11, self.p12),
            2 => (self.p21, self.p22),
            _ => panic!("receiver index must be 1 or 2, got {receiver}"),
        }
    }

    pub fn receiver_center(&self, receiver: usize) -> Point {
        let (a, b) = self.receiver(receiver);
        (a + b).scale(0.5)
    }
}

/// Standard deviation of the range noise and the seed of its stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub seed: u64,
}

/// Biased ranges observed at one time step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementFrame {
    pub step: usize,
    pub z: [f64; 4],
}

impl MeasurementFrame {
    pub fn new(step: usize, z: [f64; 4]) -> Self {
        Self { step, z }
    }

    /// Range at antenna `j` of receiver `i` (both one based).
    pub fn range(&self, receiver: usize, antenna: usize) -> f64 {
        assert!((1..=2).contains(&receiver) && (1..=2).contains(&antenna));
        self.z[2 * (receiver - 1) + antenna - 1]
    }

    pub fn is_finite(&self) -> bool {
        self.z.iter().all(|v| v.is_finite())
    }
}

/// Noise-free ranges `f(x)` to the four antennas.
pub fn range_vector(x: TargetPosition, anchors: &AnchorArray) -> [f64; 4] {
    anchors.antennas().map(|p| x.distance(p))
}

/// The 4x2 matrix mapping `[b1, b2]` onto the four ranges.
pub fn bias_matrix() -> Mat {
    Mat::from_rows(&[[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
}

/// `A b` as an array.
pub fn bias_offsets(bias: ClockBias) -> [f64; 4] {
    [bias.b1, bias.b1, bias.b2, bias.b2]
}

/// The four noise samples of step `k` for the given seed (unit variance).
pub fn unit_noise(seed: u64, k: usize) -> [f64; 4] {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(k as u64);
    let mut n = [0.0; 4];
    for v in &mut n {
        *v = rng.sample(StandardNormal);
    }
    n
}

/// Synthesizes `z = f(x) + A b + n` for step `k`.
pub fn synthesize(
    x: TargetPosition,
    anchors: &AnchorArray,
    bias: ClockBias,
    noise: NoiseSpec,
    k: usize,
) -> MeasurementFrame {
    let f = range_vector(x, anchors);
    let ab = bias_offsets(bias);
    let mut z = [0.0; 4];
    if noise.sigma == 0.0 {
        for i in 0..4 {
            z[i] = f[i] + ab[i];
        }
    } else {
        let n = unit_noise(noise.seed, k);
        for i in 0..4 {
            z[i] = f[i] + ab[i] + noise.sigma * n[i];
        }
    }
    MeasurementFrame::new(k, z)
}
