//! Independent reference computations shared by the integration tests.
//!
//! Everything here is built from first principles on top of nalgebra and
//! does not call into the crate's linear algebra, estimator or bound code.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Matrix2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use toa_sync::{AnchorArray, ClockBias, MeasurementFrame, Point};

/// Unit vectors from each antenna to `x`, one per row.
pub fn jacobian_ref(x: Point, anchors: &AnchorArray) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(4, 2);
    for (i, p) in anchors.antennas().iter().enumerate() {
        let d = ((x.x - p.x).powi(2) + (x.y - p.y).powi(2)).sqrt();
        j[(i, 0)] = (x.x - p.x) / d;
        j[(i, 1)] = (x.y - p.y) / d;
    }
    j
}

pub fn bias_matrix_ref() -> DMatrix<f64> {
    DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0])
}

pub fn ranges_ref(x: Point, anchors: &AnchorArray) -> DVector<f64> {
    DVector::from_iterator(4, anchors.antennas().iter().map(|p| ((x.x - p.x).powi(2) + (x.y - p.y).powi(2)).sqrt()))
}

/// Bias from the dense linearized least-squares problem over all steps:
/// unknowns `(dx_1, .., dx_k, b)`, rows `J_l dx_l + A b = z_l - f(x_l)`.
pub fn batch_bias(frames: &[MeasurementFrame], lin: &[Point], anchors: &AnchorArray) -> [f64; 2] {
    let k = frames.len();
    assert_eq!(k, lin.len());
    let n = 2 * k + 2;
    let mut h = DMatrix::zeros(4 * k, n);
    let mut rhs = DVector::zeros(4 * k);
    let a = bias_matrix_ref();
    for (l, (fr, &x)) in frames.iter().zip(lin).enumerate() {
        let j = jacobian_ref(x, anchors);
        h.view_mut((4 * l, 2 * l), (4, 2)).copy_from(&j);
        h.view_mut((4 * l, 2 * k), (4, 2)).copy_from(&a);
        let f = ranges_ref(x, anchors);
        for i in 0..4 {
            rhs[4 * l + i] = fr.z[i] - f[i];
        }
    }
    // Householder least squares: R x = (Q^T rhs)[..n]
    let qr = h.qr();
    let qtb = qr.q().transpose() * &rhs;
    let sol = qr.r().solve_upper_triangular(&qtb.rows(0, n).into_owned()).expect("full column rank");
    [sol[2 * k], sol[2 * k + 1]]
}

/// Assembled arrow-shaped Fisher information for positions `x_1..x_k` and
/// the bias, ordered `(x_1, .., x_k, b)`.
pub fn arrow_fim(traj: &[Point], anchors: &AnchorArray, sigma: f64) -> DMatrix<f64> {
    let k = traj.len();
    let n = 2 * k + 2;
    let iv = 1.0 / (sigma * sigma);
    let a = bias_matrix_ref();
    let mut fim = DMatrix::zeros(n, n);
    for (l, &x) in traj.iter().enumerate() {
        let j = jacobian_ref(x, anchors);
        let jj = j.transpose() * &j * iv;
        let ja = j.transpose() * &a * iv;
        fim.view_mut((2 * l, 2 * l), (2, 2)).copy_from(&jj);
        fim.view_mut((2 * l, 2 * k), (2, 2)).copy_from(&ja);
        fim.view_mut((2 * k, 2 * l), (2, 2)).copy_from(&ja.transpose());
        let aa = a.transpose() * &a * iv;
        let mut corner = fim.view_mut((2 * k, 2 * k), (2, 2));
        corner += aa;
    }
    fim
}

/// `(trace of the last position block, b1 variance, b2 variance)` from the
/// dense inverse.
pub fn dense_crlb(traj: &[Point], anchors: &AnchorArray, sigma: f64) -> (f64, f64, f64) {
    let k = traj.len();
    // LU explicitly: nalgebra's `try_inverse` uses cofactor formulas up to
    // 4x4, which lose digits on these ill-conditioned matrices.
    let inv = arrow_fim(traj, anchors, sigma).lu().try_inverse().expect("invertible FIM");
    let p = 2 * (k - 1);
    (inv[(p, p)] + inv[(p + 1, p + 1)], inv[(2 * k, 2 * k)], inv[(2 * k + 1, 2 * k + 1)])
}

/// Negative log-likelihood (up to a constant) of `(x, b)` for a noise-free
/// observation of `(x0, b0)`.
pub fn neg_log_lik(x: Point, b: [f64; 2], x0: Point, b0: [f64; 2], anchors: &AnchorArray, sigma: f64) -> f64 {
    let f = ranges_ref(x, anchors);
    let f0 = ranges_ref(x0, anchors);
    let off = [b[0], b[0], b[1], b[1]];
    let off0 = [b0[0], b0[0], b0[1], b0[1]];
    (0..4).map(|i| (f[i] + off[i] - f0[i] - off0[i]).powi(2)).sum::<f64>() / (2.0 * sigma * sigma)
}

pub fn mat2(m: &toa_sync::Mat2) -> Matrix2<f64> {
    Matrix2::new(m.get(0, 0), m.get(0, 1), m.get(1, 0), m.get(1, 1))
}

/// The reference layout rotated by `theta` about the origin and shifted.
pub fn rigid_anchors(theta: f64, shift: Point) -> AnchorArray {
    let base = AnchorArray::reference_layout();
    let t = |p: Point| rigid_point(p, theta, shift);
    AnchorArray::new(t(base.p11), t(base.p12), t(base.p21), t(base.p22), base.spacing)
        .expect("rigid motion keeps spacing")
}

pub fn rigid_point(p: Point, theta: f64, shift: Point) -> Point {
    let (s, c) = theta.sin_cos();
    Point::new(c * p.x - s * p.y + shift.x, s * p.x + c * p.y + shift.y)
}

/// A random scenario: rigidly moved anchors, a random-walk target in front
/// of them (in the local frame) and a random bias.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub anchors: AnchorArray,
    pub truth: Vec<Point>,
    pub bias: ClockBias,
    pub sigma: f64,
    pub noise_seed: u64,
}

pub fn random_scenario(seed: u64, steps: usize) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    let shift = Point::new(rng.random_range(-200.0..200.0), rng.random_range(-200.0..200.0));
    let anchors = rigid_anchors(theta, shift);
    let mut local = Point::new(rng.random_range(-40.0..40.0), rng.random_range(0.0..120.0));
    let mut truth = Vec::with_capacity(steps);
    for _ in 0..steps {
        truth.push(rigid_point(local, theta, shift));
        local = Point::new(
            (local.x + rng.random_range(-0.5..0.5)).clamp(-45.0, 45.0),
            (local.y + rng.random_range(-0.5..0.5)).clamp(-10.0, 130.0),
        );
    }
    let bias = ClockBias::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0));
    let sigma = [1e-3, 1e-2, 5e-2][rng.random_range(0..3)];
    Scenario { anchors, truth, bias, sigma, noise_seed: rng.random() }
}

/// `|a - b| / |b|` for the bias vector.
pub fn bias_rel_err(got: ClockBias, want: [f64; 2]) -> f64 {
    (got.b1 - want[0]).hypot(got.b2 - want[1]) / want[0].hypot(want[1])
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}
