#![allow(clippy::needless_range_loop)]

mod common;

use common::{bias_matrix_ref, dense_crlb, jacobian_ref, mat2, neg_log_lik, random_scenario, rel_err};
use proptest::prelude::*;
use toa_sync::sim::{generate_trajectory, TrajectorySpec};
use toa_sync::{crlb_at_step, crlb_trajectory, fim_step_blocks, AnchorArray, FimBlocks, Point};

#[test]
fn schur_bounds_match_dense_inverse() {
    for seed in 0..30 {
        for k in 1..=8 {
            let sc = random_scenario(500 + seed, k);
            let fast = crlb_trajectory(&sc.truth, &sc.anchors, sc.sigma).unwrap();
            let (pos, b1, b2) = dense_crlb(&sc.truth, &sc.anchors, sc.sigma);
            let last = fast.last().unwrap();
            assert!(rel_err(last.pos, pos) < 1e-8, "seed {seed} k {k}: {} vs {pos}", last.pos);
            assert!(rel_err(last.bias1, b1) < 1e-8);
            assert!(rel_err(last.bias2, b2) < 1e-8);
        }
    }
}

#[test]
fn trajectory_prefixes_agree_with_single_step_evaluation() {
    let sc = random_scenario(9, 40);
    let all = crlb_trajectory(&sc.truth, &sc.anchors, sc.sigma).unwrap();
    for k in [1, 2, 7, 23, 40] {
        let blocks = FimBlocks::for_trajectory(&sc.truth[..k], &sc.anchors, sc.sigma).unwrap();
        assert_eq!(crlb_at_step(&blocks).unwrap(), all[k - 1]);
    }
}

#[test]
fn bounds_scale_with_noise_variance() {
    let sc = random_scenario(4, 10);
    let a = crlb_trajectory(&sc.truth, &sc.anchors, 1e-2).unwrap();
    let b = crlb_trajectory(&sc.truth, &sc.anchors, 3e-2).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!(rel_err(y.pos, 9.0 * x.pos) < 1e-9);
        assert!(rel_err(y.bias1, 9.0 * x.bias1) < 1e-9);
        assert!(rel_err(y.bias2, 9.0 * x.bias2) < 1e-9);
    }
}

#[test]
fn bias_bounds_never_increase_along_the_reference_walk() {
    let traj = generate_trajectory(&TrajectorySpec { steps: 3000, ..TrajectorySpec::default() });
    let values = crlb_trajectory(&traj, &AnchorArray::reference_layout(), 1e-2).unwrap();
    for w in values.windows(2) {
        assert!(w[1].bias1 <= w[0].bias1 && w[1].bias2 <= w[0].bias2);
    }
}

#[test]
fn stationary_target_bias_bound_decays() {
    let traj = vec![Point::new(0.0, 50.0); 200];
    let v = crlb_trajectory(&traj, &AnchorArray::reference_layout(), 1e-2).unwrap();
    assert!(v[199].bias1 < v[0].bias1);
    // the position bound approaches the bias-free single-step bound
    let (ip, _) = fim_step_blocks(traj[0], &AnchorArray::reference_layout(), 1e-2).unwrap();
    let free = mat2(&ip).try_inverse().unwrap().trace();
    assert!(v[199].pos > free && v[199].pos < v[0].pos);
}

fn target() -> impl Strategy<Value = Point> {
    (-90.0..90.0f64, -70.0..250.0f64).prop_map(|(x, y)| Point::new(x, y))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn fim_blocks_are_jacobian_products(x in target(), sigma in 1e-3..1.0f64) {
        let anchors = AnchorArray::reference_layout();
        let (ip, ipb) = fim_step_blocks(x, &anchors, sigma).unwrap();
        let j = jacobian_ref(x, &anchors);
        let jj = j.transpose() * &j;
        let ja = j.transpose() * bias_matrix_ref();
        let s2 = sigma * sigma;
        for r in 0..2 {
            for c in 0..2 {
                prop_assert!((ip.get(r, c) * s2 - jj[(r, c)]).abs() < 1e-12);
                prop_assert!((ipb.get(r, c) * s2 - ja[(r, c)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fim_is_the_log_likelihood_curvature(x in target(), b1 in -10.0..10.0f64, b2 in -10.0..10.0f64) {
        let anchors = AnchorArray::reference_layout();
        let sigma = 0.1;
        let (ip, ipb) = fim_step_blocks(x, &anchors, sigma).unwrap();
        let theta0 = [x.x, x.y, b1, b2];
        let nll = |t: [f64; 4]| neg_log_lik(Point::new(t[0], t[1]), [t[2], t[3]], x, [b1, b2], &anchors, sigma);
        let h = 1e-4;
        let mut hess = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                let mut f = [0.0; 4];
                for (n, (si, sj)) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)].into_iter().enumerate() {
                    let mut t = theta0;
                    t[i] += si * h;
                    t[j] += sj * h;
                    f[n] = nll(t);
                }
                hess[i][j] = (f[0] - f[1] - f[2] + f[3]) / (4.0 * h * h);
            }
        }
        let scale = 4.0 / (sigma * sigma);
        for r in 0..2 {
            for c in 0..2 {
                prop_assert!((hess[r][c] - ip.get(r, c)).abs() < 1e-5 * scale);
                prop_assert!((hess[r][c + 2] - ipb.get(r, c)).abs() < 1e-5 * scale);
            }
        }
        prop_assert!((hess[2][2] - 2.0 / (sigma * sigma)).abs() < 1e-5 * scale);
        prop_assert!(hess[2][3].abs() < 1e-5 * scale);
    }
}
