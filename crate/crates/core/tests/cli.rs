use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use toa_sync::cli::{io, parse_config, RunConfig};
use toa_sync::sim::{generate_trajectory, run_trial};
use toa_sync::{range_vector, AnchorArray};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_toa-sync"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn")
}

fn repo_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.conf");
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn data_rows(p: &Path) -> usize {
    fs::read_to_string(p).unwrap().lines().count() - 1
}

#[test]
fn shipped_configs_parse() {
    let layout = parse_config(&fs::read_to_string(repo_config("full.conf")).unwrap()).unwrap();
    assert_eq!(layout, RunConfig::default());
    let desk = parse_config(&fs::read_to_string(repo_config("desk.conf")).unwrap()).unwrap();
    assert_eq!((desk.trajectory.steps, desk.mc.trials), (300, 200));
}

#[test]
fn simulate_then_track_matches_in_process_run() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_config(dir.path(), "trajectory.steps = 60\nseed = 11\n");
    let meas = dir.path().join("meas.csv");
    let out = run(&["simulate", "--config", s(&conf), "--out", s(&meas)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let truth_file = dir.path().join("meas.truth.csv");
    assert_eq!(data_rows(&meas), 60);
    assert_eq!(data_rows(&truth_file), 60);

    let track = dir.path().join("track.csv");
    let out = run(&["track", "--config", s(&conf), "--in", s(&meas), "--out", s(&track)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let tracked = io::read_track(File::open(&track).unwrap()).unwrap();

    let cfg = parse_config("trajectory.steps = 60\nseed = 11\n").unwrap();
    let truth = generate_trajectory(&cfg.trajectory);
    assert_eq!(io::read_truth(File::open(&truth_file).unwrap()).unwrap(), truth);
    let expected = run_trial(&truth, &cfg.anchors, cfg.bias(), cfg.sigma(), cfg.mc.trial_seed(0), cfg.solver());
    assert_eq!(tracked.len(), expected.steps.len());
    for (a, b) in tracked.iter().zip(&expected.steps) {
        assert_eq!(
            (a.step, a.position, a.bias, a.iterations, a.converged),
            (b.step, b.position, b.bias, b.iterations, b.converged)
        );
    }
}

#[test]
fn mc_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_config(dir.path(), "trajectory.steps = 50\nmc.trials = 20\n");
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    assert!(run(&["mc", "--config", s(&conf), "--seed", "4", "--out", s(&a)]).status.success());
    assert!(run(&["mc", "--config", s(&conf), "--seed", "4", "--out", s(&b)]).status.success());
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let c = dir.path().join("c.csv");
    assert!(run(&["mc", "--config", s(&conf), "--seed", "5", "--out", s(&c)]).status.success());
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}

#[test]
fn desk_scale_mc_emits_one_row_per_step() {
    let dir = tempfile::tempdir().unwrap();
    let out_file = dir.path().join("mc.csv");
    let out = run(&["mc", "--config", s(&repo_config("desk.conf")), "--out", s(&out_file)]);
    assert!(out.status.success());
    let text = fs::read_to_string(&out_file).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "k,pos_rmse,pos_crlb_root,bias1_rmse,bias1_crlb_root,bias2_rmse,bias2_crlb_root"
    );
    let rows = io::read_mc_rows(text.as_bytes()).unwrap();
    assert_eq!(rows.len(), 300);
}

#[test]
fn single_noiseless_trial_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    // stationary: every step starts at the zero-residual fixed point
    let conf = write_config(dir.path(), "sigma = 0\nmc.trials = 1\ntrajectory.steps = 100\ntrajectory.speed_std = 0\n");
    let out = run(&["mc", "--config", s(&conf)]);
    assert!(out.status.success());
    let rows = io::read_mc_rows(&out.stdout[..]).unwrap();
    assert!(rows.iter().skip(1).all(|r| r.pos_rmse < 1e-6 && r.bias1_rmse < 1e-6 && r.bias2_rmse < 1e-6));

    // moving: exact once the Gauss-Newton tolerance is tight
    let conf = write_config(
        dir.path(),
        "sigma = 0\nmc.trials = 1\ntrajectory.steps = 100\nsolver.epsilon = 1e-9\nsolver.k_max = 20\n",
    );
    let out = run(&["mc", "--config", s(&conf)]);
    assert!(out.status.success());
    let rows = io::read_mc_rows(&out.stdout[..]).unwrap();
    assert!(rows.iter().skip(1).all(|r| r.pos_rmse < 1e-6));
}

#[test]
fn simulate_single_step_and_noiseless_ranges() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_config(dir.path(), "sigma = 0\ntrajectory.steps = 1\n");
    let meas = dir.path().join("one.csv");
    assert!(run(&["simulate", "--config", s(&conf), "--out", s(&meas)]).status.success());
    let frames = io::read_measurements(File::open(&meas).unwrap()).unwrap();
    assert_eq!(frames.len(), 1);
    assert_eq!(data_rows(&dir.path().join("one.truth.csv")), 1);
    let f = range_vector(toa_sync::Point::new(0.0, 50.0), &AnchorArray::reference_layout());
    let expected = [f[0] + 5.0, f[1] + 5.0, f[2] - 5.0, f[3] - 5.0];
    assert_eq!(frames[0].z, expected);
    // by hand: |(0,50) - (-51,-100)| = sqrt(51^2 + 150^2)
    assert!((frames[0].z[0] - ((51.0f64 * 51.0 + 150.0 * 150.0).sqrt() + 5.0)).abs() < 1e-12);
}

#[test]
fn simulate_default_config_writes_full_length() {
    let dir = tempfile::tempdir().unwrap();
    let meas = dir.path().join("m.csv");
    assert!(run(&["simulate", "--out", s(&meas)]).status.success());
    assert_eq!(data_rows(&meas), 3000);
    assert_eq!(data_rows(&dir.path().join("m.truth.csv")), 3000);
}

#[test]
fn two_row_noiseless_file_tracks_to_truth() {
    let dir = tempfile::tempdir().unwrap();
    let anchors = AnchorArray::reference_layout();
    let x = toa_sync::Point::new(3.0, 40.0);
    let f = range_vector(x, &anchors);
    let z = [f[0] + 5.0, f[1] + 5.0, f[2] - 5.0, f[3] - 5.0];
    let row = |k: usize| format!("{k},{},{},{},{}\n", z[0], z[1], z[2], z[3]);
    let input = dir.path().join("two.csv");
    fs::write(&input, format!("k,z11,z12,z21,z22\n{}{}", row(1), row(2))).unwrap();
    let out = run(&["track", "--in", s(&input)]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next().unwrap(), "k,x,y,b1,b2,iterations,converged");
    let res = io::read_track(text.as_bytes()).unwrap();
    assert_eq!(res.len(), 2);
    for r in &res {
        assert!(r.converged);
        assert!(r.position.distance(x) < 1e-6);
        assert!((r.bias.b1 - 5.0).abs() < 1e-6 && (r.bias.b2 + 5.0).abs() < 1e-6);
    }
}

#[test]
fn crlb_command_writes_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_config(dir.path(), "trajectory.steps = 25\n");
    let out = run(&["crlb", "--config", s(&conf)]);
    assert!(out.status.success());
    let v = io::read_crlb(&out.stdout[..]).unwrap();
    assert_eq!(v.len(), 25);
    assert!(v.windows(2).all(|w| w[1][1] <= w[0][1]));
}

#[test]
fn malformed_measurements_fail_with_data_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.csv");
    fs::write(&missing, "k,z11,z12,z21\n1,1,2,3\n").unwrap();
    let out = run(&["track", "--in", s(&missing)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("z22"));

    let unordered = dir.path().join("unordered.csv");
    fs::write(&unordered, "k,z11,z12,z21,z22\n1,160,159,159,160\n3,160,159,159,160\n").unwrap();
    let out = run(&["track", "--in", s(&unordered)]);
    assert_eq!(out.status.code(), Some(2));

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "k,z11,z12,z21,z22\n1,160,abc,159,160\n").unwrap();
    let out = run(&["track", "--in", s(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2") && err.contains("z12"), "{err}");
}

#[test]
fn config_and_usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_config(dir.path(), "sigma = -1\n");
    let out = run(&["mc", "--config", s(&conf)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sigma"));

    let conf = write_config(dir.path(), "[solver]\nepsilonn = 0.1\n");
    let out = run(&["mc", "--config", s(&conf)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("solver.epsilonn"));

    assert_eq!(run(&["simulate"]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["track"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_input_file_is_a_runtime_error() {
    let out = run(&["track", "--in", "/nonexistent/meas.csv"]);
    assert_eq!(out.status.code(), Some(2));
}
