//! Run configuration.
//!
//! The format is line oriented `key = value` text. Keys are dotted
//! (`solver.epsilon`); a `[section]` line prefixes the keys that follow it.
//! `#` starts a comment. Points are written `x, y`. Every key is optional and
//! falls back to the experiment defaults listed in [`KEYS`].

use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

use crate::estimator::SolverConfig;
use crate::model::{AnchorArray, ClockBias, GeometryError, Point};
use crate::sim::{McSpec, TrajectorySpec};

/// Every accepted key with its default, in documentation order.
pub const KEYS: &[(&str, &str)] = &[
    ("seed", "0"),
    ("sigma", "0.01"),
    ("output", "(stdout)"),
    ("anchors.p11", "-51, -100"),
    ("anchors.p12", "-49, -100"),
    ("anchors.p21", "49, -100"),
    ("anchors.p22", "51, -100"),
    ("anchors.spacing", "2"),
    ("bias.b1", "5"),
    ("bias.b2", "-5"),
    ("trajectory.start", "0, 50"),
    ("trajectory.steps", "3000"),
    ("trajectory.dt", "0.5"),
    ("trajectory.speed_std", "0.5"),
    ("trajectory.seed", "(seed)"),
    ("mc.trials", "5000"),
    ("mc.noise_seed_base", "(seed)"),
    ("solver.epsilon", "0.05"),
    ("solver.k_max", "5"),
    ("solver.condition_guard", "1e8"),
];

#[derive(Debug, Error, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(line) = self.line {
            write!(f, "line {line}: ")?;
        }
        if let Some(key) = &self.key {
            write!(f, "`{key}`: ")?;
        }
        f.write_str(&self.message)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub anchors: AnchorArray,
    pub trajectory: TrajectorySpec,
    /// Carries sigma, biases and solver settings alongside the trial count.
    pub mc: McSpec,
    pub output: Option<PathBuf>,
    trajectory_seed_set: bool,
    noise_seed_set: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        parse_config("").expect("defaults are valid")
    }
}

impl RunConfig {
    pub fn sigma(&self) -> f64 {
        self.mc.sigma
    }

    pub fn bias(&self) -> ClockBias {
        self.mc.bias
    }

    pub fn solver(&self) -> SolverConfig {
        self.mc.solver
    }

    /// Replaces the master seed. Sub-seeds that were not set explicitly in
    /// the file follow it.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        if !self.trajectory_seed_set {
            self.trajectory.seed = seed;
        }
        if !self.noise_seed_set {
            self.mc.noise_seed_base = seed;
        }
    }
}

struct Entry<'a> {
    line: usize,
    value: &'a str,
}

fn err(line: Option<usize>, key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError { line, key: Some(key.to_string()), message: message.into() }
}

/// Parses and validates a configuration text.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut entries: HashMap<String, Entry> = HashMap::new();
    let mut section = String::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| ConfigError {
                line: Some(line_no),
                key: None,
                message: format!("malformed section header `{line}`"),
            })?;
            section = name.trim().to_string();
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ConfigError {
            line: Some(line_no),
            key: None,
            message: format!("expected `key = value`, got `{line}`"),
        })?;
        let key = key.trim();
        let full = if section.is_empty() { key.to_string() } else { format!("{section}.{key}") };
        if !KEYS.iter().any(|(k, _)| *k == full) {
            return Err(err(Some(line_no), &full, "unknown key"));
        }
        if let Some(prev) = entries.get(&full) {
            return Err(err(Some(line_no), &full, format!("duplicate key (first set on line {})", prev.line)));
        }
        entries.insert(full, Entry { line: line_no, value: value.trim() });
    }

    let line_of = |key: &str| entries.get(key).map(|e| e.line);
    let float = |key: &str, default: f64| -> Result<f64, ConfigError> {
        match entries.get(key) {
            None => Ok(default),
            Some(e) => match e.value.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                Ok(_) => Err(err(Some(e.line), key, "value must be finite")),
                Err(_) => Err(err(Some(e.line), key, format!("expected a number, got `{}`", e.value))),
            },
        }
    };
    let uint = |key: &str, default: u64| -> Result<u64, ConfigError> {
        match entries.get(key) {
            None => Ok(default),
            Some(e) => e
                .value
                .parse::<u64>()
                .map_err(|_| err(Some(e.line), key, format!("expected a non-negative integer, got `{}`", e.value))),
        }
    };
    let point = |key: &str, default: Point| -> Result<Point, ConfigError> {
        match entries.get(key) {
            None => Ok(default),
            Some(e) => {
                let parts: Vec<&str> = e.value.split(',').map(str::trim).collect();
                let parsed: Option<Vec<f64>> = parts.iter().map(|p| p.parse::<f64>().ok()).collect();
                match parsed.as_deref() {
                    Some([x, y]) if x.is_finite() && y.is_finite() => Ok(Point::new(*x, *y)),
                    _ => Err(err(Some(e.line), key, format!("expected a point `x, y`, got `{}`", e.value))),
                }
            }
        }
    };

    let seed = uint("seed", 0)?;
    let sigma = float("sigma", 1e-2)?;
    if sigma < 0.0 {
        return Err(err(line_of("sigma"), "sigma", format!("must be >= 0, got {sigma}")));
    }

    let defaults = AnchorArray::reference_layout();
    let anchors = AnchorArray {
        p11: point("anchors.p11", defaults.p11)?,
        p12: point("anchors.p12", defaults.p12)?,
        p21: point("anchors.p21", defaults.p21)?,
        p22: point("anchors.p22", defaults.p22)?,
        spacing: float("anchors.spacing", defaults.spacing)?,
    };
    anchors.validate().map_err(|e| {
        let key = match e {
            GeometryError::SpacingMismatch { receiver: 1, .. } => "anchors.p12",
            GeometryError::SpacingMismatch { .. } => "anchors.p22",
            GeometryError::CoLocatedAnchors { .. } => "anchors.p21",
            _ => "anchors.spacing",
        };
        err(line_of(key).or(line_of("anchors.spacing")), key, e.to_string())
    })?;

    let bias = ClockBias::new(float("bias.b1", 5.0)?, float("bias.b2", -5.0)?);

    let traj_default = TrajectorySpec::default();
    let trajectory_seed_set = entries.contains_key("trajectory.seed");
    let trajectory = TrajectorySpec {
        start: point("trajectory.start", traj_default.start)?,
        steps: uint("trajectory.steps", traj_default.steps as u64)? as usize,
        dt: float("trajectory.dt", traj_default.dt)?,
        speed_std: float("trajectory.speed_std", traj_default.speed_std)?,
        seed: uint("trajectory.seed", seed)?,
    };
    if trajectory.steps < 1 {
        return Err(err(line_of("trajectory.steps"), "trajectory.steps", "must be at least 1"));
    }
    if trajectory.dt <= 0.0 {
        return Err(err(line_of("trajectory.dt"), "trajectory.dt", "must be positive"));
    }
    if trajectory.speed_std < 0.0 {
        return Err(err(line_of("trajectory.speed_std"), "trajectory.speed_std", "must be >= 0"));
    }

    let solver_default = SolverConfig::default();
    let solver = SolverConfig {
        epsilon: float("solver.epsilon", solver_default.epsilon)?,
        k_max: uint("solver.k_max", solver_default.k_max as u64)? as usize,
        condition_guard: float("solver.condition_guard", solver_default.condition_guard)?,
    };
    if solver.epsilon <= 0.0 {
        return Err(err(line_of("solver.epsilon"), "solver.epsilon", "must be positive"));
    }
    if solver.k_max < 1 {
        return Err(err(line_of("solver.k_max"), "solver.k_max", "must be at least 1"));
    }
    if solver.condition_guard <= 0.0 {
        return Err(err(line_of("solver.condition_guard"), "solver.condition_guard", "must be positive"));
    }

    let noise_seed_set = entries.contains_key("mc.noise_seed_base");
    let mc = McSpec {
        trials: uint("mc.trials", 5000)? as usize,
        noise_seed_base: uint("mc.noise_seed_base", seed)?,
        solver,
        bias,
        sigma,
    };
    if mc.trials < 1 {
        return Err(err(line_of("mc.trials"), "mc.trials", "must be at least 1"));
    }

    let output = entries.get("output").map(|e| PathBuf::from(e.value));

    Ok(RunConfig { seed, anchors, trajectory, mc, output, trajectory_seed_set, noise_seed_set })
}
