use std::fmt::Write as _;
use std::path::PathBuf;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::solvers::Algorithm;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("invalid value for {key}: {reason}")]
    InvalidValue { key: String, reason: String },
}

/// Condition-number sweep settings. Defaults follow the desk-scale version
/// of the reference experiment: `M = 614`, `N = 1024`, `ρ = 0.1`, 30 dB,
/// 100 iterations, κ ∈ {1, 10, 100, 1000}, 200 trials.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub m: usize,
    pub n: usize,
    pub density: f64,
    /// `1/σ²` in dB; infinity means noiseless.
    pub snr_db: f64,
    pub iterations: usize,
    pub condition_numbers: Vec<f64>,
    pub algorithms: Vec<Algorithm>,
    pub trials: usize,
    pub pilot_trials: usize,
    pub theta_grid: Vec<f64>,
    pub master_seed: u64,
    pub output: PathBuf,
    pub workers: usize,
    /// Largest tolerated share of diverged trials per (algorithm, κ).
    pub max_diverged_fraction: f64,
}

pub const FULL_SCALE_TRIALS: usize = 100_000;

pub fn uniform_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect()
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            m: 614,
            n: 1024,
            density: 0.1,
            snr_db: 30.0,
            iterations: 100,
            condition_numbers: vec![1.0, 10.0, 100.0, 1000.0],
            algorithms: Algorithm::ALL.to_vec(),
            trials: 200,
            pilot_trials: 64,
            theta_grid: uniform_grid(0.1, 3.0, 30),
            master_seed: 1,
            output: PathBuf::from("results"),
            workers: 1,
            max_diverged_fraction: 1.0,
        }
    }
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

impl SweepConfig {
    pub fn delta(&self) -> f64 {
        self.m as f64 / self.n as f64
    }

    pub fn noise_variance(&self) -> f64 {
        crate::model::noise_variance_from_snr_db(self.snr_db)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: idx + 1,
                reason: "expected `key = value`".into(),
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let invalid = |reason: String| ConfigError::InvalidValue { key: key.to_string(), reason };
        fn num<T: std::str::FromStr>(v: &str) -> Result<T, String>
        where
            T::Err: std::fmt::Display,
        {
            v.parse::<T>().map_err(|e| format!("{v:?}: {e}"))
        }
        fn list(v: &str) -> Result<Vec<f64>, String> {
            v.split(',').filter(|s| !s.trim().is_empty()).map(|s| num(s.trim())).collect()
        }
        match key {
            "m" => self.m = num(value).map_err(invalid)?,
            "n" => self.n = num(value).map_err(invalid)?,
            "density" => self.density = num(value).map_err(invalid)?,
            "snr_db" => self.snr_db = num(value).map_err(invalid)?,
            "iterations" => self.iterations = num(value).map_err(invalid)?,
            "condition_numbers" => self.condition_numbers = list(value).map_err(invalid)?,
            "algorithms" => {
                self.algorithms = value
                    .split(',')
                    .map(|s| s.parse::<Algorithm>().map_err(|e| invalid(e.to_string())))
                    .collect::<Result<_, _>>()?;
            }
            "trials" => self.trials = num(value).map_err(invalid)?,
            "pilot_trials" => self.pilot_trials = num(value).map_err(invalid)?,
            "theta_grid" => {
                self.theta_grid = if let Some((lo, rest)) = value.split_once(':') {
                    let (hi, count) = rest.split_once(':').ok_or_else(|| invalid("expected lo:hi:count".into()))?;
                    uniform_grid(
                        num(lo.trim()).map_err(invalid)?,
                        num(hi.trim()).map_err(invalid)?,
                        num(count.trim()).map_err(invalid)?,
                    )
                } else {
                    list(value).map_err(invalid)?
                };
            }
            "master_seed" => self.master_seed = num(value).map_err(invalid)?,
            "output" => self.output = PathBuf::from(value),
            "workers" => self.workers = num(value).map_err(invalid)?,
            "max_diverged_fraction" => self.max_diverged_fraction = num(value).map_err(invalid)?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, reason: &str| {
            Err(ConfigError::InvalidValue { key: key.to_string(), reason: reason.to_string() })
        };
        if !self.n.is_power_of_two() {
            return bad("n", "must be a power of two");
        }
        if self.m < 2 || self.m > self.n {
            return bad("m", "must lie in [2, n]");
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return bad("density", "must lie in (0, 1]");
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return bad("snr_db", "must be a number or inf");
        }
        if self.iterations == 0 {
            return bad("iterations", "must be positive");
        }
        if self.condition_numbers.is_empty() || self.condition_numbers.iter().any(|k| !(*k >= 1.0) || !k.is_finite()) {
            return bad("condition_numbers", "need at least one finite value >= 1");
        }
        if self.algorithms.is_empty() {
            return bad("algorithms", "need at least one algorithm");
        }
        if self.trials == 0 {
            return bad("trials", "must be at least 1");
        }
        if self.pilot_trials == 0 {
            return bad("pilot_trials", "must be at least 1");
        }
        if self.theta_grid.is_empty() || self.theta_grid.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
            return bad("theta_grid", "need at least one finite nonnegative threshold");
        }
        if self.workers == 0 {
            return bad("workers", "must be at least 1");
        }
        Ok(())
    }

    /// Canonical `key = value` rendering; parsing it gives back the same
    /// configuration.
    pub fn to_text(&self) -> String {
        let algorithms: Vec<&str> = self.algorithms.iter().map(|a| a.name()).collect();
        let mut out = String::new();
        writeln!(out, "m = {}", self.m).unwrap();
        writeln!(out, "n = {}", self.n).unwrap();
        writeln!(out, "density = {}", self.density).unwrap();
        writeln!(out, "snr_db = {}", self.snr_db).unwrap();
        writeln!(out, "iterations = {}", self.iterations).unwrap();
        writeln!(out, "condition_numbers = {}", join(&self.condition_numbers)).unwrap();
        writeln!(out, "algorithms = {}", algorithms.join(", ")).unwrap();
        writeln!(out, "trials = {}", self.trials).unwrap();
        writeln!(out, "pilot_trials = {}", self.pilot_trials).unwrap();
        writeln!(out, "theta_grid = {}", join(&self.theta_grid)).unwrap();
        writeln!(out, "master_seed = {}", self.master_seed).unwrap();
        writeln!(out, "output = {}", self.output.display()).unwrap();
        writeln!(out, "max_diverged_fraction = {}", self.max_diverged_fraction).unwrap();
        out
    }

    /// SHA-256 of everything that affects the numbers. Worker count and
    /// output location are left out.
    pub fn hash(&self) -> String {
        let text: String = self
            .to_text()
            .lines()
            .filter(|l| !l.starts_with("output ") && !l.starts_with("workers "))
            .map(|l| format!("{l}\n"))
            .collect();
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}
