use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::config::SweepConfig;
use crate::denoise::Denoiser;
use crate::diagnostics::mse_db;
use crate::model::{geometric_singular_values, measure, sample_partial_hadamard, sample_signal, Measurement, ModelError, SensingEnsemble, SignalPrior};
use crate::solvers::{run, Algorithm, SolverConfig, SolverError};
use crate::spectral::{equal_eigenvalue_moments, production_taps, SpectralError};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// 64-bit seed from `SHA-256(master ‖ stream ‖ κ ‖ index)`.
///
/// Algorithms are not part of the key: every algorithm sees the same matrix,
/// signal and noise for a given `(κ, index)`.
pub fn derive_seed(master: u64, stream: &str, kappa: f64, index: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update((stream.len() as u64).to_le_bytes());
    hasher.update(stream.as_bytes());
    hasher.update(kappa.to_bits().to_le_bytes());
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    let mut first = [0u8; 8];
    first.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(first)
}

/// One draw of matrix, signal and measurement.
#[derive(Debug, Clone)]
pub struct Instance {
    pub ensemble: SensingEnsemble,
    pub signal: Vec<f64>,
    pub measurement: Measurement,
}

/// Draws row selection, signal and noise, in that order, from one stream.
pub fn draw_instance(config: &SweepConfig, kappa: f64, seed: u64) -> Result<Instance, BenchError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = geometric_singular_values(config.m, config.n, kappa)?;
    let ensemble = sample_partial_hadamard(config.m, config.n, &sigma, &mut rng)?;
    let prior = SignalPrior::bernoulli_gaussian(config.density)?;
    let signal = sample_signal(&prior, config.n, &mut rng);
    let measurement = measure(&ensemble, &signal, config.noise_variance(), &mut rng)?;
    Ok(Instance { ensemble, signal, measurement })
}

/// CAMP taps `g_0^{(1)}..g_T^{(1)}` for the geometric ensemble at this κ;
/// κ = 1 uses the equal-eigenvalue spectrum.
pub fn sweep_taps(config: &SweepConfig, kappa: f64) -> Result<Vec<f64>, SpectralError> {
    let horizon = config.iterations;
    let profile = if kappa == 1.0 {
        equal_eigenvalue_moments(config.delta(), horizon + 2)?
    } else {
        crate::spectral::asymptotic_moments_geometric(config.delta(), kappa, 2)?
    };
    production_taps(&profile, horizon)
}

fn solver_config(config: &SweepConfig, algorithm: Algorithm, theta: f64, taps: &[f64]) -> SolverConfig {
    let cfg = SolverConfig::new(algorithm, config.iterations, Denoiser::constant(theta));
    if algorithm == Algorithm::Camp {
        cfg.with_taps(taps.to_vec())
    } else {
        cfg
    }
}

fn final_mse(config: &SweepConfig, algorithm: Algorithm, theta: f64, taps: &[f64], inst: &Instance) -> Result<f64, BenchError> {
    let cfg = solver_config(config, algorithm, theta, taps);
    let traj = run(&inst.ensemble, &inst.measurement, &cfg, Some(&inst.signal))?;
    Ok(traj.final_mse())
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, BenchError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| BenchError::Pool(e.to_string()))
}

/// Pilot statistics at one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub theta: f64,
    /// Mean over all pilot trials; infinite if any diverged.
    pub mean_mse: f64,
    /// Mean over the trials that did not diverge.
    pub finite_mean_mse: f64,
    pub diverged: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdChoice {
    pub algorithm: Algorithm,
    pub kappa: f64,
    pub theta: f64,
    /// Every grid point had a diverged pilot; `theta` is the least bad one.
    pub all_diverged: bool,
    pub grid: Vec<GridPoint>,
}

fn summarize_point(theta: f64, mses: &[f64]) -> GridPoint {
    let finite: Vec<f64> = mses.iter().copied().filter(|v| v.is_finite()).collect();
    let diverged = mses.len() - finite.len();
    let mean = |v: &[f64]| if v.is_empty() { f64::INFINITY } else { v.iter().sum::<f64>() / v.len() as f64 };
    GridPoint {
        theta,
        mean_mse: if diverged > 0 { f64::INFINITY } else { mean(&finite) },
        finite_mean_mse: mean(&finite),
        diverged,
    }
}

/// Smallest mean pilot MSE, ties toward larger θ. If every point diverged
/// somewhere: fewest divergences, then smallest finite mean, then larger θ.
pub fn select_threshold(grid: &[GridPoint]) -> (usize, bool) {
    let mut best: Option<usize> = None;
    for (i, p) in grid.iter().enumerate() {
        if p.mean_mse.is_finite() && best.is_none_or(|b| p.mean_mse <= grid[b].mean_mse) {
            best = Some(i);
        }
    }
    if let Some(b) = best {
        return (b, false);
    }
    let mut least = 0;
    for (i, p) in grid.iter().enumerate().skip(1) {
        let q = &grid[least];
        let better = p.diverged < q.diverged
            || (p.diverged == q.diverged && p.finite_mean_mse <= q.finite_mean_mse)
            || (p.diverged == q.diverged && q.finite_mean_mse.is_nan());
        if better {
            least = i;
        }
    }
    (least, true)
}

fn search_on(
    config: &SweepConfig,
    algorithm: Algorithm,
    kappa: f64,
    taps: &[f64],
    pilots: &[Instance],
    pool: &rayon::ThreadPool,
) -> Result<ThresholdChoice, BenchError> {
    let jobs: Vec<(usize, usize)> = (0..config.theta_grid.len())
        .flat_map(|g| (0..pilots.len()).map(move |p| (g, p)))
        .collect();
    let results: Vec<f64> = pool.install(|| {
        jobs.par_iter()
            .map(|&(g, p)| final_mse(config, algorithm, config.theta_grid[g], taps, &pilots[p]))
            .collect::<Result<_, _>>()
    })?;
    let grid: Vec<GridPoint> = results
        .chunks(pilots.len())
        .zip(&config.theta_grid)
        .map(|(mses, &theta)| summarize_point(theta, mses))
        .collect();
    let (best, all_diverged) = select_threshold(&grid);
    Ok(ThresholdChoice { algorithm, kappa, theta: grid[best].theta, all_diverged, grid })
}

fn pilot_instances(config: &SweepConfig, kappa: f64, pool: &rayon::ThreadPool) -> Result<Vec<Instance>, BenchError> {
    pool.install(|| {
        (0..config.pilot_trials as u64)
            .into_par_iter()
            .map(|i| draw_instance(config, kappa, derive_seed(config.master_seed, "pilot", kappa, i)))
            .collect()
    })
}

/// Exhaustive search over `config.theta_grid` on `config.pilot_trials`
/// pilot instances, separate from the measured trials.
pub fn threshold_search(config: &SweepConfig, algorithm: Algorithm, kappa: f64) -> Result<ThresholdChoice, BenchError> {
    let pool = pool(config.workers)?;
    let taps = sweep_taps(config, kappa)?;
    let pilots = pilot_instances(config, kappa, &pool)?;
    search_on(config, algorithm, kappa, &taps, &pilots, &pool)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub algorithm: Algorithm,
    pub kappa: f64,
    pub theta: f64,
    pub trial: usize,
    /// Infinite for diverged runs.
    pub final_mse: f64,
}

/// Aggregate over the trials of one (algorithm, κ).
#[derive(Debug, Clone, PartialEq)]
pub struct TrialReport {
    pub algorithm: Algorithm,
    pub kappa: f64,
    pub theta: f64,
    /// Infinite if any trial diverged.
    pub mean_mse: f64,
    pub mean_mse_db: f64,
    /// Standard error of the mean, linear scale.
    pub std_error: f64,
    pub trials: usize,
    pub diverged: usize,
}

impl TrialReport {
    /// Standard error on the dB scale, first order in `std_error / mean_mse`.
    pub fn std_error_db(&self) -> f64 {
        if !self.mean_mse.is_finite() {
            return f64::INFINITY;
        }
        10.0 / std::f64::consts::LN_10 * self.std_error / self.mean_mse
    }

    pub fn diverged_fraction(&self) -> f64 {
        self.diverged as f64 / self.trials as f64
    }
}

/// Aggregates computed from per-trial records only.
pub fn aggregate(records: &[TrialRecord]) -> Vec<TrialReport> {
    let mut out: Vec<TrialReport> = Vec::new();
    let mut start = 0;
    while start < records.len() {
        let head = &records[start];
        let end = start
            + records[start..]
                .iter()
                .take_while(|r| r.algorithm == head.algorithm && r.kappa == head.kappa)
                .count();
        let group = &records[start..end];
        let count = group.len();
        let diverged = group.iter().filter(|r| !r.final_mse.is_finite()).count();
        let mean = group.iter().map(|r| r.final_mse).sum::<f64>() / count as f64;
        let std_error = if count > 1 && mean.is_finite() {
            let var = group.iter().map(|r| (r.final_mse - mean).powi(2)).sum::<f64>() / (count - 1) as f64;
            (var / count as f64).sqrt()
        } else if mean.is_finite() {
            0.0
        } else {
            f64::INFINITY
        };
        out.push(TrialReport {
            algorithm: head.algorithm,
            kappa: head.kappa,
            theta: head.theta,
            mean_mse: mean,
            mean_mse_db: mse_db(mean),
            std_error,
            trials: count,
            diverged,
        });
        start = end;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub config_hash: String,
    pub choices: Vec<ThresholdChoice>,
    /// Sorted by (algorithm, κ, trial).
    pub records: Vec<TrialRecord>,
    pub reports: Vec<TrialReport>,
}

impl SweepResult {
    pub fn report(&self, algorithm: Algorithm, kappa: f64) -> Option<&TrialReport> {
        self.reports.iter().find(|r| r.algorithm == algorithm && r.kappa == kappa)
    }

    /// (algorithm, κ) groups whose diverged share exceeds the configured limit.
    pub fn divergence_failures(&self, limit: f64) -> Vec<&TrialReport> {
        self.reports.iter().filter(|r| r.diverged_fraction() > limit).collect()
    }
}

/// Threshold search and measured trials for every κ and algorithm.
///
/// Trials are drawn once per (κ, index) and run by every algorithm, so the
/// algorithms are compared on paired data.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepResult, BenchError> {
    let pool = pool(config.workers)?;
    let mut algorithms = config.algorithms.clone();
    algorithms.sort();
    algorithms.dedup();
    let mut kappas = config.condition_numbers.clone();
    kappas.sort_by(f64::total_cmp);
    kappas.dedup();

    let mut choices = Vec::new();
    let mut records = Vec::new();
    for &kappa in &kappas {
        let taps = sweep_taps(config, kappa)?;
        let pilots = pilot_instances(config, kappa, &pool)?;
        let mut thetas = Vec::new();
        for &alg in &algorithms {
            let choice = search_on(config, alg, kappa, &taps, &pilots, &pool)?;
            thetas.push(choice.theta);
            choices.push(choice);
        }
        drop(pilots);
        let per_trial: Vec<Vec<f64>> = pool.install(|| {
            (0..config.trials)
                .into_par_iter()
                .map(|i| {
                    let inst = draw_instance(config, kappa, derive_seed(config.master_seed, "trial", kappa, i as u64))?;
                    algorithms
                        .iter()
                        .zip(&thetas)
                        .map(|(&alg, &theta)| final_mse(config, alg, theta, &taps, &inst))
                        .collect::<Result<Vec<f64>, BenchError>>()
                })
                .collect::<Result<_, _>>()
        })?;
        for (a, (&alg, &theta)) in algorithms.iter().zip(&thetas).enumerate() {
            for (trial, mses) in per_trial.iter().enumerate() {
                records.push(TrialRecord { algorithm: alg, kappa, theta, trial, final_mse: mses[a] });
            }
        }
    }
    records.sort_by(|a, b| {
        a.algorithm
            .cmp(&b.algorithm)
            .then(a.kappa.total_cmp(&b.kappa))
            .then(a.trial.cmp(&b.trial))
    });
    choices.sort_by(|a, b| a.algorithm.cmp(&b.algorithm).then(a.kappa.total_cmp(&b.kappa)));
    let reports = aggregate(&records);
    Ok(SweepResult { config_hash: config.hash(), choices, records, reports })
}

pub const TRIALS_HEADER: &str = "algorithm,kappa,theta,trial,final_mse,mse_db";
pub const AGGREGATE_HEADER: &str = "algorithm,kappa,theta,mean_mse,mean_mse_db,std_error,trials,diverged";
pub const PLOT_HEADER: &str = "algorithm,kappa,mean_mse_db,std_error_db";

pub fn trials_csv(records: &[TrialRecord]) -> String {
    let mut out = format!("{TRIALS_HEADER}\n");
    for r in records {
        writeln!(out, "{},{},{},{},{},{}", r.algorithm, r.kappa, r.theta, r.trial, r.final_mse, mse_db(r.final_mse)).unwrap();
    }
    out
}

pub fn aggregate_csv(reports: &[TrialReport]) -> String {
    let mut out = format!("{AGGREGATE_HEADER}\n");
    for r in reports {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.algorithm, r.kappa, r.theta, r.mean_mse, r.mean_mse_db, r.std_error, r.trials, r.diverged
        )
        .unwrap();
    }
    out
}

/// One row per (algorithm, κ): mean MSE in dB and its standard error.
pub fn emit_plot_data(reports: &[TrialReport]) -> String {
    let mut out = format!("{PLOT_HEADER}\n");
    for r in reports {
        writeln!(out, "{},{},{},{}", r.algorithm, r.kappa, r.mean_mse_db, r.std_error_db()).unwrap();
    }
    out
}

/// Parses a trials CSV back into records.
pub fn parse_trials_csv(text: &str) -> Result<Vec<TrialRecord>, String> {
    let mut lines = text.lines();
    if lines.next() != Some(TRIALS_HEADER) {
        return Err("missing header".into());
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(format!("row {}: expected 6 fields", i + 1));
            }
            let bad = |what: &str| format!("row {}: bad {what}", i + 1);
            Ok(TrialRecord {
                algorithm: f[0].parse().map_err(|_| bad("algorithm"))?,
                kappa: f[1].parse().map_err(|_| bad("kappa"))?,
                theta: f[2].parse().map_err(|_| bad("theta"))?,
                trial: f[3].parse().map_err(|_| bad("trial"))?,
                final_mse: f[4].parse().map_err(|_| bad("final_mse"))?,
            })
        })
        .collect()
}

pub fn summary_text(config: &SweepConfig, result: &SweepResult) -> String {
    let mut out = String::new();
    writeln!(out, "config_hash = {}", result.config_hash).unwrap();
    writeln!(out, "master_seed = {}", config.master_seed).unwrap();
    writeln!(out, "trials = {}, pilot_trials = {}", config.trials, config.pilot_trials).unwrap();
    writeln!(out).unwrap();
    writeln!(out, "threshold search").unwrap();
    for c in &result.choices {
        let flag = if c.all_diverged { "  (every grid point diverged)" } else { "" };
        writeln!(out, "  {:<10} kappa={:<8} theta={}{}", c.algorithm.name(), c.kappa, c.theta, flag).unwrap();
    }
    writeln!(out).unwrap();
    writeln!(out, "results").unwrap();
    for r in &result.reports {
        writeln!(
            out,
            "  {:<10} kappa={:<8} mse={:.3} dB  (+/- {:.3} dB, {} of {} diverged)",
            r.algorithm.name(),
            r.kappa,
            r.mean_mse_db,
            r.std_error_db(),
            r.diverged,
            r.trials
        )
        .unwrap();
    }
    out
}

/// Writes `trials.csv`, `aggregate.csv`, `plot.csv` and `summary.txt`.
pub fn write_outputs(dir: &Path, config: &SweepConfig, result: &SweepResult) -> Result<(), BenchError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("trials.csv"), trials_csv(&result.records))?;
    fs::write(dir.join("aggregate.csv"), aggregate_csv(&result.reports))?;
    fs::write(dir.join("plot.csv"), emit_plot_data(&result.reports))?;
    fs::write(dir.join("summary.txt"), summary_text(config, result))?;
    Ok(())
}
