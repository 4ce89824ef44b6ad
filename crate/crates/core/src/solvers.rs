//! CAMP, AMP and an LMMSE-OAMP baseline.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use thiserror::Error;

use crate::denoise::Denoiser;
use crate::model::{Measurement, SensingEnsemble};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("CAMP needs {needed} taps, got {got}")]
    InsufficientTaps { needed: usize, got: usize },
    #[error("measurement has length {got}, ensemble has {expected} rows")]
    MeasurementLength { expected: usize, got: usize },
    #[error("ground truth has length {got}, ensemble has {expected} columns")]
    TruthLength { expected: usize, got: usize },
    #[error("unknown algorithm {0:?}")]
    UnknownAlgorithm(String),
}

/// Ordering is the output order of the benchmark tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Algorithm {
    Camp,
    Amp,
    OampVamp,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Camp, Algorithm::Amp, Algorithm::OampVamp];

    pub fn name(self) -> &'static str {
        match self {
            Self::Camp => "camp",
            Self::Amp => "amp",
            Self::OampVamp => "oamp-vamp",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = SolverError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "camp" => Ok(Self::Camp),
            "amp" => Ok(Self::Amp),
            "oamp-vamp" | "oamp" | "vamp" => Ok(Self::OampVamp),
            other => Err(SolverError::UnknownAlgorithm(other.to_string())),
        }
    }
}

/// Default bound on `‖r_t‖²/N` before a run is declared divergent.
pub const DEFAULT_DIVERGENCE_LIMIT: f64 = 1e10;
/// Floor of the OAMP error-variance estimate.
pub const VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    pub iterations: usize,
    /// `g_0^{(1)}, g_1^{(1)}, …`; read by CAMP only.
    pub taps: Vec<f64>,
    pub denoiser: Denoiser,
    /// Keep `x_t`, `r_t` and the ξ products for every iteration.
    pub record_history: bool,
    pub divergence_limit: f64,
}

impl SolverConfig {
    pub fn new(algorithm: Algorithm, iterations: usize, denoiser: Denoiser) -> Self {
        Self {
            algorithm,
            iterations,
            taps: Vec::new(),
            denoiser,
            record_history: false,
            divergence_limit: DEFAULT_DIVERGENCE_LIMIT,
        }
    }

    pub fn with_taps(mut self, taps: Vec<f64>) -> Self {
        self.taps = taps;
        self
    }

    pub fn with_history(mut self) -> Self {
        self.record_history = true;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    /// State left the finite range, or its energy exceeded the limit, at this
    /// iteration.
    Diverged { iteration: usize },
    /// OAMP divergence-free step undefined (`⟨f′⟩ ≥ 1`) at this iteration.
    Stalled { iteration: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverTrajectory {
    pub algorithm: Algorithm,
    pub status: RunStatus,
    /// `x_0, x_1, …` when history is recorded.
    pub x: Vec<Vec<f64>>,
    /// `z_0, z_1, …`. Always complete for CAMP; AMP and OAMP keep only the
    /// latest residual unless history is recorded.
    pub z: Vec<Vec<f64>>,
    /// `r_t` per iteration when history is recorded.
    pub r: Vec<Vec<f64>>,
    /// `a_t = ⟨f′_t(r_t)⟩`.
    pub divergence: Vec<f64>,
    /// `xi[t][τ] = ξ_τ^{(t)} = Π_{s=τ}^{t} a_s` when history is recorded.
    pub xi: Vec<Vec<f64>>,
    /// `‖f_t(r_t) − x★‖²/N` per iteration when ground truth was supplied.
    pub mse: Vec<f64>,
    /// Denoiser output of the last completed iteration.
    pub estimate: Vec<f64>,
}

impl SolverTrajectory {
    fn new(algorithm: Algorithm, n: usize) -> Self {
        Self {
            algorithm,
            status: RunStatus::Completed,
            x: Vec::new(),
            z: Vec::new(),
            r: Vec::new(),
            divergence: Vec::new(),
            xi: Vec::new(),
            mse: Vec::new(),
            estimate: vec![0.0; n],
        }
    }

    /// Final-iteration MSE; infinite for diverged runs.
    pub fn final_mse(&self) -> f64 {
        match self.status {
            RunStatus::Diverged { .. } => f64::INFINITY,
            _ => self.mse.last().copied().unwrap_or(f64::NAN),
        }
    }

    pub fn diverged(&self) -> bool {
        matches!(self.status, RunStatus::Diverged { .. })
    }

    /// `t,mse,divergence` rows.
    pub fn to_table(&self) -> String {
        let mut out = String::from("t,mse,divergence\n");
        for (t, a) in self.divergence.iter().enumerate() {
            let mse = self.mse.get(t).copied().unwrap_or(f64::NAN);
            writeln!(out, "{t},{mse},{a}").unwrap();
        }
        out
    }
}

pub fn run(
    ensemble: &SensingEnsemble,
    measurement: &Measurement,
    config: &SolverConfig,
    truth: Option<&[f64]>,
) -> Result<SolverTrajectory, SolverError> {
    match config.algorithm {
        Algorithm::Camp => camp_run(ensemble, measurement, config, truth),
        Algorithm::Amp => amp_run(ensemble, measurement, config, truth),
        Algorithm::OampVamp => oamp_vamp_run(ensemble, measurement, config, truth),
    }
}

fn check_inputs(
    ensemble: &SensingEnsemble,
    measurement: &Measurement,
    truth: Option<&[f64]>,
) -> Result<(), SolverError> {
    if measurement.y.len() != ensemble.m() {
        return Err(SolverError::MeasurementLength { expected: ensemble.m(), got: measurement.y.len() });
    }
    if let Some(x) = truth {
        if x.len() != ensemble.n() {
            return Err(SolverError::TruthLength { expected: ensemble.n(), got: x.len() });
        }
    }
    Ok(())
}

fn mean_square(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>() / v.len() as f64
}

fn mse_against(estimate: &[f64], truth: &[f64]) -> f64 {
    estimate.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / truth.len() as f64
}

fn blown_up(r: &[f64], limit: f64) -> bool {
    let energy = mean_square(r);
    !energy.is_finite() || energy > limit
}

/// `y − A x`
fn residual(ensemble: &SensingEnsemble, y: &[f64], x: &[f64]) -> Vec<f64> {
    let ax = ensemble.forward(x);
    y.iter().zip(&ax).map(|(a, b)| a - b).collect()
}

/// `x + Aᵀz`
fn pre_denoise(ensemble: &SensingEnsemble, x: &[f64], z: &[f64]) -> Vec<f64> {
    let atz = ensemble.adjoint(z);
    x.iter().zip(&atz).map(|(a, b)| a + b).collect()
}

/// CAMP:
/// `z_t = y − A x_t + Σ_{τ<t} ξ_τ^{(t−1)} g_{t−τ−1}^{(1)} z_τ`,
/// `r_t = x_t + Aᵀz_t`, `x_{t+1} = f_t(r_t)`.
pub fn camp_run(
    ensemble: &SensingEnsemble,
    measurement: &Measurement,
    config: &SolverConfig,
    truth: Option<&[f64]>,
) -> Result<SolverTrajectory, SolverError> {
    check_inputs(ensemble, measurement, truth)?;
    let iterations = config.iterations;
    if config.taps.len() < iterations {
        return Err(SolverError::InsufficientTaps { needed: iterations, got: config.taps.len() });
    }
    let n = ensemble.n();
    let mut traj = SolverTrajectory::new(Algorithm::Camp, n);
    let mut x = vec![0.0; n];
    // ξ_τ^{(t−1)} for τ < t
    let mut xi: Vec<f64> = Vec::with_capacity(iterations);
    for t in 0..iterations {
        let mut z = residual(ensemble, &measurement.y, &x);
        for (tau, z_tau) in traj.z.iter().enumerate() {
            let coef = xi[tau] * config.taps[t - tau - 1];
            if coef != 0.0 {
                for (zi, zt) in z.iter_mut().zip(z_tau) {
                    *zi += coef * zt;
                }
            }
        }
        let r = pre_denoise(ensemble, &x, &z);
        if config.record_history {
            traj.x.push(x.clone());
        }
        traj.z.push(z);
        if blown_up(&r, config.divergence_limit) {
            traj.status = RunStatus::Diverged { iteration: t };
            break;
        }
        let a = config.denoiser.divergence(&r, t);
        for v in xi.iter_mut() {
            *v *= a;
        }
        xi.push(a);
        traj.divergence.push(a);
        x = config.denoiser.apply(&r, t);
        if let Some(truth) = truth {
            traj.mse.push(mse_against(&x, truth));
        }
        if config.record_history {
            traj.xi.push(xi.clone());
            traj.r.push(r);
        }
    }
    if config.record_history && traj.status == RunStatus::Completed {
        traj.x.push(x.clone());
    }
    traj.estimate = x;
    Ok(traj)
}

/// AMP: `z_t = y − A x_t + δ⁻¹⟨f′_{t−1}(r_{t−1})⟩ z_{t−1}`.
pub fn amp_run(
    ensemble: &SensingEnsemble,
    measurement: &Measurement,
    config: &SolverConfig,
    truth: Option<&[f64]>,
) -> Result<SolverTrajectory, SolverError> {
    check_inputs(ensemble, measurement, truth)?;
    let n = ensemble.n();
    let inv_delta = 1.0 / ensemble.delta();
    let mut traj = SolverTrajectory::new(Algorithm::Amp, n);
    let mut x = vec![0.0; n];
    let mut z_prev: Option<Vec<f64>> = None;
    let mut a_prev = 0.0;
    for t in 0..config.iterations {
        let mut z = residual(ensemble, &measurement.y, &x);
        if let Some(zp) = &z_prev {
            let coef = a_prev * inv_delta;
            if coef != 0.0 {
                for (zi, zt) in z.iter_mut().zip(zp) {
                    *zi += coef * zt;
                }
            }
        }
        let r = pre_denoise(ensemble, &x, &z);
        if config.record_history {
            traj.x.push(x.clone());
            traj.z.push(z.clone());
        }
        if blown_up(&r, config.divergence_limit) {
            traj.status = RunStatus::Diverged { iteration: t };
            z_prev = Some(z);
            break;
        }
        let a = config.denoiser.divergence(&r, t);
        traj.divergence.push(a);
        x = config.denoiser.apply(&r, t);
        if let Some(truth) = truth {
            traj.mse.push(mse_against(&x, truth));
        }
        if config.record_history {
            let mut xi: Vec<f64> = traj.xi.last().map_or_else(Vec::new, |p| p.iter().map(|v| v * a).collect());
            xi.push(a);
            traj.xi.push(xi);
            traj.r.push(r);
        }
        a_prev = a;
        z_prev = Some(z);
    }
    if !config.record_history {
        traj.z.extend(z_prev);
    } else if traj.status == RunStatus::Completed {
        traj.x.push(x.clone());
    }
    traj.estimate = x;
    Ok(traj)
}

/// `W(y − Ax)` for `W = v Aᵀ(v AAᵀ + σ²I)⁻¹`, applied through the SVD, and
/// `tr(WA)`.
pub fn lmmse_filter(ensemble: &SensingEnsemble, residual: &[f64], v: f64, noise_variance: f64) -> (Vec<f64>, f64) {
    let sigma = ensemble.singular_values();
    let mut c = ensemble.left_transpose(residual);
    let mut trace = 0.0;
    for (ci, s) in c.iter_mut().zip(sigma) {
        let lambda = s * s;
        let denom = v * lambda + noise_variance;
        *ci *= v / denom;
        trace += v * lambda / denom;
    }
    let w = ensemble.adjoint(&ensemble.left_apply(&c));
    (w, trace)
}

/// LMMSE-OAMP with a residual-based error-variance estimate and
/// divergence-free soft thresholding.
pub fn oamp_vamp_run(
    ensemble: &SensingEnsemble,
    measurement: &Measurement,
    config: &SolverConfig,
    truth: Option<&[f64]>,
) -> Result<SolverTrajectory, SolverError> {
    check_inputs(ensemble, measurement, truth)?;
    let (m, n) = (ensemble.m(), ensemble.n());
    let s2 = measurement.noise_variance;
    let gram_trace = ensemble.gram_trace();
    let mut traj = SolverTrajectory::new(Algorithm::OampVamp, n);
    let mut x = vec![0.0; n];
    for t in 0..config.iterations {
        let z = residual(ensemble, &measurement.y, &x);
        let energy: f64 = z.iter().map(|v| v * v).sum();
        let v = ((energy - m as f64 * s2) / gram_trace).max(VARIANCE_FLOOR);
        let (w, trace) = lmmse_filter(ensemble, &z, v, s2);
        let scale = n as f64 / trace;
        let r: Vec<f64> = x.iter().zip(&w).map(|(xi, wi)| xi + scale * wi).collect();
        if config.record_history {
            traj.x.push(x.clone());
        }
        if config.record_history || t + 1 == config.iterations {
            traj.z.push(z);
        }
        if blown_up(&r, config.divergence_limit) {
            traj.status = RunStatus::Diverged { iteration: t };
            break;
        }
        let a = config.denoiser.divergence(&r, t);
        traj.divergence.push(a);
        let f = config.denoiser.apply(&r, t);
        if let Some(truth) = truth {
            traj.mse.push(mse_against(&f, truth));
        }
        if config.record_history {
            traj.r.push(r.clone());
        }
        traj.estimate = f;
        if a >= 1.0 {
            traj.status = RunStatus::Stalled { iteration: t };
            break;
        }
        let c = 1.0 / (1.0 - a);
        x = traj.estimate.iter().zip(&r).map(|(fi, ri)| c * (fi - a * ri)).collect();
    }
    if config.record_history && traj.status == RunStatus::Completed {
        traj.x.push(x);
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        geometric_singular_values, measure, noise_variance_from_snr_db, sample_partial_hadamard, sample_signal,
        SignalPrior,
    };
    use crate::spectral::{amp_taps, taps_geometric_closed_form};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn instance(m: usize, n: usize, kappa: f64, s2: f64, seed: u64) -> (SensingEnsemble, Vec<f64>, Measurement) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sigma = geometric_singular_values(m, n, kappa).unwrap();
        let ens = sample_partial_hadamard(m, n, &sigma, &mut rng).unwrap();
        let x = sample_signal(&SignalPrior::bernoulli_gaussian(0.1).unwrap(), n, &mut rng);
        let meas = measure(&ens, &x, s2, &mut rng).unwrap();
        (ens, x, meas)
    }

    #[test]
    fn first_iteration_uses_plain_residual() {
        let (ens, x, meas) = instance(40, 64, 10.0, 1e-3, 1);
        let cfg = SolverConfig::new(Algorithm::Camp, 3, Denoiser::constant(0.5))
            .with_taps(taps_geometric_closed_form(40.0 / 64.0, 10.0, 3).unwrap())
            .with_history();
        let traj = camp_run(&ens, &meas, &cfg, Some(&x)).unwrap();
        assert_eq!(traj.z[0], meas.y);
        assert_eq!(traj.r[0], ens.adjoint(&meas.y));
        assert!(traj.x[0].iter().all(|v| *v == 0.0));
        assert_eq!(traj.z.len(), 3);
        assert_eq!(traj.xi[2].len(), 3);
        let a = &traj.divergence;
        assert_eq!(traj.xi[2][0], a[0] * a[1] * a[2]);
    }

    #[test]
    fn camp_with_amp_taps_is_amp() {
        let (ens, x, meas) = instance(60, 128, 10.0, 1e-3, 2);
        let den = Denoiser::constant(1.2);
        let camp = SolverConfig::new(Algorithm::Camp, 30, den.clone()).with_taps(amp_taps(ens.delta(), 30)).with_history();
        let amp = SolverConfig::new(Algorithm::Amp, 30, den).with_history();
        let a = camp_run(&ens, &meas, &camp, Some(&x)).unwrap();
        let b = amp_run(&ens, &meas, &amp, Some(&x)).unwrap();
        assert_eq!(a.r, b.r);
        assert_eq!(a.mse, b.mse);
    }

    #[test]
    fn noiseless_orthogonal_recovery() {
        let (ens, x, meas) = instance(64, 64, 1.0, 0.0, 3);
        let den = Denoiser::constant(0.0);
        for alg in Algorithm::ALL {
            let cfg = SolverConfig::new(alg, 2, den.clone()).with_taps(vec![0.0; 2]);
            let traj = run(&ens, &meas, &cfg, Some(&x)).unwrap();
            assert!(traj.mse[0] < 1e-28, "{alg}: {:?}", traj.mse);
        }
        // AMP keeps the full δ⁻¹ memory on orthogonal rows: r_1 = (1 + a_0) x
        let cfg = SolverConfig::new(Algorithm::Amp, 2, den.clone()).with_history();
        let traj = amp_run(&ens, &meas, &cfg, Some(&x)).unwrap();
        let a0 = traj.divergence[0];
        assert!(a0 > 0.5);
        for (r, xs) in traj.r[1].iter().zip(&x) {
            assert!((r - (1.0 + a0) * xs).abs() < 1e-12);
        }
        // CAMP with δ = 1, κ = 1 has zero taps and stays exact
        let cfg = SolverConfig::new(Algorithm::Camp, 1, den).with_taps(vec![0.0]).with_history();
        let traj = camp_run(&ens, &meas, &cfg, Some(&x)).unwrap();
        let err: f64 = traj.x[1].iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-12);
    }

    #[test]
    fn oamp_orthogonal_one_step() {
        let (ens, x, meas) = instance(32, 32, 1.0, 0.0, 4);
        let cfg = SolverConfig::new(Algorithm::OampVamp, 1, Denoiser::constant(0.3)).with_history();
        let traj = oamp_vamp_run(&ens, &meas, &cfg, Some(&x)).unwrap();
        for (r, xs) in traj.r[0].iter().zip(&x) {
            assert!((r - xs).abs() < 1e-12);
        }
    }

    #[test]
    fn lmmse_filter_vanishes_with_noise() {
        let (ens, _, meas) = instance(32, 64, 10.0, 1e-3, 5);
        let (w, trace) = lmmse_filter(&ens, &meas.y, 1.0, 1e12);
        assert!(w.iter().all(|v| v.abs() < 1e-10));
        assert!(trace < 1e-10);
    }

    #[test]
    fn camp_runs_are_deterministic() {
        let (ens, x, meas) = instance(100, 256, 100.0, noise_variance_from_snr_db(30.0), 6);
        let cfg = SolverConfig::new(Algorithm::Camp, 20, Denoiser::constant(1.0))
            .with_taps(taps_geometric_closed_form(ens.delta(), 100.0, 20).unwrap());
        let a = camp_run(&ens, &meas, &cfg, Some(&x)).unwrap();
        let b = camp_run(&ens, &meas, &cfg, Some(&x)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn divergence_is_reported() {
        let (ens, x, meas) = instance(40, 64, 1.0, 1e-3, 7);
        // wildly wrong taps blow the residual up
        let cfg = SolverConfig::new(Algorithm::Camp, 50, Denoiser::constant(0.0)).with_taps(vec![50.0; 50]);
        let traj = camp_run(&ens, &meas, &cfg, Some(&x)).unwrap();
        assert!(matches!(traj.status, RunStatus::Diverged { .. }));
        assert_eq!(traj.final_mse(), f64::INFINITY);
    }

    #[test]
    fn oamp_reports_stall() {
        // dense signal and θ = 0: every entry passes, so ⟨f′⟩ = 1
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let ens = sample_partial_hadamard(32, 32, &vec![1.0; 32], &mut rng).unwrap();
        let x = sample_signal(&SignalPrior::bernoulli_gaussian(1.0).unwrap(), 32, &mut rng);
        let meas = measure(&ens, &x, 0.0, &mut rng).unwrap();
        let cfg = SolverConfig::new(Algorithm::OampVamp, 5, Denoiser::constant(0.0));
        let traj = oamp_vamp_run(&ens, &meas, &cfg, Some(&x)).unwrap();
        assert_eq!(traj.status, RunStatus::Stalled { iteration: 0 });
        assert!(traj.final_mse() < 1e-28);
    }

    #[test]
    fn rejects_short_taps() {
        let (ens, _, meas) = instance(8, 16, 2.0, 0.0, 9);
        let cfg = SolverConfig::new(Algorithm::Camp, 4, Denoiser::constant(1.0)).with_taps(vec![1.0; 3]);
        assert_eq!(
            camp_run(&ens, &meas, &cfg, None).unwrap_err(),
            SolverError::InsufficientTaps { needed: 4, got: 3 }
        );
    }

    #[test]
    fn algorithm_names_round_trip() {
        for alg in Algorithm::ALL {
            assert_eq!(alg.name().parse::<Algorithm>().unwrap(), alg);
        }
        assert!("ista".parse::<Algorithm>().is_err());
    }
}
