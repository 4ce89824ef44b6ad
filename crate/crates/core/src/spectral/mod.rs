//! Eigenvalue spectra of `AᵀA`: moment sequences, the η-transform and the
//! tap coefficients of the convolutional Onsager correction.
//!
//! Map from moments to taps is badly conditioned: a relative perturbation of
//! `1e-16` in the moments moves `g_15^{(1)}` by up to `1e-3` for strongly
//! ill-conditioned spectra, and the error grows by roughly a decimal digit per
//! iteration. Every profile can therefore regenerate its moments in
//! multiprecision arithmetic ([`SpectralProfile::exact_moments`]), and the tap
//! recursion runs at the same precision.

mod taps;
mod theorem;

pub use taps::{
    amp_taps, order_zero_shadow, production_taps, tap_recursion, taps_geometric_closed_form,
    TapTable,
};
pub use theorem::{verify_theorem2, Theorem2Point};

use dashu_float::round::mode::HalfEven;
use dashu_float::FBig;
use thiserror::Error;

/// Binary multiprecision float used for moment and tap arithmetic.
pub(crate) type Big = FBig<HalfEven>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("compression rate must lie in (0, 1], got {0}")]
    InvalidDelta(f64),
    #[error("condition number must be > 1, got {0}")]
    InvalidConditionNumber(f64),
    #[error("{needed} moments are required, profile holds {available}")]
    InsufficientMoments { needed: usize, available: usize },
    #[error("tap table entry (t={t}, k={k}) is not finite in double precision")]
    NonFinite { t: usize, k: usize },
    #[error("invalid moment sequence: {0}")]
    InvalidMoments(String),
    #[error("y-grid value {0} outside [0, 1)")]
    InvalidGrid(f64),
    #[error("malformed tap table line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// Where a moment sequence comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum SpectrumKind {
    /// `M` nonzero singular values of an `N`-column matrix.
    Empirical { singular_values: Vec<f64>, n: usize },
    /// All `M = δN` nonzero eigenvalues equal to `1/δ`; the κ = 1 member of
    /// the geometric family.
    EqualEigenvalue { delta: f64 },
    /// Large-system limit of geometrically spaced singular values.
    Geometric { delta: f64, kappa: f64 },
    /// Limit spectrum of `AᵀA` for i.i.d. entries of variance `1/M`.
    MarchenkoPastur { delta: f64 },
    /// A user-supplied moment list, taken as exact.
    Moments,
}

/// Moments `μ_0..μ_K` of the eigenvalue distribution of `AᵀA` plus an
/// η-transform evaluator.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralProfile {
    moments: Vec<f64>,
    kind: SpectrumKind,
}

const DISPLAY_BITS: usize = 128;

impl SpectralProfile {
    pub fn moments(&self) -> &[f64] {
        &self.moments
    }

    pub fn kind(&self) -> &SpectrumKind {
        &self.kind
    }

    /// Highest moment order available.
    pub fn max_order(&self) -> usize {
        self.moments.len() - 1
    }

    /// User-supplied moments `μ_0, μ_1, …`; `μ_0` must be 1.
    pub fn from_moments(moments: Vec<f64>) -> Result<Self, SpectralError> {
        if moments.len() < 2 {
            return Err(SpectralError::InvalidMoments("need at least mu_0 and mu_1".into()));
        }
        if moments[0] != 1.0 {
            return Err(SpectralError::InvalidMoments(format!("mu_0 = {} != 1", moments[0])));
        }
        if let Some(bad) = moments.iter().find(|m| !m.is_finite() || **m < 0.0) {
            return Err(SpectralError::InvalidMoments(format!("moment {bad} is not a finite nonnegative value")));
        }
        Ok(Self { moments, kind: SpectrumKind::Moments })
    }

    fn build(kind: SpectrumKind, k_max: usize) -> Self {
        let exact = moments_at(&kind, &[], k_max, DISPLAY_BITS);
        let moments = exact.iter().map(to_f64).collect();
        Self { moments, kind }
    }

    /// Moments `μ_0..μ_k_max` at `bits` of working precision.
    ///
    /// For the asymptotic families `μ_1 = 1` is set exactly; the closed forms
    /// give one analytically and the tap recursion relies on it.
    pub(crate) fn exact_moments(&self, k_max: usize, bits: usize) -> Result<Vec<Big>, SpectralError> {
        if k_max > self.max_order() {
            return Err(SpectralError::InsufficientMoments {
                needed: k_max + 1,
                available: self.moments.len(),
            });
        }
        Ok(moments_at(&self.kind, &self.moments, k_max, bits))
    }

    /// η(z) = E[1/(1 + zλ)], closed form where one exists.
    pub fn eta(&self, z: f64) -> f64 {
        match &self.kind {
            SpectrumKind::Empirical { singular_values, n } => {
                let m = singular_values.len();
                let sum: f64 = singular_values.iter().map(|s| 1.0 / (1.0 + z * s * s)).sum();
                ((n - m) as f64 + sum) / *n as f64
            }
            SpectrumKind::EqualEigenvalue { delta } => 1.0 - delta + delta / (1.0 + z / delta),
            SpectrumKind::Geometric { delta, kappa } => eta_geometric(*delta, *kappa, z),
            SpectrumKind::MarchenkoPastur { delta } => eta_marchenko_pastur(*delta, z),
            SpectrumKind::Moments => self.eta_series(z),
        }
    }

    /// Truncated power series `Σ_k μ_k (−z)^k` over the stored moments.
    pub fn eta_series(&self, z: f64) -> f64 {
        let mut acc = 0.0;
        let mut power = 1.0;
        for mu in &self.moments {
            acc += mu * power;
            power *= -z;
        }
        acc
    }
}

/// Moments `μ_k = (1/N) Σ_m σ_m^{2k}`, with `μ_0 = 1` over the full
/// `N`-dimensional spectrum.
pub fn empirical_moments(singular_values: &[f64], n: usize, k_max: usize) -> SpectralProfile {
    SpectralProfile::build(
        SpectrumKind::Empirical { singular_values: singular_values.to_vec(), n },
        k_max.max(1),
    )
}

/// Moments `μ_k = δ^{1−k}` of the spectrum with every nonzero eigenvalue at
/// `1/δ` (geometric singular values with κ = 1).
pub fn equal_eigenvalue_moments(delta: f64, k_max: usize) -> Result<SpectralProfile, SpectralError> {
    check_delta(delta)?;
    Ok(SpectralProfile::build(SpectrumKind::EqualEigenvalue { delta }, k_max.max(1)))
}

/// Asymptotic moments of the geometric-singular-value ensemble:
/// `μ_k = [C/(1−κ⁻²)]^k (1−κ^{−2k})/(kC)` with `C = (2/δ) ln κ`.
pub fn asymptotic_moments_geometric(
    delta: f64,
    kappa: f64,
    k_max: usize,
) -> Result<SpectralProfile, SpectralError> {
    check_delta(delta)?;
    if !(kappa > 1.0) || !kappa.is_finite() {
        return Err(SpectralError::InvalidConditionNumber(kappa));
    }
    Ok(SpectralProfile::build(SpectrumKind::Geometric { delta, kappa }, k_max.max(1)))
}

/// Marchenko–Pastur moments of `AᵀA` for i.i.d. entries of variance `1/M`,
/// `μ_k = δ^{1−k} Σ_{r<k} δ^r N(k, r+1)` with Narayana numbers `N(k, j)`.
pub fn marchenko_pastur_moments(delta: f64, k_max: usize) -> Result<SpectralProfile, SpectralError> {
    check_delta(delta)?;
    Ok(SpectralProfile::build(SpectrumKind::MarchenkoPastur { delta }, k_max.max(1)))
}

fn check_delta(delta: f64) -> Result<(), SpectralError> {
    if delta > 0.0 && delta <= 1.0 {
        Ok(())
    } else {
        Err(SpectralError::InvalidDelta(delta))
    }
}

pub(crate) fn big(x: f64, bits: usize) -> Big {
    Big::try_from(x).expect("finite value").with_precision(bits).value()
}

pub(crate) fn to_f64(x: &Big) -> f64 {
    x.to_f64().value()
}

fn moments_at(kind: &SpectrumKind, stored: &[f64], k_max: usize, bits: usize) -> Vec<Big> {
    let one = big(1.0, bits);
    let mut mu = Vec::with_capacity(k_max + 1);
    mu.push(one.clone());
    match kind {
        SpectrumKind::Empirical { singular_values, n } => {
            let lambda: Vec<Big> = singular_values
                .iter()
                .map(|s| {
                    let s = big(*s, bits);
                    &s * &s
                })
                .collect();
            let mut powers = lambda.clone();
            let inv_n = &one / big(*n as f64, bits);
            for k in 1..=k_max {
                if k > 1 {
                    for (p, l) in powers.iter_mut().zip(&lambda) {
                        *p = &*p * l;
                    }
                }
                let sum = powers.iter().fold(big(0.0, bits), |acc, p| acc + p);
                mu.push(sum * &inv_n);
            }
        }
        SpectrumKind::EqualEigenvalue { delta } => {
            let inv = &one / big(*delta, bits);
            for k in 1..=k_max {
                let next = if k == 1 { one.clone() } else { &mu[k - 1] * &inv };
                mu.push(next);
            }
        }
        SpectrumKind::Geometric { delta, kappa } => {
            let kappa_b = big(*kappa, bits);
            let c = big(2.0, bits) * kappa_b.ln() / big(*delta, bits);
            let q = &one / (&kappa_b * &kappa_b);
            let base = &c / (&one - &q);
            let mut base_pow = one.clone();
            let mut q_pow = one.clone();
            for k in 1..=k_max {
                base_pow = &base_pow * &base;
                q_pow = &q_pow * &q;
                let value = if k == 1 {
                    one.clone()
                } else {
                    &base_pow * (&one - &q_pow) / (big(k as f64, bits) * &c)
                };
                mu.push(value);
            }
        }
        SpectrumKind::MarchenkoPastur { delta } => {
            let d = big(*delta, bits);
            let inv = &one / &d;
            // Narayana numbers are integers below 4^k; keep them exact.
            let nbits = bits.max(64 + 2 * k_max);
            for k in 1..=k_max {
                let mut sum = big(0.0, bits);
                let mut d_pow = one.clone();
                // binom(k, r) and binom(k−1, r), updated in r.
                let mut bk = big(1.0, nbits);
                let mut bk1 = big(1.0, nbits);
                for r in 0..k {
                    let narayana = &bk * &bk1 / big((r + 1) as f64, nbits);
                    sum += &narayana * &d_pow;
                    d_pow = &d_pow * &d;
                    bk = bk * big((k - r) as f64, nbits) / big((r + 1) as f64, nbits);
                    if r + 1 < k {
                        bk1 = bk1 * big((k - 1 - r) as f64, nbits) / big((r + 1) as f64, nbits);
                    }
                }
                let scale = inv.powi(((k as i64) - 1).into());
                mu.push(sum * scale);
            }
        }
        SpectrumKind::Moments => {
            for k in 1..=k_max {
                mu.push(big(stored[k], bits));
            }
        }
    }
    mu
}

/// η(z) = 1 − (1/C) ln{[δ(κ²−1) + 2κ²z ln κ] / [δ(κ²−1) + 2z ln κ]}.
fn eta_geometric(delta: f64, kappa: f64, z: f64) -> f64 {
    let ln_kappa = kappa.ln();
    let c = 2.0 * ln_kappa / delta;
    let kappa_sq_m1 = (2.0 * ln_kappa).exp_m1();
    let base = delta * kappa_sq_m1;
    let num = base + 2.0 * kappa * kappa * z * ln_kappa;
    let den = base + 2.0 * z * ln_kappa;
    1.0 - (num / den).ln() / c
}

/// Positive root of `zη² + (δ + zδ − z)η − δ = 0`, the solution of
/// `η = 1/(1 + zR(−zη))` with `R(w) = δ/(δ − w)`.
fn eta_marchenko_pastur(delta: f64, z: f64) -> f64 {
    if z == 0.0 {
        return 1.0;
    }
    let b = delta + z * delta - z;
    let s = (b * b + 4.0 * z * delta).sqrt();
    if b >= 0.0 {
        2.0 * delta / (b + s)
    } else {
        (s - b) / (2.0 * z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::geometric_singular_values;

    #[test]
    fn identity_spectrum_moments() {
        let p = empirical_moments(&[1.0; 8], 8, 6);
        assert!(p.moments().iter().all(|m| *m == 1.0));
    }

    #[test]
    fn small_empirical_moments() {
        let s = [3.2f64.sqrt(), 0.8f64.sqrt()];
        let p = empirical_moments(&s, 4, 3);
        assert!((p.moments()[1] - 1.0).abs() < 1e-15);
        assert!((p.moments()[2] - 2.72).abs() < 1e-14);
    }

    #[test]
    fn equal_eigenvalue_moments_match_count_argument() {
        let (m, n) = (6usize, 16usize);
        let delta = m as f64 / n as f64;
        let s = geometric_singular_values(m, n, 1.0).unwrap();
        let emp = empirical_moments(&s, n, 8);
        let exact = equal_eigenvalue_moments(delta, 8).unwrap();
        assert_eq!(emp.moments()[0], 1.0);
        for k in 1..=8 {
            let expected = delta.powi(1 - k as i32);
            assert!((emp.moments()[k] / expected - 1.0).abs() < 1e-14, "k={k}: {} vs {expected}", emp.moments()[k]);
            assert!((exact.moments()[k] / expected - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn geometric_first_moment_is_one_and_eta_normalised() {
        for &(d, k) in &[(0.3, 2.0), (0.6, 10.0), (0.9, 1e3)] {
            let p = asymptotic_moments_geometric(d, k, 5).unwrap();
            assert_eq!(p.moments()[0], 1.0);
            assert_eq!(p.moments()[1], 1.0);
            assert_eq!(p.eta(0.0), 1.0);
        }
    }

    #[test]
    fn geometric_second_moment_closed_form() {
        // μ_2 = C(1 + κ⁻²) / (2(1 − κ⁻²))
        let (d, k) = (0.6f64, 10.0f64);
        let c = 2.0 * k.ln() / d;
        let q = 1.0 / (k * k);
        let expected = c * (1.0 + q) / (2.0 * (1.0 - q));
        let p = asymptotic_moments_geometric(d, k, 3).unwrap();
        assert!((p.moments()[2] / expected - 1.0).abs() < 1e-14);
    }

    #[test]
    fn finite_size_second_moment_close_to_limit() {
        let s = geometric_singular_values(614, 1024, 10.0).unwrap();
        let emp = empirical_moments(&s, 1024, 2);
        let asy = asymptotic_moments_geometric(614.0 / 1024.0, 10.0, 2).unwrap();
        let rel = (emp.moments()[2] / asy.moments()[2] - 1.0).abs();
        assert!(rel < 0.02, "{rel}");
    }

    #[test]
    fn geometric_eta_matches_series_for_small_argument() {
        let p = asymptotic_moments_geometric(0.6, 3.0, 60).unwrap();
        for z in [0.001, 0.01, 0.05] {
            assert!((p.eta(z) - p.eta_series(z)).abs() < 1e-12, "z={z}");
        }
    }

    #[test]
    fn marchenko_pastur_low_moments() {
        for d in [0.25, 0.5, 1.0] {
            let p = marchenko_pastur_moments(d, 4).unwrap();
            assert_eq!(p.moments()[1], 1.0);
            assert!((p.moments()[2] - (1.0 + 1.0 / d)).abs() < 1e-14);
            // μ_3 = δ^{-2}(1 + 3δ + δ²)
            assert!((p.moments()[3] - (1.0 + 3.0 * d + d * d) / (d * d)).abs() < 1e-13);
        }
    }

    #[test]
    fn marchenko_pastur_eta_solves_fixed_point_and_series() {
        let d = 0.5;
        let p = marchenko_pastur_moments(d, 60).unwrap();
        for z in [0.001, 0.01, 0.05] {
            assert!((p.eta(z) - p.eta_series(z)).abs() < 1e-12);
        }
        for z in [0.3, 1.0, 5.0] {
            let eta = p.eta(z);
            let r = d / (d + z * eta);
            assert!((eta - 1.0 / (1.0 + z * r)).abs() < 1e-14);
        }
    }

    #[test]
    fn empirical_eta_matches_resolvent_mean() {
        let s = geometric_singular_values(5, 8, 4.0).unwrap();
        let p = empirical_moments(&s, 8, 2);
        let z = 0.7;
        let direct = (3.0 + s.iter().map(|v| 1.0 / (1.0 + z * v * v)).sum::<f64>()) / 8.0;
        assert!((p.eta(z) - direct).abs() < 1e-15);
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert_eq!(asymptotic_moments_geometric(0.5, 1.0, 3), Err(SpectralError::InvalidConditionNumber(1.0)));
        assert_eq!(marchenko_pastur_moments(1.5, 3), Err(SpectralError::InvalidDelta(1.5)));
        assert!(SpectralProfile::from_moments(vec![2.0, 1.0]).is_err());
        assert!(SpectralProfile::from_moments(vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn exact_moments_respect_depth() {
        let p = marchenko_pastur_moments(0.5, 4).unwrap();
        assert_eq!(
            p.exact_moments(5, 128).unwrap_err(),
            SpectralError::InsufficientMoments { needed: 6, available: 5 }
        );
    }
}
