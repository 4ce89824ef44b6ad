//! Runtime checks of the CAMP error model: the decomposition of the
//! estimation errors in the right singular basis, the exact recursion the
//! transformed errors obey, and Gaussianity of the pre-denoising error.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::model::SensingEnsemble;
use crate::solvers::SolverTrajectory;

/// Per-iteration error vectors of a recorded trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorDecomposition {
    /// `h_t = r_t − x★`
    pub h: Vec<Vec<f64>>,
    /// `q_t = x_t − x★`
    pub q: Vec<Vec<f64>>,
    /// `q̃_0 = q_0`, `q̃_t = q_t − ξ_{t−1} h_{t−1}`
    pub q_tilde: Vec<Vec<f64>>,
    /// `b_t = Vᵀq̃_t`
    pub b: Vec<Vec<f64>>,
    /// `m_t = Vᵀh_t`
    pub m: Vec<Vec<f64>>,
    /// `xi[t][τ] = ξ_τ^{(t)}`, copied from the trajectory.
    pub xi: Vec<Vec<f64>>,
}

impl ErrorDecomposition {
    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// # Panics
/// If the trajectory was run without history.
pub fn decompose_errors(traj: &SolverTrajectory, truth: &[f64], ensemble: &SensingEnsemble) -> ErrorDecomposition {
    let steps = traj.r.len();
    assert!(traj.x.len() >= steps && traj.xi.len() >= steps, "trajectory history is required");
    let mut out = ErrorDecomposition {
        h: Vec::with_capacity(steps),
        q: Vec::with_capacity(steps),
        q_tilde: Vec::with_capacity(steps),
        b: Vec::with_capacity(steps),
        m: Vec::with_capacity(steps),
        xi: traj.xi[..steps].to_vec(),
    };
    for t in 0..steps {
        let h = diff(&traj.r[t], truth);
        let q = diff(&traj.x[t], truth);
        let q_tilde = if t == 0 {
            q.clone()
        } else {
            let xi = traj.xi[t - 1][t - 1];
            q.iter().zip(&out.h[t - 1]).map(|(qi, hi)| qi - xi * hi).collect()
        };
        out.b.push(ensemble.right_transpose(&q_tilde));
        out.m.push(ensemble.right_transpose(&h));
        out.h.push(h);
        out.q.push(q);
        out.q_tilde.push(q_tilde);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecursionReport {
    /// `‖RHS_t − m_t‖ / ‖m_t‖` per iteration.
    pub residuals: Vec<f64>,
    /// `‖RHS_t − m_t‖` per iteration.
    pub absolute: Vec<f64>,
    pub max_residual: f64,
    pub passed: bool,
}

/// Rebuilds every `m_t` from
/// `(I−Λ)(b_t + ξ_{t−1}m_{t−1}) + ΣᵀUᵀw + Σ_{τ<t} ξ_τ^{(t−1)} g_{t−τ−1}^{(1)}(m_τ − b_τ − ξ_{τ−1}m_{τ−1})`
/// with `m_{−1} = 0` and compares against the recorded value.
pub fn verify_m_recursion(
    decomp: &ErrorDecomposition,
    ensemble: &SensingEnsemble,
    taps: &[f64],
    noise: &[f64],
    tolerance: f64,
) -> RecursionReport {
    let n = ensemble.n();
    let lambda = ensemble.eigenvalues();
    let mut noise_term = ensemble.left_transpose(noise);
    for (c, s) in noise_term.iter_mut().zip(ensemble.singular_values()) {
        *c *= s;
    }
    noise_term.resize(n, 0.0);

    // ξ_{t}m_{t}, with the t = −1 entry zero
    let carried = |t: usize| -> Vec<f64> {
        if t == 0 {
            vec![0.0; n]
        } else {
            let xi = decomp.xi[t - 1][t - 1];
            decomp.m[t - 1].iter().map(|v| xi * v).collect()
        }
    };
    // m_τ − b_τ − ξ_{τ−1}m_{τ−1}, the transformed residual ΣᵀUᵀz_τ
    let innovations: Vec<Vec<f64>> = (0..decomp.len())
        .map(|tau| {
            let c = carried(tau);
            (0..n).map(|i| decomp.m[tau][i] - decomp.b[tau][i] - c[i]).collect()
        })
        .collect();

    let mut residuals = Vec::with_capacity(decomp.len());
    let mut absolute = Vec::with_capacity(decomp.len());
    for t in 0..decomp.len() {
        let c = carried(t);
        let mut rhs: Vec<f64> = (0..n)
            .map(|i| (1.0 - lambda[i]) * (decomp.b[t][i] + c[i]) + noise_term[i])
            .collect();
        for (tau, innov) in innovations.iter().enumerate().take(t) {
            let coef = decomp.xi[t - 1][tau] * taps[t - tau - 1];
            for (r, v) in rhs.iter_mut().zip(innov) {
                *r += coef * v;
            }
        }
        let scale = norm(&decomp.m[t]);
        let err = norm(&diff(&rhs, &decomp.m[t]));
        residuals.push(if scale > 0.0 { err / scale } else { err });
        absolute.push(err);
    }
    let max_residual = residuals.iter().copied().fold(0.0, f64::max);
    RecursionReport { passed: max_residual <= tolerance, residuals, absolute, max_residual }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GaussianityReport {
    /// Too few samples or zero spread.
    Degenerate,
    Stats {
        skewness: f64,
        excess_kurtosis: f64,
        /// Kolmogorov–Smirnov distance to `N(0, variance)`.
        ks_distance: f64,
        variance: f64,
    },
}

/// Sample skewness and excess kurtosis (standardised about the sample mean)
/// and the KS distance to a zero-mean Gaussian. The Gaussian variance is
/// `predicted_variance` if given, else the sample second moment.
pub fn gaussianity_report(h: &[f64], predicted_variance: Option<f64>) -> GaussianityReport {
    let n = h.len();
    if n < 2 {
        return GaussianityReport::Degenerate;
    }
    let nf = n as f64;
    let mean = h.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in h {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    if !(m2 > 0.0) || m2 <= 1e-30 * mean * mean {
        return GaussianityReport::Degenerate;
    }
    let variance = predicted_variance.unwrap_or_else(|| h.iter().map(|v| v * v).sum::<f64>() / nf);
    let normal = match Normal::new(0.0, variance.sqrt()) {
        Ok(d) => d,
        Err(_) => return GaussianityReport::Degenerate,
    };
    let mut sorted = h.to_vec();
    sorted.sort_by(f64::total_cmp);
    let ks_distance = sorted
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let f = normal.cdf(*v);
            (f - i as f64 / nf).max((i + 1) as f64 / nf - f)
        })
        .fold(0.0, f64::max);
    GaussianityReport::Stats {
        skewness: m3 / m2.powf(1.5),
        excess_kurtosis: m4 / (m2 * m2) - 3.0,
        ks_distance,
        variance,
    }
}

/// `‖x_est − x★‖²/N`
pub fn mse(estimate: &[f64], truth: &[f64]) -> f64 {
    assert_eq!(estimate.len(), truth.len(), "mse: length mismatch");
    diff(estimate, truth).iter().map(|d| d * d).sum::<f64>() / truth.len() as f64
}

pub fn mse_db(mse: f64) -> f64 {
    10.0 * mse.log10()
}
