//! Measurement model: sensing ensembles with explicit SVD factors, the
//! Bernoulli-Gaussian signal prior and additive white Gaussian noise.
//!
//! A [`SensingEnsemble`] always knows its factorisation `A = U Σ Vᵀ`. For the
//! partial-Hadamard ensemble `U = I_M`, `Σ = diag(σ)` and `Vᵀ` is the
//! row-permuted orthonormal Hadamard matrix, so every product runs through a
//! fast Walsh–Hadamard transform in `O(N log N)`. Dense ensembles keep the
//! matrix and compute their factorisation on first use.

use std::sync::OnceLock;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("condition number must be >= 1, got {0}")]
    InvalidConditionNumber(f64),
    #[error("at least two measurements are required, got {0}")]
    TooFewMeasurements(usize),
    #[error("signal dimension {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("{m} measurements exceed the signal dimension {n}")]
    TooManyMeasurements { m: usize, n: usize },
    #[error("expected a vector of length {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("noise variance must be nonnegative, got {0}")]
    NegativeNoiseVariance(f64),
    #[error("signal density must lie in (0, 1], got {0}")]
    InvalidDensity(f64),
    #[error("mean parameter gamma must lie in [0, 1), got {0}")]
    InvalidMeanParameter(f64),
    #[error("singular values must be positive and sorted in descending order")]
    UnsortedSingularValues,
    #[error("factor {0} is not orthogonal")]
    NotOrthogonal(&'static str),
}

/// Which construction produced an ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnsembleKind {
    PartialHadamardGeometric,
    IidGaussian,
    CustomSvd,
}

/// Singular values `σ_0 ≥ … ≥ σ_{M−1}` with geometric decay and condition
/// number `κ = σ_0/σ_{M−1}`, scaled so that `Σ σ_m² = N`.
///
/// `κ = 1` is returned as its analytic limit `σ_m² = N/M`.
pub fn geometric_singular_values(m: usize, n: usize, kappa: f64) -> Result<Vec<f64>, ModelError> {
    if !(kappa >= 1.0) || !kappa.is_finite() {
        return Err(ModelError::InvalidConditionNumber(kappa));
    }
    if m < 2 {
        return Err(ModelError::TooFewMeasurements(m));
    }
    let nf = n as f64;
    if kappa == 1.0 {
        return Ok(vec![(nf / m as f64).sqrt(); m]);
    }
    let ln_kappa = kappa.ln();
    let steps = (m - 1) as f64;
    // 1 − κ^{−a} written with expm1 so that κ close to one keeps its digits.
    let one_minus_pow = |a: f64| -(-a * ln_kappa).exp_m1();
    let sigma0_sq = nf * one_minus_pow(2.0 / steps) / one_minus_pow(2.0 * m as f64 / steps);
    Ok((0..m)
        .map(|i| (sigma0_sq * (-2.0 * i as f64 * ln_kappa / steps).exp()).sqrt())
        .collect())
}

/// In-place orthonormal Walsh–Hadamard transform (Sylvester ordering).
///
/// The transform is its own inverse.
pub fn fwht(data: &mut [f64]) {
    let n = data.len();
    debug_assert!(n.is_power_of_two());
    let mut h = 1;
    while h < n {
        for block in data.chunks_exact_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        h *= 2;
    }
    let scale = 1.0 / (n as f64).sqrt();
    data.iter_mut().for_each(|v| *v *= scale);
}

/// Dense `N×N` Sylvester Hadamard matrix scaled by `1/√N`.
pub fn hadamard_matrix(n: usize) -> DMatrix<f64> {
    let scale = 1.0 / (n as f64).sqrt();
    DMatrix::from_fn(n, n, |i, j| {
        if (i & j).count_ones() % 2 == 0 {
            scale
        } else {
            -scale
        }
    })
}

#[derive(Debug, Clone)]
struct DenseSvd {
    u: DMatrix<f64>,
    sigma: Vec<f64>,
    v: DMatrix<f64>,
}

impl DenseSvd {
    /// Full right factor from the eigendecomposition of `AᵀA`, left factor
    /// from `U = A V_M Σ⁻¹`.
    fn compute(a: &DMatrix<f64>) -> Self {
        let (m, n) = a.shape();
        let gram = a.transpose() * a;
        let eig = SymmetricEigen::new(gram);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
        let v = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
        let sigma: Vec<f64> = order[..m]
            .iter()
            .map(|&i| eig.eigenvalues[i].max(0.0).sqrt())
            .collect();
        let av = a * v.columns(0, m);
        let u = DMatrix::from_fn(m, m, |r, c| av[(r, c)] / sigma[c]);
        DenseSvd { u, sigma, v }
    }
}

#[derive(Debug, Clone)]
enum Operator {
    Hadamard {
        singular_values: Vec<f64>,
        rows: Vec<usize>,
        /// Hadamard rows not selected, ascending; they complete `Vᵀ`.
        complement: Vec<usize>,
    },
    Dense {
        matrix: DMatrix<f64>,
        svd: OnceLock<DenseSvd>,
    },
}

/// A sensing matrix `A ∈ R^{M×N}` together with its SVD factors.
///
/// Ensembles are immutable after construction and may be shared between
/// threads.
#[derive(Debug, Clone)]
pub struct SensingEnsemble {
    m: usize,
    n: usize,
    kind: EnsembleKind,
    op: Operator,
}

impl SensingEnsemble {
    /// `A = diag(σ)·H` with `H` the Hadamard rows listed in `rows`.
    pub fn partial_hadamard(
        n: usize,
        singular_values: Vec<f64>,
        rows: Vec<usize>,
    ) -> Result<Self, ModelError> {
        if !n.is_power_of_two() {
            return Err(ModelError::NotPowerOfTwo(n));
        }
        let m = singular_values.len();
        if m > n {
            return Err(ModelError::TooManyMeasurements { m, n });
        }
        if rows.len() != m {
            return Err(ModelError::LengthMismatch { expected: m, got: rows.len() });
        }
        check_sorted(&singular_values)?;
        let mut taken = vec![false; n];
        for &r in &rows {
            if r >= n || taken[r] {
                return Err(ModelError::LengthMismatch { expected: n, got: r });
            }
            taken[r] = true;
        }
        let complement = (0..n).filter(|&r| !taken[r]).collect();
        Ok(Self {
            m,
            n,
            kind: EnsembleKind::PartialHadamardGeometric,
            op: Operator::Hadamard { singular_values, rows, complement },
        })
    }

    /// Gaussian entries with mean `√(γ/M)` and variance `(1−γ)/M`.
    pub fn iid_gaussian<R: Rng + ?Sized>(
        m: usize,
        n: usize,
        gamma: f64,
        rng: &mut R,
    ) -> Result<Self, ModelError> {
        if m > n {
            return Err(ModelError::TooManyMeasurements { m, n });
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(ModelError::InvalidMeanParameter(gamma));
        }
        let mean = (gamma / m as f64).sqrt();
        let sd = ((1.0 - gamma) / m as f64).sqrt();
        let data: Vec<f64> = (0..m * n)
            .map(|_| mean + sd * Distribution::<f64>::sample(&StandardNormal, rng))
            .collect();
        Ok(Self {
            m,
            n,
            kind: EnsembleKind::IidGaussian,
            op: Operator::Dense { matrix: DMatrix::from_vec(m, n, data), svd: OnceLock::new() },
        })
    }

    /// Builds `A = U·[diag(σ) 0]·Vᵀ` from explicit factors.
    pub fn from_svd(
        u: DMatrix<f64>,
        singular_values: Vec<f64>,
        v: DMatrix<f64>,
    ) -> Result<Self, ModelError> {
        let m = singular_values.len();
        let n = v.nrows();
        if m > n {
            return Err(ModelError::TooManyMeasurements { m, n });
        }
        if u.shape() != (m, m) {
            return Err(ModelError::LengthMismatch { expected: m, got: u.nrows() });
        }
        if v.ncols() != n {
            return Err(ModelError::LengthMismatch { expected: n, got: v.ncols() });
        }
        check_sorted(&singular_values)?;
        if !is_orthogonal(&u) {
            return Err(ModelError::NotOrthogonal("U"));
        }
        if !is_orthogonal(&v) {
            return Err(ModelError::NotOrthogonal("V"));
        }
        let scaled_u = DMatrix::from_fn(m, m, |r, c| u[(r, c)] * singular_values[c]);
        let matrix = scaled_u * v.columns(0, m).transpose();
        let svd = OnceLock::new();
        let _ = svd.set(DenseSvd { u, sigma: singular_values, v });
        Ok(Self { m, n, kind: EnsembleKind::CustomSvd, op: Operator::Dense { matrix, svd } })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Compression rate `δ = M/N`.
    pub fn delta(&self) -> f64 {
        self.m as f64 / self.n as f64
    }

    pub fn kind(&self) -> EnsembleKind {
        self.kind
    }

    /// Selected Hadamard rows, in the order matching the singular values.
    pub fn row_selection(&self) -> Option<&[usize]> {
        match &self.op {
            Operator::Hadamard { rows, .. } => Some(rows),
            Operator::Dense { .. } => None,
        }
    }

    fn svd(&self) -> Option<&DenseSvd> {
        match &self.op {
            Operator::Hadamard { .. } => None,
            Operator::Dense { matrix, svd } => Some(svd.get_or_init(|| DenseSvd::compute(matrix))),
        }
    }

    /// Nonzero singular values in descending order.
    pub fn singular_values(&self) -> &[f64] {
        match &self.op {
            Operator::Hadamard { singular_values, .. } => singular_values,
            Operator::Dense { .. } => &self.svd().expect("dense ensemble").sigma,
        }
    }

    /// Diagonal of `Λ = ΣᵀΣ`: the `M` values `σ_m²` followed by `N − M` zeros.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut lambda: Vec<f64> = self.singular_values().iter().map(|s| s * s).collect();
        lambda.resize(self.n, 0.0);
        lambda
    }

    /// `tr(AᵀA)`.
    pub fn gram_trace(&self) -> f64 {
        match &self.op {
            Operator::Hadamard { singular_values, .. } => singular_values.iter().map(|s| s * s).sum(),
            Operator::Dense { matrix, .. } => matrix.iter().map(|a| a * a).sum(),
        }
    }

    /// `A x`.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n, "forward: input length");
        match &self.op {
            Operator::Hadamard { singular_values, rows, .. } => {
                let mut buf = x.to_vec();
                fwht(&mut buf);
                rows.iter().zip(singular_values).map(|(&r, s)| s * buf[r]).collect()
            }
            Operator::Dense { matrix, .. } => {
                (matrix * nalgebra::DVector::from_column_slice(x)).as_slice().to_vec()
            }
        }
    }

    /// `Aᵀ v`.
    pub fn adjoint(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.m, "adjoint: input length");
        match &self.op {
            Operator::Hadamard { singular_values, rows, .. } => {
                let mut buf = vec![0.0; self.n];
                for ((&r, s), vi) in rows.iter().zip(singular_values).zip(v) {
                    buf[r] = s * vi;
                }
                fwht(&mut buf);
                buf
            }
            Operator::Dense { matrix, .. } => {
                (matrix.tr_mul(&nalgebra::DVector::from_column_slice(v))).as_slice().to_vec()
            }
        }
    }

    /// `Vᵀ u` for the full `N×N` right factor.
    pub fn right_transpose(&self, u: &[f64]) -> Vec<f64> {
        assert_eq!(u.len(), self.n, "right_transpose: input length");
        match &self.op {
            Operator::Hadamard { rows, complement, .. } => {
                let mut buf = u.to_vec();
                fwht(&mut buf);
                rows.iter().chain(complement).map(|&r| buf[r]).collect()
            }
            Operator::Dense { .. } => {
                let v = &self.svd().expect("dense ensemble").v;
                v.tr_mul(&nalgebra::DVector::from_column_slice(u)).as_slice().to_vec()
            }
        }
    }

    /// `V c`, the inverse of [`Self::right_transpose`].
    pub fn right_apply(&self, c: &[f64]) -> Vec<f64> {
        assert_eq!(c.len(), self.n, "right_apply: input length");
        match &self.op {
            Operator::Hadamard { rows, complement, .. } => {
                let mut buf = vec![0.0; self.n];
                for (&r, ci) in rows.iter().chain(complement).zip(c) {
                    buf[r] = *ci;
                }
                fwht(&mut buf);
                buf
            }
            Operator::Dense { .. } => {
                let v = &self.svd().expect("dense ensemble").v;
                (v * nalgebra::DVector::from_column_slice(c)).as_slice().to_vec()
            }
        }
    }

    /// `Uᵀ w`.
    pub fn left_transpose(&self, w: &[f64]) -> Vec<f64> {
        assert_eq!(w.len(), self.m, "left_transpose: input length");
        match self.svd() {
            None => w.to_vec(),
            Some(svd) => svd.u.tr_mul(&nalgebra::DVector::from_column_slice(w)).as_slice().to_vec(),
        }
    }

    /// `U c`.
    pub fn left_apply(&self, c: &[f64]) -> Vec<f64> {
        assert_eq!(c.len(), self.m, "left_apply: input length");
        match self.svd() {
            None => c.to_vec(),
            Some(svd) => (&svd.u * nalgebra::DVector::from_column_slice(c)).as_slice().to_vec(),
        }
    }

    /// Dense copy of `A`. Intended for tests and small instances.
    pub fn to_dense(&self) -> DMatrix<f64> {
        match &self.op {
            Operator::Dense { matrix, .. } => matrix.clone(),
            Operator::Hadamard { .. } => {
                let mut a = DMatrix::zeros(self.m, self.n);
                let mut e = vec![0.0; self.n];
                for j in 0..self.n {
                    e[j] = 1.0;
                    a.set_column(j, &nalgebra::DVector::from_vec(self.forward(&e)));
                    e[j] = 0.0;
                }
                a
            }
        }
    }
}

fn check_sorted(sigma: &[f64]) -> Result<(), ModelError> {
    let positive = sigma.iter().all(|s| *s > 0.0 && s.is_finite());
    let sorted = sigma.windows(2).all(|w| w[0] >= w[1]);
    if positive && sorted {
        Ok(())
    } else {
        Err(ModelError::UnsortedSingularValues)
    }
}

fn is_orthogonal(q: &DMatrix<f64>) -> bool {
    let n = q.ncols();
    let gram = q.tr_mul(q);
    (gram - DMatrix::<f64>::identity(n, n)).amax() <= 1e-10
}

/// Draws `M` Hadamard rows uniformly without replacement and pairs them with
/// `singular_values` in draw order.
pub fn sample_partial_hadamard<R: Rng + ?Sized>(
    m: usize,
    n: usize,
    singular_values: &[f64],
    rng: &mut R,
) -> Result<SensingEnsemble, ModelError> {
    if !n.is_power_of_two() {
        return Err(ModelError::NotPowerOfTwo(n));
    }
    if m > n {
        return Err(ModelError::TooManyMeasurements { m, n });
    }
    if singular_values.len() != m {
        return Err(ModelError::LengthMismatch { expected: m, got: singular_values.len() });
    }
    let rows = rand::seq::index::sample(rng, n, m).into_vec();
    SensingEnsemble::partial_hadamard(n, singular_values.to_vec(), rows)
}

/// Signal distribution. Only the Bernoulli-Gaussian prior is supported.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalPrior {
    density: f64,
}

impl SignalPrior {
    /// Elements are zero with probability `1 − ρ`, otherwise `N(0, 1/ρ)`.
    pub fn bernoulli_gaussian(density: f64) -> Result<Self, ModelError> {
        if !(density > 0.0 && density <= 1.0) {
            return Err(ModelError::InvalidDensity(density));
        }
        Ok(Self { density })
    }

    pub fn density(&self) -> f64 {
        self.density
    }
}

pub fn sample_signal<R: Rng + ?Sized>(prior: &SignalPrior, n: usize, rng: &mut R) -> Vec<f64> {
    let rho = prior.density;
    let scale = 1.0 / rho.sqrt();
    (0..n)
        .map(|_| {
            let active = rho >= 1.0 || rng.random::<f64>() < rho;
            if active {
                let g: f64 = StandardNormal.sample(rng);
                scale * g
            } else {
                0.0
            }
        })
        .collect()
}

/// Noisy measurement `y = Ax + w`. The realised noise is kept for
/// diagnostics.
#[derive(Debug, Clone)]
pub struct Measurement {
    pub y: Vec<f64>,
    pub noise: Vec<f64>,
    pub noise_variance: f64,
}

pub fn measure<R: Rng + ?Sized>(
    ensemble: &SensingEnsemble,
    x: &[f64],
    noise_variance: f64,
    rng: &mut R,
) -> Result<Measurement, ModelError> {
    if !(noise_variance >= 0.0) {
        return Err(ModelError::NegativeNoiseVariance(noise_variance));
    }
    if x.len() != ensemble.n() {
        return Err(ModelError::LengthMismatch { expected: ensemble.n(), got: x.len() });
    }
    let sd = noise_variance.sqrt();
    let noise: Vec<f64> = (0..ensemble.m())
        .map(|_| {
            let g: f64 = StandardNormal.sample(rng);
            sd * g
        })
        .collect();
    let y = ensemble.forward(x).iter().zip(&noise).map(|(a, w)| a + w).collect();
    Ok(Measurement { y, noise, noise_variance })
}

/// `1/σ²` in decibels to the noise variance `σ²`.
pub fn noise_variance_from_snr_db(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}
