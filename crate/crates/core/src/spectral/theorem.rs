use super::{SpectralError, SpectralProfile};

/// One grid point of the implicit-relation check.
#[derive(Debug, Clone, PartialEq)]
pub struct Theorem2Point {
    pub y: f64,
    /// Truncated generating function `G₁(y) = Σ_{t≤T} yᵗ g_t^{(1)}`.
    pub g1: f64,
    /// `x_s = y / [(1 − y)(1 − yG₁(y))]`; `None` once `1 − yG₁(y) ≤ 0`.
    pub x_s: Option<f64>,
    /// `|η(x_s) − (1 − y)|`.
    pub residual: Option<f64>,
    /// Bound on the neglected `Σ_{t>T} yᵗ g_t^{(1)}`, from the growth rate of
    /// the last half of the taps. Infinite when that rate times `y` reaches 1.
    pub tail_bound: f64,
}

impl Theorem2Point {
    pub fn crossed(&self) -> bool {
        self.x_s.is_none()
    }
}

/// Evaluates `|η(x_s) − (1 − y)|` for each `y` in the grid, where `x_s` is
/// built from the truncated tap generating function.
pub fn verify_theorem2(
    taps: &[f64],
    profile: &SpectralProfile,
    y_grid: &[f64],
) -> Result<Vec<Theorem2Point>, SpectralError> {
    if let Some(&bad) = y_grid.iter().find(|y| !(**y >= 0.0 && **y < 1.0)) {
        return Err(SpectralError::InvalidGrid(bad));
    }
    let growth = growth_rate(taps);
    Ok(y_grid
        .iter()
        .map(|&y| {
            // Horner from the top
            let g1 = taps.iter().rev().fold(0.0, |acc, g| acc * y + g);
            let denom = 1.0 - y * g1;
            let x_s = (denom > 0.0).then(|| y / ((1.0 - y) * denom));
            let residual = x_s.map(|x| (profile.eta(x) - (1.0 - y)).abs());
            Theorem2Point { y, g1, x_s, residual, tail_bound: tail_bound(taps, growth, y) }
        })
        .collect())
}

/// Largest `|g_t|^{1/t}` over the second half of the sequence.
fn growth_rate(taps: &[f64]) -> f64 {
    let n = taps.len();
    (n / 2..n)
        .filter(|&t| t > 0)
        .map(|t| taps[t].abs().powf(1.0 / t as f64))
        .fold(0.0, f64::max)
}

fn tail_bound(taps: &[f64], growth: f64, y: f64) -> f64 {
    let ratio = y * growth;
    if ratio >= 1.0 {
        return f64::INFINITY;
    }
    ratio.powi(taps.len() as i32) / (1.0 - ratio)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{amp_taps, asymptotic_moments_geometric, marchenko_pastur_moments, taps_geometric_closed_form};

    /// η from iterating `η = 1/(1 + zR(−zη))` with `R(w) = δ/(δ − w)`.
    fn mp_eta_fixed_point(delta: f64, z: f64) -> f64 {
        let mut eta = 1.0;
        for _ in 0..10_000 {
            let next = 1.0 / (1.0 + z * delta / (delta + z * eta));
            if (next - eta).abs() < 1e-16 {
                return next;
            }
            eta = 0.5 * (eta + next);
        }
        eta
    }

    #[test]
    fn origin_has_zero_residual() {
        let p = marchenko_pastur_moments(0.5, 2).unwrap();
        let pts = verify_theorem2(&amp_taps(0.5, 5), &p, &[0.0]).unwrap();
        assert_eq!(pts[0].x_s, Some(0.0));
        assert_eq!(pts[0].residual, Some(0.0));
    }

    #[test]
    fn marchenko_pastur_constant_taps() {
        let delta = 0.5;
        let y = 0.3;
        let p = marchenko_pastur_moments(delta, 2).unwrap();
        let pt = &verify_theorem2(&amp_taps(delta, 20), &p, &[y]).unwrap()[0];
        assert!(pt.residual.unwrap() <= 1e-8);
        let x = pt.x_s.unwrap();
        assert!((mp_eta_fixed_point(delta, x) - (1.0 - y)).abs() <= 1e-8);
        assert_eq!(pt.tail_bound, 0.0);
    }

    #[test]
    fn geometric_closed_form_taps() {
        let (delta, kappa) = (0.6, 10.0);
        let taps = taps_geometric_closed_form(delta, kappa, 200).unwrap();
        let p = asymptotic_moments_geometric(delta, kappa, 2).unwrap();
        let grid: Vec<f64> = (1..=5).map(|i| i as f64 / 10.0).collect();
        for pt in verify_theorem2(&taps, &p, &grid).unwrap() {
            assert!(pt.residual.unwrap() <= 1e-6, "{pt:?}");
            assert!(pt.tail_bound < 1e-6, "{pt:?}");
        }
    }

    #[test]
    fn crossing_is_reported() {
        let p = marchenko_pastur_moments(0.25, 2).unwrap();
        // G₁ = 4 ⇒ 1 − yG₁ < 0 for y > 1/4
        let pt = &verify_theorem2(&amp_taps(0.25, 3), &p, &[0.4]).unwrap()[0];
        assert!(pt.crossed());
        assert_eq!(pt.residual, None);
    }

    #[test]
    fn grid_outside_unit_interval_rejected() {
        let p = marchenko_pastur_moments(0.5, 2).unwrap();
        assert_eq!(verify_theorem2(&[2.0], &p, &[1.0]), Err(SpectralError::InvalidGrid(1.0)));
    }
}
