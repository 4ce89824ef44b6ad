use std::fmt::Write as _;

use super::{big, to_f64, Big, SpectralError, SpectralProfile, SpectrumKind};

/// Triangular table `g_t^{(k)}`, `0 ≤ t ≤ T`, `1 ≤ k ≤ T − t + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TapTable {
    horizon: usize,
    /// `rows[t][k - 1]`
    rows: Vec<Vec<f64>>,
}

impl TapTable {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn get(&self, t: usize, k: usize) -> Option<f64> {
        if k == 0 {
            return None;
        }
        self.rows.get(t).and_then(|row| row.get(k - 1)).copied()
    }

    /// The sequence `g_0^{(1)}..g_T^{(1)}`.
    pub fn taps(&self) -> Vec<f64> {
        self.rows.iter().map(|row| row[0]).collect()
    }

    /// One `t,k,value` line per entry, ordered by `t` then `k`.
    pub fn to_text(&self) -> String {
        let mut out = String::from("t,k,value\n");
        for (t, row) in self.rows.iter().enumerate() {
            for (i, v) in row.iter().enumerate() {
                writeln!(out, "{},{},{:e}", t, i + 1, v).unwrap();
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, SpectralError> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line == "t,k,value" {
                continue;
            }
            let parse_err = |reason: &str| SpectralError::Parse { line: line_no, reason: reason.into() };
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(parse_err("expected three fields"));
            }
            let t: usize = fields[0].parse().map_err(|_| parse_err("bad t"))?;
            let k: usize = fields[1].parse().map_err(|_| parse_err("bad k"))?;
            let value: f64 = fields[2].parse().map_err(|_| parse_err("bad value"))?;
            if t == rows.len() {
                rows.push(Vec::new());
            }
            if t + 1 != rows.len() || k != rows[t].len() + 1 {
                return Err(parse_err("entries out of order"));
            }
            rows[t].push(value);
        }
        if rows.is_empty() {
            return Err(SpectralError::Parse { line: 0, reason: "empty table".into() });
        }
        let horizon = rows.len() - 1;
        for (t, row) in rows.iter().enumerate() {
            if row.len() != horizon - t + 1 {
                return Err(SpectralError::Parse { line: 0, reason: format!("row {t} has {} entries", row.len()) });
            }
        }
        Ok(Self { horizon, rows })
    }
}

/// Runs the dynamical system on multiprecision moments.
///
/// Row `t` holds `k = 0..=T−t+1`; entries with `k < k_min` stay zero.
fn recursion_rows(mu: &[Big], horizon: usize, k_min: usize, bits: usize) -> Vec<Vec<Big>> {
    debug_assert!(k_min <= 1 && mu.len() >= horizon + 3);
    let zero = big(0.0, bits);
    let mut g: Vec<Vec<Big>> = Vec::with_capacity(horizon + 1);
    g.push(
        (0..=horizon + 1)
            .map(|k| if k < k_min { zero.clone() } else { &mu[k + 1] - &mu[k] })
            .collect(),
    );
    for t in 1..=horizon {
        let width = horizon - t + 1;
        let mut row = vec![zero.clone(); width + 1];
        for k in k_min..=width {
            let prev = &g[t - 1];
            let mut v = &prev[k] - &prev[k + 1] + &prev[1] * &mu[k + 1];
            for tau in 1..t {
                v += &g[t - tau - 1][1] * (&g[tau][k] - &g[tau - 1][k]);
            }
            row[k] = v;
        }
        g.push(row);
    }
    g
}

fn rows_to_f64(rows: &[Vec<Big>]) -> Vec<Vec<f64>> {
    rows.iter().map(|r| r.iter().map(to_f64).collect()).collect()
}

/// Entries agree to 1e-14 of the largest magnitude in their row.
fn rows_agree(a: &[Vec<f64>], b: &[Vec<f64>], k_from: usize) -> bool {
    a.iter().zip(b).all(|(ra, rb)| {
        let scale = rb[k_from..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        ra[k_from..]
            .iter()
            .zip(&rb[k_from..])
            .all(|(x, y)| (x - y).abs() <= 1e-14 * scale)
    })
}

const MAX_DOUBLINGS: usize = 5;

/// Evaluates the recursion at increasing precision until two consecutive
/// precisions agree in double precision.
fn converged_rows(
    profile: &SpectralProfile,
    horizon: usize,
    k_min: usize,
) -> Result<Vec<Vec<f64>>, SpectralError> {
    let needed = horizon + 2;
    if profile.max_order() < needed {
        return Err(SpectralError::InsufficientMoments {
            needed: needed + 1,
            available: profile.moments().len(),
        });
    }
    let run = |bits: usize| -> Result<Vec<Vec<f64>>, SpectralError> {
        let mu = profile.exact_moments(needed, bits)?;
        Ok(rows_to_f64(&recursion_rows(&mu, horizon, k_min, bits)))
    };
    let mut bits = 128 + 8 * needed;
    let mut previous = run(bits)?;
    for _ in 0..MAX_DOUBLINGS {
        bits *= 2;
        let next = run(bits)?;
        let done = rows_agree(&previous, &next, 1);
        previous = next;
        if done {
            break;
        }
    }
    Ok(previous)
}

/// Tap table from the moment recursion
///
/// `g_0^{(k)} = μ_{k+1} − μ_k`,
/// `g_1^{(k)} = g_0^{(k)} − g_0^{(k+1)} + g_0^{(1)} μ_{k+1}`,
/// `g_t^{(k)} = g_{t−1}^{(k)} − g_{t−1}^{(k+1)} + Σ_{τ=1}^{t−1} g_{t−τ−1}^{(1)}(g_τ^{(k)} − g_{τ−1}^{(k)}) + g_{t−1}^{(1)} μ_{k+1}`.
///
/// Needs moments up to order `T + 2`. The arithmetic is multiprecision; a
/// table entry that does not fit in an `f64` is reported as
/// [`SpectralError::NonFinite`].
pub fn tap_recursion(profile: &SpectralProfile, horizon: usize) -> Result<TapTable, SpectralError> {
    let rows = converged_rows(profile, horizon, 1)?;
    let rows: Vec<Vec<f64>> = rows.into_iter().map(|mut r| r.split_off(1)).collect();
    for (t, row) in rows.iter().enumerate() {
        if let Some(i) = row.iter().position(|v| !v.is_finite()) {
            return Err(SpectralError::NonFinite { t, k: i + 1 });
        }
    }
    Ok(TapTable { horizon, rows })
}

/// `g_t^{(0)}` for `t = 0..=T`, obtained by running the same recursion with
/// the superscript extended down to zero. Vanishes identically when
/// `μ_0 = μ_1 = 1`.
pub fn order_zero_shadow(profile: &SpectralProfile, horizon: usize) -> Result<Vec<f64>, SpectralError> {
    let rows = converged_rows(profile, horizon, 0)?;
    Ok(rows.iter().map(|r| r[0]).collect())
}

/// Taps for the geometric ensemble in closed form:
/// `g_t^{(1)} = g_t + C/(κ²−1)` with `g_0 = −h_1`,
/// `g_t = Σ_{τ<t} h_{t−τ} g_τ − h_{t+1}`, `h_t = C^{t−1}/t! − C^t/(t+1)!`
/// and `C = (2/δ) ln κ`.
pub fn taps_geometric_closed_form(delta: f64, kappa: f64, horizon: usize) -> Result<Vec<f64>, SpectralError> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(SpectralError::InvalidDelta(delta));
    }
    if !(kappa > 1.0) || !kappa.is_finite() {
        return Err(SpectralError::InvalidConditionNumber(kappa));
    }
    let ln_kappa = kappa.ln();
    let c = 2.0 * ln_kappa / delta;
    // h[t] for t = 1..=T+1, with C^{t−1}/t! carried multiplicatively.
    let mut h = vec![0.0; horizon + 2];
    let mut term = 1.0;
    for t in 1..=horizon + 1 {
        if t > 1 {
            term *= c / t as f64;
        }
        h[t] = term * (1.0 - c / (t + 1) as f64);
    }
    let mut g = Vec::with_capacity(horizon + 1);
    g.push(-h[1]);
    for t in 1..=horizon {
        let conv: f64 = (0..t).map(|tau| h[t - tau] * g[tau]).sum();
        g.push(conv - h[t + 1]);
    }
    let offset = c / (2.0 * ln_kappa).exp_m1();
    let taps: Vec<f64> = g.into_iter().map(|v| v + offset).collect();
    if let Some(t) = taps.iter().position(|v| !v.is_finite()) {
        return Err(SpectralError::NonFinite { t, k: 1 });
    }
    Ok(taps)
}

/// AMP as a special case: `g_0^{(1)} = 1/δ`, all later taps zero.
pub fn amp_taps(delta: f64, horizon: usize) -> Vec<f64> {
    let mut taps = vec![0.0; horizon + 1];
    taps[0] = 1.0 / delta;
    taps
}

/// Taps used by the solvers: the closed form for geometric spectra, the
/// multiprecision recursion for everything else.
pub fn production_taps(profile: &SpectralProfile, horizon: usize) -> Result<Vec<f64>, SpectralError> {
    match profile.kind() {
        SpectrumKind::Geometric { delta, kappa } => taps_geometric_closed_form(*delta, *kappa, horizon),
        _ => Ok(tap_recursion(profile, horizon)?.taps()),
    }
}
