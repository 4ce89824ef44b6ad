//! Soft thresholding and its divergence.

/// Threshold used at each iteration.
#[derive(Debug, Clone, PartialEq)]
pub enum ThresholdSchedule {
    Constant(f64),
    /// `θ_t` per iteration; the last entry is reused past its end.
    PerIteration(Vec<f64>),
}

impl ThresholdSchedule {
    pub fn at(&self, t: usize) -> f64 {
        match self {
            Self::Constant(theta) => *theta,
            Self::PerIteration(thetas) => thetas[t.min(thetas.len() - 1)],
        }
    }
}

/// Element-wise soft-thresholding denoiser `f_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Denoiser {
    schedule: ThresholdSchedule,
}

impl Denoiser {
    /// # Panics
    /// If a threshold is negative or not finite, or the schedule is empty.
    pub fn soft(schedule: ThresholdSchedule) -> Self {
        let ok = |v: &f64| v.is_finite() && *v >= 0.0;
        match &schedule {
            ThresholdSchedule::Constant(t) => assert!(ok(t), "threshold must be finite and nonnegative"),
            ThresholdSchedule::PerIteration(ts) => {
                assert!(!ts.is_empty() && ts.iter().all(ok), "thresholds must be finite and nonnegative")
            }
        }
        Self { schedule }
    }

    pub fn constant(theta: f64) -> Self {
        Self::soft(ThresholdSchedule::Constant(theta))
    }

    pub fn schedule(&self) -> &ThresholdSchedule {
        &self.schedule
    }

    pub fn threshold(&self, t: usize) -> f64 {
        self.schedule.at(t)
    }

    pub fn apply(&self, v: &[f64], t: usize) -> Vec<f64> {
        let theta = self.threshold(t);
        v.iter().map(|&x| soft_threshold(x, theta)).collect()
    }

    /// `⟨f′_t(v)⟩`
    pub fn divergence(&self, v: &[f64], t: usize) -> f64 {
        divergence_mean(v, self.threshold(t))
    }
}

pub fn soft_threshold(x: f64, theta: f64) -> f64 {
    if x >= theta {
        x - theta
    } else if x <= -theta {
        x + theta
    } else {
        0.0
    }
}

/// 1 on `|x| > θ`, 0 elsewhere including the kinks `|x| = θ`.
pub fn soft_threshold_derivative(x: f64, theta: f64) -> f64 {
    if x.abs() > theta {
        1.0
    } else {
        0.0
    }
}

/// Fraction of entries strictly above the threshold in magnitude.
pub fn divergence_mean(v: &[f64], theta: f64) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let count = v.iter().filter(|x| x.abs() > theta).count();
    count as f64 / v.len() as f64
}
