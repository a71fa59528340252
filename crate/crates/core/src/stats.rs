//! Confidence intervals for Monte Carlo estimates.
//!
//! All intervals are normal-approximation at three standard errors (99.7%).

use serde::{Deserialize, Serialize};

/// Width of every reported interval, in standard errors.
pub const Z_SCORE: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub trials: usize,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Estimate {
    /// Proportion `successes / trials`, interval clamped to `[0, 1]`.
    pub fn proportion(successes: usize, trials: usize) -> Self {
        assert!(trials > 0, "estimate needs at least one trial");
        let p = successes as f64 / trials as f64;
        let se = (p * (1.0 - p) / trials as f64).sqrt();
        Self {
            value: p,
            trials,
            std_error: se,
            ci_low: (p - Z_SCORE * se).max(0.0),
            ci_high: (p + Z_SCORE * se).min(1.0),
        }
    }

    /// Sample mean with the standard error of the mean.
    pub fn mean(samples: &[f64]) -> Self {
        assert!(!samples.is_empty(), "estimate needs at least one sample");
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = if samples.len() > 1 {
            samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let se = (var / n).sqrt();
        Self {
            value: mean,
            trials: samples.len(),
            std_error: se,
            ci_low: mean - Z_SCORE * se,
            ci_high: mean + Z_SCORE * se,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.ci_low <= x && x <= self.ci_high
    }
}

/// Standard error of a proportion with true value `p` over `trials`.
pub fn binomial_sigma(p: f64, trials: usize) -> f64 {
    (p * (1.0 - p) / trials as f64).sqrt()
}
