use crate::error::{Error, Result};

pub const DEFAULT_DELAY_BETA: f64 = 0.05;

/// Moves the estimate a `beta` fraction of the way toward the observation;
/// the first observation sets the estimate.
pub fn update_delay_ema(ema: Option<f64>, observed_delay: f64, beta: f64) -> Result<f64> {
    if !(observed_delay.is_finite() && observed_delay > 0.0) {
        return Err(Error::domain(format!("observed delay must be > 0, got {observed_delay}")));
    }
    Ok(match ema {
        None => observed_delay,
        Some(prev) => (1.0 - beta) * prev + beta * observed_delay,
    })
}

/// Per-arm delay estimates in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayTracker {
    beta: f64,
    ema: Vec<Option<f64>>,
    sum: Vec<f64>,
    count: Vec<u64>,
}

impl DelayTracker {
    pub fn new(arms: usize, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::domain(format!("delay EMA beta must lie in (0, 1], got {beta}")));
        }
        Ok(Self {
            beta,
            ema: vec![None; arms],
            sum: vec![0.0; arms],
            count: vec![0; arms],
        })
    }

    pub fn update(&mut self, arm: usize, observed_delay: f64) -> Result<()> {
        let arms = self.ema.len();
        let slot = self.ema.get_mut(arm).ok_or(Error::InvalidArm { arm, arms })?;
        *slot = Some(update_delay_ema(*slot, observed_delay, self.beta)?);
        self.sum[arm] += observed_delay;
        self.count[arm] += 1;
        Ok(())
    }

    pub fn estimate(&self, arm: usize) -> Option<f64> {
        self.ema.get(arm).copied().flatten()
    }

    pub fn estimates(&self) -> &[Option<f64>] {
        &self.ema
    }

    /// Estimates with unobserved arms filled by the mean of observed ones
    /// (all equal when nothing has been observed).
    pub fn filled_estimates(&self) -> Vec<f64> {
        let known: Vec<f64> = self.ema.iter().flatten().copied().collect();
        let fill = if known.is_empty() {
            1.0
        } else {
            known.iter().sum::<f64>() / known.len() as f64
        };
        self.ema.iter().map(|e| e.unwrap_or(fill)).collect()
    }

    /// Replaces each observed arm's EMA with its empirical mean delay.
    pub fn seed_from_empirical_means(&mut self) {
        for arm in 0..self.ema.len() {
            if self.count[arm] > 0 {
                self.ema[arm] = Some(self.sum[arm] / self.count[arm] as f64);
            }
        }
    }
}
