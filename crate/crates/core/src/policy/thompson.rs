use rand_distr::{Beta, Distribution};

use super::{Context, DelayTracker, Feedback, ObserveReport, Policy, PolicyKind, Selection, SelectionRecord};
use crate::error::{Error, Result};
use crate::scalar::argmax;
use crate::streams::StreamRng;

/// Beta-Bernoulli Thompson sampling on the hit reward, uniform priors.
#[derive(Debug, Clone)]
pub struct Thompson {
    alpha: Vec<f64>,
    beta: Vec<f64>,
    delays: DelayTracker,
}

impl Thompson {
    pub fn new(arms: usize, delays: DelayTracker) -> Self {
        Self {
            alpha: vec![1.0; arms],
            beta: vec![1.0; arms],
            delays,
        }
    }

    pub fn posterior(&self, arm: usize) -> (f64, f64) {
        (self.alpha[arm], self.beta[arm])
    }
}

impl Policy for Thompson {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Thompson
    }

    fn num_arms(&self) -> usize {
        self.alpha.len()
    }

    fn select(&mut self, ctx: &Context<'_>, rng: &mut StreamRng) -> Result<Selection> {
        let mut samples = Vec::with_capacity(self.alpha.len());
        for (&a, &b) in self.alpha.iter().zip(&self.beta) {
            let dist = Beta::new(a, b).map_err(|e| Error::domain(format!("posterior: {e}")))?;
            samples.push(dist.sample(rng));
        }
        Ok(Selection::Single(SelectionRecord::exploit(argmax(&samples), ctx.step)))
    }

    fn observe(&mut self, _ctx: &Context<'_>, selection: &Selection, feedback: &Feedback) -> Result<ObserveReport> {
        let Selection::Single(rec) = selection else {
            return Err(Error::domain("thompson expects a single-arm selection"));
        };
        if feedback.hit {
            self.alpha[rec.arm] += 1.0;
        } else {
            self.beta[rec.arm] += 1.0;
        }
        self.delays.update(rec.arm, feedback.delay)?;
        Ok(ObserveReport::default())
    }

    fn delays(&self) -> &DelayTracker {
        &self.delays
    }

    fn delays_mut(&mut self) -> &mut DelayTracker {
        &mut self.delays
    }
}
