use serde::{Deserialize, Serialize};

use super::{Context, DelayTracker, Feedback, ObserveReport, Policy, PolicyKind, Selection};
use crate::env::Outcome;
use crate::error::{Error, Result};
use crate::streams::StreamRng;

/// How the ensemble's delay is composed from per-arm delays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleDelay {
    /// Backends queried one after another.
    #[default]
    Sum,
    /// Backends queried in parallel.
    Max,
}

/// Arms pulled by the ensemble: all of them.
pub fn select_ensemble(arms: usize) -> Vec<usize> {
    (0..arms).collect()
}

/// Hit if any arm hits, best recall, delay summed or maxed.
pub fn compose_outcomes(outcomes: &[Outcome], mode: EnsembleDelay) -> Result<Outcome> {
    if outcomes.is_empty() {
        return Err(Error::domain("ensemble needs at least one outcome"));
    }
    let delays = outcomes.iter().map(|o| o.delay);
    Ok(Outcome {
        hit: outcomes.iter().any(|o| o.hit),
        recall: outcomes.iter().map(|o| o.recall).fold(0.0, f64::max),
        delay: match mode {
            EnsembleDelay::Sum => delays.sum(),
            EnsembleDelay::Max => delays.fold(0.0, f64::max),
        },
    })
}

#[derive(Debug, Clone)]
pub struct EnsemblePolicy {
    arms: usize,
    pub mode: EnsembleDelay,
    delays: DelayTracker,
}

impl EnsemblePolicy {
    pub fn new(arms: usize, mode: EnsembleDelay, delays: DelayTracker) -> Self {
        Self { arms, mode, delays }
    }
}

impl Policy for EnsemblePolicy {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Ensemble
    }

    fn num_arms(&self) -> usize {
        self.arms
    }

    fn select(&mut self, ctx: &Context<'_>, _rng: &mut StreamRng) -> Result<Selection> {
        Ok(Selection::AllArms {
            step: ctx.step,
            delay: self.mode,
        })
    }

    fn observe(&mut self, _ctx: &Context<'_>, _selection: &Selection, _feedback: &Feedback) -> Result<ObserveReport> {
        Ok(ObserveReport::default())
    }

    fn delays(&self) -> &DelayTracker {
        &self.delays
    }

    fn delays_mut(&mut self) -> &mut DelayTracker {
        &mut self.delays
    }
}
