use super::{Context, DelayTracker, Feedback, ObserveReport, Policy, PolicyKind, Selection, SelectionRecord};
use crate::error::{Error, Result};
use crate::streams::StreamRng;

/// UCB1 on the hit reward. Untried arms are pulled first, in index order.
#[derive(Debug, Clone)]
pub struct Ucb1 {
    counts: Vec<u64>,
    sums: Vec<f64>,
    delays: DelayTracker,
}

impl Ucb1 {
    pub fn new(arms: usize, delays: DelayTracker) -> Self {
        Self {
            counts: vec![0; arms],
            sums: vec![0.0; arms],
            delays,
        }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Upper confidence index of each arm; `None` for untried arms.
    pub fn indices(&self) -> Vec<Option<f64>> {
        let total: u64 = self.counts.iter().sum();
        let log_t = (total.max(1) as f64).ln();
        self.counts
            .iter()
            .zip(&self.sums)
            .map(|(&n, &s)| (n > 0).then(|| s / n as f64 + (2.0 * log_t / n as f64).sqrt()))
            .collect()
    }
}

impl Policy for Ucb1 {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Ucb1
    }

    fn num_arms(&self) -> usize {
        self.counts.len()
    }

    fn select(&mut self, ctx: &Context<'_>, _rng: &mut StreamRng) -> Result<Selection> {
        let indices = self.indices();
        let arm = match indices.iter().position(Option::is_none) {
            Some(untried) => untried,
            None => {
                let values: Vec<f64> = indices.into_iter().flatten().collect();
                crate::scalar::argmax(&values)
            }
        };
        Ok(Selection::Single(SelectionRecord::exploit(arm, ctx.step)))
    }

    fn observe(&mut self, _ctx: &Context<'_>, selection: &Selection, feedback: &Feedback) -> Result<ObserveReport> {
        let Selection::Single(rec) = selection else {
            return Err(Error::domain("ucb1 expects a single-arm selection"));
        };
        self.counts[rec.arm] += 1;
        self.sums[rec.arm] += if feedback.hit { 1.0 } else { 0.0 };
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
