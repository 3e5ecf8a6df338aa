use rand::Rng;
use rand_distr::{Beta, Distribution, LogNormal};

use super::types::{
    ArmProfile, EventAction, Mixture, Outcome, Query, QueryType, Scenario, ScheduleEvent,
    FILLER_TOKENS,
};
use crate::error::{Error, Result};
use crate::streams::{self, tag, StreamRng};

pub const MIN_DELAY_S: f64 = 0.05;
pub const MAX_DELAY_S: f64 = 120.0;
const MIN_QUERY_TOKENS: usize = 5;
const MAX_QUERY_TOKENS: usize = 10;
const FILLERS_PER_QUERY: usize = 2;

/// Simulated retrieval backends plus a query source.
///
/// Mutated only through [`Environment::apply_schedule`] and
/// [`Environment::reset`]; outcomes are produced solely by [`Environment::pull`].
#[derive(Debug, Clone)]
pub struct Environment {
    scenario: Scenario,
    arms: Vec<ArmProfile>,
    mixture: Mixture,
    next_event: usize,
    stream_key: u64,
}

impl Environment {
    /// Validates `scenario` and keys all random streams on its name and
    /// scenario-level seed plus the run `seed`.
    pub fn new(scenario: Scenario, seed: u64) -> Result<Self> {
        scenario.validate()?;
        let stream_key = streams::derive_seed(&[streams::hash_str(&scenario.name), scenario.seed, seed]);
        Ok(Self {
            arms: scenario.arms.clone(),
            mixture: scenario.mixture,
            next_event: 0,
            stream_key,
            scenario,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn arms(&self) -> &[ArmProfile] {
        &self.arms
    }

    pub fn num_arms(&self) -> usize {
        self.arms.len()
    }

    pub fn mixture(&self) -> &Mixture {
        &self.mixture
    }

    /// Restores the initial arms and mixture and rewinds the schedule.
    pub fn reset(&mut self) {
        self.arms = self.scenario.arms.clone();
        self.mixture = self.scenario.mixture;
        self.next_event = 0;
    }

    /// Query stream for a phase.
    pub fn query_rng(&self, phase: u64) -> StreamRng {
        streams::stream(&[self.stream_key, tag::QUERIES, phase])
    }

    /// Outcome substream for one `(phase, step, arm)` coordinate.
    pub fn outcome_rng(&self, phase: u64, step: u64, arm: usize) -> StreamRng {
        streams::stream(&[self.stream_key, tag::OUTCOMES, phase, step, arm as u64])
    }

    pub fn sample_type<R: Rng + ?Sized>(&self, rng: &mut R) -> QueryType {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last = QueryType::Simple1Hop;
        for t in QueryType::ALL {
            let w = self.mixture.get(t);
            if w <= 0.0 {
                continue;
            }
            acc += w;
            last = t;
            if u < acc {
                return t;
            }
        }
        last
    }

    /// Draws a query type from the current mixture and composes its text.
    pub fn next_query<R: Rng + ?Sized>(&self, rng: &mut R) -> Query {
        let hidden_type = self.sample_type(rng);
        let pool = hidden_type.token_pool();
        let n = rng.random_range(MIN_QUERY_TOKENS..=MAX_QUERY_TOKENS);
        let mut tokens: Vec<&str> = (0..n).map(|_| pool[rng.random_range(0..pool.len())]).collect();
        for _ in 0..FILLERS_PER_QUERY {
            tokens.push(FILLER_TOKENS[rng.random_range(0..FILLER_TOKENS.len())]);
        }
        Query {
            text: tokens.join(" "),
            hidden_type,
        }
    }

    /// Realizes one pull of `arm` on a query of type `t`.
    pub fn pull<R: Rng + ?Sized>(&self, arm: usize, t: QueryType, rng: &mut R) -> Result<Outcome> {
        let profile = self.arms.get(arm).ok_or(Error::InvalidArm {
            arm,
            arms: self.arms.len(),
        })?;
        let u: f64 = rng.random();
        let beta = profile.recall.get(t);
        let recall_dist = Beta::new(beta.a, beta.b)
            .map_err(|e| Error::domain(format!("arm {arm} recall distribution: {e}")))?;
        let recall: f64 = recall_dist.sample(rng).clamp(0.0, 1.0);
        let delay_dist = LogNormal::new(profile.delay.mu, profile.delay.sigma_ln)
            .map_err(|e| Error::domain(format!("arm {arm} delay distribution: {e}")))?;
        let delay = delay_dist.sample(rng).clamp(MIN_DELAY_S, MAX_DELAY_S);
        if !profile.alive {
            return Ok(Outcome {
                hit: false,
                recall: 0.0,
                delay,
            });
        }
        Ok(Outcome {
            hit: u < profile.p_hit.get(t),
            recall,
            delay,
        })
    }

    /// Applies every pending event scheduled at or before `step`; returns the
    /// applied events.
    pub fn apply_schedule(&mut self, step: u64) -> Vec<ScheduleEvent> {
        let mut applied = Vec::new();
        while let Some(ev) = self.scenario.schedule.get(self.next_event) {
            if ev.step > step {
                break;
            }
            match &ev.action {
                EventAction::SwapArmProfile { arm, profile } => self.arms[*arm] = profile.clone(),
                EventAction::ShiftQueryMixture { mixture } => self.mixture = *mixture,
                EventAction::KillArm { arm } => self.arms[*arm].alive = false,
                EventAction::ReviveArm { arm } => self.arms[*arm].alive = true,
            }
            applied.push(ev.clone());
            self.next_event += 1;
        }
        applied
    }

    /// Arm with the highest true hit probability for `t`; ties go to the
    /// lower mean delay, then the lower index.
    pub fn oracle_arm(&self, t: QueryType) -> usize {
        let mut best = 0;
        for (i, arm) in self.arms.iter().enumerate().skip(1) {
            let cur = &self.arms[best];
            let (p, q) = (arm.effective_p_hit(t), cur.effective_p_hit(t));
            if p > q || (p == q && arm.delay.mean() < cur.delay.mean()) {
                best = i;
            }
        }
        best
    }
}
