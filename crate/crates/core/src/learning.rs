//! Offline pretraining with full feedback followed by online fine-tuning with
//! partial feedback.

use serde::{Deserialize, Serialize};

use crate::encoder::FeatureHasher;
use crate::env::{Environment, Outcome, QueryType};
use crate::error::{Error, Result};
use crate::ggi::GiniWeights;
use crate::objective::Objective;
use crate::policy::{compose_outcomes, policy_rng, Context, Feedback, Policy, Selection};

pub const OFFLINE_LEARNING_RATE: f64 = 1e-2;
pub const ONLINE_LEARNING_RATE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Offline,
    Online,
}

impl Phase {
    /// Stream coordinate of the phase.
    pub fn index(self) -> u64 {
        match self {
            Phase::Offline => 0,
            Phase::Online => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Phase::Offline => "offline",
            Phase::Online => "online",
        }
    }

    pub fn default_objectives(self) -> Vec<Objective> {
        match self {
            Phase::Offline => vec![Objective::Hit, Objective::Recall, Objective::Efficiency],
            Phase::Online => vec![Objective::Hit, Objective::Efficiency],
        }
    }

    pub fn default_weights(self) -> Vec<f64> {
        match self {
            Phase::Offline => GiniWeights::<f64>::offline_default().into(),
            Phase::Online => GiniWeights::<f64>::online_default().into(),
        }
    }

    pub fn default_learning_rate(self) -> f64 {
        match self {
            Phase::Offline => OFFLINE_LEARNING_RATE,
            Phase::Online => ONLINE_LEARNING_RATE,
        }
    }

    /// Whether the learner observes recall in this phase.
    pub fn reveals_recall(self) -> bool {
        self == Phase::Offline
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PhaseConfigFile")]
pub struct PhaseConfig {
    pub phase: Phase,
    pub steps: u64,
    pub objectives: Vec<Objective>,
    pub weights: Vec<f64>,
    pub learning_rate: f64,
    /// Overrides the policy's ε for this phase.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PhaseConfigFile {
    phase: Phase,
    steps: u64,
    objectives: Option<Vec<Objective>>,
    weights: Option<Vec<f64>>,
    learning_rate: Option<f64>,
    epsilon: Option<f64>,
}

impl TryFrom<PhaseConfigFile> for PhaseConfig {
    type Error = Error;

    fn try_from(f: PhaseConfigFile) -> Result<Self> {
        let objectives = f.objectives.unwrap_or_else(|| f.phase.default_objectives());
        let weights = match f.weights {
            Some(w) => w,
            None if objectives == f.phase.default_objectives() => f.phase.default_weights(),
            None => {
                return Err(Error::config(format!(
                    "{} phase: weights are required when objectives are customized",
                    f.phase.name()
                )))
            }
        };
        let config = PhaseConfig {
            phase: f.phase,
            steps: f.steps,
            objectives,
            weights,
            learning_rate: f.learning_rate.unwrap_or_else(|| f.phase.default_learning_rate()),
            epsilon: f.epsilon,
        };
        config.validate()?;
        Ok(config)
    }
}

impl PhaseConfig {
    pub fn new(phase: Phase, steps: u64) -> Self {
        Self {
            phase,
            steps,
            objectives: phase.default_objectives(),
            weights: phase.default_weights(),
            learning_rate: phase.default_learning_rate(),
            epsilon: None,
        }
    }

    pub fn offline(steps: u64) -> Self {
        Self::new(Phase::Offline, steps)
    }

    pub fn online(steps: u64) -> Self {
        Self::new(Phase::Online, steps)
    }

    pub fn validate(&self) -> Result<()> {
        let name = self.phase.name();
        if self.objectives.is_empty() {
            return Err(Error::config(format!("{name} phase: objectives must not be empty")));
        }
        for (i, o) in self.objectives.iter().enumerate() {
            if self.objectives[..i].contains(o) {
                return Err(Error::config(format!("{name} phase: duplicate objective {o:?}")));
            }
        }
        if !self.phase.reveals_recall() && self.objectives.contains(&Objective::Recall) {
            return Err(Error::config(format!(
                "{name} phase: recall is not observable, remove it from objectives"
            )));
        }
        if self.weights.len() != self.objectives.len() {
            return Err(Error::config(format!(
                "{name} phase: {} weights for {} objectives",
                self.weights.len(),
                self.objectives.len()
            )));
        }
        GiniWeights::new(self.weights.clone())
            .map_err(|e| Error::config(format!("{name} phase weights: {e}")))?;
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config(format!(
                "{name} phase: learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if let Some(eps) = self.epsilon {
            if !(0.0..=1.0).contains(&eps) {
                return Err(Error::config(format!("{name} phase: epsilon must lie in [0, 1], got {eps}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hit: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recall: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub efficiency: Option<f64>,
    pub total: f64,
}

impl LossRecord {
    pub fn active(&self) -> usize {
        [self.hit, self.recall, self.efficiency].iter().flatten().count()
    }
}

/// One step of a run. `outcome.recall` is the ground truth even when the
/// learner did not observe it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub phase: Phase,
    pub step: u64,
    pub query_id: u64,
    pub query: String,
    pub hidden_type: QueryType,
    /// `None` when every arm was pulled.
    pub arm: Option<usize>,
    pub was_exploration: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<Vec<f64>>,
    pub outcome: Outcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub losses: Option<LossRecord>,
    /// Simulated seconds elapsed in the phase, this step included.
    pub sim_clock: f64,
    pub oracle_arm: usize,
    pub oracle_p_hit: f64,
    pub chosen_p_hit: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl StepRecord {
    /// Expected hit shortfall against the oracle, floored at zero.
    pub fn pseudo_regret(&self) -> f64 {
        (self.oracle_p_hit - self.chosen_p_hit).max(0.0)
    }
}

/// Executes one phase, calling `on_step` after every step.
pub fn run_phase_with<F>(
    env: &mut Environment,
    policy: &mut dyn Policy,
    hasher: &FeatureHasher,
    config: &PhaseConfig,
    run_seed: u64,
    mut on_step: F,
) -> Result<Vec<StepRecord>>
where
    F: FnMut(&StepRecord, &dyn Policy) -> Result<()>,
{
    config.validate()?;
    let horizon = env.scenario().horizon;
    if config.steps > horizon {
        return Err(Error::EnvironmentExhausted {
            available: horizon,
            requested: config.steps,
        });
    }
    env.reset();
    policy.begin_phase(config)?;
    let phase = config.phase;
    let mut query_rng = env.query_rng(phase.index());
    let mut rng = policy_rng(run_seed, phase.index());
    let mut records = Vec::with_capacity(config.steps as usize);
    let mut clock = 0.0;

    for step in 0..config.steps {
        let events = match phase {
            Phase::Online => env
                .apply_schedule(step)
                .iter()
                .map(|e| e.action.kind_name().to_string())
                .collect(),
            Phase::Offline => Vec::new(),
        };
        let query = env.next_query(&mut query_rng);
        let t = query.hidden_type;
        let x = hasher.featurize::<f64>(&query.text);
        let ctx = Context { step, features: &x };
        let selection = policy.select(&ctx, &mut rng)?;

        let (arm, was_exploration, z, outcome, chosen_p_hit) = match &selection {
            Selection::Single(rec) => {
                let outcome = env.pull(rec.arm, t, &mut env.outcome_rng(phase.index(), step, rec.arm))?;
                let p = env.arms()[rec.arm].effective_p_hit(t);
                (Some(rec.arm), rec.was_exploration, rec.z.clone(), outcome, p)
            }
            Selection::AllArms { delay, .. } => {
                let mut outcomes = Vec::with_capacity(env.num_arms());
                let mut miss = 1.0;
                for a in 0..env.num_arms() {
                    let o = env.pull(a, t, &mut env.outcome_rng(phase.index(), step, a))?;
                    policy.observe_arm_delay(a, o.delay)?;
                    miss *= 1.0 - env.arms()[a].effective_p_hit(t);
                    outcomes.push(o);
                }
                (None, false, None, compose_outcomes(&outcomes, *delay)?, 1.0 - miss)
            }
        };

        let feedback = Feedback {
            hit: outcome.hit,
            recall: phase.reveals_recall().then_some(outcome.recall),
            delay: outcome.delay,
        };
        let report = policy.observe(&ctx, &selection, &feedback)?;
        clock += outcome.delay;

        let losses = report.losses.map(|(components, total)| {
            let get = |o: Objective| components.iter().find(|(k, _)| *k == o).map(|&(_, v)| v);
            LossRecord {
                hit: get(Objective::Hit),
                recall: get(Objective::Recall),
                efficiency: get(Objective::Efficiency),
                total,
            }
        });
        let oracle_arm = env.oracle_arm(t);
        let record = StepRecord {
            phase,
            step,
            query_id: step,
            query: query.text,
            hidden_type: t,
            arm,
            was_exploration,
            z,
            outcome,
            losses,
            sim_clock: clock,
            oracle_arm,
            oracle_p_hit: env.arms()[oracle_arm].effective_p_hit(t),
            chosen_p_hit,
            events,
            warning: report.warning,
        };
        on_step(&record, &*policy)?;
        records.push(record);
    }
    Ok(records)
}

/// Runs `config` as its phase dictates. After an offline phase the policy's
/// delay estimates are reset to the phase's empirical means.
pub fn run_phase<F>(
    env: &mut Environment,
    policy: &mut dyn Policy,
    hasher: &FeatureHasher,
    config: &PhaseConfig,
    run_seed: u64,
    on_step: F,
) -> Result<Vec<StepRecord>>
where
    F: FnMut(&StepRecord, &dyn Policy) -> Result<()>,
{
    let records = run_phase_with(env, policy, hasher, config, run_seed, on_step)?;
    if config.phase == Phase::Offline {
        policy.delays_mut().seed_from_empirical_means();
    }
    Ok(records)
}

/// Pretraining with hit, recall and delay observed for the pulled arm.
pub fn run_offline(
    env: &mut Environment,
    policy: &mut dyn Policy,
    hasher: &FeatureHasher,
    config: &PhaseConfig,
    run_seed: u64,
) -> Result<Vec<StepRecord>> {
    if config.phase != Phase::Offline {
        return Err(Error::config("run_offline needs an offline phase config"));
    }
    run_phase(env, policy, hasher, config, run_seed, |_, _| Ok(()))
}

/// Fine-tuning with recall withheld and the scenario schedule applied.
pub fn run_online(
    env: &mut Environment,
    policy: &mut dyn Policy,
    hasher: &FeatureHasher,
    config: &PhaseConfig,
    run_seed: u64,
) -> Result<Vec<StepRecord>> {
    if config.phase != Phase::Online {
        return Err(Error::config("run_online needs an online phase config"));
    }
    run_phase(env, policy, hasher, config, run_seed, |_, _| Ok(()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleStep {
    pub step: u64,
    pub hidden_type: QueryType,
    pub arm: usize,
    pub p_hit: f64,
    pub recall: f64,
    pub delay: f64,
}

/// Best arm per step of the online query stream, with its expected metrics.
pub fn oracle_reference(env: &Environment, horizon: u64) -> Vec<OracleStep> {
    let mut env = env.clone();
    env.reset();
    let mut query_rng = env.query_rng(Phase::Online.index());
    (0..horizon)
        .map(|step| {
            env.apply_schedule(step);
            let t = env.next_query(&mut query_rng).hidden_type;
            let arm = env.oracle_arm(t);
            let profile = &env.arms()[arm];
            OracleStep {
                step,
                hidden_type: t,
                arm,
                p_hit: profile.effective_p_hit(t),
                recall: profile.effective_recall_mean(t),
                delay: profile.delay.mean(),
            }
        })
        .collect()
}
