//! Arm-selection policies behind one interface: select an arm for a query,
//! then observe the pulled arm's feedback.

mod deep;
mod delay;
mod ensemble;
mod epsilon;
mod linucb;
mod thompson;
mod ucb;

use serde::{Deserialize, Serialize};

pub use deep::{select_static_router, DeepPolicy, DeepVariant};
pub use delay::{update_delay_ema, DelayTracker, DEFAULT_DELAY_BETA};
pub use ensemble::{compose_outcomes, select_ensemble, EnsembleDelay, EnsemblePolicy};
pub use epsilon::select_epsilon_greedy;
pub use linucb::LinUcb;
pub use thompson::Thompson;
pub use ucb::Ucb1;

use crate::encoder::{FeatureHasher, FeatureVector, NetworkParams, DEFAULT_FEATURE_DIM, DEFAULT_HIDDEN_DIM};
use crate::error::{Error, Result};
use crate::learning::PhaseConfig;
use crate::objective::{Objective, ScoreHead};
use crate::streams::{self, tag, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PolicyKind {
    #[serde(rename = "ggi_mo_mab")]
    GgiMoMab,
    #[serde(rename = "so_deep_mab")]
    SoDeepMab,
    #[serde(rename = "mo_mab")]
    MoMab,
    #[serde(rename = "ucb1")]
    Ucb1,
    #[serde(rename = "thompson")]
    Thompson,
    #[serde(rename = "linucb")]
    LinUcb,
    #[serde(rename = "static_router")]
    StaticRouter,
    #[serde(rename = "ensemble")]
    Ensemble,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::GgiMoMab => "ggi_mo_mab",
            PolicyKind::SoDeepMab => "so_deep_mab",
            PolicyKind::MoMab => "mo_mab",
            PolicyKind::Ucb1 => "ucb1",
            PolicyKind::Thompson => "thompson",
            PolicyKind::LinUcb => "linucb",
            PolicyKind::StaticRouter => "static_router",
            PolicyKind::Ensemble => "ensemble",
        }
    }

    pub fn is_deep(self) -> bool {
        matches!(
            self,
            PolicyKind::GgiMoMab | PolicyKind::SoDeepMab | PolicyKind::MoMab | PolicyKind::StaticRouter
        )
    }
}

fn default_epsilon() -> f64 {
    0.1
}
fn default_alpha() -> f64 {
    1.0
}
fn default_delay_beta() -> f64 {
    DEFAULT_DELAY_BETA
}
fn default_feature_dim() -> usize {
    DEFAULT_FEATURE_DIM
}
fn default_hidden_dim() -> usize {
    DEFAULT_HIDDEN_DIM
}

/// Policy kind plus hyperparameters, as written in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySpec {
    pub policy: PolicyKind,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// LinUCB exploration strength.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_delay_beta")]
    pub delay_beta: f64,
    #[serde(default = "default_feature_dim")]
    pub feature_dim: usize,
    #[serde(default = "default_hidden_dim")]
    pub hidden_dim: usize,
    #[serde(default)]
    pub hash_seed: u64,
    #[serde(default)]
    pub score_head: ScoreHead,
    #[serde(default)]
    pub ensemble_delay: EnsembleDelay,
}

impl PolicySpec {
    pub fn new(policy: PolicyKind) -> Self {
        Self {
            policy,
            epsilon: default_epsilon(),
            alpha: default_alpha(),
            delay_beta: default_delay_beta(),
            feature_dim: default_feature_dim(),
            hidden_dim: default_hidden_dim(),
            hash_seed: 0,
            score_head: ScoreHead::default(),
            ensemble_delay: EnsembleDelay::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::config(format!("policy.epsilon must lie in [0, 1], got {}", self.epsilon)));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::config(format!("policy.alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.delay_beta > 0.0 && self.delay_beta <= 1.0) {
            return Err(Error::config(format!(
                "policy.delay_beta must lie in (0, 1], got {}",
                self.delay_beta
            )));
        }
        FeatureHasher::new(self.feature_dim, self.hash_seed)?;
        if self.hidden_dim == 0 {
            return Err(Error::config("policy.hidden_dim must be >= 1"));
        }
        Ok(())
    }

    pub fn hasher(&self) -> FeatureHasher {
        FeatureHasher {
            dim: self.feature_dim,
            seed: self.hash_seed,
        }
    }
}

/// What the policy sees before choosing.
#[derive(Debug, Clone, Copy)]
pub struct Context<'a> {
    pub step: u64,
    pub features: &'a FeatureVector<f64>,
}

/// The result of one selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub arm: usize,
    pub was_exploration: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<Vec<f64>>,
    pub step: u64,
}

impl SelectionRecord {
    pub fn exploit(arm: usize, step: u64) -> Self {
        Self {
            arm,
            was_exploration: false,
            z: None,
            step,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Selection {
    Single(SelectionRecord),
    /// Every arm is pulled and the outcomes composed.
    AllArms { step: u64, delay: EnsembleDelay },
}

/// Feedback delivered to the learner. `recall` is `None` when withheld.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feedback {
    pub hit: bool,
    pub recall: Option<f64>,
    pub delay: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObserveReport {
    /// Active loss components and the scalarized loss (deep policies only).
    pub losses: Option<(Vec<(Objective, f64)>, f64)>,
    pub warning: Option<String>,
}

pub trait Policy: Send {
    fn kind(&self) -> PolicyKind;

    fn num_arms(&self) -> usize;

    fn select(&mut self, ctx: &Context<'_>, rng: &mut StreamRng) -> Result<Selection>;

    /// `selection` must be the value returned by the preceding `select`.
    fn observe(&mut self, ctx: &Context<'_>, selection: &Selection, feedback: &Feedback) -> Result<ObserveReport>;

    /// Called with every per-arm outcome of an all-arms pull.
    fn observe_arm_delay(&mut self, arm: usize, delay: f64) -> Result<()> {
        self.delays_mut().update(arm, delay)
    }

    fn begin_phase(&mut self, _phase: &PhaseConfig) -> Result<()> {
        Ok(())
    }

    fn delays(&self) -> &DelayTracker;

    fn delays_mut(&mut self) -> &mut DelayTracker;

    fn network(&self) -> Option<&NetworkParams<f64>> {
        None
    }

    fn set_network(&mut self, _params: NetworkParams<f64>) -> Result<()> {
        Err(Error::config(format!("policy {} has no network", self.kind().name())))
    }
}

/// Seed of the network initializer, shared by every deep policy for a run seed.
pub fn init_seed(run_seed: u64) -> u64 {
    streams::derive_seed(&[run_seed, tag::INIT])
}

/// Policy-side random stream (exploration, posterior sampling) of one phase.
pub fn policy_rng(run_seed: u64, phase: u64) -> StreamRng {
    streams::stream(&[run_seed, tag::POLICY, phase])
}

pub fn build_policy(spec: &PolicySpec, arms: usize, run_seed: u64) -> Result<Box<dyn Policy>> {
    spec.validate()?;
    if arms < 2 {
        return Err(Error::config(format!("need at least 2 arms, got {arms}")));
    }
    let delays = DelayTracker::new(arms, spec.delay_beta)?;
    Ok(match spec.policy {
        PolicyKind::GgiMoMab | PolicyKind::SoDeepMab | PolicyKind::MoMab | PolicyKind::StaticRouter => {
            let variant = match spec.policy {
                PolicyKind::GgiMoMab => DeepVariant::GgiMoMab,
                PolicyKind::SoDeepMab => DeepVariant::SoDeepMab,
                PolicyKind::MoMab => DeepVariant::MoMab,
                _ => DeepVariant::StaticRouter,
            };
            let params = NetworkParams::init(init_seed(run_seed), spec.feature_dim, spec.hidden_dim, arms)?;
            Box::new(DeepPolicy::new(variant, params, spec.score_head, spec.epsilon, delays))
        }
        PolicyKind::Ucb1 => Box::new(Ucb1::new(arms, delays)),
        PolicyKind::Thompson => Box::new(Thompson::new(arms, delays)),
        PolicyKind::LinUcb => Box::new(LinUcb::new(arms, spec.feature_dim, spec.alpha, delays)),
        PolicyKind::Ensemble => Box::new(EnsemblePolicy::new(arms, spec.ensemble_delay, delays)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_parses_with_defaults() {
        let spec: PolicySpec = serde_json::from_str(r#"{"policy": "linucb", "alpha": 2.0}"#).unwrap();
        assert_eq!(spec.policy, PolicyKind::LinUcb);
        assert_eq!(spec.alpha, 2.0);
        assert_eq!(spec.epsilon, 0.1);
        assert_eq!(spec.feature_dim, 64);
    }

    #[test]
    fn spec_rejects_unknown_fields_and_kinds() {
        assert!(serde_json::from_str::<PolicySpec>(r#"{"policy": "ucb1", "gamma": 1}"#).is_err());
        assert!(serde_json::from_str::<PolicySpec>(r#"{"policy": "mou_ucb"}"#).is_err());
    }

    #[test]
    fn spec_validation() {
        let mut spec = PolicySpec::new(PolicyKind::GgiMoMab);
        spec.epsilon = 1.5;
        assert!(spec.validate().is_err());
        spec.epsilon = 0.1;
        spec.feature_dim = 4;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn every_kind_builds() {
        for kind in [
            PolicyKind::GgiMoMab,
            PolicyKind::SoDeepMab,
            PolicyKind::MoMab,
            PolicyKind::Ucb1,
            PolicyKind::Thompson,
            PolicyKind::LinUcb,
            PolicyKind::StaticRouter,
            PolicyKind::Ensemble,
        ] {
            let p = build_policy(&PolicySpec::new(kind), 3, 1).unwrap();
            assert_eq!(p.kind(), kind);
            assert_eq!(p.num_arms(), 3);
            let json = serde_json::to_string(&kind).unwrap();
            assert_eq!(json, format!("\"{}\"", kind.name()));
        }
    }
}
