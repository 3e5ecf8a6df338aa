//! Built-in scenarios.
//!
//! Three backends with distinct strengths: a fast dense retriever that is best
//! on simple one-hop lookups, a slow query-language generator that is best on
//! multi-entity and list questions, and a mid-latency graph agent that is best
//! on multi-hop questions. Per-type hit rates are chosen so that the marginal
//! hit rate of each arm under the two default mixtures lands on its anchor:
//!
//! | arm            | web-like hit | cwq-like hit | mean delay |
//! |----------------|--------------|--------------|------------|
//! | dense          | ≈ 0.71       | ≈ 0.47       | 1 s        |
//! | query language | ≈ 0.81       | ≈ 0.77       | 15 s       |
//! | graph agent    | ≈ 0.86       | ≈ 0.57       | 8 s        |
//!
//! The `retriever_upgrade` scenario starts with a weaker graph agent (≈ 0.67
//! web-like hit) and swaps in the stronger one mid-run.

use super::types::{
    ArmProfile, BetaParams, EventAction, LogNormalParams, Mixture, PerType, QueryType, Scenario,
    ScheduleEvent,
};
use crate::error::{Error, Result};

pub const BUILTIN_SCENARIOS: [&str; 5] = [
    "stationary_webqsp",
    "stationary_cwq",
    "retriever_upgrade",
    "domain_shift",
    "arm_failure",
];

pub const DEFAULT_HORIZON: u64 = 10_000;
pub const DEFAULT_EVENT_STEP: u64 = 5_000;

pub const DELAY_SIGMA_LN: f64 = 0.25;
pub const RECALL_CONCENTRATION: f64 = 10.0;

pub const DENSE: usize = 0;
pub const QUERY_LANGUAGE: usize = 1;
pub const GRAPH_AGENT: usize = 2;

/// Query-type weights of the web-question-like workload.
pub fn webqsp_mixture() -> Mixture {
    PerType::new([0.40, 0.42, 0.03, 0.15])
}

/// Query-type weights of the complex-question-like workload.
pub fn cwq_mixture() -> Mixture {
    PerType::new([0.05, 0.20, 0.45, 0.30])
}

/// Builds a profile whose per-type mean recall is `recall_ratio · p_hit`.
fn profile(name: &str, p_hit: [f64; 4], recall_ratio: f64, mean_delay: f64) -> ArmProfile {
    let p_hit = PerType::new(p_hit);
    let recall = PerType::new(QueryType::ALL.map(|t| {
        let mean = (recall_ratio * p_hit.get(t)).clamp(0.02, 0.98);
        BetaParams::with_mean(mean, RECALL_CONCENTRATION)
    }));
    ArmProfile {
        name: name.to_string(),
        p_hit,
        recall,
        delay: LogNormalParams::with_mean(mean_delay, DELAY_SIGMA_LN),
        alive: true,
    }
}

pub fn dense_arm() -> ArmProfile {
    profile("dense_retrieval", [0.97, 0.58, 0.40, 0.40], 0.714, 1.0)
}

pub fn query_language_arm() -> ArmProfile {
    profile("query_language", [0.85, 0.80, 0.78, 0.74], 0.796, 15.0)
}

/// Strong graph agent.
pub fn graph_agent_arm() -> ArmProfile {
    profile("graph_agent", [0.90, 0.97, 0.40, 0.50], 0.876, 8.0)
}

/// Weaker graph agent used before the upgrade event.
pub fn legacy_graph_agent_arm() -> ArmProfile {
    profile("graph_agent_legacy", [0.80, 0.60, 0.45, 0.45], 0.709, 8.0)
}

fn base(name: &str, agent: ArmProfile, mixture: Mixture) -> Scenario {
    Scenario {
        name: name.to_string(),
        arms: vec![dense_arm(), query_language_arm(), agent],
        mixture,
        schedule: Vec::new(),
        horizon: DEFAULT_HORIZON,
        seed: 0,
    }
}

pub fn builtin_scenario(name: &str) -> Result<Scenario> {
    let scenario = match name {
        "stationary_webqsp" => base(name, graph_agent_arm(), webqsp_mixture()),
        "stationary_cwq" => base(name, graph_agent_arm(), cwq_mixture()),
        "retriever_upgrade" => {
            let mut s = base(name, legacy_graph_agent_arm(), webqsp_mixture());
            s.schedule.push(ScheduleEvent {
                step: DEFAULT_EVENT_STEP,
                action: EventAction::SwapArmProfile {
                    arm: GRAPH_AGENT,
                    profile: graph_agent_arm(),
                },
            });
            s
        }
        "domain_shift" => {
            let mut s = base(name, graph_agent_arm(), webqsp_mixture());
            s.schedule.push(ScheduleEvent {
                step: DEFAULT_EVENT_STEP,
                action: EventAction::ShiftQueryMixture {
                    mixture: cwq_mixture(),
                },
            });
            s
        }
        "arm_failure" => {
            let mut s = base(name, graph_agent_arm(), webqsp_mixture());
            s.schedule.push(ScheduleEvent {
                step: DEFAULT_EVENT_STEP,
                action: EventAction::KillArm { arm: GRAPH_AGENT },
            });
            s
        }
        other => {
            return Err(Error::config(format!(
                "unknown scenario '{other}'; expected one of {}",
                BUILTIN_SCENARIOS.join(", ")
            )))
        }
    };
    Ok(scenario)
}
