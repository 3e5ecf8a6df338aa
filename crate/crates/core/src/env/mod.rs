//! Stochastic simulator of retrieval backends and the query stream.

pub mod builtin;
mod sim;
mod types;
mod validate;

pub use builtin::{builtin_scenario, BUILTIN_SCENARIOS};
pub use sim::{Environment, MAX_DELAY_S, MIN_DELAY_S};
pub use types::{
    ArmProfile, BetaParams, EventAction, LogNormalParams, Mixture, Outcome, PerType, Query,
    QueryType, Scenario, ScheduleEvent, FILLER_TOKENS,
};
pub use validate::scenario_violations;
