use serde::{Deserialize, Serialize};

/// Hidden category of a synthetic query. Policies never observe it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum QueryType {
    #[serde(rename = "simple_1hop")]
    Simple1Hop,
    #[serde(rename = "multi_hop")]
    MultiHop,
    #[serde(rename = "multi_entity")]
    MultiEntity,
    #[serde(rename = "list_answer")]
    ListAnswer,
}

impl QueryType {
    pub const ALL: [QueryType; 4] = [
        QueryType::Simple1Hop,
        QueryType::MultiHop,
        QueryType::MultiEntity,
        QueryType::ListAnswer,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            QueryType::Simple1Hop => "simple_1hop",
            QueryType::MultiHop => "multi_hop",
            QueryType::MultiEntity => "multi_entity",
            QueryType::ListAnswer => "list_answer",
        }
    }

    /// Tokens a query of this type is composed from.
    pub fn token_pool(self) -> &'static [&'static str] {
        match self {
            QueryType::Simple1Hop => &[
                "who", "founded", "born", "capital", "wrote", "directed", "invented", "located",
                "died", "currency", "language", "height",
            ],
            QueryType::MultiHop => &[
                "whose", "spouse", "mother", "grandfather", "sibling", "successor", "teacher",
                "employer", "hometown", "alma", "mater", "predecessor",
            ],
            QueryType::MultiEntity => &[
                "both", "together", "between", "shared", "common", "jointly", "collaborated",
                "intersection", "alongside", "mutual", "versus", "compared",
            ],
            QueryType::ListAnswer => &[
                "list", "all", "books", "movies", "songs", "albums", "every", "members",
                "countries", "players", "works", "titles",
            ],
        }
    }
}

/// Tokens shared by every query type.
pub const FILLER_TOKENS: &[&str] = &["the", "of", "a", "in", "is", "what", "did", "to"];

/// One value per [`QueryType`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerType<T> {
    pub simple_1hop: T,
    pub multi_hop: T,
    pub multi_entity: T,
    pub list_answer: T,
}

impl<T: Copy> PerType<T> {
    pub fn new(values: [T; 4]) -> Self {
        Self {
            simple_1hop: values[0],
            multi_hop: values[1],
            multi_entity: values[2],
            list_answer: values[3],
        }
    }

    pub fn splat(v: T) -> Self {
        Self::new([v; 4])
    }

    pub fn get(&self, t: QueryType) -> T {
        match t {
            QueryType::Simple1Hop => self.simple_1hop,
            QueryType::MultiHop => self.multi_hop,
            QueryType::MultiEntity => self.multi_entity,
            QueryType::ListAnswer => self.list_answer,
        }
    }

    pub fn to_array(&self) -> [T; 4] {
        [self.simple_1hop, self.multi_hop, self.multi_entity, self.list_answer]
    }
}

/// Query-type mixture weights.
pub type Mixture = PerType<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BetaParams {
    pub a: f64,
    pub b: f64,
}

impl BetaParams {
    /// Beta parameters with the given mean and concentration `a + b`.
    pub fn with_mean(mean: f64, concentration: f64) -> Self {
        Self {
            a: mean * concentration,
            b: (1.0 - mean) * concentration,
        }
    }

    pub fn mean(&self) -> f64 {
        self.a / (self.a + self.b)
    }
}

/// Lognormal delay in seconds; `mu` and `sigma_ln` parametrize the log delay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogNormalParams {
    pub mu: f64,
    pub sigma_ln: f64,
}

impl LogNormalParams {
    /// Parameters whose distribution mean is `mean` seconds.
    pub fn with_mean(mean: f64, sigma_ln: f64) -> Self {
        Self {
            mu: mean.ln() - sigma_ln * sigma_ln / 2.0,
            sigma_ln,
        }
    }

    pub fn mean(&self) -> f64 {
        (self.mu + self.sigma_ln * self.sigma_ln / 2.0).exp()
    }
}

/// Stochastic model of one retrieval backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmProfile {
    pub name: String,
    pub p_hit: PerType<f64>,
    pub recall: PerType<BetaParams>,
    pub delay: LogNormalParams,
    #[serde(default = "default_alive")]
    pub alive: bool,
}

fn default_alive() -> bool {
    true
}

impl ArmProfile {
    /// Hit probability actually realized, accounting for `alive`.
    pub fn effective_p_hit(&self, t: QueryType) -> f64 {
        if self.alive {
            self.p_hit.get(t)
        } else {
            0.0
        }
    }

    pub fn effective_recall_mean(&self, t: QueryType) -> f64 {
        if self.alive {
            self.recall.get(t).mean()
        } else {
            0.0
        }
    }

    /// Marginal hit rate under a mixture.
    pub fn marginal_hit(&self, mixture: &Mixture) -> f64 {
        QueryType::ALL
            .iter()
            .map(|&t| mixture.get(t) * self.effective_p_hit(t))
            .sum()
    }

    pub fn marginal_recall(&self, mixture: &Mixture) -> f64 {
        QueryType::ALL
            .iter()
            .map(|&t| mixture.get(t) * self.effective_recall_mean(t))
            .sum()
    }
}

/// Realized feedback of one pull.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub hit: bool,
    pub recall: f64,
    pub delay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EventAction {
    SwapArmProfile { arm: usize, profile: ArmProfile },
    ShiftQueryMixture { mixture: Mixture },
    KillArm { arm: usize },
    ReviveArm { arm: usize },
}

impl EventAction {
    pub fn kind_name(&self) -> &'static str {
        match self {
            EventAction::SwapArmProfile { .. } => "swap_arm_profile",
            EventAction::ShiftQueryMixture { .. } => "shift_query_mixture",
            EventAction::KillArm { .. } => "kill_arm",
            EventAction::ReviveArm { .. } => "revive_arm",
        }
    }

    /// Arm the event targets, if any.
    pub fn target(&self) -> Option<usize> {
        match self {
            EventAction::SwapArmProfile { arm, .. }
            | EventAction::KillArm { arm }
            | EventAction::ReviveArm { arm } => Some(*arm),
            EventAction::ShiftQueryMixture { .. } => None,
        }
    }
}

/// Change applied before the query of online step `step` is drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEvent {
    pub step: u64,
    #[serde(flatten)]
    pub action: EventAction,
}

/// A complete environment description: initial arms and mixture plus the
/// online schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub arms: Vec<ArmProfile>,
    pub mixture: Mixture,
    #[serde(default)]
    pub schedule: Vec<ScheduleEvent>,
    /// Maximum number of online steps the scenario supports.
    pub horizon: u64,
    /// Salts every random stream of the scenario.
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub text: String,
    pub hidden_type: QueryType,
}
