use super::{
    select_epsilon_greedy, Context, DelayTracker, Feedback, ObserveReport, Policy, PolicyKind, Selection,
    SelectionRecord,
};
use crate::encoder::{FeatureVector, GradientStep, NetworkParams};
use crate::error::{Error, Result};
use crate::ggi::{efficiency_distribution, GiniWeights};
use crate::learning::{Phase, PhaseConfig};
use crate::objective::{evaluate, Aggregation, Objective, ObservedFeedback, ScoreHead};
use crate::scalar::{argmax, softmax};
use crate::streams::StreamRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeepVariant {
    /// GGI over the phase objectives.
    GgiMoMab,
    /// Hit objective only.
    SoDeepMab,
    /// Linear scalarization with softmax-parameterized learnable weights.
    MoMab,
    /// Trained like `GgiMoMab` offline, frozen and greedy online.
    StaticRouter,
}

/// Exploits a frozen network: `argmax` of its distribution, no exploration.
pub fn select_static_router(params: &NetworkParams<f64>, x: &FeatureVector<f64>, step: u64) -> Result<SelectionRecord> {
    let z = params.forward(x)?;
    Ok(SelectionRecord {
        arm: z.argmax(),
        was_exploration: false,
        z: Some(z.as_slice().to_vec()),
        step,
    })
}

/// Neural ε-greedy policy over the encoder's arm distribution.
#[derive(Debug, Clone)]
pub struct DeepPolicy {
    variant: DeepVariant,
    params: NetworkParams<f64>,
    head: ScoreHead,
    default_epsilon: f64,
    epsilon: f64,
    learning_rate: f64,
    objectives: Vec<Objective>,
    ggi_weights: Option<GiniWeights<f64>>,
    /// Logits of the learnable scalarization weights.
    mix_logits: Vec<f64>,
    frozen: bool,
    delays: DelayTracker,
}

impl DeepPolicy {
    pub fn new(
        variant: DeepVariant,
        params: NetworkParams<f64>,
        head: ScoreHead,
        epsilon: f64,
        delays: DelayTracker,
    ) -> Self {
        let offline = PhaseConfig::offline(0);
        let mut policy = Self {
            variant,
            params,
            head,
            default_epsilon: epsilon,
            epsilon,
            learning_rate: offline.learning_rate,
            objectives: Vec::new(),
            ggi_weights: None,
            mix_logits: Vec::new(),
            frozen: false,
            delays,
        };
        policy
            .begin_phase(&offline)
            .expect("default offline configuration is valid");
        policy
    }

    pub fn variant(&self) -> DeepVariant {
        self.variant
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn objectives(&self) -> &[Objective] {
        &self.objectives
    }

    /// Current scalarization weights of the learnable variant.
    pub fn mixture_weights(&self) -> Vec<f64> {
        softmax(&self.mix_logits)
    }

    /// Arm distribution under the policy's output head.
    pub fn distribution(&self, x: &FeatureVector<f64>) -> Result<Vec<f64>> {
        let pass = self.params.forward_pass(x)?;
        Ok(self.head.distribution(&pass.logits))
    }

    fn aggregation(&self) -> Aggregation<f64> {
        match self.variant {
            DeepVariant::SoDeepMab => Aggregation::Linear(vec![1.0]),
            DeepVariant::MoMab => Aggregation::Linear(self.mixture_weights()),
            DeepVariant::GgiMoMab | DeepVariant::StaticRouter => {
                Aggregation::Ggi(self.ggi_weights.clone().expect("set by begin_phase"))
            }
        }
    }
}

impl Policy for DeepPolicy {
    fn kind(&self) -> PolicyKind {
        match self.variant {
            DeepVariant::GgiMoMab => PolicyKind::GgiMoMab,
            DeepVariant::SoDeepMab => PolicyKind::SoDeepMab,
            DeepVariant::MoMab => PolicyKind::MoMab,
            DeepVariant::StaticRouter => PolicyKind::StaticRouter,
        }
    }

    fn num_arms(&self) -> usize {
        self.params.arms
    }

    fn select(&mut self, ctx: &Context<'_>, rng: &mut StreamRng) -> Result<Selection> {
        let z = self.distribution(ctx.features)?;
        if self.frozen {
            return Ok(Selection::Single(SelectionRecord {
                arm: argmax(&z),
                was_exploration: false,
                z: Some(z),
                step: ctx.step,
            }));
        }
        Ok(Selection::Single(select_epsilon_greedy(self.epsilon, &z, ctx.step, rng)))
    }

    fn observe(&mut self, ctx: &Context<'_>, selection: &Selection, feedback: &Feedback) -> Result<ObserveReport> {
        let Selection::Single(rec) = selection else {
            return Err(Error::domain("deep policies expect a single-arm selection"));
        };
        let mut report = ObserveReport::default();
        if !self.frozen {
            let sigma = efficiency_distribution(&self.delays.filled_estimates())?;
            let pass = self.params.forward_pass(ctx.features)?;
            let aggregation = self.aggregation();
            let eval = evaluate(
                &pass.logits,
                rec.arm,
                self.head,
                &self.objectives,
                &ObservedFeedback {
                    hit: feedback.hit,
                    recall: feedback.recall,
                },
                &sigma,
                &aggregation,
            )?;
            report.losses = Some((
                self.objectives.iter().copied().zip(eval.components.iter().copied()).collect(),
                eval.total,
            ));
            if !eval.total.is_finite() || eval.grad_logits.iter().any(|g| !g.is_finite()) {
                report.warning = Some(format!("non-finite loss at step {}; update skipped", ctx.step));
            } else {
                if let GradientStep::Skipped { reason } =
                    self.params
                        .backward_logits(ctx.features, &eval.grad_logits, self.learning_rate)?
                {
                    report.warning = Some(reason);
                }
                if let Aggregation::Linear(w) = &aggregation {
                    if self.variant == DeepVariant::MoMab {
                        // Softmax mixing weights: each logit moves with its component's excess over the total.
                        for (i, v) in self.mix_logits.iter_mut().enumerate() {
                            *v -= self.learning_rate * w[i] * (eval.components[i] - eval.total);
                        }
                    }
                }
            }
        }
        self.delays.update(rec.arm, feedback.delay)?;
        Ok(report)
    }

    fn begin_phase(&mut self, phase: &PhaseConfig) -> Result<()> {
        if phase.weights.len() != phase.objectives.len() {
            return Err(Error::config(format!(
                "{} weights given for {} objectives",
                phase.weights.len(),
                phase.objectives.len()
            )));
        }
        self.learning_rate = phase.learning_rate;
        self.epsilon = phase.epsilon.unwrap_or(self.default_epsilon);
        self.frozen = self.variant == DeepVariant::StaticRouter && phase.phase == Phase::Online;
        match self.variant {
            DeepVariant::SoDeepMab => {
                self.objectives = vec![Objective::Hit];
            }
            DeepVariant::MoMab => {
                if phase.weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
                    return Err(Error::config("mo_mab initial weights must be positive"));
                }
                self.objectives = phase.objectives.clone();
                self.mix_logits = phase.weights.iter().map(|w| w.ln()).collect();
            }
            DeepVariant::GgiMoMab | DeepVariant::StaticRouter => {
                self.objectives = phase.objectives.clone();
                self.ggi_weights = Some(GiniWeights::new(phase.weights.clone())?);
            }
        }
        Ok(())
    }

    fn delays(&self) -> &DelayTracker {
        &self.delays
    }

    fn delays_mut(&mut self) -> &mut DelayTracker {
        &mut self.delays
    }

    fn network(&self) -> Option<&NetworkParams<f64>> {
        Some(&self.params)
    }

    fn set_network(&mut self, params: NetworkParams<f64>) -> Result<()> {
        if params.arms != self.params.arms || params.input_dim != self.params.input_dim {
            return Err(Error::config(format!(
                "model shape (F={}, K={}) does not match the run (F={}, K={})",
                params.input_dim, params.arms, self.params.input_dim, self.params.arms
            )));
        }
        params.check_finite()?;
        self.params = params;
        Ok(())
    }
}
