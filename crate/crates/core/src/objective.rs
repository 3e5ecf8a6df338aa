//! Composed training objective: per-objective losses on the encoder output,
//! scalarized by GGI (or a linear weighting) and differentiated back to the
//! network logits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ggi::{
    ggi_aggregate, ggi_subgradient, loss_efficiency, loss_efficiency_grad, loss_hit, loss_recall,
    EfficiencyDistribution, GiniWeights, LossVector,
};
use crate::scalar::{sigmoid, softmax, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Hit,
    Recall,
    Efficiency,
}

/// Output head of the encoder.
///
/// `Softmax` scores the pulled arm with its entry of the softmax distribution.
/// `Sigmoid` scores each arm independently through a sigmoid and normalizes
/// the scores to get the distribution. Both heads share the argmax of the
/// logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreHead {
    #[default]
    Softmax,
    Sigmoid,
}

impl ScoreHead {
    /// Arm distribution `z`.
    pub fn distribution<T: Scalar>(self, logits: &[T]) -> Vec<T> {
        match self {
            ScoreHead::Softmax => softmax(logits),
            ScoreHead::Sigmoid => {
                let s: Vec<T> = logits.iter().map(|&l| sigmoid(l)).collect();
                let total: T = s.iter().copied().sum();
                s.into_iter().map(|v| v / total).collect()
            }
        }
    }

    /// Score of `arm` regressed onto hit and recall.
    pub fn score<T: Scalar>(self, logits: &[T], probs: &[T], arm: usize) -> T {
        match self {
            ScoreHead::Softmax => probs[arm],
            ScoreHead::Sigmoid => sigmoid(logits[arm]),
        }
    }

    /// `∂score/∂logits`.
    fn score_grad<T: Scalar>(self, logits: &[T], probs: &[T], arm: usize) -> Vec<T> {
        let k = logits.len();
        match self {
            ScoreHead::Softmax => (0..k)
                .map(|j| {
                    let delta = if j == arm { T::one() } else { T::zero() };
                    probs[arm] * (delta - probs[j])
                })
                .collect(),
            ScoreHead::Sigmoid => {
                let s = sigmoid(logits[arm]);
                (0..k)
                    .map(|j| if j == arm { s * (T::one() - s) } else { T::zero() })
                    .collect()
            }
        }
    }

    /// Pulls `∂L/∂z` back to `∂L/∂logits`.
    pub fn distribution_backward<T: Scalar>(self, logits: &[T], probs: &[T], grad_z: &[T]) -> Vec<T> {
        match self {
            ScoreHead::Softmax => crate::encoder::softmax_backward(probs, grad_z),
            ScoreHead::Sigmoid => {
                let s: Vec<T> = logits.iter().map(|&l| sigmoid(l)).collect();
                let total: T = s.iter().copied().sum();
                let inner: T = grad_z.iter().zip(probs).map(|(&g, &p)| g * p).sum();
                s.iter()
                    .zip(grad_z)
                    .map(|(&sj, &gj)| (gj - inner) / total * sj * (T::one() - sj))
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Aggregation<T> {
    Ggi(GiniWeights<T>),
    /// Fixed non-negative weights, one per objective.
    Linear(Vec<T>),
}

impl<T: Scalar> Aggregation<T> {
    fn len(&self) -> usize {
        match self {
            Aggregation::Ggi(w) => w.len(),
            Aggregation::Linear(w) => w.len(),
        }
    }
}

/// Observed feedback for the pulled arm. `recall` is `None` when withheld.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservedFeedback<T> {
    pub hit: bool,
    pub recall: Option<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation<T> {
    /// One entry per requested objective, in request order.
    pub components: Vec<T>,
    pub total: T,
    /// `∂total/∂component`.
    pub component_weights: Vec<T>,
    pub grad_logits: Vec<T>,
}

/// Evaluates the objective for one query and returns `∂total/∂logits`.
pub fn evaluate<T: Scalar>(
    logits: &[T],
    arm: usize,
    head: ScoreHead,
    objectives: &[Objective],
    feedback: &ObservedFeedback<T>,
    sigma: &EfficiencyDistribution<T>,
    aggregation: &Aggregation<T>,
) -> Result<Evaluation<T>> {
    let k = logits.len();
    if arm >= k {
        return Err(Error::InvalidArm { arm, arms: k });
    }
    if aggregation.len() != objectives.len() {
        return Err(Error::LengthMismatch {
            expected: objectives.len(),
            actual: aggregation.len(),
        });
    }
    let probs = head.distribution(logits);
    let score = head.score(logits, &probs, arm);
    let score_grad = head.score_grad(logits, &probs, arm);

    let mut components = Vec::with_capacity(objectives.len());
    let mut partials: Vec<Vec<T>> = Vec::with_capacity(objectives.len());
    for objective in objectives {
        match objective {
            Objective::Hit => {
                components.push(loss_hit(score, feedback.hit)?);
                let target = if feedback.hit { T::one() } else { T::zero() };
                let d = T::lit(2.0) * (score - target);
                partials.push(score_grad.iter().map(|&g| d * g).collect());
            }
            Objective::Recall => {
                let recall = feedback
                    .recall
                    .ok_or_else(|| Error::domain("recall objective requested but recall was withheld"))?;
                components.push(loss_recall(score, recall)?);
                let d = T::lit(2.0) * (score - recall);
                partials.push(score_grad.iter().map(|&g| d * g).collect());
            }
            Objective::Efficiency => {
                components.push(loss_efficiency(&probs, sigma)?);
                let gz = loss_efficiency_grad(&probs, sigma)?;
                partials.push(head.distribution_backward(logits, &probs, &gz));
            }
        }
    }

    let (total, component_weights) = match aggregation {
        Aggregation::Ggi(w) => {
            let lv = LossVector::new(components.clone())?;
            (ggi_aggregate(&lv, w)?, ggi_subgradient(&lv, w)?)
        }
        Aggregation::Linear(w) => (
            components.iter().zip(w).map(|(&l, &wi)| l * wi).sum(),
            w.clone(),
        ),
    };

    let mut grad_logits = vec![T::zero(); k];
    for (c, partial) in component_weights.iter().zip(&partials) {
        for (g, &p) in grad_logits.iter_mut().zip(partial) {
            *g += *c * p;
        }
    }

    Ok(Evaluation {
        components,
        total,
        component_weights,
        grad_logits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ggi::efficiency_distribution;

    fn fd_check(head: ScoreHead, objectives: &[Objective], agg: Aggregation<f64>) {
        let logits = [0.3, -0.4, 1.1];
        let sigma = efficiency_distribution(&[1.0, 15.0, 8.0]).unwrap();
        let fb = ObservedFeedback {
            hit: true,
            recall: Some(0.6),
        };
        let eval = evaluate(&logits, 1, head, objectives, &fb, &sigma, &agg).unwrap();
        let h = 1e-6;
        for j in 0..3 {
            let mut up = logits;
            let mut dn = logits;
            up[j] += h;
            dn[j] -= h;
            let fu = evaluate(&up, 1, head, objectives, &fb, &sigma, &agg).unwrap().total;
            let fdn = evaluate(&dn, 1, head, objectives, &fb, &sigma, &agg).unwrap().total;
            let fd = (fu - fdn) / (2.0 * h);
            assert!(
                (fd - eval.grad_logits[j]).abs() < 1e-7,
                "{head:?} j={j}: fd={fd} analytic={}",
                eval.grad_logits[j]
            );
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let all = [Objective::Hit, Objective::Recall, Objective::Efficiency];
        for head in [ScoreHead::Softmax, ScoreHead::Sigmoid] {
            fd_check(head, &all, Aggregation::Ggi(GiniWeights::offline_default()));
            fd_check(
                head,
                &[Objective::Hit, Objective::Efficiency],
                Aggregation::Ggi(GiniWeights::online_default()),
            );
            fd_check(head, &[Objective::Hit], Aggregation::Linear(vec![1.0]));
            fd_check(head, &all, Aggregation::Linear(vec![0.2, 0.5, 0.3]));
        }
    }

    #[test]
    fn withheld_recall_is_an_error() {
        let sigma = efficiency_distribution(&[1.0, 2.0]).unwrap();
        let fb = ObservedFeedback { hit: false, recall: None };
        let err = evaluate(
            &[0.0, 0.0],
            0,
            ScoreHead::Sigmoid,
            &[Objective::Recall],
            &fb,
            &sigma,
            &Aggregation::Linear(vec![1.0]),
        );
        assert!(err.is_err());
    }

    #[test]
    fn aggregation_length_must_match() {
        let sigma = efficiency_distribution(&[1.0, 2.0]).unwrap();
        let fb = ObservedFeedback { hit: true, recall: Some(1.0) };
        let err = evaluate(
            &[0.0, 0.0],
            0,
            ScoreHead::Sigmoid,
            &[Objective::Hit, Objective::Efficiency],
            &fb,
            &sigma,
            &Aggregation::Ggi(GiniWeights::offline_default()),
        );
        assert!(matches!(err, Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn softmax_head_scores_with_distribution_entry() {
        let logits = [0.0f64, 0.0, 0.0];
        let probs = ScoreHead::Softmax.distribution(&logits);
        assert!((ScoreHead::Softmax.score(&logits, &probs, 2) - 1.0 / 3.0).abs() < 1e-15);
        let probs = ScoreHead::Sigmoid.distribution(&logits);
        assert!((ScoreHead::Sigmoid.score(&logits, &probs, 2) - 0.5).abs() < 1e-15);
        assert!((probs[2] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn training_loss_decreases_over_epochs() {
        use crate::encoder::{FeatureHasher, NetworkParams};
        use crate::env::{builtin_scenario, Environment};
        use crate::ggi::GiniWeights;

        let env = Environment::new(builtin_scenario("stationary_webqsp").unwrap(), 21).unwrap();
        let hasher = FeatureHasher::new(64, 0).unwrap();
        let mut rng = env.query_rng(0);
        let data: Vec<_> = (0..500u64)
            .map(|step| {
                let q = env.next_query(&mut rng);
                let arm = (step % 3) as usize;
                let o = env.pull(arm, q.hidden_type, &mut env.outcome_rng(0, step, arm)).unwrap();
                (hasher.featurize::<f64>(&q.text), arm, ObservedFeedback { hit: o.hit, recall: Some(o.recall) })
            })
            .collect();
        let sigma = efficiency_distribution(&[1.0, 15.0, 8.0]).unwrap();
        let objectives = [Objective::Hit, Objective::Recall, Objective::Efficiency];
        let agg = Aggregation::Ggi(GiniWeights::offline_default());
        let mut params = NetworkParams::<f64>::init(3, 64, 64, 3).unwrap();
        let epoch_loss = |p: &NetworkParams<f64>| {
            data.iter()
                .map(|(x, arm, fb)| {
                    let logits = p.forward_pass(x).unwrap().logits;
                    evaluate(&logits, *arm, ScoreHead::Softmax, &objectives, fb, &sigma, &agg).unwrap().total
                })
                .sum::<f64>()
                / data.len() as f64
        };
        let mut losses = vec![epoch_loss(&params)];
        for _ in 0..10 {
            for (x, arm, fb) in &data {
                let logits = params.forward_pass(x).unwrap().logits;
                let eval = evaluate(&logits, *arm, ScoreHead::Softmax, &objectives, fb, &sigma, &agg).unwrap();
                params.backward_logits(x, &eval.grad_logits, 1e-2).unwrap();
            }
            losses.push(epoch_loss(&params));
        }
        for pair in losses.windows(2) {
            assert!(pair[1] <= pair[0] * 1.01, "{losses:?}");
        }
        assert!(losses[10] < losses[0], "{losses:?}");
    }
}
