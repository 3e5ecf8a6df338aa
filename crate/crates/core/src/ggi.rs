//! Generalized Gini Index aggregation and the per-objective loss terms.
//!
//! The aggregate is an ordered weighted sum: loss components are sorted in
//! non-increasing order and paired with strictly decreasing positive weights,
//! so the worst-performing objective always receives the largest weight.
//!
//! The efficiency target is a softmax over inverse delays, so faster arms
//! get more mass.
//!
//! Equal components are ordered by ascending original index, which makes the
//! permutation (and therefore the subgradient) deterministic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Entries of `z` and `sigma` are clamped to at least this value (then
/// renormalized) before the KL term is evaluated.
pub const PROBABILITY_FLOOR: f64 = 1e-8;

/// Strictly decreasing, strictly positive weight vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<T>", into = "Vec<T>")]
#[serde(bound = "T: Scalar")]
pub struct GiniWeights<T> {
    weights: Vec<T>,
}

impl<T: Scalar> GiniWeights<T> {
    pub fn new(weights: Vec<T>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::domain("gini weights must be non-empty"));
        }
        for (i, w) in weights.iter().enumerate() {
            if !w.is_finite() || *w <= T::zero() {
                return Err(Error::domain(format!(
                    "gini weight {i} must be finite and > 0, got {w}"
                )));
            }
        }
        for (i, pair) in weights.windows(2).enumerate() {
            if pair[0] <= pair[1] {
                return Err(Error::domain(format!(
                    "gini weights must be strictly decreasing: w[{i}]={} <= w[{}]={}",
                    pair[0],
                    i + 1,
                    pair[1]
                )));
            }
        }
        Ok(Self { weights })
    }

    /// `[0.5, 0.3, 0.2]` over (hit, recall, efficiency).
    pub fn offline_default() -> Self {
        Self::new(vec![T::lit(0.5), T::lit(0.3), T::lit(0.2)]).expect("valid default")
    }

    /// `[0.7, 0.3]` over (hit, efficiency).
    pub fn online_default() -> Self {
        Self::new(vec![T::lit(0.7), T::lit(0.3)]).expect("valid default")
    }

    pub fn as_slice(&self) -> &[T] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn sum(&self) -> T {
        self.weights.iter().copied().sum()
    }
}

impl<T: Scalar> TryFrom<Vec<T>> for GiniWeights<T> {
    type Error = Error;

    fn try_from(value: Vec<T>) -> Result<Self> {
        Self::new(value)
    }
}

impl<T> From<GiniWeights<T>> for Vec<T> {
    fn from(value: GiniWeights<T>) -> Self {
        value.weights
    }
}

/// Non-negative, finite loss components.
#[derive(Debug, Clone, PartialEq)]
pub struct LossVector<T> {
    components: Vec<T>,
}

impl<T: Scalar> LossVector<T> {
    pub fn new(components: Vec<T>) -> Result<Self> {
        for (i, l) in components.iter().enumerate() {
            if !l.is_finite() || *l < T::zero() {
                return Err(Error::domain(format!(
                    "loss component {i} must be finite and >= 0, got {l}"
                )));
            }
        }
        Ok(Self { components })
    }

    pub fn as_slice(&self) -> &[T] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }
}

/// Per-arm efficiency target derived from mean delays.
#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencyDistribution<T> {
    probs: Vec<T>,
}

impl<T: Scalar> EfficiencyDistribution<T> {
    pub fn as_slice(&self) -> &[T] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// Softmax over inverse delays: faster arms receive more mass.
pub fn efficiency_distribution<T: Scalar>(delays: &[T]) -> Result<EfficiencyDistribution<T>> {
    if delays.len() < 2 {
        return Err(Error::domain(format!(
            "efficiency distribution needs at least 2 arms, got {}",
            delays.len()
        )));
    }
    for (arm, d) in delays.iter().enumerate() {
        if !d.is_finite() || *d <= T::zero() {
            return Err(Error::domain(format!(
                "delay of arm {arm} must be finite and > 0, got {d}"
            )));
        }
    }
    let inverse: Vec<T> = delays.iter().map(|d| d.recip()).collect();
    Ok(EfficiencyDistribution {
        probs: crate::scalar::softmax(&inverse),
    })
}

/// Permutation that sorts `losses` in non-increasing order, ties by index.
pub fn descending_order<T: Scalar>(losses: &[T]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..losses.len()).collect();
    // Stable sort keeps ascending index among equal components.
    order.sort_by(|&a, &b| {
        losses[b]
            .partial_cmp(&losses[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    order
}

fn check_lengths<T>(losses: &LossVector<T>, w: &GiniWeights<T>) -> Result<()> {
    if losses.components.len() != w.weights.len() {
        return Err(Error::LengthMismatch {
            expected: w.weights.len(),
            actual: losses.components.len(),
        });
    }
    Ok(())
}

pub fn ggi_aggregate<T: Scalar>(losses: &LossVector<T>, w: &GiniWeights<T>) -> Result<T> {
    check_lengths(losses, w)?;
    let l = losses.as_slice();
    Ok(descending_order(l)
        .into_iter()
        .zip(w.as_slice())
        .map(|(j, &wi)| wi * l[j])
        .sum())
}

/// Component `j` receives the weight of its rank under the sort used by
/// [`ggi_aggregate`].
pub fn ggi_subgradient<T: Scalar>(losses: &LossVector<T>, w: &GiniWeights<T>) -> Result<Vec<T>> {
    check_lengths(losses, w)?;
    let mut grad = vec![T::zero(); losses.len()];
    for (rank, j) in descending_order(losses.as_slice()).into_iter().enumerate() {
        grad[j] = w.as_slice()[rank];
    }
    Ok(grad)
}

fn check_unit_interval<T: Scalar>(name: &str, v: T) -> Result<()> {
    if !(v >= T::zero() && v <= T::one()) {
        return Err(Error::domain(format!("{name} must lie in [0, 1], got {v}")));
    }
    Ok(())
}

/// Squared error between the selected arm's score and the observed hit.
pub fn loss_hit<T: Scalar>(selected_score: T, hit: bool) -> Result<T> {
    check_unit_interval("selected score", selected_score)?;
    let target = if hit { T::one() } else { T::zero() };
    Ok((selected_score - target).powi(2))
}

/// Squared error between the selected arm's score and the observed recall.
pub fn loss_recall<T: Scalar>(selected_score: T, recall: T) -> Result<T> {
    check_unit_interval("selected score", selected_score)?;
    check_unit_interval("recall", recall)?;
    Ok((selected_score - recall).powi(2))
}

/// Clamps every entry to [`PROBABILITY_FLOOR`] and renormalizes.
pub fn floor_probabilities<T: Scalar>(p: &[T]) -> Result<Vec<T>> {
    let floor = T::lit(PROBABILITY_FLOOR);
    for (i, v) in p.iter().enumerate() {
        if !v.is_finite() || *v < T::zero() {
            return Err(Error::domain(format!(
                "probability entry {i} must be finite and >= 0, got {v}"
            )));
        }
    }
    let clamped: Vec<T> = p.iter().map(|&v| v.max(floor)).collect();
    let total: T = clamped.iter().copied().sum();
    let out: Vec<T> = clamped.into_iter().map(|v| v / total).collect();
    if let Some(i) = out.iter().position(|v| *v <= T::zero()) {
        return Err(Error::domain(format!("probability entry {i} is zero after flooring")));
    }
    Ok(out)
}

fn check_same_len<T>(z: &[T], sigma: &EfficiencyDistribution<T>) -> Result<()> {
    if z.len() != sigma.probs.len() {
        return Err(Error::LengthMismatch {
            expected: sigma.probs.len(),
            actual: z.len(),
        });
    }
    Ok(())
}

/// `KL(z ‖ sigma)` in nats, after flooring both arguments.
pub fn loss_efficiency<T: Scalar>(z: &[T], sigma: &EfficiencyDistribution<T>) -> Result<T> {
    check_same_len(z, sigma)?;
    let q = floor_probabilities(z)?;
    let p = floor_probabilities(sigma.as_slice())?;
    Ok(q.iter().zip(&p).map(|(&qk, &pk)| qk * (qk / pk).ln()).sum())
}

/// Gradient of [`loss_efficiency`] with respect to the raw (unfloored) `z`.
///
/// Entries clamped by the floor receive zero gradient.
pub fn loss_efficiency_grad<T: Scalar>(z: &[T], sigma: &EfficiencyDistribution<T>) -> Result<Vec<T>> {
    check_same_len(z, sigma)?;
    let floor = T::lit(PROBABILITY_FLOOR);
    let q = floor_probabilities(z)?;
    let p = floor_probabilities(sigma.as_slice())?;
    let total: T = z.iter().map(|&v| v.max(floor)).sum();
    let g: Vec<T> = q
        .iter()
        .zip(&p)
        .map(|(&qk, &pk)| (qk / pk).ln() + T::one())
        .collect();
    let mean: T = q.iter().zip(&g).map(|(&qi, &gi)| qi * gi).sum();
    Ok(z.iter()
        .zip(&g)
        .map(|(&zk, &gk)| {
            if zk > floor {
                (gk - mean) / total
            } else {
                T::zero()
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lv(v: &[f64]) -> LossVector<f64> {
        LossVector::new(v.to_vec()).unwrap()
    }

    fn gw(v: &[f64]) -> GiniWeights<f64> {
        GiniWeights::new(v.to_vec()).unwrap()
    }

    #[test]
    fn weights_must_strictly_decrease() {
        assert!(GiniWeights::new(vec![0.5, 0.5]).is_err());
        assert!(GiniWeights::new(vec![0.3, 0.5]).is_err());
        assert!(GiniWeights::new(vec![0.5, 0.0]).is_err());
        assert!(GiniWeights::<f64>::new(vec![]).is_err());
        assert!(GiniWeights::new(vec![0.5, 0.3, 0.2]).is_ok());
    }

    #[test]
    fn weights_deserialize_with_validation() {
        let ok: GiniWeights<f64> = serde_json::from_str("[0.7, 0.3]").unwrap();
        assert_eq!(ok.as_slice(), &[0.7, 0.3]);
        assert!(serde_json::from_str::<GiniWeights<f64>>("[0.3, 0.7]").is_err());
    }

    #[test]
    fn loss_vector_rejects_negative_and_nan() {
        assert!(LossVector::new(vec![0.1, -0.1]).is_err());
        assert!(LossVector::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn uniform_delays_give_uniform_distribution() {
        let s = efficiency_distribution::<f64>(&[2.0, 2.0, 2.0]).unwrap();
        for p in s.as_slice() {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn efficiency_matches_high_precision_value() {
        // e / (e + e^{1/15}), evaluated with 40-digit arithmetic.
        let s = efficiency_distribution::<f64>(&[1.0, 15.0]).unwrap();
        assert!((s.as_slice()[0] - 0.717_751_056_957_74).abs() < 1e-12);
        assert!((s.as_slice()[1] - 0.282_248_943_042_26).abs() < 1e-12);
    }

    #[test]
    fn efficiency_is_anti_monotone() {
        let s = efficiency_distribution::<f64>(&[0.5, 1.0, 4.0]).unwrap();
        let p = s.as_slice();
        assert!(p[0] > p[1] && p[1] > p[2]);
    }

    #[test]
    fn efficiency_rejects_bad_delays_naming_arm() {
        let err = efficiency_distribution::<f64>(&[1.0, 0.0, 3.0]).unwrap_err();
        assert!(err.to_string().contains("arm 1"), "{err}");
        let err = efficiency_distribution::<f64>(&[1.0, 2.0, f64::INFINITY]).unwrap_err();
        assert!(err.to_string().contains("arm 2"), "{err}");
        assert!(efficiency_distribution::<f64>(&[1.0]).is_err());
    }

    #[test]
    fn efficiency_survives_tiny_delays() {
        let s = efficiency_distribution::<f64>(&[1e-4, 1.0]).unwrap();
        assert!(s.as_slice().iter().all(|p| p.is_finite()));
        assert!(s.as_slice()[0] > 0.999);
    }

    #[test]
    fn aggregate_hand_examples() {
        let v = ggi_aggregate(&lv(&[0.5, 0.2, 0.8]), &gw(&[0.5, 0.3, 0.2])).unwrap();
        assert!((v - 0.59).abs() < 1e-12);
        let before = ggi_aggregate(&lv(&[0.2, 0.8]), &gw(&[0.6, 0.4])).unwrap();
        let after = ggi_aggregate(&lv(&[0.5, 0.5]), &gw(&[0.6, 0.4])).unwrap();
        assert!((before - 0.56).abs() < 1e-12);
        assert!((after - 0.50).abs() < 1e-12);
    }

    #[test]
    fn aggregate_of_constant_vector() {
        let w = gw(&[0.5, 0.3, 0.2]);
        let v = ggi_aggregate(&lv(&[0.4, 0.4, 0.4]), &w).unwrap();
        assert!((v - 0.4 * w.sum()).abs() < 1e-12);
    }

    #[test]
    fn aggregate_length_mismatch() {
        let err = ggi_aggregate(&lv(&[0.1, 0.2]), &gw(&[0.5, 0.3, 0.2])).unwrap_err();
        assert!(matches!(err, Error::LengthMismatch { expected: 3, actual: 2 }));
        assert!(ggi_subgradient(&lv(&[0.1]), &gw(&[0.5, 0.3])).is_err());
    }

    #[test]
    fn subgradient_examples() {
        let g = ggi_subgradient(&lv(&[0.5, 0.2, 0.8]), &gw(&[0.5, 0.3, 0.2])).unwrap();
        assert_eq!(g, vec![0.3, 0.2, 0.5]);
        let g = ggi_subgradient(&lv(&[0.4, 0.4]), &gw(&[0.6, 0.4])).unwrap();
        assert_eq!(g, vec![0.6, 0.4]);
    }

    #[test]
    fn squared_losses() {
        assert_eq!(loss_hit::<f64>(1.0, true).unwrap(), 0.0);
        assert!((loss_hit::<f64>(0.9, true).unwrap() - 0.01).abs() < 1e-12);
        assert!((loss_hit::<f64>(0.3, false).unwrap() - 0.09).abs() < 1e-12);
        assert_eq!(loss_recall::<f64>(0.5, 0.5).unwrap(), 0.0);
        assert_eq!(loss_recall::<f64>(1.0, 0.0).unwrap(), 1.0);
        assert!((loss_recall::<f64>(0.75, 0.5).unwrap() - 0.0625).abs() < 1e-12);
        assert!(loss_hit::<f64>(1.2, true).is_err());
        assert!(loss_recall::<f64>(0.5, -0.1).is_err());
    }

    #[test]
    fn kl_examples() {
        let half = efficiency_distribution::<f64>(&[3.0, 3.0]).unwrap();
        assert!(loss_efficiency::<f64>(&[0.5, 0.5], &half).unwrap().abs() < 1e-12);
        // 0.7 ln 1.4 + 0.3 ln 0.6, 40-digit reference.
        let v = loss_efficiency::<f64>(&[0.7, 0.3], &half).unwrap();
        assert!((v - 0.082_282_878_505_051_85).abs() < 1e-12);
        assert!(loss_efficiency::<f64>(&[0.5, 0.5, 0.0], &half).is_err());
        assert!(loss_efficiency::<f64>(&[0.5, f64::NAN], &half).is_err());
    }

    #[test]
    fn kl_floor_keeps_zero_entries_finite() {
        let s = efficiency_distribution::<f64>(&[1.0, 2.0]).unwrap();
        let v = loss_efficiency::<f64>(&[1.0, 0.0], &s).unwrap();
        assert!(v.is_finite() && v > 0.0);
    }

    #[test]
    fn kl_gradient_matches_central_differences() {
        let s = efficiency_distribution::<f64>(&[1.0, 15.0, 8.0]).unwrap();
        let z = [0.2, 0.5, 0.3];
        let g = loss_efficiency_grad(&z, &s).unwrap();
        let h = 1e-6;
        for k in 0..3 {
            let mut up = z;
            let mut dn = z;
            up[k] += h;
            dn[k] -= h;
            let fd = (loss_efficiency(&up, &s).unwrap() - loss_efficiency(&dn, &s).unwrap()) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-7, "k={k} fd={fd} g={}", g[k]);
        }
    }

    #[test]
    fn works_in_single_precision() {
        let w = GiniWeights::<f32>::offline_default();
        let l = LossVector::new(vec![0.5f32, 0.2, 0.8]).unwrap();
        assert!((ggi_aggregate(&l, &w).unwrap() - 0.59).abs() < 1e-6);
        let s = efficiency_distribution(&[1.0f32, 15.0]).unwrap();
        assert!((s.as_slice()[0] - 0.717_751).abs() < 1e-6);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn weights(d: usize) -> impl Strategy<Value = GiniWeights<f64>> {
            proptest::collection::vec(0.01f64..1.0, d).prop_filter_map("ties", |mut w| {
                w.sort_by(|a, b| b.total_cmp(a));
                GiniWeights::new(w).ok()
            })
        }

        fn case() -> impl Strategy<Value = (Vec<f64>, GiniWeights<f64>)> {
            (2usize..7).prop_flat_map(|d| (proptest::collection::vec(0.0f64..2.0, d), weights(d)))
        }

        proptest! {
            #[test]
            fn transfers_toward_equality_never_increase((l, w) in case(), i in 0usize..6, j in 0usize..6, frac in 0.0f64..1.0) {
                let (i, j) = (i % l.len(), j % l.len());
                prop_assume!(l[i] < l[j]);
                let eps = frac * (l[j] - l[i]);
                let mut moved = l.clone();
                moved[i] += eps;
                moved[j] -= eps;
                let before = ggi_aggregate(&lv(&l), &w).unwrap();
                let after = ggi_aggregate(&lv(&moved), &w).unwrap();
                prop_assert!(after <= before + 1e-12);
            }

            #[test]
            fn strictly_worse_vectors_aggregate_higher((l, w) in case(), k in 0usize..6, bump in 1e-6f64..1.0) {
                let mut worse = l.clone();
                worse[k % l.len()] += bump;
                prop_assert!(ggi_aggregate(&lv(&l), &w).unwrap() < ggi_aggregate(&lv(&worse), &w).unwrap());
            }

            #[test]
            fn aggregate_ignores_component_order((l, w) in case(), rot in 0usize..6) {
                let mut r = l.clone();
                r.rotate_left(rot % l.len());
                r.reverse();
                let a = ggi_aggregate(&lv(&l), &w).unwrap();
                let b = ggi_aggregate(&lv(&r), &w).unwrap();
                prop_assert!((a - b).abs() < 1e-12);
            }

            #[test]
            fn subgradient_matches_directional_differences((l, w) in case(), dir in proptest::collection::vec(-1.0f64..1.0, 6)) {
                let mut sorted = l.clone();
                sorted.sort_by(f64::total_cmp);
                prop_assume!(sorted.windows(2).all(|p| p[1] - p[0] > 1e-3));
                prop_assume!(l.iter().all(|&v| v > 1e-3));
                let g = ggi_subgradient(&lv(&l), &w).unwrap();
                let h = 1e-5;
                let shift = |s: f64| -> Vec<f64> { l.iter().zip(&dir).map(|(v, d)| v + s * d).collect() };
                let fd = (ggi_aggregate(&lv(&shift(h)), &w).unwrap() - ggi_aggregate(&lv(&shift(-h)), &w).unwrap()) / (2.0 * h);
                let analytic: f64 = g.iter().zip(&dir).map(|(a, b)| a * b).sum();
                prop_assert!((fd - analytic).abs() < 1e-7);
            }

            #[test]
            fn efficiency_is_a_distribution(delays in proptest::collection::vec(0.01f64..100.0, 2..8)) {
                let s = efficiency_distribution(&delays).unwrap();
                let total: f64 = s.as_slice().iter().sum();
                prop_assert!((total - 1.0).abs() < 1e-12);
                prop_assert!(s.as_slice().iter().all(|&p| p > 0.0));
                for i in 0..delays.len() {
                    for j in 0..delays.len() {
                        if delays[i] < delays[j] {
                            prop_assert!(s.as_slice()[i] >= s.as_slice()[j]);
                        }
                    }
                }
            }

            #[test]
            fn kl_is_non_negative(
                raw in proptest::collection::vec(0.0f64..1.0, 2..6),
                delays in proptest::collection::vec(0.1f64..30.0, 6),
            ) {
                let total: f64 = raw.iter().sum();
                prop_assume!(total > 1e-6);
                let z: Vec<f64> = raw.iter().map(|v| v / total).collect();
                let sigma = efficiency_distribution(&delays[..z.len()]).unwrap();
                prop_assert!(loss_efficiency(&z, &sigma).unwrap() >= -1e-12);
            }
        }
    }
}
