//! Query encoder: signed feature hashing into a fixed dimension, followed by a
//! one-hidden-layer ReLU network with a softmax head over arms.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use xxhash_rust::xxh3::xxh3_64_with_seed;

use crate::error::{Error, Result};
use crate::scalar::{softmax, Scalar};

pub const DEFAULT_FEATURE_DIM: usize = 64;
pub const DEFAULT_HIDDEN_DIM: usize = 64;
pub const MIN_FEATURE_DIM: usize = 8;

/// Hashed bag-of-tokens features, unit L2 norm unless all-zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FeatureVector<T> {
    values: Vec<T>,
}

impl<T: Scalar> FeatureVector<T> {
    pub fn from_values(values: Vec<T>) -> Self {
        Self { values }
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> T {
        self.values.iter().map(|v| *v * *v).sum::<T>().sqrt()
    }
}

/// Signed feature hasher over lowercased whitespace tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureHasher {
    pub dim: usize,
    pub seed: u64,
}

impl FeatureHasher {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim < MIN_FEATURE_DIM {
            return Err(Error::config(format!(
                "feature dimension must be >= {MIN_FEATURE_DIM}, got {dim}"
            )));
        }
        Ok(Self { dim, seed })
    }

    pub fn featurize<T: Scalar>(&self, text: &str) -> FeatureVector<T> {
        let mut values = vec![T::zero(); self.dim];
        for token in text.split_whitespace() {
            let token = token.to_lowercase();
            let h = xxh3_64_with_seed(token.as_bytes(), self.seed);
            let bucket = (h % self.dim as u64) as usize;
            if h >> 63 == 1 {
                values[bucket] -= T::one();
            } else {
                values[bucket] += T::one();
            }
        }
        let norm = values.iter().map(|v| *v * *v).sum::<T>().sqrt();
        if norm > T::zero() {
            for v in &mut values {
                *v /= norm;
            }
        }
        FeatureVector { values }
    }
}

/// Probability vector over arms produced by [`NetworkParams::forward`].
#[derive(Debug, Clone, PartialEq)]
pub struct ArmDistribution<T> {
    z: Vec<T>,
}

impl<T: Scalar> ArmDistribution<T> {
    pub fn as_slice(&self) -> &[T] {
        &self.z
    }

    pub fn argmax(&self) -> usize {
        crate::scalar::argmax(&self.z)
    }
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardPass<T> {
    pub hidden_pre: Vec<T>,
    pub hidden: Vec<T>,
    pub logits: Vec<T>,
    pub probs: Vec<T>,
}

impl<T: Scalar> ForwardPass<T> {
    pub fn distribution(&self) -> ArmDistribution<T> {
        ArmDistribution {
            z: self.probs.clone(),
        }
    }
}

/// Weights of an `F → H → K` MLP. Matrices are row-major with one row per
/// output unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct NetworkParams<T> {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub arms: usize,
    pub seed: u64,
    pub w1: Vec<T>,
    pub b1: Vec<T>,
    pub w2: Vec<T>,
    pub b2: Vec<T>,
}

/// Outcome of a gradient step.
#[derive(Debug, Clone, PartialEq)]
pub enum GradientStep {
    Applied,
    Skipped { reason: String },
}

impl<T: Scalar> NetworkParams<T> {
    /// Glorot-uniform weights and zero biases from a seeded generator.
    pub fn init(seed: u64, input_dim: usize, hidden_dim: usize, arms: usize) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 || arms == 0 {
            return Err(Error::config(format!(
                "network dimensions must be >= 1, got F={input_dim} H={hidden_dim} K={arms}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut glorot = |fan_in: usize, fan_out: usize| -> Vec<T> {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            (0..fan_in * fan_out)
                .map(|_| T::lit(rng.random_range(-limit..=limit)))
                .collect()
        };
        let w1 = glorot(input_dim, hidden_dim);
        let w2 = glorot(hidden_dim, arms);
        Ok(Self {
            input_dim,
            hidden_dim,
            arms,
            seed,
            w1,
            b1: vec![T::zero(); hidden_dim],
            w2,
            b2: vec![T::zero(); arms],
        })
    }

    pub fn zeros(input_dim: usize, hidden_dim: usize, arms: usize) -> Self {
        Self {
            input_dim,
            hidden_dim,
            arms,
            seed: 0,
            w1: vec![T::zero(); input_dim * hidden_dim],
            b1: vec![T::zero(); hidden_dim],
            w2: vec![T::zero(); hidden_dim * arms],
            b2: vec![T::zero(); arms],
        }
    }

    pub fn num_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    /// Names the first tensor holding a non-finite value.
    pub fn check_finite(&self) -> Result<()> {
        for (name, tensor) in [
            ("w1", &self.w1),
            ("b1", &self.b1),
            ("w2", &self.w2),
            ("b2", &self.b2),
        ] {
            if tensor.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteParameter(name));
            }
        }
        Ok(())
    }

    fn check_input(&self, x: &FeatureVector<T>) -> Result<()> {
        if x.dim() != self.input_dim {
            return Err(Error::LengthMismatch {
                expected: self.input_dim,
                actual: x.dim(),
            });
        }
        Ok(())
    }

    /// Forward pass without validation of parameter finiteness.
    pub fn forward_pass(&self, x: &FeatureVector<T>) -> Result<ForwardPass<T>> {
        self.check_input(x)?;
        let xs = x.as_slice();
        let hidden_pre: Vec<T> = (0..self.hidden_dim)
            .map(|h| {
                let row = &self.w1[h * self.input_dim..(h + 1) * self.input_dim];
                row.iter().zip(xs).map(|(&w, &v)| w * v).sum::<T>() + self.b1[h]
            })
            .collect();
        let hidden: Vec<T> = hidden_pre.iter().map(|&v| v.max(T::zero())).collect();
        let logits: Vec<T> = (0..self.arms)
            .map(|k| {
                let row = &self.w2[k * self.hidden_dim..(k + 1) * self.hidden_dim];
                row.iter().zip(&hidden).map(|(&w, &v)| w * v).sum::<T>() + self.b2[k]
            })
            .collect();
        let probs = softmax(&logits);
        Ok(ForwardPass {
            hidden_pre,
            hidden,
            logits,
            probs,
        })
    }

    /// Arm distribution for `x`.
    pub fn forward(&self, x: &FeatureVector<T>) -> Result<ArmDistribution<T>> {
        self.check_finite()?;
        Ok(self.forward_pass(x)?.distribution())
    }

    /// Full parameter gradient for a given `∂Loss/∂logits`, shaped like `self`.
    #[allow(clippy::needless_range_loop)]
    pub fn gradient(&self, x: &FeatureVector<T>, grad_logits: &[T]) -> Result<NetworkParams<T>> {
        if grad_logits.len() != self.arms {
            return Err(Error::LengthMismatch {
                expected: self.arms,
                actual: grad_logits.len(),
            });
        }
        let pass = self.forward_pass(x)?;
        let mut grad = NetworkParams::zeros(self.input_dim, self.hidden_dim, self.arms);
        grad.seed = self.seed;
        let mut grad_hidden = vec![T::zero(); self.hidden_dim];
        for k in 0..self.arms {
            let gk = grad_logits[k];
            grad.b2[k] = gk;
            for h in 0..self.hidden_dim {
                grad.w2[k * self.hidden_dim + h] = gk * pass.hidden[h];
                grad_hidden[h] += gk * self.w2[k * self.hidden_dim + h];
            }
        }
        let xs = x.as_slice();
        for h in 0..self.hidden_dim {
            if pass.hidden_pre[h] <= T::zero() {
                continue;
            }
            let gh = grad_hidden[h];
            grad.b1[h] = gh;
            let row = &mut grad.w1[h * self.input_dim..(h + 1) * self.input_dim];
            for (g, &v) in row.iter_mut().zip(xs) {
                *g = gh * v;
            }
        }
        Ok(grad)
    }

    /// One SGD step from a gradient on the pre-softmax logits.
    pub fn backward_logits(&mut self, x: &FeatureVector<T>, grad_logits: &[T], lr: T) -> Result<GradientStep> {
        if let Some(i) = grad_logits.iter().position(|g| !g.is_finite()) {
            return Ok(GradientStep::Skipped {
                reason: format!("non-finite gradient at logit {i}"),
            });
        }
        let grad = self.gradient(x, grad_logits)?;
        if grad.check_finite().is_err() {
            return Ok(GradientStep::Skipped {
                reason: "non-finite parameter gradient".to_string(),
            });
        }
        self.axpy(-lr, &grad);
        Ok(GradientStep::Applied)
    }

    /// One SGD step from `∂Loss/∂z`, backpropagated through the softmax.
    pub fn backward_update(&mut self, x: &FeatureVector<T>, grad_z: &[T], lr: T) -> Result<GradientStep> {
        if grad_z.len() != self.arms {
            return Err(Error::LengthMismatch {
                expected: self.arms,
                actual: grad_z.len(),
            });
        }
        if let Some(i) = grad_z.iter().position(|g| !g.is_finite()) {
            return Ok(GradientStep::Skipped {
                reason: format!("non-finite gradient at z[{i}]"),
            });
        }
        let z = self.forward_pass(x)?.probs;
        let grad_logits = softmax_backward(&z, grad_z);
        self.backward_logits(x, &grad_logits, lr)
    }

    /// Adds `alpha` times `other` in place.
    pub fn axpy(&mut self, alpha: T, other: &NetworkParams<T>) {
        for (dst, src) in [
            (&mut self.w1, &other.w1),
            (&mut self.b1, &other.b1),
            (&mut self.w2, &other.w2),
            (&mut self.b2, &other.b2),
        ] {
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += alpha * s;
            }
        }
    }

    /// Parameters flattened in `w1, b1, w2, b2` order.
    pub fn to_flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.num_params());
        out.extend_from_slice(&self.w1);
        out.extend_from_slice(&self.b1);
        out.extend_from_slice(&self.w2);
        out.extend_from_slice(&self.b2);
        out
    }

    pub fn set_flat(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::LengthMismatch {
                expected: self.num_params(),
                actual: flat.len(),
            });
        }
        let mut rest = flat;
        for dst in [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2] {
            let (head, tail) = rest.split_at(dst.len());
            dst.copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }
}

/// Pulls a gradient with respect to the softmax output back to the logits.
pub fn softmax_backward<T: Scalar>(z: &[T], grad_z: &[T]) -> Vec<T> {
    let dot: T = z.iter().zip(grad_z).map(|(&a, &b)| a * b).sum();
    z.iter().zip(grad_z).map(|(&zk, &gk)| zk * (gk - dot)).collect()
}

/// Header of a model snapshot file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    #[serde(rename = "F")]
    pub input_dim: usize,
    #[serde(rename = "H")]
    pub hidden_dim: usize,
    #[serde(rename = "K")]
    pub arms: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SnapshotFile {
    header: SnapshotHeader,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
}

/// Writes parameters as JSON: a `{F, H, K, seed}` header plus the four tensors.
pub fn save_snapshot<T: Scalar>(params: &NetworkParams<T>, path: &Path) -> Result<()> {
    let conv = |v: &[T]| v.iter().map(|x| x.as_f64()).collect::<Vec<_>>();
    let file = SnapshotFile {
        header: SnapshotHeader {
            input_dim: params.input_dim,
            hidden_dim: params.hidden_dim,
            arms: params.arms,
            seed: params.seed,
        },
        w1: conv(&params.w1),
        b1: conv(&params.b1),
        w2: conv(&params.w2),
        b2: conv(&params.b2),
    };
    let text = serde_json::to_string(&file)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_snapshot<T: Scalar>(path: &Path) -> Result<NetworkParams<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: SnapshotFile = serde_json::from_str(&text)?;
    let SnapshotHeader {
        input_dim: f,
        hidden_dim: h,
        arms: k,
        seed,
    } = file.header;
    for (name, len, expected) in [
        ("w1", file.w1.len(), f * h),
        ("b1", file.b1.len(), h),
        ("w2", file.w2.len(), h * k),
        ("b2", file.b2.len(), k),
    ] {
        if len != expected {
            return Err(Error::config(format!(
                "snapshot tensor {name} has {len} entries, header implies {expected}"
            )));
        }
    }
    let conv = |v: Vec<f64>| v.into_iter().map(T::lit).collect::<Vec<_>>();
    let params = NetworkParams {
        input_dim: f,
        hidden_dim: h,
        arms: k,
        seed,
        w1: conv(file.w1),
        b1: conv(file.b1),
        w2: conv(file.w2),
        b2: conv(file.b2),
    };
    params.check_finite()?;
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hasher(dim: usize) -> FeatureHasher {
        FeatureHasher::new(dim, 7).unwrap()
    }

    #[test]
    fn featurize_is_deterministic_and_normalized() {
        let a: FeatureVector<f64> = hasher(64).featurize("List all books by Mark Twain");
        let b: FeatureVector<f64> = hasher(64).featurize("List all books by Mark Twain");
        assert_eq!(a, b);
        assert!((a.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn featurize_empty_is_zero() {
        let v: FeatureVector<f64> = hasher(16).featurize("");
        assert_eq!(v.dim(), 16);
        assert!(v.as_slice().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn featurize_respects_dimension() {
        let a: FeatureVector<f64> = hasher(16).featurize("list all books");
        let b: FeatureVector<f64> = hasher(64).featurize("list all books");
        assert_eq!(a.dim(), 16);
        assert_eq!(b.dim(), 64);
    }

    #[test]
    fn featurize_ignores_order_and_case() {
        let a: FeatureVector<f64> = hasher(64).featurize("who wrote Hamlet");
        let b: FeatureVector<f64> = hasher(64).featurize("hamlet WROTE  who");
        assert_eq!(a, b);
    }

    #[test]
    fn hasher_rejects_tiny_dimension() {
        assert!(FeatureHasher::new(4, 0).is_err());
    }

    #[test]
    fn zero_params_give_uniform() {
        let p = NetworkParams::<f64>::zeros(16, 8, 4);
        let x = hasher(16).featurize("anything at all");
        let z = p.forward(&x).unwrap();
        for v in z.as_slice() {
            assert!((v - 0.25).abs() < 1e-15);
        }
        assert_eq!(z.argmax(), 0);
    }

    #[test]
    fn init_is_seeded() {
        let a = NetworkParams::<f64>::init(3, 16, 8, 3).unwrap();
        let b = NetworkParams::<f64>::init(3, 16, 8, 3).unwrap();
        let c = NetworkParams::<f64>::init(4, 16, 8, 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.w1, c.w1);
        assert!(a.b1.iter().chain(&a.b2).all(|v| *v == 0.0));
        let limit = (6.0f64 / 24.0).sqrt();
        assert!(a.w1.iter().all(|w| w.abs() <= limit));
        assert!(NetworkParams::<f64>::init(0, 0, 8, 3).is_err());
    }

    #[test]
    fn forward_rejects_non_finite_params() {
        let mut p = NetworkParams::<f64>::init(1, 16, 8, 3).unwrap();
        p.w2[5] = f64::NAN;
        let x = hasher(16).featurize("a b c");
        let err = p.forward(&x).unwrap_err();
        assert!(err.to_string().contains("w2"));
    }

    #[test]
    fn forward_rejects_wrong_dimension() {
        let p = NetworkParams::<f64>::init(1, 16, 8, 3).unwrap();
        let x = hasher(32).featurize("a b c");
        assert!(p.forward(&x).is_err());
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = NetworkParams::<f64>::init(9, 16, 8, 3).unwrap();
        let before = p.clone();
        let x = hasher(16).featurize("who founded it");
        assert_eq!(p.backward_update(&x, &[0.0; 3], 0.1).unwrap(), GradientStep::Applied);
        assert_eq!(p, before);
    }

    #[test]
    fn non_finite_gradient_is_skipped() {
        let mut p = NetworkParams::<f64>::init(9, 16, 8, 3).unwrap();
        let before = p.clone();
        let x = hasher(16).featurize("who founded it");
        let step = p.backward_update(&x, &[0.0, f64::INFINITY, 0.0], 0.1).unwrap();
        assert!(matches!(step, GradientStep::Skipped { .. }));
        assert_eq!(p, before);
    }

    #[test]
    fn identical_updates_are_deterministic() {
        let x = hasher(16).featurize("list every album");
        let mut a = NetworkParams::<f64>::init(2, 16, 8, 3).unwrap();
        let mut b = a.clone();
        a.backward_update(&x, &[0.3, -0.2, 0.1], 0.05).unwrap();
        b.backward_update(&x, &[0.3, -0.2, 0.1], 0.05).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gradient_through_softmax_matches_central_differences() {
        // A linear loss in z has a constant gradient.
        let x = hasher(16).featurize("whose spouse founded the company");
        let params = NetworkParams::<f64>::init(11, 16, 8, 3).unwrap();
        let c = [0.7, -1.3, 0.4];
        let z = params.forward_pass(&x).unwrap().probs;
        let grad = params.gradient(&x, &softmax_backward(&z, &c)).unwrap().to_flat();
        let loss = |p: &NetworkParams<f64>| -> f64 {
            let z = p.forward_pass(&x).unwrap().probs;
            z.iter().zip(&c).map(|(a, b)| a * b).sum()
        };
        let base = params.to_flat();
        let h = 1e-6;
        let mut probe = params.clone();
        for i in (0..base.len()).step_by(7) {
            let mut up = base.clone();
            up[i] += h;
            probe.set_flat(&up).unwrap();
            let lu = loss(&probe);
            let mut dn = base.clone();
            dn[i] -= h;
            probe.set_flat(&dn).unwrap();
            let ld = loss(&probe);
            let fd = (lu - ld) / (2.0 * h);
            assert!((fd - grad[i]).abs() < 1e-7, "param {i}: fd={fd} analytic={}", grad[i]);
        }
    }

    #[test]
    fn snapshot_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let p = NetworkParams::<f64>::init(5, 16, 8, 3).unwrap();
        save_snapshot(&p, &path).unwrap();
        let q: NetworkParams<f64> = load_snapshot(&path).unwrap();
        assert_eq!(p, q);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"F\":16"));
    }

    #[test]
    fn single_precision_forward() {
        let p = NetworkParams::<f32>::init(5, 16, 8, 3).unwrap();
        let x: FeatureVector<f32> = hasher(16).featurize("who wrote it");
        let z = p.forward(&x).unwrap();
        assert!((z.as_slice().iter().sum::<f32>() - 1.0).abs() < 1e-5);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn forward_output_lies_on_the_simplex(seed in any::<u64>(), text in "[a-z ]{0,60}", arms in 2usize..6) {
                let params = NetworkParams::<f64>::init(seed, 16, 8, arms).unwrap();
                let z = params.forward(&hasher(16).featurize(&text)).unwrap();
                let total: f64 = z.as_slice().iter().sum();
                prop_assert_eq!(z.as_slice().len(), arms);
                prop_assert!((total - 1.0).abs() < 1e-12);
                prop_assert!(z.as_slice().iter().all(|&p| (0.0..=1.0).contains(&p)));
            }
        }
    }
}
