use super::{Context, DelayTracker, Feedback, ObserveReport, Policy, PolicyKind, Selection, SelectionRecord};
use crate::error::{Error, Result};
use crate::scalar::argmax;
use crate::streams::StreamRng;

/// Disjoint LinUCB on the hit reward with per-arm ridge statistics.
/// `A⁻¹` is maintained by Sherman–Morrison rank-one updates.
#[derive(Debug, Clone)]
pub struct LinUcb {
    dim: usize,
    alpha: f64,
    a: Vec<Vec<f64>>,
    a_inv: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    delays: DelayTracker,
}

fn identity(d: usize) -> Vec<f64> {
    let mut m = vec![0.0; d * d];
    for i in 0..d {
        m[i * d + i] = 1.0;
    }
    m
}

fn mat_vec(m: &[f64], x: &[f64]) -> Vec<f64> {
    let d = x.len();
    (0..d).map(|i| m[i * d..(i + 1) * d].iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl LinUcb {
    pub fn new(arms: usize, dim: usize, alpha: f64, delays: DelayTracker) -> Self {
        Self {
            dim,
            alpha,
            a: vec![identity(dim); arms],
            a_inv: vec![identity(dim); arms],
            b: vec![vec![0.0; dim]; arms],
            delays,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row-major design matrix of `arm`: identity plus the outer products of its contexts.
    pub fn design_matrix(&self, arm: usize) -> &[f64] {
        &self.a[arm]
    }

    pub fn design_inverse(&self, arm: usize) -> &[f64] {
        &self.a_inv[arm]
    }

    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        (0..self.a.len())
            .map(|arm| {
                let theta = mat_vec(&self.a_inv[arm], &self.b[arm]);
                let ax = mat_vec(&self.a_inv[arm], x);
                dot(&theta, x) + self.alpha * dot(x, &ax).max(0.0).sqrt()
            })
            .collect()
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::LengthMismatch {
                expected: self.dim,
                actual: x.len(),
            });
        }
        Ok(())
    }
}

impl Policy for LinUcb {
    fn kind(&self) -> PolicyKind {
        PolicyKind::LinUcb
    }

    fn num_arms(&self) -> usize {
        self.a.len()
    }

    fn select(&mut self, ctx: &Context<'_>, _rng: &mut StreamRng) -> Result<Selection> {
        let x = ctx.features.as_slice();
        self.check_dim(x)?;
        let scores = self.scores(x);
        Ok(Selection::Single(SelectionRecord::exploit(argmax(&scores), ctx.step)))
    }

    fn observe(&mut self, ctx: &Context<'_>, selection: &Selection, feedback: &Feedback) -> Result<ObserveReport> {
        let Selection::Single(rec) = selection else {
            return Err(Error::domain("linucb expects a single-arm selection"));
        };
        let x = ctx.features.as_slice();
        self.check_dim(x)?;
        let (arm, d) = (rec.arm, self.dim);
        let reward = if feedback.hit { 1.0 } else { 0.0 };

        let a = &mut self.a[arm];
        for i in 0..d {
            for j in 0..d {
                a[i * d + j] += x[i] * x[j];
            }
        }
        // The inverse is symmetric, so one matrix-vector product serves both sides.
        let u = mat_vec(&self.a_inv[arm], x);
        let denom = 1.0 + dot(x, &u);
        let inv = &mut self.a_inv[arm];
        for i in 0..d {
            for j in 0..d {
                inv[i * d + j] -= u[i] * u[j] / denom;
            }
        }
        for (bi, &xi) in self.b[arm].iter_mut().zip(x) {
            *bi += reward * xi;
        }
        self.delays.update(arm, feedback.delay)?;
        Ok(ObserveReport::default())
    }

    fn delays(&self) -> &DelayTracker {
        &self.delays
    }

    fn delays_mut(&mut self) -> &mut DelayTracker {
        &mut self.delays
    }
}
