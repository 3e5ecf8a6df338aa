use rand::Rng;

use super::SelectionRecord;
use crate::scalar::argmax;

/// Exploits `argmax(z)` with probability `1 − epsilon`, otherwise picks a
/// uniformly random arm. Both branches consume the same number of draws.
pub fn select_epsilon_greedy<R: Rng + ?Sized>(epsilon: f64, z: &[f64], step: u64, rng: &mut R) -> SelectionRecord {
    let u: f64 = rng.random();
    let random_arm = rng.random_range(0..z.len());
    let explore = u < epsilon;
    SelectionRecord {
        arm: if explore { random_arm } else { argmax(z) },
        was_exploration: explore,
        z: Some(z.to_vec()),
        step,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::streams::stream;

    #[test]
    fn greedy_when_epsilon_zero() {
        let mut rng = stream(&[1]);
        for step in 0..1000 {
            let s = select_epsilon_greedy(0.0, &[0.2, 0.7, 0.1], step, &mut rng);
            assert_eq!(s.arm, 1);
            assert!(!s.was_exploration);
        }
    }

    #[test]
    fn uniform_when_epsilon_one() {
        let mut rng = stream(&[2]);
        let n = 10_000;
        let mut counts = [0usize; 4];
        for step in 0..n {
            let s = select_epsilon_greedy(1.0, &[0.1, 0.6, 0.2, 0.1], step, &mut rng);
            assert!(s.was_exploration);
            counts[s.arm] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 0.25).abs() < 0.02, "{counts:?}");
        }
    }

    #[test]
    fn exploration_rate_matches_epsilon() {
        let mut rng = stream(&[3]);
        let n = 10_000;
        let explored = (0..n)
            .filter(|&step| select_epsilon_greedy(0.2, &[0.3, 0.3, 0.4], step, &mut rng).was_exploration)
            .count();
        // Binomial sd is 0.004, so ±0.02 is a five-sigma band.
        assert!((explored as f64 / n as f64 - 0.2).abs() <= 0.02);
    }

    #[test]
    fn exploitation_arm_is_scale_invariant() {
        let z = [0.1, 0.5, 0.4];
        let total: f64 = z.iter().map(|v| v * 3.7).sum();
        let scaled: Vec<f64> = z.iter().map(|v| v * 3.7 / total).collect();
        let a = select_epsilon_greedy(0.0, &z, 0, &mut stream(&[4]));
        let b = select_epsilon_greedy(0.0, &scaled, 0, &mut stream(&[4]));
        assert_eq!(a.arm, b.arm);
    }
}
