//! Row-stochastic policies, unconstrained logits, and the softmax link
//! between them.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Entries in `[-NEG_CLAMP_TOL, 0)` are clamped to zero; anything lower is an error.
pub const NEG_CLAMP_TOL: f64 = 1e-12;
/// Allowed deviation of a row sum from one.
pub const ROW_SUM_TOL: f64 = 1e-10;

/// Numerically stable softmax of `z` into `out` (max-subtracted).
pub fn softmax_into(z: &[f64], out: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &zi) in out.iter_mut().zip(z) {
        *o = libm::exp(zi - max);
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// `log(sum(exp(z)))`, max-subtracted.
pub fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = z.iter().map(|&zi| libm::exp(zi - max)).sum();
    max + libm::log(sum)
}

/// A stochastic policy `pi[s][a]`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

impl Policy {
    /// Validates and takes ownership of `probs` (length `S * A`). Entries
    /// within `NEG_CLAMP_TOL` below zero are clamped to zero.
    pub fn new(num_states: usize, num_actions: usize, mut probs: Vec<f64>) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::Dimension(format!(
                "policy needs at least one state and action, got {num_states}x{num_actions}"
            )));
        }
        if probs.len() != num_states * num_actions {
            return Err(Error::Dimension(format!(
                "policy has {} entries, expected {}",
                probs.len(),
                num_states * num_actions
            )));
        }
        for s in 0..num_states {
            let row = &mut probs[s * num_actions..(s + 1) * num_actions];
            let mut sum = 0.0;
            for p in row.iter_mut() {
                if !p.is_finite() || *p < -NEG_CLAMP_TOL {
                    return Err(Error::InvalidPolicy {
                        row: s,
                        detail: format!("entry {p:e} is not a probability"),
                    });
                }
                if *p < 0.0 {
                    *p = 0.0;
                }
                sum += *p;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidPolicy {
                    row: s,
                    detail: format!("row sums to {sum}"),
                });
            }
        }
        Ok(Self {
            num_states,
            num_actions,
            probs,
        })
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_states,
            num_actions,
            probs: vec![1.0 / num_actions as f64; num_states * num_actions],
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.num_actions..(s + 1) * self.num_actions]
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.num_actions + a]
    }

    /// Log-probabilities as logits. Zero entries map to `-inf`.
    pub fn to_logits(&self) -> Logits {
        Logits {
            num_states: self.num_states,
            num_actions: self.num_actions,
            z: self.probs.iter().map(|&p| libm::log(p)).collect(),
        }
    }

    /// Largest total-variation distance between corresponding rows.
    pub fn max_tv_distance(&self, other: &Policy) -> f64 {
        (0..self.num_states)
            .map(|s| {
                0.5 * self
                    .row(s)
                    .iter()
                    .zip(other.row(s))
                    .map(|(p, q)| (p - q).abs())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }
}

/// Unconstrained logits `z[s][a]`; `pi(.|s) = softmax(z[s])`.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits {
    num_states: usize,
    num_actions: usize,
    z: Vec<f64>,
}

impl Logits {
    pub fn new(num_states: usize, num_actions: usize, z: Vec<f64>) -> Result<Self> {
        if z.len() != num_states * num_actions || num_states == 0 || num_actions == 0 {
            return Err(Error::Dimension(format!(
                "logits have {} entries, expected {}x{}",
                z.len(),
                num_states,
                num_actions
            )));
        }
        Ok(Self {
            num_states,
            num_actions,
            z,
        })
    }

    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_states,
            num_actions,
            z: vec![0.0; num_states * num_actions],
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn values(&self) -> &[f64] {
        &self.z
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.z[s * self.num_actions..(s + 1) * self.num_actions]
    }

    pub fn to_policy(&self) -> Policy {
        let mut probs = vec![0.0; self.z.len()];
        for (zr, pr) in self
            .z
            .chunks_exact(self.num_actions)
            .zip(probs.chunks_exact_mut(self.num_actions))
        {
            softmax_into(zr, pr);
        }
        Policy {
            num_states: self.num_states,
            num_actions: self.num_actions,
            probs,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_survives_huge_logits() {
        let mut out = [0.0; 3];
        softmax_into(&[1000.0, 1000.0, -1000.0], &mut out);
        assert!((out[0] - 0.5).abs() < 1e-15);
        assert_eq!(out[2], 0.0);
        assert!((log_sum_exp(&[1000.0, 1000.0]) - (1000.0 + core::f64::consts::LN_2)).abs() < 1e-12);
    }

    #[test]
    fn tiny_negative_entries_are_clamped() {
        let p = Policy::new(1, 2, vec![1.0 + 5e-13, -5e-13]).unwrap();
        assert_eq!(p.prob(0, 1), 0.0);
    }

    #[test]
    fn rejects_non_simplex_rows() {
        assert!(matches!(
            Policy::new(1, 2, vec![0.6, 0.6]),
            Err(Error::InvalidPolicy { row: 0, .. })
        ));
        assert!(matches!(
            Policy::new(1, 2, vec![1.1, -0.1]),
            Err(Error::InvalidPolicy { row: 0, .. })
        ));
        assert!(matches!(Policy::new(2, 2, vec![0.5; 3]), Err(Error::Dimension(_))));
    }

    #[test]
    fn logits_round_trip_through_policy() {
        let p = Policy::new(2, 3, vec![0.2, 0.3, 0.5, 0.1, 0.1, 0.8]).unwrap();
        let back = p.to_logits().to_policy();
        assert!(p.max_tv_distance(&back) < 1e-15);
    }
}
