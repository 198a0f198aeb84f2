#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spma_core::{Policy, TabularMdp};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 1e-3).collect();
    let sum: f64 = w.iter().sum();
    w.into_iter().map(|x| x / sum).collect()
}

/// Dense random MDP with full-support initial distribution.
pub fn random_mdp(seed: u64, ns: usize, na: usize, gamma: f64) -> TabularMdp {
    let mut r = rng(seed);
    let mut transition = Vec::with_capacity(ns * na * ns);
    for _ in 0..ns * na {
        transition.extend(simplex(&mut r, ns));
    }
    let reward = (0..ns * na).map(|_| r.gen::<f64>()).collect();
    let rho = simplex(&mut r, ns);
    TabularMdp::new(ns, na, transition, reward, rho, gamma).unwrap()
}

pub fn random_policy(seed: u64, ns: usize, na: usize) -> Policy {
    let mut r = rng(seed);
    let mut probs = Vec::with_capacity(ns * na);
    for _ in 0..ns {
        probs.extend(simplex(&mut r, na));
    }
    Policy::new(ns, na, probs).unwrap()
}

/// s0: a0 stays (r=0), a1 moves to s1 (r=1); s1: a0 stays, a1 moves to s0 (r=0).
pub fn two_state_chain(gamma: f64) -> TabularMdp {
    TabularMdp::new(
        2,
        2,
        vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0],
        vec![0.0, 1.0, 0.0, 0.0],
        vec![1.0, 0.0],
        gamma,
    )
    .unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
