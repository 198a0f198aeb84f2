//! Seeded random problem instances for the verifier.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spma_core::fa::FeatureMap;
use spma_core::{Policy, TabularMdp};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A point in the interior of the simplex.
pub fn simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 1e-3).collect();
    let sum: f64 = w.iter().sum();
    w.into_iter().map(|x| x / sum).collect()
}

/// Dense random MDP with rewards in `[0, 1)` and full-support `rho`.
pub fn random_mdp(seed: u64, ns: usize, na: usize, gamma: f64) -> TabularMdp {
    let mut r = rng(seed);
    let mut transition = Vec::with_capacity(ns * na * ns);
    for _ in 0..ns * na {
        transition.extend(simplex(&mut r, ns));
    }
    let reward = (0..ns * na).map(|_| r.gen::<f64>()).collect();
    let rho = simplex(&mut r, ns);
    TabularMdp::new(ns, na, transition, reward, rho, gamma).expect("random MDP is valid by construction")
}

pub fn random_policy(seed: u64, ns: usize, na: usize) -> Policy {
    let mut r = rng(seed);
    let probs = (0..ns).flat_map(|_| simplex(&mut r, na)).collect();
    Policy::new(ns, na, probs).expect("rows lie on the simplex")
}

/// Dense features with entries uniform on `[-1, 1)`.
pub fn random_features(seed: u64, rows: usize, dim: usize) -> FeatureMap {
    let mut r = rng(seed);
    let x = (0..rows * dim).map(|_| r.gen_range(-1.0..1.0)).collect();
    FeatureMap::new(rows, dim, x).expect("dimensions match")
}

pub fn random_vector(seed: u64, dim: usize, scale: f64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..dim).map(|_| scale * r.gen_range(-1.0..1.0)).collect()
}

/// `s0`: action 0 stays (reward 0), action 1 moves to `s1` (reward 1);
/// `s1`: action 0 stays, action 1 moves back to `s0` (reward 0).
pub fn two_state_chain(gamma: f64) -> TabularMdp {
    TabularMdp::new(
        2,
        2,
        vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0],
        vec![0.0, 1.0, 0.0, 0.0],
        vec![1.0, 0.0],
        gamma,
    )
    .expect("chain is valid")
}
