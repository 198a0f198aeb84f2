//! Finite MDPs and the exact dynamic-programming routines every other module
//! treats as ground truth: policy evaluation, discounted occupancy, and value
//! iteration.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg;
use crate::policy::Policy;

/// Tolerance on transition and initial-distribution row sums.
pub const DIST_SUM_TOL: f64 = 1e-12;
/// Actions whose one-step lookahead is within this of the best are treated as tied.
pub const GREEDY_TIE_TOL: f64 = 1e-9;

/// A finite discounted MDP. `transition` is `P[s][a][s']` flattened as
/// `(s * A + a) * S + s'`; `reward` is `r[s][a]` flattened as `s * A + a`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    pub num_states: usize,
    pub num_actions: usize,
    pub transition: Vec<f64>,
    pub reward: Vec<f64>,
    pub initial_dist: Vec<f64>,
    pub discount: f64,
}

impl TabularMdp {
    /// Builds and validates an MDP.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        initial_dist: Vec<f64>,
        discount: f64,
    ) -> Result<Self> {
        let mdp = Self {
            num_states,
            num_actions,
            transition,
            reward,
            initial_dist,
            discount,
        };
        validate_mdp(&mdp)?;
        Ok(mdp)
    }

    /// `P(. | s, a)`.
    pub fn next_dist(&self, s: usize, a: usize) -> &[f64] {
        let n = self.num_states;
        let base = (s * self.num_actions + a) * n;
        &self.transition[base..base + n]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.num_actions + a]
    }

    /// Smallest entry of the initial distribution.
    pub fn rho_min(&self) -> f64 {
        self.initial_dist.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `r(s,a) + gamma * sum_s' P(s'|s,a) v(s')` for every pair.
    pub fn lookahead(&self, v: &[f64]) -> Vec<f64> {
        let (ns, na) = (self.num_states, self.num_actions);
        let mut q = vec![0.0; ns * na];
        for s in 0..ns {
            for a in 0..na {
                let ev: f64 = self.next_dist(s, a).iter().zip(v).map(|(p, x)| p * x).sum();
                q[s * na + a] = self.reward(s, a) + self.discount * ev;
            }
        }
        q
    }

    fn check_policy(&self, pi: &Policy) -> Result<()> {
        if pi.num_states() != self.num_states || pi.num_actions() != self.num_actions {
            return Err(Error::Dimension(format!(
                "policy is {}x{}, MDP is {}x{}",
                pi.num_states(),
                pi.num_actions(),
                self.num_states,
                self.num_actions
            )));
        }
        Ok(())
    }

    /// `I - gamma * P_pi` (row-major) and `r_pi`.
    fn policy_system(&self, pi: &Policy) -> (Vec<f64>, Vec<f64>) {
        let (ns, na) = (self.num_states, self.num_actions);
        let mut m = vec![0.0; ns * ns];
        let mut r_pi = vec![0.0; ns];
        for s in 0..ns {
            m[s * ns + s] = 1.0;
            for a in 0..na {
                let p = pi.prob(s, a);
                if p == 0.0 {
                    continue;
                }
                r_pi[s] += p * self.reward(s, a);
                for (sp, &t) in self.next_dist(s, a).iter().enumerate() {
                    m[s * ns + sp] -= self.discount * p * t;
                }
            }
        }
        (m, r_pi)
    }
}

fn invalid(field: &'static str, index: usize, detail: alloc::string::String) -> Error {
    Error::InvalidMdp {
        field,
        index,
        detail,
    }
}

/// Checks every structural invariant and reports the first violation.
pub fn validate_mdp(mdp: &TabularMdp) -> Result<()> {
    let (ns, na) = (mdp.num_states, mdp.num_actions);
    if ns == 0 {
        return Err(invalid("num_states", 0, "must be positive".into()));
    }
    if na == 0 {
        return Err(invalid("num_actions", 0, "must be positive".into()));
    }
    if !(0.0..1.0).contains(&mdp.discount) {
        return Err(invalid("discount", 0, format!("{} not in [0, 1)", mdp.discount)));
    }
    if mdp.transition.len() != ns * na * ns {
        return Err(invalid(
            "transition",
            mdp.transition.len(),
            format!("expected {} entries", ns * na * ns),
        ));
    }
    if mdp.reward.len() != ns * na {
        return Err(invalid("reward", mdp.reward.len(), format!("expected {} entries", ns * na)));
    }
    if mdp.initial_dist.len() != ns {
        return Err(invalid(
            "initial_dist",
            mdp.initial_dist.len(),
            format!("expected {ns} entries"),
        ));
    }
    for (i, row) in mdp.transition.chunks_exact(ns).enumerate() {
        if let Some(k) = row.iter().position(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(invalid("transition", i * ns + k, format!("negative entry {}", row[k])));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > DIST_SUM_TOL {
            return Err(invalid(
                "transition",
                i * ns,
                format!("row (s={}, a={}) sums to {sum}", i / na, i % na),
            ));
        }
    }
    if let Some(i) = mdp.reward.iter().position(|r| !(0.0..=1.0).contains(r)) {
        return Err(invalid("reward", i, format!("{} not in [0, 1]", mdp.reward[i])));
    }
    if let Some(i) = mdp.initial_dist.iter().position(|p| !(*p >= 0.0) || !p.is_finite()) {
        return Err(invalid("initial_dist", i, format!("negative entry {}", mdp.initial_dist[i])));
    }
    let sum: f64 = mdp.initial_dist.iter().sum();
    if (sum - 1.0).abs() > DIST_SUM_TOL {
        return Err(invalid("initial_dist", 0, format!("sums to {sum}")));
    }
    Ok(())
}

/// Exact `V`, `Q`, `A` of a fixed policy. `q` and `adv` are `S x A` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub v: Vec<f64>,
    pub q: Vec<f64>,
    pub adv: Vec<f64>,
}

/// Discounted state-occupancy measure `d^pi`.
#[derive(Debug, Clone, PartialEq)]
pub struct Occupancy {
    pub d: Vec<f64>,
}

/// Solves `(I - gamma P_pi) V = r_pi` by dense elimination, then derives `Q`
/// and `A = Q - V`.
pub fn policy_evaluate(mdp: &TabularMdp, pi: &Policy) -> Result<EvalResult> {
    mdp.check_policy(pi)?;
    let (mut m, mut v) = mdp.policy_system(pi);
    linalg::solve_in_place(&mut m, &mut v, mdp.num_states)?;
    let q = mdp.lookahead(&v);
    let na = mdp.num_actions;
    let adv = q.iter().enumerate().map(|(i, &qi)| qi - v[i / na]).collect();
    Ok(EvalResult { v, q, adv })
}

/// `d^T = (1 - gamma) rho^T (I - gamma P_pi)^{-1}`.
pub fn occupancy(mdp: &TabularMdp, pi: &Policy) -> Result<Occupancy> {
    mdp.check_policy(pi)?;
    if mdp.discount == 0.0 {
        return Ok(Occupancy {
            d: mdp.initial_dist.clone(),
        });
    }
    let (m, _) = mdp.policy_system(pi);
    let rhs: Vec<f64> = mdp
        .initial_dist
        .iter()
        .map(|p| (1.0 - mdp.discount) * p)
        .collect();
    let mut d = linalg::solve_transposed(&m, &rhs, mdp.num_states)?;
    for x in d.iter_mut() {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
    Ok(Occupancy { d })
}

/// `J = <rho, v>`.
pub fn expected_return(mdp: &TabularMdp, v: &[f64]) -> f64 {
    mdp.initial_dist.iter().zip(v).map(|(p, x)| p * x).sum()
}

/// Greedy policy with respect to `q`, uniform over actions within
/// [`GREEDY_TIE_TOL`] of the row maximum.
pub fn greedy_policy(num_states: usize, num_actions: usize, q: &[f64]) -> Policy {
    let mut probs = vec![0.0; num_states * num_actions];
    for s in 0..num_states {
        let row = &q[s * num_actions..(s + 1) * num_actions];
        let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let ties = row.iter().filter(|&&x| x >= best - GREEDY_TIE_TOL).count();
        for (a, &x) in row.iter().enumerate() {
            if x >= best - GREEDY_TIE_TOL {
                probs[s * num_actions + a] = 1.0 / ties as f64;
            }
        }
    }
    Policy::new(num_states, num_actions, probs).expect("greedy rows are distributions")
}

fn bellman_residual(mdp: &TabularMdp, v: &[f64]) -> (Vec<f64>, f64) {
    let na = mdp.num_actions;
    let q = mdp.lookahead(v);
    let tv: Vec<f64> = q
        .chunks_exact(na)
        .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let res = tv.iter().zip(v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    (tv, res)
}

/// Iterates the Bellman optimality operator from zero until
/// `||T V - V||_inf <= tol`, returning `V` and its greedy policy.
///
/// If `tol` is below what floating point can resolve at this scale the
/// iteration stops once the residual has not improved for 1000 sweeps.
pub fn value_iteration(mdp: &TabularMdp, tol: f64) -> (Vec<f64>, Policy) {
    assert!(tol > 0.0, "value_iteration needs a positive tolerance");
    let mut v = vec![0.0; mdp.num_states];
    let mut best = f64::INFINITY;
    let mut stalled = 0usize;
    loop {
        let (tv, res) = bellman_residual(mdp, &v);
        if res <= tol {
            break;
        }
        if res < best {
            best = res;
            stalled = 0;
        } else {
            stalled += 1;
            if stalled > 1000 {
                break;
            }
        }
        v = tv;
    }
    let q = mdp.lookahead(&v);
    let pi = greedy_policy(mdp.num_states, mdp.num_actions, &q);
    (v, pi)
}

/// Optimal values to solver precision: value iteration to locate a
/// near-optimal greedy policy, then policy iteration with exact evaluation
/// until no action improves on the current values.
pub fn optimal_values(mdp: &TabularMdp) -> Result<(Vec<f64>, Policy)> {
    let (_, mut pi) = value_iteration(mdp, 1e-8);
    let mut eval = policy_evaluate(mdp, &pi)?;
    for _ in 0..1000 {
        let scale = eval.v.iter().fold(1.0, |m: f64, x| m.max(x.abs()));
        let improvable = (0..mdp.num_states).any(|s| {
            (0..mdp.num_actions).any(|a| eval.adv[s * mdp.num_actions + a] > 1e-13 * scale)
        });
        if !improvable {
            break;
        }
        pi = greedy_policy(mdp.num_states, mdp.num_actions, &eval.q);
        eval = policy_evaluate(mdp, &pi)?;
    }
    Ok((eval.v, pi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_state(r: f64, gamma: f64) -> TabularMdp {
        TabularMdp::new(1, 1, vec![1.0], vec![r], vec![1.0], gamma).unwrap()
    }

    /// s0: a0 stays (r=0), a1 moves to s1 (r=1); s1: a0 stays, a1 moves to s0, both r=0.
    fn two_state_chain(gamma: f64) -> TabularMdp {
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

    #[test]
    fn single_state_geometric_series() {
        let mdp = single_state(0.5, 0.9);
        let e = policy_evaluate(&mdp, &Policy::uniform(1, 1)).unwrap();
        assert!((e.v[0] - 5.0).abs() < 1e-12);
        assert!((e.q[0] - 5.0).abs() < 1e-12);
        assert!(e.adv[0].abs() < 1e-12);
        let (v, _) = value_iteration(&mdp, 1e-10);
        assert!((v[0] - 5.0).abs() < 1e-8);
        assert_eq!(occupancy(&mdp, &Policy::uniform(1, 1)).unwrap().d, vec![1.0]);
    }

    #[test]
    fn two_state_chain_matches_fixed_point_iteration() {
        let mdp = two_state_chain(0.5);
        let pi = Policy::uniform(2, 2);
        let e = policy_evaluate(&mdp, &pi).unwrap();
        // Oracle: iterate V <- r_pi + gamma P_pi V 10,000 times.
        let mut v = [0.0f64; 2];
        for _ in 0..10_000 {
            let q = mdp.lookahead(&v);
            v = [0.5 * (q[0] + q[1]), 0.5 * (q[2] + q[3])];
        }
        let q = mdp.lookahead(&v);
        for s in 0..2 {
            assert!((e.v[s] - v[s]).abs() < 1e-9);
            for a in 0..2 {
                assert!((e.q[s * 2 + a] - q[s * 2 + a]).abs() < 1e-9);
                assert!((e.adv[s * 2 + a] - (q[s * 2 + a] - v[s])).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn occupancy_with_zero_discount_is_rho() {
        let mut mdp = two_state_chain(0.5);
        mdp.discount = 0.0;
        mdp.initial_dist = vec![0.25, 0.75];
        let d = occupancy(&mdp, &Policy::uniform(2, 2)).unwrap();
        assert_eq!(d.d, vec![0.25, 0.75]);
    }

    #[test]
    fn constant_reward_optimal_value() {
        let mut mdp = two_state_chain(0.8);
        mdp.reward = vec![0.3; 4];
        let (v, _) = value_iteration(&mdp, 1e-12);
        for x in v {
            assert!((x - 0.3 / 0.2).abs() < 1e-10);
        }
    }

    #[test]
    fn expected_return_examples() {
        let mut mdp = two_state_chain(0.5);
        assert_eq!(expected_return(&mdp, &[3.0, 7.0]), 3.0);
        mdp.initial_dist = vec![0.5, 0.5];
        assert_eq!(expected_return(&mdp, &[0.0, 1.0]), 0.5);
    }

    #[test]
    fn validation_reports_first_violation() {
        let mut mdp = two_state_chain(0.5);
        mdp.transition[0] = 0.9;
        assert!(matches!(
            validate_mdp(&mdp),
            Err(Error::InvalidMdp { field: "transition", index: 0, .. })
        ));
        let mut mdp = two_state_chain(0.5);
        mdp.reward[1] = 1.5;
        assert!(matches!(
            validate_mdp(&mdp),
            Err(Error::InvalidMdp { field: "reward", index: 1, .. })
        ));
        let mut mdp = two_state_chain(0.5);
        mdp.discount = 1.0;
        assert!(matches!(validate_mdp(&mdp), Err(Error::InvalidMdp { field: "discount", .. })));
        let mut mdp = two_state_chain(0.5);
        mdp.initial_dist = vec![0.5, 0.4];
        assert!(matches!(
            validate_mdp(&mdp),
            Err(Error::InvalidMdp { field: "initial_dist", .. })
        ));
    }

    #[test]
    fn optimal_values_agree_with_value_iteration() {
        let mdp = two_state_chain(0.9);
        let (vs, pi) = optimal_values(&mdp).unwrap();
        let (vi, _) = value_iteration(&mdp, 1e-12);
        for s in 0..2 {
            assert!((vs[s] - vi[s]).abs() < 1e-10);
        }
        let e = policy_evaluate(&mdp, &pi).unwrap();
        for s in 0..2 {
            for a in 0..2 {
                if pi.prob(s, a) > 0.0 {
                    assert!(e.adv[s * 2 + a].abs() <= 1e-9);
                }
            }
        }
    }
}
