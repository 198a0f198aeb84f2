//! Closed-form per-iteration updates (SPMA, NPG, SPG, tabular MDPO) and the
//! exact-advantage driver that iterates them.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::diagnostics::{gap_quantities, IterationRecord, Method, Trajectory, BOUND_SLACK, DEFAULT_TIE_TOL};
use crate::error::{Error, Result};
use crate::mdp::{expected_return, optimal_values, policy_evaluate, EvalResult, TabularMdp};
use crate::policy::{softmax_into, Logits, Policy, NEG_CLAMP_TOL};

/// Tolerance on `sum_a pi(a|s) adv(s,a) = 0`.
pub const ADV_MEAN_TOL: f64 = 1e-8;
/// Tolerance on `softmax(z) = pi` for SPG inputs.
pub const LOGIT_MATCH_TOL: f64 = 1e-9;

/// A stochastic multi-armed bandit with deterministic mean rewards in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditInstance {
    rewards: Vec<f64>,
}

impl BanditInstance {
    pub fn new(rewards: Vec<f64>) -> Result<Self> {
        if rewards.is_empty() {
            return Err(Error::Dimension("a bandit needs at least one arm".into()));
        }
        if let Some(i) = rewards.iter().position(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::InvalidMdp {
                field: "reward",
                index: i,
                detail: format!("{} is outside [0, 1]", rewards[i]),
            });
        }
        Ok(Self { rewards })
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn num_arms(&self) -> usize {
        self.rewards.len()
    }

    /// Index of the first arm with the largest reward.
    pub fn best_arm(&self) -> usize {
        let mut best = 0;
        for (i, &r) in self.rewards.iter().enumerate() {
            if r > self.rewards[best] {
                best = i;
            }
        }
        best
    }

    pub fn best_reward(&self) -> f64 {
        self.rewards[self.best_arm()]
    }

    /// `min_{a != a*} r(a*) - r(a)`; `None` for a single arm.
    pub fn min_gap(&self) -> Option<f64> {
        let b = self.best_arm();
        let rb = self.rewards[b];
        self.rewards
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != b)
            .map(|(_, &r)| rb - r)
            .reduce(f64::min)
    }

    /// The bandit as a one-state MDP with `gamma = 0`.
    pub fn to_mdp(&self) -> TabularMdp {
        let k = self.rewards.len();
        TabularMdp::new(1, k, vec![1.0; k], self.rewards.clone(), vec![1.0], 0.0)
            .expect("bandit rewards were validated")
    }
}

fn check_shape(pi: &Policy, len: usize, what: &str) -> Result<()> {
    if pi.probs().len() != len {
        return Err(Error::Dimension(format!(
            "{what} has {len} entries, policy has {}",
            pi.probs().len()
        )));
    }
    Ok(())
}

fn bandit_policy(pi: &Policy, r: &[f64]) -> Result<()> {
    if pi.num_states() != 1 {
        return Err(Error::Dimension(format!(
            "bandit policies have one state, got {}",
            pi.num_states()
        )));
    }
    check_shape(pi, r.len(), "reward vector")
}

/// Rejects entries below `-NEG_CLAMP_TOL` as a too-large step, then builds
/// the policy (which clamps the tolerated negatives).
fn finish_step(pi: &Policy, next: Vec<f64>) -> Result<Policy> {
    let na = pi.num_actions();
    if let Some(i) = next.iter().position(|&p| p < -NEG_CLAMP_TOL) {
        return Err(Error::StepSizeTooLarge {
            state: i / na,
            action: i % na,
            value: next[i],
        });
    }
    Policy::new(pi.num_states(), na, next)
}

/// `pi'(a) = pi(a) (1 + eta (r(a) - <pi, r>))`.
pub fn spma_bandit_step(pi: &Policy, r: &[f64], eta: f64) -> Result<Policy> {
    bandit_policy(pi, r)?;
    let p = pi.row(0);
    let mean: f64 = p.iter().zip(r).map(|(a, b)| a * b).sum();
    let next = p
        .iter()
        .zip(r)
        .map(|(&pa, &ra)| pa * (1.0 + eta * (ra - mean)))
        .collect();
    finish_step(pi, next)
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Gap-dependent step: `pi'(a) = pi(a) [1 + sum_{a' != a} pi(a') sign(r(a) - r(a'))]`.
pub fn spma_bandit_gap_step(pi: &Policy, r: &[f64]) -> Result<Policy> {
    bandit_policy(pi, r)?;
    let p = pi.row(0);
    let next = (0..p.len())
        .map(|a| {
            let push: f64 = (0..p.len())
                .filter(|&b| b != a)
                .map(|b| p[b] * sign(r[a] - r[b]))
                .sum();
            p[a] * (1.0 + push)
        })
        .collect();
    finish_step(pi, next)
}

fn check_zero_mean(pi: &Policy, adv: &[f64]) -> Result<()> {
    for s in 0..pi.num_states() {
        let row = &adv[s * pi.num_actions()..(s + 1) * pi.num_actions()];
        let mean: f64 = pi.row(s).iter().zip(row).map(|(p, a)| p * a).sum();
        if mean.abs() > ADV_MEAN_TOL {
            return Err(Error::InconsistentAdvantage { state: s, mean });
        }
    }
    Ok(())
}

/// `pi'(a|s) = pi(a|s) (1 + eta adv(s,a))`.
pub fn spma_step(pi: &Policy, adv: &[f64], eta: f64) -> Result<Policy> {
    check_shape(pi, adv.len(), "advantage")?;
    check_zero_mean(pi, adv)?;
    let next = pi
        .probs()
        .iter()
        .zip(adv)
        .map(|(&p, &a)| p * (1.0 + eta * a))
        .collect();
    finish_step(pi, next)
}

/// `pi'(a|s) ∝ pi(a|s) exp(eta adv(s,a))`.
pub fn npg_step(pi: &Policy, adv: &[f64], eta: f64) -> Result<Policy> {
    check_shape(pi, adv.len(), "advantage")?;
    let na = pi.num_actions();
    let mut next = vec![0.0; adv.len()];
    for s in 0..pi.num_states() {
        let row = pi.row(s);
        let a_row = &adv[s * na..(s + 1) * na];
        let max = (0..na)
            .filter(|&a| row[a] > 0.0)
            .map(|a| eta * a_row[a])
            .fold(f64::NEG_INFINITY, f64::max);
        let out = &mut next[s * na..(s + 1) * na];
        let mut sum = 0.0;
        for a in 0..na {
            if row[a] > 0.0 {
                out[a] = row[a] * libm::exp(eta * a_row[a] - max);
                sum += out[a];
            }
        }
        for o in out.iter_mut() {
            *o /= sum;
        }
    }
    Policy::new(pi.num_states(), na, next)
}

/// Tabular MDPO has the same closed form as [`npg_step`].
pub fn mdpo_tabular_step(pi: &Policy, adv: &[f64], eta: f64) -> Result<Policy> {
    npg_step(pi, adv, eta)
}

/// `z' = z + eta pi ⊙ adv`, `pi' = softmax(z')`.
pub fn spg_step(z: &Logits, pi: &Policy, adv: &[f64], eta: f64) -> Result<(Logits, Policy)> {
    check_shape(pi, adv.len(), "advantage")?;
    check_shape(pi, z.values().len(), "logits")?;
    let na = pi.num_actions();
    let mut row = vec![0.0; na];
    for s in 0..pi.num_states() {
        softmax_into(z.row(s), &mut row);
        if row.iter().zip(pi.row(s)).any(|(a, b)| (a - b).abs() > LOGIT_MATCH_TOL) {
            return Err(Error::LogitPolicyMismatch { state: s });
        }
    }
    let next: Vec<f64> = z
        .values()
        .iter()
        .zip(pi.probs().iter().zip(adv))
        .map(|(&zi, (&p, &a))| zi + eta * p * a)
        .collect();
    let z_next = Logits::new(pi.num_states(), na, next)?;
    let pi_next = z_next.to_policy();
    Ok((z_next, pi_next))
}

/// Starting point of a run.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Init {
    #[default]
    Uniform,
    Policy(Policy),
    Logits(Logits),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabularRunConfig {
    pub method: Method,
    pub step_size: f64,
    pub iterations: usize,
    pub init: Init,
}

impl TabularRunConfig {
    pub fn new(method: Method, step_size: f64, iterations: usize) -> Self {
        Self {
            method,
            step_size,
            iterations,
            init: Init::Uniform,
        }
    }

    /// Checks the step size against the method's admissible range on `mdp`.
    pub fn validate(&self, mdp: &TabularMdp) -> Result<()> {
        if !(self.step_size >= 0.0) || !self.step_size.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "step size must be finite and non-negative, got {}",
                self.step_size
            )));
        }
        match self.method {
            Method::Spma if self.step_size > spma_step_limit(mdp.discount) => {
                Err(Error::InvalidConfig(format!(
                    "SPMA needs step size <= 1 - gamma = {}, got {}",
                    1.0 - mdp.discount,
                    self.step_size
                )))
            }
            Method::SpmaBanditGap if mdp.num_states != 1 || mdp.discount != 0.0 => Err(Error::InvalidConfig(
                "the gap-dependent update is defined for bandits only".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// Largest step size accepted for SPMA: `1 - gamma` up to rounding in the
/// product that produced it.
pub fn spma_step_limit(discount: f64) -> f64 {
    (1.0 - discount) * (1.0 + 1e-12)
}

fn initial_state(mdp: &TabularMdp, init: &Init) -> Result<(Policy, Logits)> {
    let (ns, na) = (mdp.num_states, mdp.num_actions);
    let (pi, z) = match init {
        Init::Uniform => (Policy::uniform(ns, na), Logits::zeros(ns, na)),
        Init::Policy(p) => (p.clone(), p.to_logits()),
        Init::Logits(z) => (z.to_policy(), z.clone()),
    };
    if pi.num_states() != ns || pi.num_actions() != na {
        return Err(Error::Dimension(format!(
            "initial policy is {}x{}, MDP is {ns}x{na}",
            pi.num_states(),
            pi.num_actions()
        )));
    }
    Ok((pi, z))
}

/// What the run observer sees at each iteration: the policy `pi_t` and its
/// exact evaluation.
pub struct IterationView<'a> {
    pub t: usize,
    pub policy: &'a Policy,
    pub eval: &'a EvalResult,
}

/// Iterates `policy_evaluate -> step -> record` for `cfg.iterations` steps
/// and returns `T + 1` records (`pi_0 .. pi_T`).
pub fn run_tabular(mdp: &TabularMdp, cfg: &TabularRunConfig) -> Result<Trajectory> {
    run_tabular_with(mdp, cfg, |_| {})
}

/// [`run_tabular`] with a callback invoked on every evaluated iterate.
pub fn run_tabular_with<F>(mdp: &TabularMdp, cfg: &TabularRunConfig, mut observe: F) -> Result<Trajectory>
where
    F: FnMut(&IterationView<'_>),
{
    cfg.validate(mdp)?;
    let (v_star, _) = optimal_values(mdp)?;
    let j_star = expected_return(mdp, &v_star);
    let (mut pi, mut z) = initial_state(mdp, &cfg.init)?;
    let eta = cfg.step_size;
    let gamma = mdp.discount;
    let rewards = if cfg.method == Method::SpmaBanditGap {
        Some(mdp.reward.clone())
    } else {
        None
    };
    let mut records: Vec<IterationRecord> = Vec::with_capacity(cfg.iterations + 1);
    for t in 0..=cfg.iterations {
        let eval = policy_evaluate(mdp, &pi).map_err(|e| e.at(t))?;
        observe(&IterationView {
            t,
            policy: &pi,
            eval: &eval,
        });
        let gaps = gap_quantities(&pi, &eval.q, DEFAULT_TIE_TOL);
        let subopt_inf = v_star
            .iter()
            .zip(&eval.v)
            .map(|(a, b)| (a - b).max(0.0))
            .fold(0.0, f64::max);
        let j_value = expected_return(mdp, &eval.v);
        let bound_ok = match (cfg.method, records.last()) {
            (Method::Spma, Some(prev)) => subopt_inf <= prev.alpha_t * prev.subopt_inf + BOUND_SLACK,
            _ => true,
        };
        records.push(IterationRecord {
            t,
            j_value,
            subopt_inf,
            subopt_rho: (j_star - j_value).max(0.0),
            c_t: gaps.c_t,
            min_gap: gaps.min_gap(),
            alpha_t: gaps.alpha(eta, gamma),
            surrogate_final: None,
            surrogate_gap: None,
            bound_ok,
        });
        if t == cfg.iterations {
            break;
        }
        let step = match cfg.method {
            Method::Spma => spma_step(&pi, &eval.adv, eta),
            Method::Npg => npg_step(&pi, &eval.adv, eta),
            Method::Mdpo => mdpo_tabular_step(&pi, &eval.adv, eta),
            Method::SpmaBanditGap => spma_bandit_gap_step(&pi, rewards.as_deref().unwrap_or_default()),
            Method::Spg => spg_step(&z, &pi, &eval.adv, eta).map(|(z_next, p)| {
                z = z_next;
                p
            }),
        };
        pi = step.map_err(|e| e.at(t))?;
    }
    Ok(Trajectory {
        method: cfg.method,
        step_size: Some(eta),
        discount: gamma,
        records,
    })
}

/// A bandit run with the policy at every iteration, so closed forms in
/// `pi_t(a*)` can be checked.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditTrajectory {
    pub trajectory: Trajectory,
    pub policies: Vec<Vec<f64>>,
}

/// Runs a bandit from the uniform policy. SPMA uses the bandit step with
/// `eta <= 1`; the gap-dependent update ignores `eta`. Records carry the
/// linear-rate bound (SPMA) or the super-linear bound (gap-dependent) in
/// `bound_ok`.
pub fn run_bandit(bandit: &BanditInstance, method: Method, eta: f64, iterations: usize) -> Result<BanditTrajectory> {
    let k = bandit.num_arms();
    let r = bandit.rewards();
    let r_star = bandit.best_reward();
    let kf = k as f64;
    let delta_min = bandit.min_gap().unwrap_or(0.0);
    if method == Method::Spma && !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidConfig(format!("bandit SPMA needs 0 <= eta <= 1, got {eta}")));
    }
    let mut pi = Policy::uniform(1, k);
    let mut z = Logits::zeros(1, k);
    let mut records = Vec::with_capacity(iterations + 1);
    let mut policies = Vec::with_capacity(iterations + 1);
    for t in 0..=iterations {
        let mean: f64 = pi.row(0).iter().zip(r).map(|(a, b)| a * b).sum();
        let adv: Vec<f64> = r.iter().map(|x| x - mean).collect();
        let gaps = gap_quantities(&pi, r, DEFAULT_TIE_TOL);
        let subopt = (r_star - mean).max(0.0);
        let bound_ok = match method {
            Method::Spma => subopt <= (1.0 - 1.0 / kf) * libm::exp(-eta * delta_min * t as f64 / kf) + 1e-12,
            Method::SpmaBanditGap if t < 60 => {
                subopt <= libm::pow(1.0 - 1.0 / kf, libm::pow(2.0, t as f64)) + 1e-12
            }
            _ => true,
        };
        records.push(IterationRecord {
            t,
            j_value: mean,
            subopt_inf: subopt,
            subopt_rho: subopt,
            c_t: gaps.c_t,
            min_gap: gaps.min_gap(),
            alpha_t: gaps.alpha(eta, 0.0),
            surrogate_final: None,
            surrogate_gap: None,
            bound_ok,
        });
        policies.push(pi.row(0).to_vec());
        if t == iterations {
            break;
        }
        let step = match method {
            Method::Spma => spma_bandit_step(&pi, r, eta),
            Method::SpmaBanditGap => spma_bandit_gap_step(&pi, r),
            Method::Npg => npg_step(&pi, &adv, eta),
            Method::Mdpo => mdpo_tabular_step(&pi, &adv, eta),
            Method::Spg => spg_step(&z, &pi, &adv, eta).map(|(zn, p)| {
                z = zn;
                p
            }),
        };
        pi = step.map_err(|e| e.at(t))?;
    }
    Ok(BanditTrajectory {
        trajectory: Trajectory {
            method,
            step_size: (method != Method::SpmaBanditGap).then_some(eta),
            discount: 0.0,
            records,
        },
        policies,
    })
}
