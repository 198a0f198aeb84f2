//! Log-linear policies `pi(a|s) ∝ exp(<x(s,a), theta>)` trained by the
//! SPMA projection step: build the target `pi_t ⊙ (1 + eta A)`, then minimise
//! a weighted cross-entropy to it by Armijo gradient descent. The MDPO
//! surrogate and exact-gradient SPG are provided as baselines.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diagnostics::{gap_quantities, IterationRecord, Method, Trajectory, BOUND_SLACK, DEFAULT_TIE_TOL};
use crate::error::{Error, Result};
use crate::mdp::{expected_return, occupancy, optimal_values, policy_evaluate, EvalResult, TabularMdp};
use crate::policy::{log_sum_exp, softmax_into, Policy, NEG_CLAMP_TOL, ROW_SUM_TOL};
use crate::tabular::spma_step_limit;

/// State-action features, one row per pair at index `s * A + a`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    num_rows: usize,
    dim: usize,
    x: Vec<f64>,
    nz_start: Vec<usize>,
    nz: Vec<(usize, f64)>,
}

impl FeatureMap {
    /// `x` is row-major `num_rows x dim`.
    pub fn new(num_rows: usize, dim: usize, x: Vec<f64>) -> Result<Self> {
        if dim == 0 || num_rows == 0 {
            return Err(Error::Dimension("feature map needs at least one row and column".into()));
        }
        if x.len() != num_rows * dim {
            return Err(Error::Dimension(format!(
                "feature matrix has {} entries, expected {num_rows}x{dim}",
                x.len()
            )));
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::Dimension(format!("feature entry {i} is not finite")));
        }
        let mut nz_start = Vec::with_capacity(num_rows + 1);
        let mut nz = Vec::new();
        for row in x.chunks_exact(dim) {
            nz_start.push(nz.len());
            nz.extend(row.iter().enumerate().filter(|(_, &v)| v != 0.0).map(|(j, &v)| (j, v)));
        }
        nz_start.push(nz.len());
        Ok(Self {
            num_rows,
            dim,
            x,
            nz_start,
            nz,
        })
    }

    pub fn num_rows(&self) -> usize {
        self.num_rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    /// Nonzero `(column, value)` pairs of row `i`.
    pub fn nonzeros(&self, i: usize) -> &[(usize, f64)] {
        &self.nz[self.nz_start[i]..self.nz_start[i + 1]]
    }

    /// `z(s,a) = <x(s,a), theta>` for every row.
    pub fn logits(&self, theta: &[f64]) -> Vec<f64> {
        (0..self.num_rows)
            .map(|i| self.nonzeros(i).iter().map(|&(j, v)| v * theta[j]).sum())
            .collect()
    }

    /// `grad += coef * x(i)`.
    fn accumulate(&self, i: usize, coef: f64, grad: &mut [f64]) {
        for &(j, v) in self.nonzeros(i) {
            grad[j] += coef * v;
        }
    }
}

/// Parameters of a log-linear policy.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPolicyParams {
    pub theta: Vec<f64>,
}

impl LinearPolicyParams {
    pub fn zeros(dim: usize) -> Self {
        Self { theta: vec![0.0; dim] }
    }
}

fn check_features(features: &FeatureMap, num_states: usize, num_actions: usize) -> Result<()> {
    if features.num_rows() != num_states * num_actions {
        return Err(Error::Dimension(format!(
            "feature map has {} rows, expected {num_states}x{num_actions}",
            features.num_rows()
        )));
    }
    Ok(())
}

fn check_theta(features: &FeatureMap, theta: &[f64]) -> Result<()> {
    if theta.len() != features.dim() {
        return Err(Error::Dimension(format!(
            "theta has length {}, features have dimension {}",
            theta.len(),
            features.dim()
        )));
    }
    Ok(())
}

fn softmax_rows(num_states: usize, num_actions: usize, z: &[f64]) -> Policy {
    let mut probs = vec![0.0; z.len()];
    for (zr, pr) in z.chunks_exact(num_actions).zip(probs.chunks_exact_mut(num_actions)) {
        softmax_into(zr, pr);
    }
    Policy::new(num_states, num_actions, probs).expect("softmax rows are distributions")
}

fn log_softmax_rows(num_actions: usize, z: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(z.len());
    for row in z.chunks_exact(num_actions) {
        let lse = log_sum_exp(row);
        out.extend(row.iter().map(|&x| x - lse));
    }
    out
}

pub fn log_linear_policy(
    features: &FeatureMap,
    params: &LinearPolicyParams,
    num_states: usize,
    num_actions: usize,
) -> Result<Policy> {
    check_features(features, num_states, num_actions)?;
    check_theta(features, &params.theta)?;
    Ok(softmax_rows(num_states, num_actions, &features.logits(&params.theta)))
}

/// Rows `pi_t(.|s) ⊙ (1 + eta adv(s,.))`, renormalised. With exact
/// advantages the sum is already one; estimated advantages need not be
/// centred under `pi_t`.
pub fn spma_target(pi: &Policy, adv: &[f64], eta: f64) -> Result<Vec<f64>> {
    let na = pi.num_actions();
    if adv.len() != pi.probs().len() {
        return Err(Error::Dimension(format!(
            "advantage has {} entries, policy has {}",
            adv.len(),
            pi.probs().len()
        )));
    }
    let mut target: Vec<f64> = pi
        .probs()
        .iter()
        .zip(adv)
        .map(|(&p, &a)| p * (1.0 + eta * a))
        .collect();
    for (s, row) in target.chunks_exact_mut(na).enumerate() {
        let mut sum = 0.0;
        for (a, v) in row.iter_mut().enumerate() {
            if *v < -NEG_CLAMP_TOL {
                return Err(Error::InvalidTarget {
                    state: s,
                    action: a,
                    value: *v,
                });
            }
            *v = v.max(0.0);
            sum += *v;
        }
        if !(sum > 0.0) {
            return Err(Error::InvalidTarget {
                state: s,
                action: 0,
                value: sum,
            });
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    Ok(target)
}

/// A differentiable objective in `theta`.
pub trait Objective {
    fn value(&self, theta: &[f64]) -> f64;
    fn value_and_gradient(&self, theta: &[f64]) -> (f64, Vec<f64>);
}

fn check_weights(weights: &[f64], num_states: usize) -> Result<()> {
    if weights.len() != num_states {
        return Err(Error::Dimension(format!(
            "{} state weights for {num_states} states",
            weights.len()
        )));
    }
    if let Some(s) = weights.iter().position(|w| !(*w >= 0.0)) {
        return Err(Error::InvalidConfig(format!("state weight {s} is {}", weights[s])));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOL {
        return Err(Error::InvalidConfig(format!("state weights sum to {sum}")));
    }
    Ok(())
}

/// Weighted cross-entropy `sum_s w(s) CE(p(s,.), pi_theta(.|s))`.
#[derive(Debug, Clone)]
pub struct SurrogateProblem<'a> {
    num_states: usize,
    num_actions: usize,
    weights: Vec<f64>,
    targets: Vec<f64>,
    features: &'a FeatureMap,
}

impl<'a> SurrogateProblem<'a> {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        weights: Vec<f64>,
        targets: Vec<f64>,
        features: &'a FeatureMap,
    ) -> Result<Self> {
        check_features(features, num_states, num_actions)?;
        check_weights(&weights, num_states)?;
        if targets.len() != num_states * num_actions {
            return Err(Error::Dimension(format!("targets have {} entries", targets.len())));
        }
        for s in (0..num_states).filter(|&s| weights[s] > 0.0) {
            let row = &targets[s * num_actions..(s + 1) * num_actions];
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidTarget {
                    state: s,
                    action: 0,
                    value: sum,
                });
            }
        }
        Ok(Self {
            num_states,
            num_actions,
            weights,
            targets,
            features,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// `sum_s w(s) sum_a p log p`; adding it to the cross-entropy value
    /// gives the weighted `KL(p || pi_theta)`.
    pub fn kl_offset(&self) -> f64 {
        let na = self.num_actions;
        (0..self.num_states)
            .filter(|&s| self.weights[s] > 0.0)
            .map(|s| {
                let neg_entropy: f64 = self.targets[s * na..(s + 1) * na]
                    .iter()
                    .filter(|&&p| p > 0.0)
                    .map(|&p| p * libm::log(p))
                    .sum();
                self.weights[s] * neg_entropy
            })
            .sum()
    }

    /// Weighted `KL(p || pi_theta)`.
    pub fn kl_value(&self, theta: &[f64]) -> f64 {
        self.value(theta) + self.kl_offset()
    }

    fn eval(&self, theta: &[f64], want_grad: bool) -> (f64, Vec<f64>) {
        let na = self.num_actions;
        let mut grad = if want_grad { vec![0.0; self.features.dim()] } else { Vec::new() };
        let mut z = vec![0.0; na];
        let mut q = vec![0.0; na];
        let mut value = 0.0;
        for s in 0..self.num_states {
            let w = self.weights[s];
            if w == 0.0 {
                continue;
            }
            for (a, zi) in z.iter_mut().enumerate() {
                *zi = self.features.nonzeros(s * na + a).iter().map(|&(j, v)| v * theta[j]).sum();
            }
            let lse = log_sum_exp(&z);
            let p = &self.targets[s * na..(s + 1) * na];
            let ce: f64 = p.iter().zip(&z).filter(|(&pa, _)| pa > 0.0).map(|(&pa, &za)| pa * (lse - za)).sum();
            value += w * ce;
            if want_grad {
                softmax_into(&z, &mut q);
                for a in 0..na {
                    self.features.accumulate(s * na + a, w * (q[a] - p[a]), &mut grad);
                }
            }
        }
        (value, grad)
    }
}

impl Objective for SurrogateProblem<'_> {
    fn value(&self, theta: &[f64]) -> f64 {
        self.eval(theta, false).0
    }

    fn value_and_gradient(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        self.eval(theta, true)
    }
}

pub fn spma_surrogate(params: &LinearPolicyParams, prob: &SurrogateProblem<'_>) -> Result<(f64, Vec<f64>)> {
    check_theta(prob.features, &params.theta)?;
    Ok(prob.value_and_gradient(&params.theta))
}

/// `sum_s w(s) [KL(pi_theta(.|s) || pi_t(.|s)) - eta <pi_theta(.|s), adv(s,.)>]`.
#[derive(Debug, Clone)]
pub struct MdpoProblem<'a> {
    num_states: usize,
    num_actions: usize,
    weights: Vec<f64>,
    log_pi_t: Vec<f64>,
    adv: Vec<f64>,
    eta: f64,
    features: &'a FeatureMap,
}

impl<'a> MdpoProblem<'a> {
    /// `log_pi_t` holds `log pi_t(a|s)`; zero-probability actions (`-inf`)
    /// make the surrogate infinite wherever `pi_theta` puts mass on them.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        weights: Vec<f64>,
        log_pi_t: Vec<f64>,
        adv: Vec<f64>,
        eta: f64,
        features: &'a FeatureMap,
    ) -> Result<Self> {
        check_features(features, num_states, num_actions)?;
        check_weights(&weights, num_states)?;
        let n = num_states * num_actions;
        if log_pi_t.len() != n || adv.len() != n {
            return Err(Error::Dimension(format!(
                "MDPO inputs have {} and {} entries, expected {n}",
                log_pi_t.len(),
                adv.len()
            )));
        }
        Ok(Self {
            num_states,
            num_actions,
            weights,
            log_pi_t,
            adv,
            eta,
            features,
        })
    }

    fn eval(&self, theta: &[f64], want_grad: bool) -> (f64, Vec<f64>) {
        let na = self.num_actions;
        let mut grad = if want_grad { vec![0.0; self.features.dim()] } else { Vec::new() };
        let mut z = vec![0.0; na];
        let mut q = vec![0.0; na];
        let mut f = vec![0.0; na];
        let mut value = 0.0;
        for s in 0..self.num_states {
            let w = self.weights[s];
            if w == 0.0 {
                continue;
            }
            for (a, zi) in z.iter_mut().enumerate() {
                *zi = self.features.nonzeros(s * na + a).iter().map(|&(j, v)| v * theta[j]).sum();
            }
            let lse = log_sum_exp(&z);
            softmax_into(&z, &mut q);
            let mut mean_f = 0.0;
            for a in 0..na {
                let i = s * na + a;
                f[a] = (z[a] - lse) - self.log_pi_t[i] - self.eta * self.adv[i];
                if q[a] > 0.0 {
                    mean_f += q[a] * f[a];
                }
            }
            value += w * mean_f;
            if want_grad {
                for a in 0..na {
                    if q[a] > 0.0 {
                        self.features.accumulate(s * na + a, w * q[a] * (f[a] - mean_f), &mut grad);
                    }
                }
            }
        }
        (value, grad)
    }
}

impl Objective for MdpoProblem<'_> {
    fn value(&self, theta: &[f64]) -> f64 {
        self.eval(theta, false).0
    }

    fn value_and_gradient(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        self.eval(theta, true)
    }
}

pub fn mdpo_surrogate(
    params: &LinearPolicyParams,
    pi_t: &Policy,
    adv: &[f64],
    eta: f64,
    weights: &[f64],
    features: &FeatureMap,
) -> Result<(f64, Vec<f64>)> {
    check_theta(features, &params.theta)?;
    let log_pi: Vec<f64> = pi_t.probs().iter().map(|&p| libm::log(p)).collect();
    let prob = MdpoProblem::new(
        pi_t.num_states(),
        pi_t.num_actions(),
        weights.to_vec(),
        log_pi,
        adv.to_vec(),
        eta,
        features,
    )?;
    Ok(prob.value_and_gradient(&params.theta))
}

/// `J(theta)` and `grad_theta J` for the log-linear policy, exactly:
/// `grad J = 1/(1-gamma) sum_s d(s) sum_a pi(a|s) A(s,a) x(s,a)`.
pub fn spg_gradient(mdp: &TabularMdp, features: &FeatureMap, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_features(features, mdp.num_states, mdp.num_actions)?;
    check_theta(features, theta)?;
    let pi = softmax_rows(mdp.num_states, mdp.num_actions, &features.logits(theta));
    let eval = policy_evaluate(mdp, &pi)?;
    let occ = occupancy(mdp, &pi)?;
    Ok((
        expected_return(mdp, &eval.v),
        return_gradient(mdp, features, &pi, &eval, &occ.d),
    ))
}

fn return_gradient(mdp: &TabularMdp, features: &FeatureMap, pi: &Policy, eval: &EvalResult, d: &[f64]) -> Vec<f64> {
    let na = mdp.num_actions;
    let scale = 1.0 / (1.0 - mdp.discount);
    let mut grad = vec![0.0; features.dim()];
    for (s, &ds) in d.iter().enumerate().take(mdp.num_states) {
        if ds == 0.0 {
            continue;
        }
        for a in 0..na {
            let i = s * na + a;
            features.accumulate(i, scale * ds * pi.probs()[i] * eval.adv[i], &mut grad);
        }
    }
    grad
}

/// `-J(theta)`, the objective SPG descends.
pub struct NegativeReturn<'a> {
    pub mdp: &'a TabularMdp,
    pub features: &'a FeatureMap,
}

impl Objective for NegativeReturn<'_> {
    fn value(&self, theta: &[f64]) -> f64 {
        let pi = softmax_rows(self.mdp.num_states, self.mdp.num_actions, &self.features.logits(theta));
        let eval = policy_evaluate(self.mdp, &pi).expect("gamma < 1 keeps the evaluation system regular");
        -expected_return(self.mdp, &eval.v)
    }

    fn value_and_gradient(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let (j, g) = spg_gradient(self.mdp, self.features, theta).expect("gamma < 1 keeps the evaluation system regular");
        (-j, g.into_iter().map(|x| -x).collect())
    }
}

/// Backtracking line-search parameters. `warm_start` scales the last
/// accepted step to give the next trial step; 0 disables warm starts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmijoConfig {
    pub init_step: f64,
    pub shrink: f64,
    pub c: f64,
    pub max_backtracks: usize,
    pub warm_start: f64,
}

impl Default for ArmijoConfig {
    fn default() -> Self {
        Self {
            init_step: 1.0,
            shrink: 0.5,
            c: 1e-4,
            max_backtracks: 50,
            warm_start: 1.8,
        }
    }
}

impl ArmijoConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.init_step > 0.0
            && self.init_step.is_finite()
            && self.shrink > 0.0
            && self.shrink < 1.0
            && self.c > 0.0
            && self.c < 1.0
            && self.warm_start >= 0.0
            && self.warm_start.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid Armijo parameters {self:?}")))
        }
    }
}

/// Tries `step * shrink^k` for `k = 0..=max_backtracks` and returns the first
/// step with `f(theta - step grad) <= value - c step ||grad||^2`, together
/// with the objective there.
pub fn armijo_search<F>(
    mut objective: F,
    theta: &[f64],
    value: f64,
    grad: &[f64],
    step: f64,
    cfg: &ArmijoConfig,
) -> Result<(f64, f64)>
where
    F: FnMut(&[f64]) -> f64,
{
    let g2: f64 = grad.iter().map(|g| g * g).sum();
    let mut zeta = step;
    let mut trial = vec![0.0; theta.len()];
    for _ in 0..=cfg.max_backtracks {
        for ((t, &x), &g) in trial.iter_mut().zip(theta).zip(grad) {
            *t = x - zeta * g;
        }
        let f = objective(&trial);
        if f <= value - cfg.c * zeta * g2 {
            return Ok((zeta, f));
        }
        zeta *= cfg.shrink;
    }
    Err(Error::LineSearchExhausted)
}

/// Trial step carried across line searches for warm starting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchState {
    next_step: f64,
}

impl LineSearchState {
    pub fn new(cfg: &ArmijoConfig) -> Self {
        Self {
            next_step: cfg.init_step,
        }
    }

    fn step(&self) -> f64 {
        self.next_step
    }

    fn accepted(&mut self, step: f64, cfg: &ArmijoConfig) {
        self.next_step = if cfg.warm_start > 0.0 {
            cfg.warm_start * step
        } else {
            cfg.init_step
        };
    }

    fn exhausted(&mut self, cfg: &ArmijoConfig) {
        self.next_step = cfg.init_step;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerResult {
    pub theta: Vec<f64>,
    pub value: f64,
    /// Objective before the first step and after each accepted step.
    pub history: Vec<f64>,
    /// The gradient vanished exactly.
    pub converged: bool,
    /// A line search failed and the loop stopped early.
    pub exhausted: bool,
}

/// `m` steps of gradient descent with an Armijo step each.
pub fn inner_loop_minimize<O: Objective + ?Sized>(objective: &O, theta0: &[f64], m: usize, cfg: &ArmijoConfig) -> InnerResult {
    inner_loop_minimize_warm(objective, theta0, m, cfg, &mut LineSearchState::new(cfg))
}

/// [`inner_loop_minimize`] with the warm-start state supplied by the caller.
pub fn inner_loop_minimize_warm<O: Objective + ?Sized>(
    objective: &O,
    theta0: &[f64],
    m: usize,
    cfg: &ArmijoConfig,
    state: &mut LineSearchState,
) -> InnerResult {
    let mut theta = theta0.to_vec();
    let (mut value, mut grad) = objective.value_and_gradient(&theta);
    let mut history = vec![value];
    let mut converged = false;
    let mut exhausted = false;
    for k in 0..m {
        if grad.iter().all(|&g| g == 0.0) {
            converged = true;
            break;
        }
        match armijo_search(|th| objective.value(th), &theta, value, &grad, state.step(), cfg) {
            Ok((zeta, _)) => {
                state.accepted(zeta, cfg);
                for (t, g) in theta.iter_mut().zip(&grad) {
                    *t -= zeta * g;
                }
                if k + 1 < m {
                    (value, grad) = objective.value_and_gradient(&theta);
                } else {
                    value = objective.value(&theta);
                }
                history.push(value);
            }
            Err(_) => {
                state.exhausted(cfg);
                exhausted = true;
                break;
            }
        }
    }
    InnerResult {
        theta,
        value,
        history,
        converged,
        exhausted,
    }
}

/// Iterations per restart when estimating a surrogate minimum.
pub const MIN_ESTIMATE_ITERS: usize = 2000;

/// Lowest objective value reached by long gradient-descent runs from each start.
pub fn estimate_minimum<O: Objective + ?Sized>(objective: &O, starts: &[&[f64]], iters: usize, cfg: &ArmijoConfig) -> f64 {
    starts
        .iter()
        .map(|s| inner_loop_minimize(objective, s, iters, cfg).value)
        .fold(f64::INFINITY, f64::min)
}

fn sample_index<R: Rng>(rng: &mut R, cumulative: &[f64], last_positive: usize) -> usize {
    let u: f64 = rng.gen();
    cumulative.iter().position(|&c| u < c).unwrap_or(last_positive)
}

struct Categorical {
    cumulative: Vec<f64>,
    last_positive: usize,
}

impl Categorical {
    fn new(p: &[f64]) -> Self {
        let mut acc = 0.0;
        let cumulative = p
            .iter()
            .map(|&x| {
                acc += x;
                acc
            })
            .collect();
        let last_positive = p.iter().rposition(|&x| x > 0.0).unwrap_or(0);
        Self {
            cumulative,
            last_positive,
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> usize {
        sample_index(rng, &self.cumulative, self.last_positive)
    }
}

/// `n` independent draws from `d^pi`: start at `s ~ rho`; at each step stop
/// and emit the current state with probability `1 - gamma`, otherwise take
/// `a ~ pi(.|s)`, `s' ~ P(.|s,a)`.
pub fn sample_states(mdp: &TabularMdp, pi: &Policy, n: usize, seed: u64) -> Vec<usize> {
    let (ns, na) = (mdp.num_states, mdp.num_actions);
    let start = Categorical::new(&mdp.initial_dist);
    let actions: Vec<Categorical> = (0..ns).map(|s| Categorical::new(pi.row(s))).collect();
    let moves: Vec<Categorical> = (0..ns * na)
        .map(|i| Categorical::new(mdp.next_dist(i / na, i % na)))
        .collect();
    let stop = 1.0 - mdp.discount;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut s = start.draw(&mut rng);
        while rng.gen::<f64>() >= stop {
            let a = actions[s].draw(&mut rng);
            s = moves[s * na + a].draw(&mut rng);
        }
        out.push(s);
    }
    out
}

/// Empirical distribution of `states` over `num_states`.
pub fn empirical_weights(states: &[usize], num_states: usize) -> Vec<f64> {
    let mut w = vec![0.0; num_states];
    for &s in states {
        w[s] += 1.0;
    }
    let n = states.len() as f64;
    for x in w.iter_mut() {
        *x /= n;
    }
    w
}

/// `clip(adv + u, -1/(1-gamma), 1/(1-gamma))`, `u ~ U[-eps, eps]` i.i.d.
pub fn noisy_advantage(adv: &[f64], eps: f64, discount: f64, seed: u64) -> Vec<f64> {
    if eps == 0.0 {
        return adv.to_vec();
    }
    let bound = 1.0 / (1.0 - discount);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    adv.iter()
        .map(|&a| (a + rng.gen_range(-eps..=eps)).clamp(-bound, bound))
        .collect()
}

/// SplitMix64 finaliser over `(base, stream, index)`, for independent
/// per-iteration seeds.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut z = base
        ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum AdvantageMode {
    #[default]
    Exact,
    /// Uniform noise of half-width `eps`, clipped to `±1/(1-gamma)`.
    Noisy { eps: f64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum StateMode {
    /// Weight states by the exact occupancy `d^{pi_t}`.
    #[default]
    ExactOccupancy,
    /// Weight states by the empirical measure of `n` fresh draws per outer iteration.
    Sampled { n: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaRunConfig {
    pub step_size: f64,
    pub inner_iters: usize,
    pub outer_iters: usize,
    pub advantage_mode: AdvantageMode,
    pub state_mode: StateMode,
    pub armijo: ArmijoConfig,
    /// Estimate `surrogate_gap` by long restarted minimisation (slow).
    pub estimate_surrogate_gap: bool,
}

impl FaRunConfig {
    pub fn new(step_size: f64, inner_iters: usize, outer_iters: usize) -> Self {
        Self {
            step_size,
            inner_iters,
            outer_iters,
            advantage_mode: AdvantageMode::Exact,
            state_mode: StateMode::ExactOccupancy,
            armijo: ArmijoConfig::default(),
            estimate_surrogate_gap: false,
        }
    }

    pub fn validate(&self, method: Method, mdp: &TabularMdp) -> Result<()> {
        self.armijo.validate()?;
        if method != Method::Spg {
            if !(self.step_size >= 0.0) || !self.step_size.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "step size must be finite and non-negative, got {}",
                    self.step_size
                )));
            }
            if method == Method::Spma && self.step_size > spma_step_limit(mdp.discount) {
                return Err(Error::InvalidConfig(format!(
                    "SPMA needs step size <= 1 - gamma = {}, got {}",
                    1.0 - mdp.discount,
                    self.step_size
                )));
            }
        }
        if let AdvantageMode::Noisy { eps, .. } = self.advantage_mode {
            if !(eps >= 0.0) || !eps.is_finite() {
                return Err(Error::InvalidConfig(format!("noise half-width must be non-negative, got {eps}")));
            }
        }
        if let StateMode::Sampled { n: 0, .. } = self.state_mode {
            return Err(Error::InvalidConfig("sampled state mode needs n >= 1".into()));
        }
        if matches!(method, Method::SpmaBanditGap) {
            return Err(Error::InvalidConfig(
                "the gap-dependent update has no function-approximation variant".into(),
            ));
        }
        Ok(())
    }

    fn eps_approx(&self) -> f64 {
        match self.advantage_mode {
            AdvantageMode::Exact => 0.0,
            AdvantageMode::Noisy { eps, .. } => eps,
        }
    }
}

/// What a function-approximation run observer sees per outer iteration.
pub struct FaIterationView<'a> {
    pub t: usize,
    pub theta: &'a [f64],
    pub policy: &'a Policy,
    pub eval: &'a EvalResult,
}

pub fn run_spma_fa(mdp: &TabularMdp, features: &FeatureMap, cfg: &FaRunConfig) -> Result<Trajectory> {
    run_fa(Method::Spma, mdp, features, cfg)
}

pub fn run_mdpo_fa(mdp: &TabularMdp, features: &FeatureMap, cfg: &FaRunConfig) -> Result<Trajectory> {
    run_fa(Method::Mdpo, mdp, features, cfg)
}

/// Exact-gradient ascent on `J(theta)` with one Armijo step per outer
/// iteration; `step_size` and `inner_iters` are unused.
pub fn run_spg_fa(mdp: &TabularMdp, features: &FeatureMap, cfg: &FaRunConfig) -> Result<Trajectory> {
    run_fa(Method::Spg, mdp, features, cfg)
}

pub fn run_fa(method: Method, mdp: &TabularMdp, features: &FeatureMap, cfg: &FaRunConfig) -> Result<Trajectory> {
    run_fa_with(method, mdp, features, cfg, |_| {})
}

/// Runs `cfg.outer_iters` outer iterations from `theta = 0`, returning
/// records for `pi_0 .. pi_T`.
pub fn run_fa_with<F>(
    method: Method,
    mdp: &TabularMdp,
    features: &FeatureMap,
    cfg: &FaRunConfig,
    mut observe: F,
) -> Result<Trajectory>
where
    F: FnMut(&FaIterationView<'_>),
{
    cfg.validate(method, mdp)?;
    let (ns, na) = (mdp.num_states, mdp.num_actions);
    check_features(features, ns, na)?;
    let gamma = mdp.discount;
    let eta = cfg.step_size;
    let (v_star, _) = optimal_values(mdp)?;
    let j_star = expected_return(mdp, &v_star);
    let rho_min = mdp.rho_min();
    let beta_scale = core::f64::consts::SQRT_2 / ((1.0 - gamma) * (1.0 - gamma) * rho_min);
    let noise_term = cfg.eps_approx() / (1.0 - gamma);
    let mut theta = vec![0.0; features.dim()];
    let mut line_search = LineSearchState::new(&cfg.armijo);
    let mut records: Vec<IterationRecord> = Vec::with_capacity(cfg.outer_iters + 1);

    for t in 0..=cfg.outer_iters {
        let z = features.logits(&theta);
        let pi = softmax_rows(ns, na, &z);
        let eval = policy_evaluate(mdp, &pi).map_err(|e| e.at(t))?;
        observe(&FaIterationView {
            t,
            theta: &theta,
            policy: &pi,
            eval: &eval,
        });
        let occ = occupancy(mdp, &pi).map_err(|e| e.at(t))?;
        let gaps = gap_quantities(&pi, &eval.q, DEFAULT_TIE_TOL);
        let j_value = expected_return(mdp, &eval.v);
        let subopt_rho = (j_star - j_value).max(0.0);
        let bound_ok = match (method, records.last()) {
            (Method::Spma, Some(prev)) if rho_min > 0.0 => {
                let beta = beta_scale * libm::sqrt(prev.surrogate_final.unwrap_or(0.0).max(0.0)) + noise_term;
                subopt_rho <= prev.alpha_t * prev.subopt_rho + beta + BOUND_SLACK
            }
            _ => true,
        };
        records.push(IterationRecord {
            t,
            j_value,
            subopt_inf: v_star
                .iter()
                .zip(&eval.v)
                .map(|(a, b)| (a - b).max(0.0))
                .fold(0.0, f64::max),
            subopt_rho,
            c_t: gaps.c_t,
            min_gap: gaps.min_gap(),
            alpha_t: if method == Method::Spg { 1.0 } else { gaps.alpha(eta, gamma) },
            surrogate_final: None,
            surrogate_gap: None,
            bound_ok,
        });
        if t == cfg.outer_iters {
            break;
        }

        if method == Method::Spg {
            let objective = NegativeReturn { mdp, features };
            let grad: Vec<f64> = return_gradient(mdp, features, &pi, &eval, &occ.d)
                .into_iter()
                .map(|g| -g)
                .collect();
            if grad.iter().any(|&g| g != 0.0) {
                match armijo_search(
                    |th| objective.value(th),
                    &theta,
                    -j_value,
                    &grad,
                    line_search.step(),
                    &cfg.armijo,
                ) {
                    Ok((zeta, _)) => {
                        line_search.accepted(zeta, &cfg.armijo);
                        for (th, g) in theta.iter_mut().zip(&grad) {
                            *th -= zeta * g;
                        }
                    }
                    Err(_) => line_search.exhausted(&cfg.armijo),
                }
            }
            continue;
        }

        let adv = match cfg.advantage_mode {
            AdvantageMode::Exact => eval.adv.clone(),
            AdvantageMode::Noisy { eps, seed } => noisy_advantage(&eval.adv, eps, gamma, derive_seed(seed, 0, t as u64)),
        };
        let weights = match cfg.state_mode {
            StateMode::ExactOccupancy => occ.d.clone(),
            StateMode::Sampled { n, seed } => {
                empirical_weights(&sample_states(mdp, &pi, n, derive_seed(seed, 1, t as u64)), ns)
            }
        };
        let theta_prev = theta.clone();
        let zeros = vec![0.0; features.dim()];
        let (final_value, gap) = if method == Method::Spma {
            let targets = spma_target(&pi, &adv, eta).map_err(|e| e.at(t))?;
            let problem = SurrogateProblem::new(ns, na, weights, targets.clone(), features).map_err(|e| e.at(t))?;
            let res = inner_loop_minimize_warm(&problem, &theta, cfg.inner_iters, &cfg.armijo, &mut line_search);
            theta = res.theta;
            let ideal = SurrogateProblem::new(ns, na, occ.d.clone(), targets, features).map_err(|e| e.at(t))?;
            let final_value = ideal.kl_value(&theta);
            let gap = cfg.estimate_surrogate_gap.then(|| {
                let min = estimate_minimum(&ideal, &[&theta, &theta_prev, &zeros], MIN_ESTIMATE_ITERS, &cfg.armijo);
                (final_value - (min + ideal.kl_offset())).max(0.0)
            });
            (final_value, gap)
        } else {
            let log_pi = log_softmax_rows(na, &z);
            let problem = MdpoProblem::new(ns, na, weights, log_pi.clone(), adv.clone(), eta, features).map_err(|e| e.at(t))?;
            let res = inner_loop_minimize_warm(&problem, &theta, cfg.inner_iters, &cfg.armijo, &mut line_search);
            theta = res.theta;
            let ideal = MdpoProblem::new(ns, na, occ.d.clone(), log_pi, adv, eta, features).map_err(|e| e.at(t))?;
            let final_value = ideal.value(&theta);
            let gap = cfg.estimate_surrogate_gap.then(|| {
                let min = estimate_minimum(&ideal, &[&theta, &theta_prev, &zeros], MIN_ESTIMATE_ITERS, &cfg.armijo);
                (final_value - min).max(0.0)
            });
            (final_value, gap)
        };
        let last = records.last_mut().expect("record pushed above");
        last.surrogate_final = Some(final_value);
        last.surrogate_gap = gap;
    }
    Ok(Trajectory {
        method,
        step_size: (method != Method::Spg).then_some(eta),
        discount: gamma,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hot(rows: usize) -> FeatureMap {
        let mut x = vec![0.0; rows * rows];
        for i in 0..rows {
            x[i * rows + i] = 1.0;
        }
        FeatureMap::new(rows, rows, x).unwrap()
    }

    #[test]
    fn zero_theta_is_uniform() {
        let f = FeatureMap::new(6, 2, vec![0.3, -1.0, 2.0, 0.5, 1.0, 1.0, 0.0, 0.0, 4.0, 1.0, -2.0, 0.1]).unwrap();
        let pi = log_linear_policy(&f, &LinearPolicyParams::zeros(2), 2, 3).unwrap();
        assert_eq!(pi, Policy::uniform(2, 3));
    }

    #[test]
    fn one_hot_features_give_softmax_of_theta() {
        let f = one_hot(4);
        let theta = vec![0.5, -0.5, 2.0, 1.0];
        let pi = log_linear_policy(&f, &LinearPolicyParams { theta: theta.clone() }, 2, 2).unwrap();
        let direct = crate::policy::Logits::new(2, 2, theta).unwrap().to_policy();
        assert!(pi.max_tv_distance(&direct) < 1e-16);
    }

    #[test]
    fn matched_target_has_zero_gradient() {
        let f = FeatureMap::new(4, 3, vec![1.0, 0.2, 0.0, 0.0, 1.0, -0.3, 0.5, 0.5, 1.0, -1.0, 0.0, 2.0]).unwrap();
        let theta = vec![0.3, -0.7, 1.1];
        let pi = log_linear_policy(&f, &LinearPolicyParams { theta: theta.clone() }, 2, 2).unwrap();
        let prob = SurrogateProblem::new(2, 2, vec![0.4, 0.6], pi.probs().to_vec(), &f).unwrap();
        let (_, g) = spma_surrogate(&LinearPolicyParams { theta: theta.clone() }, &prob).unwrap();
        assert!(g.iter().all(|x| x.abs() < 1e-12), "{g:?}");
        assert!(prob.kl_value(&theta).abs() < 1e-12);
    }

    #[test]
    fn target_with_zero_step_is_policy() {
        let pi = Policy::new(1, 3, vec![0.2, 0.3, 0.5]).unwrap();
        assert_eq!(spma_target(&pi, &[1.0, -2.0, 0.8], 0.0).unwrap(), pi.probs());
    }

    #[test]
    fn target_rejects_negative_entries() {
        let pi = Policy::uniform(1, 2);
        assert!(matches!(
            spma_target(&pi, &[2.0, -2.0], 1.0),
            Err(Error::InvalidTarget { state: 0, action: 1, .. })
        ));
    }

    #[test]
    fn armijo_accepts_unit_step_on_quadratic() {
        let theta = [3.0, -4.0];
        let f = |x: &[f64]| 0.5 * x.iter().map(|v| v * v).sum::<f64>();
        let (step, value) = armijo_search(f, &theta, f(&theta), &theta, 1.0, &ArmijoConfig::default()).unwrap();
        assert_eq!(step, 1.0);
        assert_eq!(value, 0.0);
    }

    #[test]
    fn armijo_zero_gradient_accepts_initial_step() {
        let f = |_: &[f64]| 1.0;
        let (step, _) = armijo_search(f, &[0.0], 1.0, &[0.0], 0.7, &ArmijoConfig::default()).unwrap();
        assert_eq!(step, 0.7);
    }

    #[test]
    fn armijo_exhausts_on_ascent_direction() {
        let f = |x: &[f64]| -x[0];
        let err = armijo_search(f, &[0.0], 0.0, &[1.0], 1.0, &ArmijoConfig::default()).unwrap_err();
        assert_eq!(err, Error::LineSearchExhausted);
    }

    #[test]
    fn zero_inner_iterations_leave_theta() {
        let f = one_hot(2);
        let prob = SurrogateProblem::new(1, 2, vec![1.0], vec![0.9, 0.1], &f).unwrap();
        let res = inner_loop_minimize(&prob, &[0.1, 0.2], 0, &ArmijoConfig::default());
        assert_eq!(res.theta, vec![0.1, 0.2]);
    }

    #[test]
    fn zero_noise_is_identity_and_noise_is_clipped() {
        let adv = vec![0.5, -9.9, 9.0, 0.0];
        assert_eq!(noisy_advantage(&adv, 0.0, 0.9, 7), adv);
        let noisy = noisy_advantage(&adv, 3.0, 0.9, 7);
        let bound = 1.0 / (1.0 - 0.9);
        assert!(noisy.iter().all(|a| a.abs() <= bound));
    }

    #[test]
    fn seeds_differ_across_streams_and_indices() {
        let a = derive_seed(1, 0, 0);
        assert_ne!(a, derive_seed(1, 1, 0));
        assert_ne!(a, derive_seed(1, 0, 1));
        assert_eq!(a, derive_seed(1, 0, 0));
    }
}
