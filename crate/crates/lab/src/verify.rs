//! The acceptance checks. Each check runs its experiment, compares measured
//! values with the required bounds and reports both.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use spma_core::diagnostics::{check_bandit_linear, check_bandit_superlinear, check_contraction, BOUND_SLACK};
use spma_core::env::{cliff_world, frozen_lake, one_hot_features, random_bandit, CLIFF_WORLD_DISCOUNT, FROZEN_LAKE_DISCOUNT};
use spma_core::fa::{
    empirical_weights, mdpo_surrogate, run_fa, run_fa_with, sample_states, spg_gradient, AdvantageMode, FaRunConfig,
    FeatureMap, LinearPolicyParams, Objective, SurrogateProblem,
};
use spma_core::mdp::{expected_return, occupancy, policy_evaluate};
use spma_core::tabular::{run_bandit, run_tabular, run_tabular_with, TabularRunConfig};
use spma_core::{IterationRecord, Method, Policy, TabularMdp};

use crate::config::{ExperimentConfig, DEFAULT_ETA_GRID};
use crate::experiment::{run_experiment, Sweep};
use crate::instances::{random_features, random_mdp, random_policy, random_vector, two_state_chain};
use crate::report::{best_by_auc, settings, Setting};

/// Iterations SPMA needs to reach `subopt_inf <= 1e-6` with
/// `eta = 0.9 (1 - gamma)`, measured once and frozen as regression values.
pub const SPMA_HORIZON_CLIFF_WORLD: usize = 549;
pub const SPMA_HORIZON_FROZEN_LAKE: usize = 109_255;
/// Relative tolerance on the frozen horizons.
pub const HORIZON_TOLERANCE: f64 = 0.1;
pub const CONVERGENCE_THRESHOLD: f64 = 1e-6;
/// Outer iterations of the tile-coded ordering experiment.
pub const FA_ORDERING_HORIZON: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Bandit,
    Tabular,
    Fa,
    All,
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bandit" => Ok(Suite::Bandit),
            "tabular" => Ok(Suite::Tabular),
            "fa" => Ok(Suite::Fa),
            "all" => Ok(Suite::All),
            _ => Err(format!("unknown suite `{s}` (expected bandit, tabular, fa or all)")),
        }
    }
}

impl Suite {
    pub fn checks(self) -> &'static [u8] {
        match self {
            Suite::Bandit => &[1, 2],
            Suite::Tabular => &[3, 4, 11],
            Suite::Fa => &[5, 6, 7, 8, 9, 10],
            Suite::All => &[1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11],
        }
    }
}

/// Result of one acceptance check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub measured: String,
    pub bound: String,
    pub seconds: f64,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "check {:>2} {:<4} {}: measured {}; required {}; {:.2} s",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.bound,
            self.seconds
        )
    }
}

/// Markdown table of outcomes.
pub fn render_table(outcomes: &[CheckOutcome]) -> String {
    let mut out = String::from("| id | check | result | measured | required | time (s) |\n|---|---|---|---|---|---|\n");
    let cell = |s: &str| s.replace('|', "\\|");
    for o in outcomes {
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} | {:.2} |\n",
            o.id,
            o.name,
            if o.passed { "PASS" } else { "FAIL" },
            cell(&o.measured),
            cell(&o.bound),
            o.seconds
        ));
    }
    out
}

pub fn run_check(id: u8) -> CheckOutcome {
    match id {
        1 => bandit_linear_rate(),
        2 => bandit_superlinear(),
        3 => tabular_contraction(),
        4 => tabular_convergence(),
        5 => one_hot_equivalence(),
        6 => gradient_oracles(),
        7 => surrogate_convexity(),
        8 => sampler_frequencies(),
        9 => fa_ordering(),
        10 => noisy_advantage_robustness(),
        11 => value_difference_identity(),
        _ => panic!("no acceptance check with id {id}"),
    }
}

/// Runs the suite's checks in order, invoking `report` after each.
pub fn run_suite(suite: Suite, mut report: impl FnMut(&CheckOutcome)) -> Vec<CheckOutcome> {
    suite
        .checks()
        .iter()
        .map(|&id| {
            let o = run_check(id);
            report(&o);
            o
        })
        .collect()
}

struct Timed {
    start: Instant,
    limit: Option<f64>,
}

impl Timed {
    fn new(limit: Option<f64>) -> Self {
        Self {
            start: Instant::now(),
            limit,
        }
    }

    fn finish(self, id: u8, name: &'static str, ok: bool, measured: String, bound: String) -> CheckOutcome {
        let seconds = self.start.elapsed().as_secs_f64();
        let in_time = self.limit.is_none_or(|l| seconds < l);
        let bound = match self.limit {
            Some(l) => format!("{bound}, runtime < {l} s"),
            None => bound,
        };
        CheckOutcome {
            id,
            name,
            passed: ok && in_time,
            measured,
            bound,
            seconds,
        }
    }
}

fn first_hit(records: &[IterationRecord], threshold: f64) -> Option<usize> {
    records.iter().find(|r| r.subopt_inf <= threshold).map(|r| r.t)
}

fn tv_distance(a: &Policy, b: &Policy) -> f64 {
    (0..a.num_states())
        .map(|s| 0.5 * a.row(s).iter().zip(b.row(s)).map(|(x, y)| (x - y).abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        norm(&diff)
    } else {
        norm(&diff) / scale
    }
}

fn central_difference(f: impl Fn(&[f64]) -> f64, theta: &[f64], h: f64) -> Vec<f64> {
    (0..theta.len())
        .map(|j| {
            let mut up = theta.to_vec();
            let mut down = theta.to_vec();
            up[j] += h;
            down[j] -= h;
            (f(&up) - f(&down)) / (2.0 * h)
        })
        .collect()
}

fn bandit_linear_rate() -> CheckOutcome {
    let timer = Timed::new(Some(2.0));
    let gaps = [0.05, 0.2, 0.5];
    let mut checks = 0;
    let mut violations = 0;
    let mut errors = 0;
    let mut worst = f64::NEG_INFINITY;
    for i in 0..100u64 {
        let k = 2 + (i % 9) as usize;
        let gap = gaps[(i / 9 % 3) as usize];
        let Ok(bandit) = random_bandit(k, gap, i) else {
            errors += 1;
            continue;
        };
        for eta in [0.5, 1.0] {
            match run_bandit(&bandit, Method::Spma, eta, 200) {
                Ok(run) => {
                    let rep = check_bandit_linear(&run.trajectory.records, k, bandit.min_gap().unwrap_or(0.0), eta);
                    checks += rep.lines.len();
                    violations += rep.violations();
                    worst = rep.lines.iter().map(|l| l.lhs - l.rhs).fold(worst, f64::max);
                }
                Err(_) => errors += 1,
            }
        }
    }
    timer.finish(
        1,
        "bandit linear rate",
        violations == 0 && errors == 0,
        format!("{violations} violations in {checks} checks, {errors} errors, max(lhs - rhs) = {worst:.3e}"),
        "0 violations".into(),
    )
}

fn bandit_superlinear() -> CheckOutcome {
    let timer = Timed::new(Some(1.0));
    let mut violations = 0;
    let mut worst_closed = 0.0f64;
    let mut worst_simplex = 0.0f64;
    let mut errors = 0;
    for (i, k) in [2usize, 4, 8].into_iter().enumerate() {
        let Ok(bandit) = random_bandit(k, 0.05, 100 + i as u64) else {
            errors += 1;
            continue;
        };
        let Ok(run) = run_bandit(&bandit, Method::SpmaBanditGap, 0.0, 6) else {
            errors += 1;
            continue;
        };
        let rep = check_bandit_superlinear(&run.trajectory.records, &run.policies, bandit.best_arm());
        violations += rep.violations();
        worst_closed = rep.lines.iter().step_by(2).map(|l| l.lhs).fold(worst_closed, f64::max);
        for p in &run.policies {
            let sum_err = (p.iter().sum::<f64>() - 1.0).abs();
            let neg = p.iter().map(|&x| (-x).max(0.0)).fold(0.0, f64::max);
            worst_simplex = worst_simplex.max(sum_err).max(neg);
        }
    }
    timer.finish(
        2,
        "bandit super-linear closed form",
        violations == 0 && errors == 0 && worst_simplex <= 1e-14,
        format!(
            "{violations} violations, max closed-form error {worst_closed:.3e}, simplex error {worst_simplex:.3e}, {errors} errors"
        ),
        "closed form within 1e-10, bound + 1e-12, simplex within 1e-14".into(),
    )
}

fn tabular_environments() -> Vec<(&'static str, TabularMdp)> {
    vec![
        ("CliffWorld", cliff_world(CLIFF_WORLD_DISCOUNT).expect("built-in layout")),
        ("FrozenLake", frozen_lake(FROZEN_LAKE_DISCOUNT, false).expect("built-in layout")),
    ]
}

fn tabular_contraction() -> CheckOutcome {
    let timer = Timed::new(Some(30.0));
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, mdp) in tabular_environments() {
        let eta = 0.9 * (1.0 - mdp.discount);
        let mut values: Vec<Vec<f64>> = Vec::new();
        let run = run_tabular_with(&mdp, &TabularRunConfig::new(Method::Spma, eta, 500), |view| {
            values.push(view.eval.v.clone())
        });
        let Ok(traj) = run else {
            ok = false;
            parts.push(format!("{name}: run failed"));
            continue;
        };
        let rep = check_contraction(&traj);
        let worst_drop = values
            .windows(2)
            .flat_map(|w| w[0].iter().zip(&w[1]).map(|(a, b)| a - b))
            .fold(f64::NEG_INFINITY, f64::max);
        let monotone = worst_drop <= BOUND_SLACK;
        ok &= rep.passed() && monotone;
        parts.push(format!(
            "{name}: {} violations in {} checks, max V_t - V_t+1 = {worst_drop:.3e}",
            rep.violations(),
            rep.lines.len()
        ));
    }
    timer.finish(
        3,
        "per-iteration contraction and monotone values",
        ok,
        parts.join("; "),
        "0 violations (slack 1e-10), V_t+1 >= V_t - 1e-10".into(),
    )
}

fn tabular_convergence() -> CheckOutcome {
    let timer = Timed::new(None);
    let mut ok = true;
    let mut parts = Vec::new();
    let frozen = [SPMA_HORIZON_CLIFF_WORLD, SPMA_HORIZON_FROZEN_LAKE];
    for ((name, mdp), frozen) in tabular_environments().into_iter().zip(frozen) {
        let h = 1.0 - mdp.discount;
        let eta = 0.9 * h;
        let run = |method: Method, eta: f64, t: usize| {
            run_tabular(&mdp, &TabularRunConfig::new(method, eta, t))
                .ok()
                .and_then(|traj| first_hit(&traj.records, CONVERGENCE_THRESHOLD))
        };
        let cap_spma = (frozen as f64 * (1.0 + HORIZON_TOLERANCE)).ceil() as usize;
        let t_spma = run(Method::Spma, eta, cap_spma);
        let within_tol =
            t_spma.is_some_and(|t| (t as f64 - frozen as f64).abs() <= HORIZON_TOLERANCE * frozen as f64);
        let reference = t_spma.unwrap_or(frozen);
        let t_npg = run(Method::Npg, eta, 2 * reference);
        let cap_spg = 2 * reference;
        let t_spg = DEFAULT_ETA_GRID
            .par_iter()
            .map(|&g| run(Method::Spg, g * h, cap_spg))
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .min();
        let slower = match (t_spg, t_spma, t_npg) {
            (None, Some(_), Some(_)) => true,
            (Some(s), Some(a), Some(b)) => s > a.max(b),
            _ => false,
        };
        ok &= within_tol && t_npg.is_some() && slower;
        let show = |t: Option<usize>, cap: usize| t.map_or_else(|| format!("> {cap}"), |t| t.to_string());
        parts.push(format!(
            "{name}: SPMA {} (frozen {frozen}), NPG {}, best SPG {}",
            show(t_spma, cap_spma),
            show(t_npg, 2 * reference),
            show(t_spg, cap_spg)
        ));
    }
    timer.finish(
        4,
        "linear convergence to 1e-6",
        ok,
        parts.join("; "),
        "SPMA within 10% of frozen horizon, NPG <= 2x SPMA, SPG > both".into(),
    )
}

/// One-hot CliffWorld with exact occupancy weights, `m = 200`, `T = 50`.
fn one_hot_cliff_setup() -> (TabularMdp, FeatureMap, FaRunConfig) {
    let mdp = cliff_world(CLIFF_WORLD_DISCOUNT).expect("built-in layout");
    let features = one_hot_features(mdp.num_states, mdp.num_actions);
    let cfg = FaRunConfig::new(0.9 * (1.0 - mdp.discount), 200, 50);
    (mdp, features, cfg)
}

fn one_hot_equivalence() -> CheckOutcome {
    let timer = Timed::new(Some(60.0));
    let (mdp, features, cfg) = one_hot_cliff_setup();
    let mut fa_policies = Vec::new();
    let fa = run_fa_with(Method::Spma, &mdp, &features, &cfg, |v| fa_policies.push(v.policy.clone()));
    let mut tab_policies = Vec::new();
    let tab = run_tabular_with(
        &mdp,
        &TabularRunConfig::new(Method::Spma, cfg.step_size, cfg.outer_iters),
        |v| tab_policies.push(v.policy.clone()),
    );
    let (ok, measured) = match (fa, tab) {
        (Ok(_), Ok(_)) => {
            let tv: Vec<f64> = fa_policies.iter().zip(&tab_policies).map(|(a, b)| tv_distance(a, b)).collect();
            let worst = tv.iter().copied().fold(0.0, f64::max);
            let first_bad = tv.iter().position(|&d| d > 1e-6);
            (
                worst <= 1e-6,
                format!(
                    "max TV {worst:.3e}, TV at t=1 {:.3e}, first t above bound {}",
                    tv.get(1).copied().unwrap_or(0.0),
                    first_bad.map_or_else(|| "none".to_string(), |t| t.to_string())
                ),
            )
        }
        (fa, tab) => (false, format!("run failed: fa {:?}, tabular {:?}", fa.err(), tab.err())),
    };
    timer.finish(5, "one-hot FA matches tabular SPMA", ok, measured, "TV <= 1e-6 at every t and state".into())
}

fn gradient_oracles() -> CheckOutcome {
    let timer = Timed::new(None);
    let h = 1e-6;
    let mut spma_err = 0.0f64;
    let mut mdpo_err = 0.0f64;
    let mut spg_err = 0.0f64;
    for p in 0..5u64 {
        let f = random_features(p, 6, 4);
        let weights = random_policy(p + 100, 1, 3).probs().to_vec();
        let targets = random_policy(p + 200, 3, 2).probs().to_vec();
        let prob = SurrogateProblem::new(3, 2, weights, targets, &f).expect("dimensions match");
        let mdp = random_mdp(p + 300, 3, 2, 0.7);
        let pi = random_policy(p + 400, 3, 2);
        let adv = policy_evaluate(&mdp, &pi).expect("random MDP is solvable").adv;
        let w = random_policy(p + 500, 1, 3).probs().to_vec();
        let mdpo = |t: &[f64]| {
            mdpo_surrogate(&LinearPolicyParams { theta: t.to_vec() }, &pi, &adv, 0.6, &w, &f)
                .expect("dimensions match")
        };
        let spg_mdp = random_mdp(p + 600, 4, 3, 0.8);
        let spg_f = random_features(p + 700, 12, 5);
        for k in 0..20u64 {
            let theta = random_vector(1000 * p + k, 4, 1.0);
            let (_, g) = prob.value_and_gradient(&theta);
            spma_err = spma_err.max(relative_error(&g, &central_difference(|t| prob.value(t), &theta, h)));
            let (_, g) = mdpo(&theta);
            mdpo_err = mdpo_err.max(relative_error(&g, &central_difference(|t| mdpo(t).0, &theta, h)));
            let theta = random_vector(2000 * p + k, 5, 1.0);
            let (_, g) = spg_gradient(&spg_mdp, &spg_f, &theta).expect("dimensions match");
            let j = |t: &[f64]| spg_gradient(&spg_mdp, &spg_f, t).expect("dimensions match").0;
            spg_err = spg_err.max(relative_error(&g, &central_difference(j, &theta, h)));
        }
    }
    timer.finish(
        6,
        "gradient oracles",
        spma_err <= 1e-5 && mdpo_err <= 1e-5 && spg_err <= 1e-4,
        format!("max relative error SPMA {spma_err:.3e}, MDPO {mdpo_err:.3e}, SPG {spg_err:.3e}"),
        "SPMA, MDPO <= 1e-5; SPG <= 1e-4".into(),
    )
}

fn surrogate_convexity() -> CheckOutcome {
    let timer = Timed::new(None);
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for i in 0..1000u64 {
        let f = random_features(i % 7, 6, 4);
        let weights = random_policy(i % 11 + 50, 1, 3).probs().to_vec();
        let targets = random_policy(i % 13 + 80, 3, 2).probs().to_vec();
        let prob = SurrogateProblem::new(3, 2, weights, targets, &f).expect("dimensions match");
        let a = random_vector(3 * i, 4, 3.0);
        let b = random_vector(3 * i + 1, 4, 3.0);
        let lambda = (random_vector(3 * i + 2, 1, 1.0)[0] + 1.0) / 2.0;
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| lambda * x + (1.0 - lambda) * y).collect();
        let excess = prob.value(&mid) - (lambda * prob.value(&a) + (1.0 - lambda) * prob.value(&b));
        worst = worst.max(excess);
        if excess > 1e-10 {
            violations += 1;
        }
    }
    timer.finish(
        7,
        "surrogate convexity",
        violations == 0,
        format!("{violations} violations in 1000 checks, max excess {worst:.3e}"),
        "0 violations with slack 1e-10".into(),
    )
}

fn sampler_frequencies() -> CheckOutcome {
    let timer = Timed::new(Some(20.0));
    let n = 1_000_000;
    let cases = [
        ("chain", two_state_chain(0.5), 17u64),
        ("FrozenLake", frozen_lake(FROZEN_LAKE_DISCOUNT, false).expect("built-in layout"), 18),
    ];
    let results: Vec<(String, bool)> = cases
        .par_iter()
        .map(|(name, mdp, seed)| {
            let pi = Policy::uniform(mdp.num_states, mdp.num_actions);
            let d = occupancy(mdp, &pi).expect("uniform policy is evaluable").d;
            let w = empirical_weights(&sample_states(mdp, &pi, n, *seed), mdp.num_states);
            let mut worst_ratio = 0.0f64;
            let mut ok = true;
            for s in 0..mdp.num_states {
                let se = (d[s] * (1.0 - d[s]) / n as f64).sqrt();
                let dev = (w[s] - d[s]).abs();
                ok &= dev <= 3.0 * se;
                if se > 0.0 {
                    worst_ratio = worst_ratio.max(dev / se);
                }
            }
            (format!("{name}: max deviation {worst_ratio:.2} SE"), ok)
        })
        .collect();
    let ok = results.iter().all(|r| r.1);
    let measured = results.into_iter().map(|r| r.0).collect::<Vec<_>>().join("; ");
    timer.finish(8, "sampler frequencies", ok, measured, "every state within 3 SE at n = 1e6".into())
}

fn fa_ordering_config() -> ExperimentConfig {
    let text = format!(
        r#"
        methods = ["SPMA", "MDPO", "SPG"]
        inner_m = [25]
        outer_T = {FA_ORDERING_HORIZON}
        seeds = [0, 1, 2, 3, 4]
        [environment]
        kind = "cliff_world"
        [parameterization]
        kind = "linear"
        features = {{ kind = "tile_coding", num_tilings = 2, tile_size = 2 }}
        [state_mode]
        kind = "sampled"
        n = 512
        "#
    );
    ExperimentConfig::from_toml(&text).expect("built-in configuration is valid")
}

fn fa_ordering() -> CheckOutcome {
    let timer = Timed::new(Some(600.0));
    let results = run_experiment(&fa_ordering_config(), Sweep::Full, 0);
    let all = settings(&results);
    let best = best_by_auc(&all);
    let find = |m: Method| best.iter().find(|s| s.method == m).copied();
    let (ok, measured) = match (find(Method::Spma), find(Method::Mdpo), find(Method::Spg)) {
        (Some(spma), Some(mdpo), Some(spg)) => {
            let se = |a: &Setting, b: &Setting| (a.auc_se.powi(2) + b.auc_se.powi(2)).sqrt();
            let spma_vs_mdpo = spma.auc_mean >= mdpo.auc_mean - se(spma, mdpo);
            let spma_vs_spg = spma.auc_mean - spg.auc_mean > 2.0 * se(spma, spg);
            let mdpo_vs_spg = mdpo.auc_mean - spg.auc_mean > 2.0 * se(mdpo, spg);
            let show = |s: &Setting| {
                format!(
                    "{} {:.2} +- {:.2} (eta {})",
                    s.method,
                    s.auc_mean,
                    s.auc_se,
                    s.eta.map_or_else(|| "-".to_string(), |e| format!("{e:.3}"))
                )
            };
            (
                spma_vs_mdpo && spma_vs_spg && mdpo_vs_spg,
                format!("mean AUC {}, {}, {}", show(spma), show(mdpo), show(spg)),
            )
        }
        _ => {
            let failed = results.cells.iter().filter(|c| c.outcome.is_err()).count();
            (false, format!("{failed} cells failed"))
        }
    };
    timer.finish(
        9,
        "linear-FA AUC ordering",
        ok,
        measured,
        "SPMA >= MDPO - 1 SE; SPMA and MDPO > SPG + 2 SE".into(),
    )
}

fn noisy_advantage_robustness() -> CheckOutcome {
    let timer = Timed::new(None);
    let (mdp, features, base) = one_hot_cliff_setup();
    let h = 1.0 - mdp.discount;
    let levels = [0.0, 0.05, 0.1];
    let seeds = 0..5u64;
    let runs: Vec<(usize, u64, Result<Vec<IterationRecord>, String>)> = levels
        .iter()
        .enumerate()
        .flat_map(|(i, _)| seeds.clone().map(move |s| (i, s)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(i, seed)| {
            let mut cfg = base.clone();
            cfg.advantage_mode = AdvantageMode::Noisy { eps: levels[i] / h, seed };
            let r = run_fa(Method::Spma, &mdp, &features, &cfg).map(|t| t.records).map_err(|e| e.to_string());
            (i, seed, r)
        })
        .collect();
    let reference = run_fa(Method::Spma, &mdp, &features, &base).map(|t| t.records);
    if runs.iter().any(|r| r.2.is_err()) || reference.is_err() {
        return timer.finish(10, "noisy-advantage robustness", false, "a run failed".into(), String::new());
    }
    let reference = reference.expect("checked above");
    let means: Vec<f64> = (0..levels.len())
        .map(|i| {
            let finals: Vec<f64> = runs
                .iter()
                .filter(|r| r.0 == i)
                .map(|r| r.2.as_ref().expect("checked above").last().expect("T + 1 records").subopt_rho)
                .collect();
            finals.iter().sum::<f64>() / finals.len() as f64
        })
        .collect();
    let monotone = means.windows(2).all(|w| w[1] >= w[0]);
    let zero_noise_gap = runs
        .iter()
        .filter(|r| r.0 == 0)
        .map(|r| {
            let recs = r.2.as_ref().expect("checked above");
            let a: Vec<f64> = recs.iter().map(|x| x.j_value).collect();
            let b: Vec<f64> = reference.iter().map(|x| x.j_value).collect();
            if a.len() == b.len() {
                max_abs_diff(&a, &b)
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max);
    timer.finish(
        10,
        "noisy-advantage robustness",
        monotone && zero_noise_gap <= 1e-12,
        format!(
            "mean final subopt_rho {:.6} / {:.6} / {:.6}, noise-free run deviates by {zero_noise_gap:.3e}",
            means[0], means[1], means[2]
        ),
        "nondecreasing in noise level, noise-free run equals the exact run".into(),
    )
}

fn value_difference_identity() -> CheckOutcome {
    let timer = Timed::new(None);
    let (ns, na, gamma) = (5, 3, 0.9);
    let mut worst = 0.0f64;
    let mut errors = 0;
    for i in 0..50u64 {
        let mdp = random_mdp(9000 + i, ns, na, gamma);
        let pi = random_policy(10_000 + i, ns, na);
        let pi2 = random_policy(11_000 + i, ns, na);
        let (Ok(e), Ok(e2), Ok(occ2)) = (policy_evaluate(&mdp, &pi), policy_evaluate(&mdp, &pi2), occupancy(&mdp, &pi2))
        else {
            errors += 1;
            continue;
        };
        let lhs = expected_return(&mdp, &e2.v) - expected_return(&mdp, &e.v);
        let rhs: f64 = (0..ns)
            .map(|s| occ2.d[s] * (0..na).map(|a| pi2.prob(s, a) * e.adv[s * na + a]).sum::<f64>())
            .sum::<f64>()
            / (1.0 - gamma);
        worst = worst.max((lhs - rhs).abs());
    }
    timer.finish(
        11,
        "value-difference identity",
        worst <= 1e-8 && errors == 0,
        format!("max |lhs - rhs| {worst:.3e} over 50 instances, {errors} errors"),
        "<= 1e-8".into(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_parse_and_partition_the_checks() {
        assert_eq!("fa".parse::<Suite>(), Ok(Suite::Fa));
        assert!("everything".parse::<Suite>().is_err());
        let mut ids: Vec<u8> = [Suite::Bandit, Suite::Tabular, Suite::Fa]
            .iter()
            .flat_map(|s| s.checks().iter().copied())
            .collect();
        ids.sort();
        assert_eq!(ids, Suite::All.checks());
    }

    #[test]
    fn tv_distance_is_half_l1() {
        let a = Policy::new(1, 2, vec![0.25, 0.75]).unwrap();
        let b = Policy::new(1, 2, vec![0.75, 0.25]).unwrap();
        assert_eq!(tv_distance(&a, &b), 0.5);
        assert_eq!(tv_distance(&a, &a), 0.0);
    }
}
