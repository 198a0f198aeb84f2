//! Per-iteration diagnostics and the convergence-bound checks run against
//! recorded trajectories.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::policy::Policy;

/// Absolute slack on every bound inequality.
pub const BOUND_SLACK: f64 = 1e-10;
/// Slack for the bandit bounds, which involve no linear solve.
pub const BANDIT_SLACK: f64 = 1e-12;
/// Default tolerance for grouping near-maximal actions.
pub const DEFAULT_TIE_TOL: f64 = 1e-9;

/// Optimizer identity, shared by tabular, bandit and function-approximation runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Spma,
    Npg,
    Spg,
    Mdpo,
    SpmaBanditGap,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Spma,
        Method::Npg,
        Method::Spg,
        Method::Mdpo,
        Method::SpmaBanditGap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Spma => "SPMA",
            Method::Npg => "NPG",
            Method::Spg => "SPG",
            Method::Mdpo => "MDPO",
            Method::SpmaBanditGap => "SPMA_bandit_gap",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == name)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One row of a run's trace. Record `t` describes the policy `pi_t`; `c_t`,
/// `alpha_t` and the surrogate fields describe the step `t -> t+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub t: usize,
    pub j_value: f64,
    /// `||V* - V^{pi_t}||_inf`.
    pub subopt_inf: f64,
    /// `J(pi*) - J(pi_t)`.
    pub subopt_rho: f64,
    pub c_t: Option<f64>,
    pub min_gap: Option<f64>,
    pub alpha_t: f64,
    /// `KL`-form surrogate at the inner loop's output (function approximation only).
    pub surrogate_final: Option<f64>,
    /// `surrogate_final` minus a long-run estimate of the surrogate minimum.
    pub surrogate_gap: Option<f64>,
    /// Whether the method's per-iteration bound holds on arrival at `pi_t`
    /// (vacuously true for methods with no claimed bound).
    pub bound_ok: bool,
}

/// A run's records plus the parameters needed to interpret them.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub method: Method,
    pub step_size: Option<f64>,
    pub discount: f64,
    pub records: Vec<IterationRecord>,
}

/// Gap quantities of a policy with respect to its own `Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct GapQuantities {
    /// `min_s pi(A~(s)|s) * Delta(s)` over states with a defined gap.
    pub c_t: Option<f64>,
    /// Near-maximal action set per state.
    pub optimal_sets: Vec<Vec<usize>>,
    /// `max_a Q - max_{a not in A~} Q`, `None` when every action is tied.
    pub gaps: Vec<Option<f64>>,
}

impl GapQuantities {
    pub fn min_gap(&self) -> Option<f64> {
        self.gaps.iter().flatten().copied().reduce(f64::min)
    }

    /// `1 - eta * C_t * (1 - gamma)`, or 1 when `C_t` is undefined.
    pub fn alpha(&self, eta: f64, discount: f64) -> f64 {
        match self.c_t {
            Some(c) => 1.0 - eta * c * (1.0 - discount),
            None => 1.0,
        }
    }
}

pub fn gap_quantities(pi: &Policy, q: &[f64], tie_tol: f64) -> GapQuantities {
    let na = pi.num_actions();
    let mut optimal_sets = Vec::with_capacity(pi.num_states());
    let mut gaps = Vec::with_capacity(pi.num_states());
    let mut c_t: Option<f64> = None;
    for s in 0..pi.num_states() {
        let row = &q[s * na..(s + 1) * na];
        let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let set: Vec<usize> = (0..na).filter(|&a| row[a] >= best - tie_tol).collect();
        let gap = if set.len() == na {
            None
        } else {
            let runner_up = (0..na)
                .filter(|a| !set.contains(a))
                .map(|a| row[a])
                .fold(f64::NEG_INFINITY, f64::max);
            Some(best - runner_up)
        };
        if let Some(delta) = gap {
            let mass: f64 = set.iter().map(|&a| pi.prob(s, a)).sum();
            let cand = mass * delta;
            c_t = Some(c_t.map_or(cand, |c| c.min(cand)));
        }
        optimal_sets.push(set);
        gaps.push(gap);
    }
    GapQuantities {
        c_t,
        optimal_sets,
        gaps,
    }
}

/// Outcome of one inequality at one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundLine {
    pub t: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CheckStatus {
    Pass,
    Fail,
    /// The bound is not claimed for this input.
    NotApplicable(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub name: &'static str,
    pub status: CheckStatus,
    pub lines: Vec<BoundLine>,
    /// Extra summary values, e.g. the cumulative product bound.
    pub notes: Vec<(&'static str, f64)>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.status == CheckStatus::Pass
    }

    pub fn violations(&self) -> usize {
        self.lines.iter().filter(|l| !l.ok).count()
    }

    fn from_lines(name: &'static str, lines: Vec<BoundLine>, notes: Vec<(&'static str, f64)>) -> Self {
        let status = if lines.iter().all(|l| l.ok) {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        };
        Self {
            name,
            status,
            lines,
            notes,
        }
    }

    fn not_applicable(name: &'static str, reason: String) -> Self {
        Self {
            name,
            status: CheckStatus::NotApplicable(reason),
            lines: Vec::new(),
            notes: Vec::new(),
        }
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.status {
            CheckStatus::Pass => writeln!(f, "{}: PASS ({} checks)", self.name, self.lines.len())?,
            CheckStatus::Fail => writeln!(
                f,
                "{}: FAIL ({} of {} checks violated)",
                self.name,
                self.violations(),
                self.lines.len()
            )?,
            CheckStatus::NotApplicable(why) => return writeln!(f, "{}: not applicable ({why})", self.name),
        }
        for (k, v) in &self.notes {
            writeln!(f, "  {k} = {v:.6e}")?;
        }
        let worst = self
            .lines
            .iter()
            .max_by(|a, b| (a.lhs - a.rhs).total_cmp(&(b.lhs - b.rhs)));
        if let Some(w) = worst {
            writeln!(f, "  tightest: t={} lhs={:.6e} rhs={:.6e}", w.t, w.lhs, w.rhs)?;
        }
        for l in self.lines.iter().filter(|l| !l.ok).take(10) {
            writeln!(f, "  violated: t={} lhs={:.6e} rhs={:.6e}", l.t, l.lhs, l.rhs)?;
        }
        Ok(())
    }
}

/// Per-iteration contraction `||V*-V_{t+1}|| <= alpha_t ||V*-V_t||` and the
/// cumulative product bound, for an exact-advantage tabular SPMA run.
pub fn check_contraction(traj: &Trajectory) -> CheckReport {
    const NAME: &str = "per-iteration contraction";
    if traj.method != Method::Spma {
        return CheckReport::not_applicable(NAME, alloc::format!("bound is not claimed for {}", traj.method));
    }
    let Some(eta) = traj.step_size else {
        return CheckReport::not_applicable(NAME, "run has no step size".into());
    };
    if eta > (1.0 - traj.discount) * (1.0 + 1e-12) {
        return CheckReport::not_applicable(NAME, alloc::format!("step size {eta} exceeds 1 - gamma"));
    }
    let recs = &traj.records;
    let mut lines = Vec::new();
    let mut product = 1.0;
    let start = recs.first().map_or(0.0, |r| r.subopt_inf);
    for w in recs.windows(2) {
        let rhs = w[0].alpha_t * w[0].subopt_inf + BOUND_SLACK;
        lines.push(BoundLine {
            t: w[1].t,
            lhs: w[1].subopt_inf,
            rhs,
            ok: w[1].subopt_inf <= rhs,
        });
        product *= w[0].alpha_t;
        let cum = product * start + BOUND_SLACK;
        lines.push(BoundLine {
            t: w[1].t,
            lhs: w[1].subopt_inf,
            rhs: cum,
            ok: w[1].subopt_inf <= cum,
        });
    }
    CheckReport::from_lines(NAME, lines, alloc::vec![("prod_alpha", product), ("prod_alpha_times_initial", product * start)])
}

/// `r(a*) - <pi_t, r> <= (1 - 1/K) exp(-eta Delta_min t / K)` at every record.
pub fn check_bandit_linear(records: &[IterationRecord], k: usize, delta_min: f64, eta: f64) -> CheckReport {
    let kf = k as f64;
    let lines = records
        .iter()
        .map(|r| {
            let rhs = (1.0 - 1.0 / kf) * libm::exp(-eta * delta_min * r.t as f64 / kf) + BANDIT_SLACK;
            BoundLine {
                t: r.t,
                lhs: r.subopt_rho,
                rhs,
                ok: r.subopt_rho <= rhs,
            }
        })
        .collect();
    CheckReport::from_lines("bandit linear rate", lines, Vec::new())
}

/// Closed form `pi_t(a*) = 1 - (1 - 1/K)^(2^t)` (to 1e-10) and
/// `r(a*) - <pi_t, r> <= (1 - 1/K)^(2^t)` for gap-dependent steps from
/// uniform initialization. `policies[t]` is `pi_t` over the arms.
pub fn check_bandit_superlinear(
    records: &[IterationRecord],
    policies: &[Vec<f64>],
    best_arm: usize,
) -> CheckReport {
    const NAME: &str = "bandit super-linear closed form";
    let Some(first) = policies.first() else {
        return CheckReport::not_applicable(NAME, "empty run".into());
    };
    let k = first.len() as f64;
    let mut lines = Vec::new();
    // 2^t overflows the exponent range of (1 - 1/K) well before t = 60.
    for (r, p) in records.iter().zip(policies).filter(|(r, _)| r.t < 60) {
        let tail = libm::pow(1.0 - 1.0 / k, libm::pow(2.0, r.t as f64));
        let closed = 1.0 - tail;
        let diff = (p[best_arm] - closed).abs();
        lines.push(BoundLine {
            t: r.t,
            lhs: diff,
            rhs: 1e-10,
            ok: diff <= 1e-10,
        });
        lines.push(BoundLine {
            t: r.t,
            lhs: r.subopt_rho,
            rhs: tail + BANDIT_SLACK,
            ok: r.subopt_rho <= tail + BANDIT_SLACK,
        });
    }
    CheckReport::from_lines(NAME, lines, Vec::new())
}

/// Descriptive comparison of a function-approximation run with the
/// linear-convergence-to-a-neighbourhood bound.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighbourhoodReport {
    /// `None` when the initial distribution lacks full support.
    pub beta_hat: Option<f64>,
    /// Largest recorded `KL`-form surrogate value, the proxy for `eps_stat + eps_bias`.
    pub eps_hat: Option<f64>,
    pub exploration_ok: bool,
    /// Bound value per record (empty when skipped).
    pub band: Vec<f64>,
    pub final_subopt: f64,
    pub within_band: Option<bool>,
}

pub fn neighbourhood_proxy(records: &[IterationRecord], discount: f64, rho_min: f64) -> NeighbourhoodReport {
    let final_subopt = records.last().map_or(0.0, |r| r.subopt_rho);
    let eps_hat = records
        .iter()
        .filter_map(|r| r.surrogate_final)
        .map(|x| x.max(0.0))
        .reduce(f64::max);
    if !(rho_min > 0.0) {
        return NeighbourhoodReport {
            beta_hat: None,
            eps_hat,
            exploration_ok: false,
            band: Vec::new(),
            final_subopt,
            within_band: None,
        };
    }
    let h = 1.0 - discount;
    let beta = core::f64::consts::SQRT_2 / (h * h * rho_min) * libm::sqrt(eps_hat.unwrap_or(0.0));
    let start = records.first().map_or(0.0, |r| r.subopt_rho);
    let mut band = Vec::with_capacity(records.len());
    let mut product = 1.0;
    let mut accumulated = 0.0;
    for (i, r) in records.iter().enumerate() {
        band.push(product * start + beta * accumulated);
        if i + 1 < records.len() {
            product *= r.alpha_t;
            accumulated = accumulated * r.alpha_t + 1.0;
        }
    }
    let within = records
        .iter()
        .zip(&band)
        .all(|(r, b)| r.subopt_rho <= b + BOUND_SLACK);
    NeighbourhoodReport {
        beta_hat: Some(beta),
        eps_hat,
        exploration_ok: true,
        band,
        final_subopt,
        within_band: Some(within),
    }
}

impl fmt::Display for NeighbourhoodReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.exploration_ok {
            return writeln!(
                f,
                "neighbourhood band: skipped (initial distribution lacks full support); final subopt = {:.6e}",
                self.final_subopt
            );
        }
        writeln!(
            f,
            "neighbourhood band: beta_hat = {:.6e}, eps_hat = {:.6e}, final bound = {:.6e}, final subopt = {:.6e}, within = {}",
            self.beta_hat.unwrap_or(f64::NAN),
            self.eps_hat.unwrap_or(f64::NAN),
            self.band.last().copied().unwrap_or(f64::NAN),
            self.final_subopt,
            self.within_band.unwrap_or(false)
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn rec(t: usize, subopt: f64, alpha: f64) -> IterationRecord {
        IterationRecord {
            t,
            j_value: 0.0,
            subopt_inf: subopt,
            subopt_rho: subopt,
            c_t: None,
            min_gap: None,
            alpha_t: alpha,
            surrogate_final: None,
            surrogate_gap: None,
            bound_ok: true,
        }
    }

    #[test]
    fn bandit_gap_example() {
        let pi = Policy::uniform(1, 2);
        let g = gap_quantities(&pi, &[1.0, 0.0], DEFAULT_TIE_TOL);
        assert_eq!(g.optimal_sets, vec![vec![0]]);
        assert_eq!(g.gaps, vec![Some(1.0)]);
        assert_eq!(g.c_t, Some(0.5));
    }

    #[test]
    fn fully_tied_states_leave_c_undefined() {
        let pi = Policy::uniform(2, 3);
        let g = gap_quantities(&pi, &[0.7; 6], DEFAULT_TIE_TOL);
        assert_eq!(g.c_t, None);
        assert_eq!(g.alpha(0.05, 0.9), 1.0);
        assert_eq!(g.min_gap(), None);
    }

    #[test]
    fn tied_maximizers_pool_their_mass() {
        let pi = Policy::new(1, 3, vec![0.2, 0.3, 0.5]).unwrap();
        let g = gap_quantities(&pi, &[2.0, 2.0, 1.5], DEFAULT_TIE_TOL);
        assert_eq!(g.optimal_sets[0], vec![0, 1]);
        assert!((g.c_t.unwrap() - 0.5 * 0.5).abs() < 1e-15);
    }

    #[test]
    fn contraction_check_guards_method() {
        let traj = Trajectory {
            method: Method::Npg,
            step_size: Some(0.05),
            discount: 0.9,
            records: vec![rec(0, 1.0, 0.9)],
        };
        assert!(matches!(check_contraction(&traj).status, CheckStatus::NotApplicable(_)));
    }

    #[test]
    fn contraction_check_on_optimal_start_is_trivial() {
        let traj = Trajectory {
            method: Method::Spma,
            step_size: Some(0.05),
            discount: 0.9,
            records: vec![rec(0, 0.0, 1.0), rec(1, 0.0, 1.0), rec(2, 0.0, 1.0)],
        };
        let r = check_contraction(&traj);
        assert!(r.passed(), "{r}");
    }

    #[test]
    fn contraction_check_flags_a_violation() {
        let traj = Trajectory {
            method: Method::Spma,
            step_size: Some(0.05),
            discount: 0.9,
            records: vec![rec(0, 1.0, 0.5), rec(1, 0.6, 0.5)],
        };
        let r = check_contraction(&traj);
        assert_eq!(r.status, CheckStatus::Fail);
        assert!(r.violations() >= 1);
    }

    #[test]
    fn neighbourhood_skips_without_full_support() {
        let r = neighbourhood_proxy(&[rec(0, 1.0, 0.9)], 0.9, 0.0);
        assert!(!r.exploration_ok);
        assert!(r.within_band.is_none());
    }

    #[test]
    fn neighbourhood_band_recursion() {
        let mut recs = vec![rec(0, 1.0, 0.5), rec(1, 0.5, 0.5), rec(2, 0.25, 0.5)];
        for r in recs.iter_mut() {
            r.surrogate_final = Some(0.0);
        }
        let rep = neighbourhood_proxy(&recs, 0.5, 0.5);
        assert_eq!(rep.beta_hat, Some(0.0));
        assert_eq!(rep.band, vec![1.0, 0.5, 0.25]);
        assert_eq!(rep.within_band, Some(true));
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(Method::from_name(m.name()), Some(m));
        }
    }
}
