//! Expands a configuration into cells and runs them.

use std::cmp::Ordering;

use rayon::prelude::*;
use spma_core::fa::{run_fa, AdvantageMode, FaRunConfig, StateMode};
use spma_core::tabular::{run_bandit, run_tabular, TabularRunConfig};
use spma_core::{IterationRecord, Method};

use crate::config::{build_problem, AdvantageModeConfig, ExperimentConfig, Problem, StateModeConfig};

/// Which part of the configured grid to execute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sweep {
    /// First step size and first inner budget only.
    Single,
    /// Every `(method, eta, m, seed)` combination.
    Full,
}

/// Identity of one run. `eta_grid` is the configured grid value and `eta`
/// the step size actually used; both are `None` when the method ignores the
/// step size. `m` is `None` unless the method has an inner loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellKey {
    pub method: Method,
    pub eta_grid: Option<f64>,
    pub eta: Option<f64>,
    pub m: Option<usize>,
    pub seed: u64,
}

impl Eq for CellKey {}

impl Ord for CellKey {
    fn cmp(&self, other: &Self) -> Ordering {
        fn opt(a: Option<f64>, b: Option<f64>) -> Ordering {
            match (a, b) {
                (Some(x), Some(y)) => x.total_cmp(&y),
                (a, b) => a.is_some().cmp(&b.is_some()),
            }
        }
        self.method
            .cmp(&other.method)
            .then_with(|| opt(self.eta, other.eta))
            .then_with(|| self.m.cmp(&other.m))
            .then_with(|| self.seed.cmp(&other.seed))
    }
}

impl PartialOrd for CellKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl CellKey {
    /// File name stem, unique within a result set.
    pub fn file_stem(&self) -> String {
        let mut s = self.method.name().to_string();
        if let Some(e) = self.eta_grid {
            s.push_str(&format!("_eta-{e}"));
        }
        if let Some(m) = self.m {
            s.push_str(&format!("_m-{m}"));
        }
        s.push_str(&format!("_seed-{}", self.seed));
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub key: CellKey,
    pub outcome: Result<Vec<IterationRecord>, String>,
}

impl CellResult {
    pub fn records(&self) -> Option<&[IterationRecord]> {
        self.outcome.as_deref().ok()
    }
}

/// All cells of an experiment, sorted by `(method, eta, m, seed)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultSet {
    pub cells: Vec<CellResult>,
}

impl ResultSet {
    pub fn new(mut cells: Vec<CellResult>) -> Self {
        cells.sort_by_key(|c| c.key);
        Self { cells }
    }
}

/// Trapezoidal area under the `J(pi_t)` curve.
pub fn auc(records: &[IterationRecord]) -> f64 {
    records.windows(2).map(|w| 0.5 * (w[0].j_value + w[1].j_value)).sum()
}

fn uses_step_size(cfg: &ExperimentConfig, method: Method) -> bool {
    match method {
        Method::SpmaBanditGap => false,
        Method::Spg => !cfg.is_linear(),
        _ => true,
    }
}

fn uses_inner_loop(cfg: &ExperimentConfig, method: Method) -> bool {
    cfg.is_linear() && method != Method::Spg
}

/// Expands the configuration into cell keys; seeds are shifted by `seed_offset`.
pub fn plan_cells(cfg: &ExperimentConfig, sweep: Sweep, seed_offset: u64) -> Vec<CellKey> {
    let take = |n: usize| if sweep == Sweep::Single { n.min(1) } else { n };
    let etas = &cfg.eta_grid[..take(cfg.eta_grid.len())];
    let ms = &cfg.inner_m[..take(cfg.inner_m.len())];
    let scale = cfg.eta_scale();
    let mut keys = Vec::new();
    for method in cfg.methods() {
        let eta_choices: Vec<Option<f64>> = if uses_step_size(cfg, method) {
            etas.iter().map(|&e| Some(e)).collect()
        } else {
            vec![None]
        };
        let m_choices: Vec<Option<usize>> = if uses_inner_loop(cfg, method) {
            ms.iter().map(|&m| Some(m)).collect()
        } else {
            vec![None]
        };
        for &eta_grid in &eta_choices {
            for &m in &m_choices {
                for &seed in &cfg.seeds {
                    keys.push(CellKey {
                        method,
                        eta_grid,
                        eta: eta_grid.map(|e| e * scale),
                        m,
                        seed: seed.wrapping_add(seed_offset),
                    });
                }
            }
        }
    }
    keys.sort();
    keys.dedup();
    keys
}

/// Runs one cell. Errors are reported as text so that they can be persisted.
pub fn run_cell(cfg: &ExperimentConfig, key: &CellKey) -> Result<Vec<IterationRecord>, String> {
    let problem = build_problem(cfg, key.seed).map_err(|e| e.to_string())?;
    let eta = key.eta.unwrap_or(0.0);
    let t = cfg.outer_t;
    let result = match problem {
        Problem::Bandit(b) => run_bandit(&b, key.method, eta, t).map(|r| r.trajectory),
        Problem::Tabular(mdp) => run_tabular(&mdp, &TabularRunConfig::new(key.method, eta, t)),
        Problem::Linear(mdp, features) => {
            let mut fa = FaRunConfig::new(eta, key.m.unwrap_or(1), t);
            fa.advantage_mode = match cfg.advantage_mode {
                AdvantageModeConfig::Exact => AdvantageMode::Exact,
                AdvantageModeConfig::Noisy { eps } => AdvantageMode::Noisy { eps, seed: key.seed },
            };
            fa.state_mode = match cfg.state_mode {
                StateModeConfig::ExactOccupancy => StateMode::ExactOccupancy,
                StateModeConfig::Sampled { n } => StateMode::Sampled { n, seed: key.seed },
            };
            run_fa(key.method, &mdp, &features, &fa)
        }
    };
    result.map(|traj| traj.records).map_err(|e| e.to_string())
}

/// Runs every planned cell on the current rayon pool. A failing cell is
/// recorded with its error and does not affect the others.
pub fn run_experiment(cfg: &ExperimentConfig, sweep: Sweep, seed_offset: u64) -> ResultSet {
    let cells = plan_cells(cfg, sweep, seed_offset)
        .into_par_iter()
        .map(|key| CellResult {
            outcome: run_cell(cfg, &key),
            key,
        })
        .collect();
    ResultSet::new(cells)
}
