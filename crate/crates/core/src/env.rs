//! Benchmark problems: CliffWorld, FrozenLake, random bandits, and the
//! feature maps used with them.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fa::FeatureMap;
use crate::mdp::TabularMdp;
use crate::tabular::BanditInstance;

/// Grid actions, in index order.
pub const UP: usize = 0;
pub const DOWN: usize = 1;
pub const LEFT: usize = 2;
pub const RIGHT: usize = 3;
pub const GRID_ACTIONS: usize = 4;

/// `(row, col)`.
pub type Cell = (usize, usize);

/// Layout and dynamics of a gridworld. Moves off the grid leave the agent in
/// place. With `slip_prob = p` the intended move happens with probability
/// `1 - p` and each perpendicular move with `p / 2`.
///
/// Entering a cliff cell sends the agent back to `start` (reward 0); hole
/// cells are absorbing with reward 0. Entering the goal pays 1; once there
/// the agent stays and collects `goal_stay_reward` per step.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub cliff_cells: Vec<Cell>,
    pub hole_cells: Vec<Cell>,
    pub start: Cell,
    pub goal: Cell,
    pub slip_prob: f64,
    pub goal_stay_reward: f64,
}

impl GridSpec {
    /// 4x12, start bottom-left, goal bottom-right, cliff between them.
    pub fn cliff_world() -> Self {
        Self {
            rows: 4,
            cols: 12,
            cliff_cells: (1..=10).map(|c| (3, c)).collect(),
            hole_cells: Vec::new(),
            start: (3, 0),
            goal: (3, 11),
            slip_prob: 0.0,
            goal_stay_reward: 1.0,
        }
    }

    /// The 4x4 map `SFFF / FHFH / FFFH / HFFG`.
    pub fn frozen_lake(slippery: bool) -> Self {
        Self {
            rows: 4,
            cols: 4,
            cliff_cells: Vec::new(),
            hole_cells: vec![(1, 1), (1, 3), (2, 3), (3, 0)],
            start: (0, 0),
            goal: (3, 3),
            slip_prob: if slippery { 2.0 / 3.0 } else { 0.0 },
            goal_stay_reward: 0.0,
        }
    }

    pub fn num_states(&self) -> usize {
        self.rows * self.cols
    }

    pub fn state(&self, cell: Cell) -> usize {
        cell.0 * self.cols + cell.1
    }

    pub fn cell(&self, state: usize) -> Cell {
        (state / self.cols, state % self.cols)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(format!("grid: {what}")));
        if self.rows == 0 || self.cols == 0 {
            return bad("needs at least one row and column");
        }
        let inside = |c: &Cell| c.0 < self.rows && c.1 < self.cols;
        if !inside(&self.start) || !inside(&self.goal) {
            return bad("start and goal must lie inside the grid");
        }
        if !self.cliff_cells.iter().chain(&self.hole_cells).all(inside) {
            return bad("hazard cells must lie inside the grid");
        }
        let hazard = |c: &Cell| self.cliff_cells.contains(c) || self.hole_cells.contains(c);
        if hazard(&self.start) || hazard(&self.goal) {
            return bad("start and goal must not be hazards");
        }
        if !(0.0..=1.0).contains(&self.slip_prob) || !(0.0..=1.0).contains(&self.goal_stay_reward) {
            return bad("slip probability and goal reward must lie in [0, 1]");
        }
        Ok(())
    }

    fn shift(&self, (r, c): Cell, action: usize) -> Cell {
        match action {
            UP => (r.saturating_sub(1), c),
            DOWN => ((r + 1).min(self.rows - 1), c),
            LEFT => (r, c.saturating_sub(1)),
            _ => (r, (c + 1).min(self.cols - 1)),
        }
    }

    fn perpendicular(action: usize) -> [usize; 2] {
        if action == UP || action == DOWN {
            [LEFT, RIGHT]
        } else {
            [UP, DOWN]
        }
    }

    /// Builds the MDP with `rho = one-hot(start)`.
    pub fn to_mdp(&self, discount: f64) -> Result<TabularMdp> {
        self.validate()?;
        let ns = self.num_states();
        let na = GRID_ACTIONS;
        let start = self.state(self.start);
        let goal = self.state(self.goal);
        let mut transition = vec![0.0; ns * na * ns];
        let mut reward = vec![0.0; ns * na];
        for s in 0..ns {
            let cell = self.cell(s);
            for a in 0..na {
                let row = &mut transition[(s * na + a) * ns..(s * na + a + 1) * ns];
                if s == goal {
                    row[goal] = 1.0;
                    reward[s * na + a] = self.goal_stay_reward;
                    continue;
                }
                if self.hole_cells.contains(&cell) {
                    row[s] = 1.0;
                    continue;
                }
                if self.cliff_cells.contains(&cell) {
                    row[start] = 1.0;
                    continue;
                }
                let [p1, p2] = Self::perpendicular(a);
                let side = self.slip_prob / 2.0;
                for (dir, p) in [(a, 1.0 - self.slip_prob), (p1, side), (p2, side)] {
                    if p == 0.0 {
                        continue;
                    }
                    let next = self.shift(cell, dir);
                    let landed = if self.cliff_cells.contains(&next) {
                        start
                    } else {
                        self.state(next)
                    };
                    row[landed] += p;
                    if landed == goal {
                        reward[s * na + a] += p;
                    }
                }
            }
        }
        let mut rho = vec![0.0; ns];
        rho[start] = 1.0;
        TabularMdp::new(ns, na, transition, reward, rho, discount)
    }
}

pub const CLIFF_WORLD_DISCOUNT: f64 = 0.9;
pub const FROZEN_LAKE_DISCOUNT: f64 = 0.99;

pub fn cliff_world(discount: f64) -> Result<TabularMdp> {
    GridSpec::cliff_world().to_mdp(discount)
}

pub fn frozen_lake(discount: f64, slippery: bool) -> Result<TabularMdp> {
    GridSpec::frozen_lake(slippery).to_mdp(discount)
}

/// `K` rewards with a unique best arm at least `min_gap` above every other:
/// `r* ~ U[min_gap, 1]` at a uniformly chosen arm, the rest `~ U[0, r* - min_gap]`.
pub fn random_bandit(k: usize, min_gap: f64, seed: u64) -> Result<BanditInstance> {
    if k < 2 {
        return Err(Error::InfeasibleGap(format!("need at least two arms, got {k}")));
    }
    if !(min_gap > 0.0 && min_gap <= 1.0) {
        return Err(Error::InfeasibleGap(format!("min_gap must lie in (0, 1], got {min_gap}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let best = rng.gen_range(0..k);
    let top = min_gap + (1.0 - min_gap) * rng.gen::<f64>();
    let ceiling = top - min_gap;
    let rewards = (0..k)
        .map(|a| if a == best { top } else { ceiling * rng.gen::<f64>() })
        .collect();
    BanditInstance::new(rewards)
}

/// The `SA x SA` identity.
pub fn one_hot_features(num_states: usize, num_actions: usize) -> FeatureMap {
    let n = num_states * num_actions;
    let mut x = vec![0.0; n * n];
    for i in 0..n {
        x[i * n + i] = 1.0;
    }
    FeatureMap::new(n, n, x).expect("identity features are well formed")
}

/// Binary tile-coding features. Tiling `i` shifts the grid by
/// `floor(i * tile_size / num_tilings)` cells along both axes before cutting
/// it into `tile_size x tile_size` tiles; shifted tiles past the far edge are
/// merged into the last one so each tiling has `ceil(rows/ts) * ceil(cols/ts)`
/// tiles. Columns are indexed `((tiling * tiles_r + tr) * tiles_c + tc) * A + a`.
pub fn tile_coding(grid: &GridSpec, num_actions: usize, num_tilings: usize, tile_size: usize) -> Result<FeatureMap> {
    if num_tilings == 0 || tile_size == 0 || num_actions == 0 {
        return Err(Error::InvalidConfig(
            "tile coding needs num_tilings, tile_size and num_actions >= 1".into(),
        ));
    }
    let tiles_r = grid.rows.div_ceil(tile_size);
    let tiles_c = grid.cols.div_ceil(tile_size);
    let dim = num_tilings * tiles_r * tiles_c * num_actions;
    let rows = grid.num_states() * num_actions;
    let mut x = vec![0.0; rows * dim];
    for s in 0..grid.num_states() {
        let (r, c) = grid.cell(s);
        for i in 0..num_tilings {
            let offset = i * tile_size / num_tilings;
            let tr = ((r + offset) / tile_size).min(tiles_r - 1);
            let tc = ((c + offset) / tile_size).min(tiles_c - 1);
            for a in 0..num_actions {
                let col = ((i * tiles_r + tr) * tiles_c + tc) * num_actions + a;
                x[(s * num_actions + a) * dim + col] = 1.0;
            }
        }
    }
    FeatureMap::new(rows, dim, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{optimal_values, validate_mdp};

    #[test]
    fn cliff_world_shape_and_value() {
        let mdp = cliff_world(0.9).unwrap();
        assert_eq!((mdp.num_states, mdp.num_actions), (48, 4));
        validate_mdp(&mdp).unwrap();
        let (v, _) = optimal_values(&mdp).unwrap();
        let start = GridSpec::cliff_world().state((3, 0));
        // Thirteen moves: up, eleven right, down.
        let expected = libm::pow(0.9, 12.0) / (1.0 - 0.9);
        assert!((v[start] - expected).abs() < 1e-10);
    }

    #[test]
    fn frozen_lake_deterministic_value() {
        let mdp = frozen_lake(0.99, false).unwrap();
        assert_eq!(mdp.num_states, 16);
        let (v, _) = optimal_values(&mdp).unwrap();
        assert!((v[0] - libm::pow(0.99, 5.0)).abs() < 1e-10);
    }

    #[test]
    fn slippery_lake_splits_mass_in_thirds() {
        let mdp = frozen_lake(0.99, true).unwrap();
        let p = mdp.next_dist(0, RIGHT);
        assert!((p[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!((p[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((p[4] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn bandit_two_arms_unit_gap() {
        let b = random_bandit(2, 1.0, 3).unwrap();
        let mut r = b.rewards().to_vec();
        r.sort_by(f64::total_cmp);
        assert_eq!(r, vec![0.0, 1.0]);
    }

    #[test]
    fn bandit_rejects_bad_gaps() {
        assert!(matches!(random_bandit(3, 0.0, 0), Err(Error::InfeasibleGap(_))));
        assert!(matches!(random_bandit(3, 1.5, 0), Err(Error::InfeasibleGap(_))));
        assert!(matches!(random_bandit(1, 0.1, 0), Err(Error::InfeasibleGap(_))));
    }

    #[test]
    fn tile_dimension_formula() {
        let f = tile_coding(&GridSpec::cliff_world(), 4, 2, 2).unwrap();
        assert_eq!(f.dim(), 96);
        for i in 0..f.num_rows() {
            assert_eq!(f.row(i).iter().sum::<f64>(), 2.0);
        }
    }

    #[test]
    fn unit_tiles_are_one_hot() {
        let g = GridSpec::frozen_lake(false);
        assert_eq!(tile_coding(&g, 4, 1, 1).unwrap(), one_hot_features(16, 4));
    }

    #[test]
    fn grid_validation() {
        let mut g = GridSpec::cliff_world();
        g.start = (3, 5);
        assert!(g.validate().is_err());
        g.start = (4, 0);
        assert!(g.validate().is_err());
    }
}
