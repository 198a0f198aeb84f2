//! Experiment configuration: a strict TOML schema and its validation.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use spma_core::env::{
    cliff_world, frozen_lake, one_hot_features, random_bandit, tile_coding, GridSpec, CLIFF_WORLD_DISCOUNT,
    FROZEN_LAKE_DISCOUNT, GRID_ACTIONS,
};
use spma_core::fa::FeatureMap;
use spma_core::tabular::BanditInstance;
use spma_core::{Method, TabularMdp};

/// Default step-size grid, multiplied by `1 - gamma` before use.
pub const DEFAULT_ETA_GRID: [f64; 5] = [0.3, 0.5, 0.7, 0.9, 1.0];
pub const DEFAULT_INNER_M: [usize; 3] = [5, 25, 50];
pub const DEFAULT_OUTPUT_DIR: &str = "results";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        path: path.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum MethodName {
    #[serde(rename = "SPMA")]
    Spma,
    #[serde(rename = "NPG")]
    Npg,
    #[serde(rename = "SPG")]
    Spg,
    #[serde(rename = "MDPO")]
    Mdpo,
    #[serde(rename = "SPMA_bandit_gap")]
    SpmaBanditGap,
}

impl From<MethodName> for Method {
    fn from(m: MethodName) -> Self {
        match m {
            MethodName::Spma => Method::Spma,
            MethodName::Npg => Method::Npg,
            MethodName::Spg => Method::Spg,
            MethodName::Mdpo => Method::Mdpo,
            MethodName::SpmaBanditGap => Method::SpmaBanditGap,
        }
    }
}

fn default_cliff_discount() -> f64 {
    CLIFF_WORLD_DISCOUNT
}

fn default_lake_discount() -> f64 {
    FROZEN_LAKE_DISCOUNT
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvironmentConfig {
    CliffWorld {
        #[serde(default = "default_cliff_discount")]
        discount: f64,
    },
    FrozenLake {
        #[serde(default = "default_lake_discount")]
        discount: f64,
        #[serde(default)]
        slippery: bool,
    },
    /// A random instance from `random_bandit`; each cell draws its own
    /// instance from `seed + cell seed`.
    Bandit {
        arms: usize,
        min_gap: f64,
        #[serde(default)]
        seed: u64,
    },
}

impl EnvironmentConfig {
    pub fn discount(&self) -> f64 {
        match *self {
            EnvironmentConfig::CliffWorld { discount } | EnvironmentConfig::FrozenLake { discount, .. } => discount,
            EnvironmentConfig::Bandit { .. } => 0.0,
        }
    }

    pub fn is_bandit(&self) -> bool {
        matches!(self, EnvironmentConfig::Bandit { .. })
    }

    fn grid(&self) -> Option<GridSpec> {
        match *self {
            EnvironmentConfig::CliffWorld { .. } => Some(GridSpec::cliff_world()),
            EnvironmentConfig::FrozenLake { slippery, .. } => Some(GridSpec::frozen_lake(slippery)),
            EnvironmentConfig::Bandit { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FeaturesConfig {
    OneHot,
    TileCoding { num_tilings: usize, tile_size: usize },
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ParameterizationConfig {
    #[default]
    Tabular,
    Linear { features: FeaturesConfig },
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AdvantageModeConfig {
    #[default]
    Exact,
    /// Uniform noise of half-width `eps` (absolute units), clipped to
    /// `±1/(1-gamma)`.
    Noisy { eps: f64 },
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateModeConfig {
    #[default]
    ExactOccupancy,
    Sampled { n: usize },
}

fn default_eta_grid() -> Vec<f64> {
    DEFAULT_ETA_GRID.to_vec()
}

fn default_inner_m() -> Vec<usize> {
    DEFAULT_INNER_M.to_vec()
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub environment: EnvironmentConfig,
    #[serde(default)]
    pub parameterization: ParameterizationConfig,
    pub methods: Vec<MethodName>,
    /// Step sizes in units of `1 - gamma`.
    #[serde(default = "default_eta_grid")]
    pub eta_grid: Vec<f64>,
    #[serde(default = "default_inner_m")]
    pub inner_m: Vec<usize>,
    #[serde(rename = "outer_T")]
    pub outer_t: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub advantage_mode: AdvantageModeConfig,
    #[serde(default)]
    pub state_mode: StateModeConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn methods(&self) -> Vec<Method> {
        self.methods.iter().map(|&m| m.into()).collect()
    }

    pub fn is_linear(&self) -> bool {
        matches!(self.parameterization, ParameterizationConfig::Linear { .. })
    }

    /// Multiplier turning grid values into step sizes.
    pub fn eta_scale(&self) -> f64 {
        1.0 - self.environment.discount()
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let env = &self.environment;
        match *env {
            EnvironmentConfig::CliffWorld { discount } | EnvironmentConfig::FrozenLake { discount, .. } => {
                if !(0.0..1.0).contains(&discount) {
                    return Err(invalid("environment.discount", format!("must lie in [0, 1), got {discount}")));
                }
            }
            EnvironmentConfig::Bandit { arms, min_gap, .. } => {
                if arms < 2 {
                    return Err(invalid("environment.arms", format!("need at least 2 arms, got {arms}")));
                }
                if !(min_gap > 0.0 && min_gap <= 1.0) {
                    return Err(invalid("environment.min_gap", format!("must lie in (0, 1], got {min_gap}")));
                }
                if self.is_linear() {
                    return Err(invalid("parameterization", "bandits support the tabular parameterization only"));
                }
            }
        }
        if self.methods.is_empty() {
            return Err(invalid("methods", "must not be empty"));
        }
        if self.eta_grid.is_empty() {
            return Err(invalid("eta_grid", "must not be empty"));
        }
        if self.seeds.is_empty() {
            return Err(invalid("seeds", "must not be empty"));
        }
        if self.is_linear() && self.inner_m.is_empty() {
            return Err(invalid("inner_m", "must not be empty for the linear parameterization"));
        }
        for (i, &m) in self.inner_m.iter().enumerate() {
            if m == 0 {
                return Err(invalid(format!("inner_m[{i}]"), "must be at least 1"));
            }
        }
        for (i, &eta) in self.eta_grid.iter().enumerate() {
            if !(eta >= 0.0) || !eta.is_finite() {
                return Err(invalid(format!("eta_grid[{i}]"), format!("must be finite and non-negative, got {eta}")));
            }
        }
        for (i, m) in self.methods().into_iter().enumerate() {
            let path = format!("methods[{i}]");
            match m {
                Method::SpmaBanditGap if !env.is_bandit() => {
                    return Err(invalid(path, "SPMA_bandit_gap runs on bandit environments only"));
                }
                Method::Npg if self.is_linear() => {
                    return Err(invalid(path, "NPG has no linear variant; use MDPO"));
                }
                Method::Spma => {
                    // Grid values are in units of 1 - gamma, so both the
                    // bandit (eta <= 1) and MDP (eta <= 1 - gamma) limits read
                    // as grid value <= 1.
                    if let Some((j, eta)) = self.eta_grid.iter().enumerate().find(|(_, &e)| e > 1.0) {
                        return Err(invalid(
                            format!("eta_grid[{j}]"),
                            format!("SPMA needs grid values <= 1 (step size <= 1 - gamma), got {eta}"),
                        ));
                    }
                }
                _ => {}
            }
        }
        let tabular = !self.is_linear();
        if let AdvantageModeConfig::Noisy { eps } = self.advantage_mode {
            if tabular {
                return Err(invalid("advantage_mode", "noisy advantages need the linear parameterization"));
            }
            if !(eps >= 0.0) || !eps.is_finite() {
                return Err(invalid("advantage_mode.eps", format!("must be finite and non-negative, got {eps}")));
            }
        }
        if let StateModeConfig::Sampled { n } = self.state_mode {
            if tabular {
                return Err(invalid("state_mode", "sampled states need the linear parameterization"));
            }
            if n == 0 {
                return Err(invalid("state_mode.n", "must be at least 1"));
            }
        }
        if let ParameterizationConfig::Linear {
            features: FeaturesConfig::TileCoding {
                num_tilings,
                tile_size,
            },
        } = self.parameterization
        {
            if num_tilings == 0 || tile_size == 0 {
                return Err(invalid(
                    "parameterization.features",
                    "num_tilings and tile_size must be at least 1",
                ));
            }
        }
        Ok(())
    }
}

/// Concrete problem instance for one cell.
pub enum Problem {
    Bandit(BanditInstance),
    Tabular(TabularMdp),
    Linear(TabularMdp, FeatureMap),
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Problem::Bandit(b) => write!(f, "Bandit({} arms)", b.num_arms()),
            Problem::Tabular(m) => write!(f, "Tabular({}x{})", m.num_states, m.num_actions),
            Problem::Linear(m, x) => write!(f, "Linear({}x{}, d = {})", m.num_states, m.num_actions, x.dim()),
        }
    }
}

/// Builds the cell's problem. Only bandit instances depend on the seed.
pub fn build_problem(cfg: &ExperimentConfig, seed: u64) -> spma_core::Result<Problem> {
    let mdp = match cfg.environment {
        EnvironmentConfig::Bandit {
            arms,
            min_gap,
            seed: env_seed,
        } => return Ok(Problem::Bandit(random_bandit(arms, min_gap, env_seed.wrapping_add(seed))?)),
        EnvironmentConfig::CliffWorld { discount } => cliff_world(discount)?,
        EnvironmentConfig::FrozenLake { discount, slippery } => frozen_lake(discount, slippery)?,
    };
    match &cfg.parameterization {
        ParameterizationConfig::Tabular => Ok(Problem::Tabular(mdp)),
        ParameterizationConfig::Linear { features } => {
            let x = match *features {
                FeaturesConfig::OneHot => one_hot_features(mdp.num_states, mdp.num_actions),
                FeaturesConfig::TileCoding {
                    num_tilings,
                    tile_size,
                } => {
                    let grid = cfg.environment.grid().expect("validated: linear runs use grid environments");
                    tile_coding(&grid, GRID_ACTIONS, num_tilings, tile_size)?
                }
            };
            Ok(Problem::Linear(mdp, x))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        methods = ["SPMA", "NPG"]
        outer_T = 10
        [environment]
        kind = "cliff_world"
    "#;

    fn with(extra: &str) -> Result<ExperimentConfig, ConfigError> {
        ExperimentConfig::from_toml(&format!("{extra}\n{MINIMAL}"))
    }

    fn invalid_path(r: Result<ExperimentConfig, ConfigError>) -> String {
        match r {
            Err(ConfigError::Invalid { path, .. }) => path,
            other => panic!("expected a validation error, got {other:?}"),
        }
    }

    #[test]
    fn defaults_fill_in() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.eta_grid, DEFAULT_ETA_GRID);
        assert_eq!(cfg.inner_m, DEFAULT_INNER_M);
        assert_eq!(cfg.seeds, [0]);
        assert_eq!(cfg.environment.discount(), CLIFF_WORLD_DISCOUNT);
        assert_eq!(cfg.parameterization, ParameterizationConfig::Tabular);
        assert_eq!(cfg.output_dir(), PathBuf::from(DEFAULT_OUTPUT_DIR));
        assert_eq!(cfg.methods(), [Method::Spma, Method::Npg]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(with("bogus = 1"), Err(ConfigError::Parse(_))));
        let nested = MINIMAL.replace("kind = \"cliff_world\"", "kind = \"cliff_world\"\nwidth = 3");
        assert!(matches!(ExperimentConfig::from_toml(&nested), Err(ConfigError::Parse(_))));
        let method = MINIMAL.replace("\"NPG\"", "\"PPO\"");
        assert!(matches!(ExperimentConfig::from_toml(&method), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn empty_lists_name_their_field() {
        assert_eq!(invalid_path(with("eta_grid = []")), "eta_grid");
        assert_eq!(invalid_path(with("seeds = []")), "seeds");
        let no_methods = MINIMAL.replace("[\"SPMA\", \"NPG\"]", "[]");
        assert_eq!(invalid_path(ExperimentConfig::from_toml(&no_methods)), "methods");
    }

    #[test]
    fn inadmissible_settings_are_rejected() {
        assert_eq!(invalid_path(with("eta_grid = [0.5, 1.5]")), "eta_grid[1]");
        assert_eq!(invalid_path(with("eta_grid = [-0.1]")), "eta_grid[0]");
        let gap = MINIMAL.replace("\"NPG\"", "\"SPMA_bandit_gap\"");
        assert_eq!(invalid_path(ExperimentConfig::from_toml(&gap)), "methods[1]");
        let noisy = format!("{MINIMAL}\n[advantage_mode]\nkind = \"noisy\"\neps = 0.1");
        assert_eq!(invalid_path(ExperimentConfig::from_toml(&noisy)), "advantage_mode");
        let lake = MINIMAL.replace("kind = \"cliff_world\"", "kind = \"frozen_lake\"\ndiscount = 1.0");
        assert_eq!(invalid_path(ExperimentConfig::from_toml(&lake)), "environment.discount");
    }

    #[test]
    fn linear_and_bandit_configs_parse() {
        let linear = r#"
            methods = ["SPMA", "MDPO", "SPG"]
            inner_m = [25]
            outer_T = 5
            seeds = [1, 2]
            output_dir = "out"
            [environment]
            kind = "cliff_world"
            discount = 0.9
            [parameterization]
            kind = "linear"
            features = { kind = "tile_coding", num_tilings = 2, tile_size = 2 }
            [state_mode]
            kind = "sampled"
            n = 512
        "#;
        let cfg = ExperimentConfig::from_toml(linear).unwrap();
        assert!(cfg.is_linear());
        assert_eq!(cfg.state_mode, StateModeConfig::Sampled { n: 512 });
        match build_problem(&cfg, 0).unwrap() {
            Problem::Linear(mdp, x) => {
                assert_eq!(mdp.num_states, 48);
                assert_eq!(x.dim(), 96);
            }
            p => panic!("unexpected {p:?}"),
        }
        let bandit = r#"
            methods = ["SPMA_bandit_gap"]
            outer_T = 6
            [environment]
            kind = "bandit"
            arms = 4
            min_gap = 0.1
            seed = 3
        "#;
        let cfg = ExperimentConfig::from_toml(bandit).unwrap();
        assert_eq!(cfg.eta_scale(), 1.0);
        assert!(matches!(build_problem(&cfg, 0).unwrap(), Problem::Bandit(b) if b.num_arms() == 4));
    }
}
