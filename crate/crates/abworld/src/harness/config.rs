use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::abmdp::AbMdpConfig;
use crate::craft::EnvConfig;
use crate::explore::MctsConfig;
use crate::plan::PlannerConfig;
use crate::worldmodel::{AdamConfig, FitConfig};

pub const OUTPUT_DIR_VAR: &str = "ABWORLD_OUTPUT_DIR";
pub const SEED_VAR: &str = "ABWORLD_SEED";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExplorerKind {
    Mcts,
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Parametric,
    Nonparametric,
    Generative,
}

/// One experiment: environment, budget, learner and search settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Bundled environment name or path to an environment file.
    pub environment: String,
    pub seeds: Vec<u64>,
    /// Total low-level steps of exploration per seed.
    pub step_budget: u64,
    pub frames_per_collection: u64,
    pub explorer: ExplorerKind,
    pub model: ModelKind,
    pub eval_episodes: usize,
    /// First seed of the evaluation layouts; episode `i` uses `eval_seed + i`.
    pub eval_seed: u64,
    /// Stop a seed early once mean evaluation success reaches this value.
    pub stop_at_success: Option<f64>,
    /// Skip evaluation during training (coverage-only runs).
    pub evaluate: bool,
    pub output_dir: PathBuf,
    pub abmdp: AbMdpConfig,
    pub fit: FitConfig,
    pub adam: AdamConfig,
    pub mcts: MctsConfig,
    pub planner: PlannerConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            environment: "craft2".into(),
            seeds: vec![0],
            step_budget: 20_000,
            frames_per_collection: 2500,
            explorer: ExplorerKind::Mcts,
            model: ModelKind::Parametric,
            eval_episodes: 100,
            eval_seed: 1_000_000,
            stop_at_success: None,
            evaluate: true,
            output_dir: PathBuf::from("runs"),
            abmdp: AbMdpConfig::default(),
            fit: FitConfig {
                batch_size: 128,
                ..FitConfig::default()
            },
            adam: AdamConfig::default(),
            mcts: MctsConfig::default(),
            planner: PlannerConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Applies the output-directory and seed environment variables.
    pub fn apply_env_overrides(&mut self) -> Result<(), HarnessError> {
        if let Ok(dir) = std::env::var(OUTPUT_DIR_VAR) {
            self.output_dir = PathBuf::from(dir);
        }
        if let Ok(seed) = std::env::var(SEED_VAR) {
            let seed = seed
                .trim()
                .parse()
                .map_err(|_| HarnessError::Config(format!("{SEED_VAR}={seed} is not a seed")))?;
            self.seeds = vec![seed];
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: &str| Err(HarnessError::Config(msg.to_string()));
        if self.seeds.is_empty() {
            return bad("at least one seed is required");
        }
        if self.frames_per_collection == 0 {
            return bad("frames_per_collection must be positive");
        }
        if self.abmdp.k == 0 || self.abmdp.behaviour_items == 0 {
            return bad("k and behaviour_items must be positive");
        }
        if !(self.fit.accuracy_threshold > 0.0 && self.fit.accuracy_threshold <= 1.0) {
            return bad("accuracy threshold must lie in (0, 1]");
        }
        if self.fit.batch_size == 0 || self.fit.batch_size > 2048 {
            return bad("batch size must lie in 1..=2048");
        }
        let m = &self.mcts;
        if m.num_simulations == 0 || m.max_depth == 0 || m.c_uct <= 0.0 {
            return bad("mcts simulations, depth and c_uct must be positive");
        }
        if !(m.edge_validity_threshold > 0.0 && m.edge_validity_threshold < 1.0) {
            return bad("edge validity threshold must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&m.random_behaviour_prob) {
            return bad("random behaviour probability must lie in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.planner.prob_cutoff) {
            return bad("probability cut-off must lie in [0, 1)");
        }
        Ok(())
    }

    pub fn env_config(&self) -> Result<EnvConfig, HarnessError> {
        Ok(EnvConfig::resolve(&self.environment)?)
    }
}
