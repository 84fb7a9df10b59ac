use std::io::Write;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ExplorerKind, ModelKind};
use super::oracle::expert_dataset;
use super::train::{evaluate, train_seed};
use super::HarnessError;
use crate::craft::CraftEnv;
use crate::worldmodel::{
    FitConfig, GenerativeModel, OptimizerState, ParametricModel, TransitionCounts,
};

/// Action noise of the scripted expert.
pub const EXPERT_NOISE: f64 = 0.3;

/// Optimizer steps of both arms. A fixed count keeps the arms comparable:
/// the accuracy stop fires at different points for the two objectives.
pub const GEN_DISC_FIT_STEPS: u64 = 6000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenDiscRow {
    pub seed: u64,
    pub dataset_size: usize,
    pub discriminative_success: f64,
    pub generative_success: f64,
    pub discriminative_accuracy: f64,
    pub generative_accuracy: f64,
}

/// Fits both model kinds on the same expert transitions and compares their
/// planning success.
pub fn ablation_gen_vs_disc(
    config: &ExperimentConfig,
    sizes: &[usize],
) -> Result<Vec<GenDiscRow>, HarnessError> {
    config.validate()?;
    let env = CraftEnv::new(config.env_config()?);
    let vocab = &env.config().vocab;
    let mut rows = Vec::new();
    for &seed in &config.seeds {
        for &size in sizes {
            let data = expert_dataset(&env, &config.abmdp, size, EXPERT_NOISE, seed);
            let fit = FitConfig {
                seed,
                min_steps: GEN_DISC_FIT_STEPS,
                max_steps: GEN_DISC_FIT_STEPS,
                ..config.fit
            };

            let counts = TransitionCounts::from_dataset(
                data.iter().cloned(),
                crate::worldmodel::DEFAULT_EPSILON,
            );
            let mut disc = ParametricModel::for_vocab(vocab, seed);
            let mut opt = OptimizerState::new(config.adam, disc.params().len());
            let disc_report = disc.fit(&counts, &mut opt, &fit)?;

            let mut gen = GenerativeModel::for_vocab(vocab, seed);
            let mut opt = OptimizerState::new(config.adam, gen.params().len());
            let gen_report = gen.fit_generative(&data, &mut opt, &fit)?;

            let eval = |m: &dyn crate::worldmodel::TransitionModel| {
                evaluate(
                    &env,
                    m,
                    &config.planner,
                    &config.abmdp,
                    config.eval_episodes,
                    config.eval_seed,
                )
            };
            rows.push(GenDiscRow {
                seed,
                dataset_size: size,
                discriminative_success: eval(&disc)?.mean,
                generative_success: eval(&gen)?.mean,
                discriminative_accuracy: disc_report.accuracy,
                generative_accuracy: gen_report.accuracy,
            });
        }
    }
    Ok(rows)
}

pub fn write_gen_disc_csv(out: impl Write, rows: &[GenDiscRow]) -> Result<(), HarnessError> {
    let mut writer = csv::Writer::from_writer(out);
    for r in rows {
        writer.serialize(r)?;
    }
    writer.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExploreComparison {
    pub seed: u64,
    pub low_level_steps: u64,
    pub mcts_unique: u64,
    pub random_unique: u64,
}

/// Unique valid transitions discovered by tree-search and by random
/// exploration at the same budget. The random arm ignores its model, so it
/// runs without fitting.
pub fn ablation_explore(config: &ExperimentConfig) -> Result<Vec<ExploreComparison>, HarnessError> {
    config.validate()?;
    let env = CraftEnv::new(config.env_config()?);
    let mcts = ExperimentConfig {
        explorer: ExplorerKind::Mcts,
        evaluate: false,
        stop_at_success: None,
        ..config.clone()
    };
    let random = ExperimentConfig {
        explorer: ExplorerKind::Random,
        model: ModelKind::Nonparametric,
        evaluate: false,
        stop_at_success: None,
        ..config.clone()
    };
    config
        .seeds
        .iter()
        .map(|&seed| {
            let a = train_seed(&mcts, &env, seed)?;
            let b = train_seed(&random, &env, seed)?;
            Ok(ExploreComparison {
                seed,
                low_level_steps: a.low_level_steps,
                mcts_unique: a.unique_valid.len() as u64,
                random_unique: b.unique_valid.len() as u64,
            })
        })
        .collect()
}
