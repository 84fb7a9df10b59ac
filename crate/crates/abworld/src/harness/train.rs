use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ExperimentConfig, ExplorerKind, ModelKind};
use super::metrics::MetricsRecord;
use super::oracle::env_goal;
use super::HarnessError;
use crate::abmdp::{run_behaviour, AbMdpConfig};
use crate::craft::CraftEnv;
use crate::domain::{AbstractTransition, AttributeId, ItemIdentity};
use crate::explore::{random_explore_behaviour, Mcts, VisitCounter};
use crate::plan::{execute_plan, ImaginedGraph, PlannerConfig};
use crate::worldmodel::{
    FitReport, GenerativeModel, Memoized, OptimizerState, ParametricModel, TransitionCounts,
    TransitionModel,
};

/// The learned component of a run.
#[derive(Clone, Debug)]
pub enum Learner {
    Parametric(ParametricModel),
    /// Plans directly on the smoothed counts.
    Nonparametric,
    Generative(GenerativeModel),
}

impl Learner {
    pub fn new(kind: ModelKind, env: &CraftEnv, seed: u64) -> Self {
        let vocab = &env.config().vocab;
        match kind {
            ModelKind::Parametric => Learner::Parametric(ParametricModel::for_vocab(vocab, seed)),
            ModelKind::Nonparametric => Learner::Nonparametric,
            ModelKind::Generative => Learner::Generative(GenerativeModel::for_vocab(vocab, seed)),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Learner::Parametric(_) => ModelKind::Parametric,
            Learner::Nonparametric => ModelKind::Nonparametric,
            Learner::Generative(_) => ModelKind::Generative,
        }
    }

    /// The model used for imagination, reading `counts` in non-parametric mode.
    pub fn imaginer<'a>(&'a self, counts: &'a TransitionCounts) -> &'a dyn TransitionModel {
        match self {
            Learner::Parametric(m) => m,
            Learner::Nonparametric => counts,
            Learner::Generative(m) => m,
        }
    }

    /// Resets the weights and fits to the data collected so far. The
    /// non-parametric learner has nothing to fit.
    pub fn refit(
        &mut self,
        counts: &TransitionCounts,
        config: &ExperimentConfig,
        seed: u64,
    ) -> Result<Option<FitReport>, HarnessError> {
        let fit = crate::worldmodel::FitConfig { seed, ..config.fit };
        match self {
            Learner::Parametric(m) => {
                m.reset_weights(seed);
                let mut opt = OptimizerState::new(config.adam, m.params().len());
                Ok(Some(m.fit(counts, &mut opt, &fit)?))
            }
            Learner::Generative(m) => {
                m.reset_weights(seed);
                let mut opt = OptimizerState::new(config.adam, m.params().len());
                Ok(Some(m.fit_generative(counts.dataset(), &mut opt, &fit)?))
            }
            Learner::Nonparametric => Ok(None),
        }
    }
}

/// Mean episode success with a 95% normal-approximation interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub mean: f64,
    pub ci_half_width: f64,
    pub episodes: usize,
}

pub fn ci_half_width(p: f64, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    1.96 * (p * (1.0 - p) / n as f64).sqrt()
}

/// Plan-and-execute episodes on layouts `eval_seed..eval_seed + episodes`.
pub fn evaluate(
    env: &CraftEnv,
    model: &dyn TransitionModel,
    planner: &PlannerConfig,
    abmdp: &AbMdpConfig,
    episodes: usize,
    eval_seed: u64,
) -> Result<Evaluation, HarnessError> {
    let memo = Memoized::new(model);
    let graph = ImaginedGraph {
        model: &memo,
        num_attributes: env.config().vocab.num_attributes(),
        behaviour_items: abmdp.behaviour_items,
    };
    let goal = env_goal(env);
    let mut wins = 0usize;
    for i in 0..episodes {
        let start = env.reset(eval_seed.wrapping_add(i as u64));
        let outcome = execute_plan(
            env,
            &graph,
            &start,
            &goal,
            planner,
            abmdp,
            env.config().episode_limit,
        )?;
        wins += usize::from(outcome.success);
    }
    let mean = if episodes == 0 {
        0.0
    } else {
        wins as f64 / episodes as f64
    };
    Ok(Evaluation {
        mean,
        ci_half_width: ci_half_width(mean, episodes),
        episodes,
    })
}

/// Everything produced by training one seed.
#[derive(Clone, Debug)]
pub struct SeedRun {
    pub seed: u64,
    pub records: Vec<MetricsRecord>,
    /// Wall-clock time per record, kept apart so metrics stay reproducible.
    pub wall_clock: Vec<Duration>,
    pub counts: TransitionCounts,
    pub learner: Learner,
    pub unique_valid: BTreeSet<(ItemIdentity, AttributeId, AttributeId)>,
    pub low_level_steps: u64,
}

impl SeedRun {
    pub fn transitions(&self) -> &[AbstractTransition] {
        self.counts.dataset()
    }

    /// Low-level steps at the first evaluation reaching `threshold`.
    pub fn steps_to_success(&self, threshold: f64) -> Option<u64> {
        self.records
            .iter()
            .find(|r| r.mean_return >= threshold)
            .map(|r| r.low_level_steps)
    }
}

/// Per-round seeds derived from the run seed.
fn mix(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// The collect, reset, fit, evaluate loop for one seed.
pub fn train_seed(
    config: &ExperimentConfig,
    env: &CraftEnv,
    seed: u64,
) -> Result<SeedRun, HarnessError> {
    let vocab = &env.config().vocab;
    let m = vocab.num_attributes();
    let abmdp = config.abmdp;
    let mcts = Mcts::new(config.mcts, m, abmdp.behaviour_items);
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, 1));
    let mut counts = TransitionCounts::default();
    let mut counter = VisitCounter::default();
    let mut learner = Learner::new(config.model, env, mix(seed, 2));
    let mut run = SeedRun {
        seed,
        records: Vec::new(),
        wall_clock: Vec::new(),
        counts: TransitionCounts::default(),
        learner: learner.clone(),
        unique_valid: BTreeSet::new(),
        low_level_steps: 0,
    };
    let limit = env.config().episode_limit;
    let mut episode = 0u64;
    let mut state = env.reset(mix(seed, 3));
    let mut elapsed = 0u32;
    let mut decision = 0u64;
    let mut round = 0u64;
    let started = Instant::now();
    while run.low_level_steps < config.step_budget {
        let round_start = run.low_level_steps;
        {
            // fixed for the whole round, so predictions can be cached
            let model: Option<&dyn TransitionModel> = match &learner {
                Learner::Parametric(m) => Some(m),
                Learner::Generative(m) => Some(m),
                Learner::Nonparametric => None,
            };
            let memo = model.map(Memoized::new);
            while run.low_level_steps - round_start < config.frames_per_collection
                && run.low_level_steps < config.step_budget
            {
                if elapsed >= limit {
                    episode += 1;
                    state = env.reset(mix(seed, 3).wrapping_add(episode));
                    elapsed = 0;
                }
                let x = env.map_m(&state);
                let b = match (config.explorer, &memo) {
                    (ExplorerKind::Random, _) => {
                        random_explore_behaviour(&x, m, abmdp.behaviour_items, &mut rng)?
                    }
                    (ExplorerKind::Mcts, Some(memo)) => {
                        decision += 1;
                        mcts.select_behaviour(memo, &counter, &x, mix(seed, 10 + decision))?
                    }
                    (ExplorerKind::Mcts, None) => {
                        decision += 1;
                        mcts.select_behaviour(&counts, &counter, &x, mix(seed, 10 + decision))?
                    }
                };
                // rounds and the budget end exactly on their frame counts
                let remaining = (config.step_budget - run.low_level_steps)
                    .min(config.frames_per_collection - (run.low_level_steps - round_start));
                let step = AbMdpConfig {
                    k: abmdp.k.min(remaining.min(u64::from(u32::MAX)) as u32),
                    ..abmdp
                };
                let (t, next) = run_behaviour(env, &state, &b, &step);
                counter.record(&t.state, &t.behaviour);
                for change in t.state.changes_to(&t.next_state) {
                    run.unique_valid.insert(change);
                }
                run.low_level_steps += u64::from(t.low_level_steps);
                elapsed += t.low_level_steps;
                counts.record(t);
                state = next;
            }
        }
        round += 1;
        let report = learner.refit(&counts, config, mix(seed, 1000 + round))?;
        let eval = if config.evaluate {
            Some(evaluate(
                env,
                learner.imaginer(&counts),
                &config.planner,
                &abmdp,
                config.eval_episodes,
                config.eval_seed,
            )?)
        } else {
            None
        };
        run.records.push(MetricsRecord {
            seed,
            round,
            low_level_steps: run.low_level_steps,
            mean_return: eval.map_or(f64::NAN, |e| e.mean),
            ci_half_width: eval.map_or(f64::NAN, |e| e.ci_half_width),
            unique_valid_transitions: run.unique_valid.len() as u64,
            model_accuracy: report.as_ref().map_or(f64::NAN, |r| r.accuracy),
            fit_steps: report.as_ref().map_or(0, |r| r.steps),
        });
        run.wall_clock.push(started.elapsed());
        if let (Some(target), Some(e)) = (config.stop_at_success, eval) {
            if e.mean >= target {
                break;
            }
        }
    }
    run.counts = counts;
    run.learner = learner;
    Ok(run)
}

/// Runs every configured seed.
pub fn train(config: &ExperimentConfig) -> Result<Vec<SeedRun>, HarnessError> {
    config.validate()?;
    let env = CraftEnv::new(config.env_config()?);
    config
        .seeds
        .iter()
        .map(|&seed| train_seed(config, &env, seed))
        .collect()
}
