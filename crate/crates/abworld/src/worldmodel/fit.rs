use std::collections::VecDeque;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::OptimizerState;
use super::net::Net;
use super::ModelError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// Optimizer steps taken before the accuracy criterion may stop training.
    pub min_steps: u64,
    /// Hard cap on optimizer steps per fit, including restarts.
    pub max_steps: u64,
    pub accuracy_threshold: f64,
    /// Unique keys per batch; all keys when fewer are available.
    pub batch_size: usize,
    /// Number of recent steps averaged into the running accuracy.
    pub accuracy_window: usize,
    pub plateau_smoothing: f64,
    pub plateau_tolerance: f64,
    pub plateau_patience: u64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            min_steps: 2500,
            max_steps: 10_000,
            accuracy_threshold: 0.95,
            batch_size: 256,
            accuracy_window: 100,
            plateau_smoothing: 0.99,
            plateau_tolerance: 1e-4,
            plateau_patience: 500,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Running accuracy over the last `accuracy_window` steps.
    pub accuracy: f64,
    pub steps: u64,
    /// Weight re-initialisations triggered by the plateau detector.
    pub resets: u32,
    pub final_loss: f64,
    /// Batch loss of every step.
    #[serde(skip)]
    pub losses: Vec<f64>,
}

/// A training objective over a fixed set of keys.
pub(crate) trait Objective {
    fn num_keys(&self) -> usize;
    /// Mean loss and batch accuracy over `keys`; accumulates the gradient
    /// of the mean loss into `grad`.
    fn loss_and_grad(
        &self,
        net: &Net,
        keys: &[usize],
        grad: &mut [f64],
    ) -> Result<(f64, f64), ModelError>;
}

pub(crate) fn sample_keys(rng: &mut ChaCha8Rng, n: usize, batch: usize) -> Vec<usize> {
    if batch >= n {
        return (0..n).collect();
    }
    let mut keys = sample(rng, n, batch).into_vec();
    keys.sort_unstable();
    keys
}

pub(crate) fn reset_seed(seed: u64, resets: u32) -> u64 {
    seed.wrapping_add(u64::from(resets).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// The fit loop shared by both model kinds: uniform unique-key batches,
/// Adam updates, accuracy-based stopping and plateau restarts.
pub(crate) fn run_fit(
    net: &mut Net,
    opt: &mut OptimizerState,
    objective: &dyn Objective,
    config: &FitConfig,
) -> Result<FitReport, ModelError> {
    let n = objective.num_keys();
    if n == 0 {
        return Err(ModelError::EmptyData);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut grad = vec![0.0; net.num_params()];
    let window = config.accuracy_window.max(1);
    let mut recent: VecDeque<f64> = VecDeque::with_capacity(window);
    let mut report = FitReport::default();
    let mut ema = 0.0;
    let mut prev_running = 0.0;
    let mut flat = 0u64;
    let mut since_reset = 0u64;
    while report.steps < config.max_steps {
        let keys = sample_keys(&mut rng, n, config.batch_size.max(1));
        grad.iter_mut().for_each(|g| *g = 0.0);
        let (loss, acc) = objective.loss_and_grad(net, &keys, &mut grad)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(ModelError::Numerical {
                step: report.steps,
                loss,
            });
        }
        opt.step(&mut net.params, &grad);
        report.steps += 1;
        since_reset += 1;
        report.final_loss = loss;
        report.losses.push(loss);
        if recent.len() == window {
            recent.pop_front();
        }
        recent.push_back(acc);
        let running = recent.iter().sum::<f64>() / recent.len() as f64;
        report.accuracy = running;
        if report.steps >= config.min_steps
            && recent.len() == window
            && running >= config.accuracy_threshold
        {
            break;
        }
        ema = config.plateau_smoothing * ema
            + (1.0 - config.plateau_smoothing) * (running - prev_running);
        prev_running = running;
        flat = if ema.abs() < config.plateau_tolerance {
            flat + 1
        } else {
            0
        };
        if flat >= config.plateau_patience && since_reset >= config.min_steps {
            report.resets += 1;
            net.reset(reset_seed(config.seed, report.resets));
            opt.reset();
            recent.clear();
            ema = 0.0;
            prev_running = 0.0;
            flat = 0;
            since_reset = 0;
        }
    }
    Ok(report)
}
