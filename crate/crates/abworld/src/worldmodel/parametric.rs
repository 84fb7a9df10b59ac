use ndarray::{Array1, Array2};

use super::adam::OptimizerState;
use super::counts::TransitionCounts;
use super::fit::{run_fit, FitConfig, FitReport, Objective};
use super::net::{row_mut, sigmoid, HeadKind, Net, NetShape, T_OUT, T_OUT_B};
use super::{ModelError, SuccessModel};
use crate::domain::{apply_delta, AbstractState, Behaviour, Vocabulary};

/// Hidden width of the attention trunk.
pub const DEFAULT_HIDDEN: usize = 128;

/// Discriminative success model: `f(X, b) = sigmoid(logit)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParametricModel {
    pub(crate) net: Net,
    pub(crate) seed: u64,
    pub(crate) steps: u64,
}

/// One supervised example: a state, a behaviour and a target probability.
pub type Example<'a> = (&'a AbstractState, &'a Behaviour, f64);

impl ParametricModel {
    pub fn new(identities: usize, attributes: usize, hidden: usize, seed: u64) -> Self {
        let shape = NetShape {
            identities,
            attributes,
            hidden,
            head: HeadKind::Binary,
        };
        ParametricModel {
            net: Net::new(shape, seed),
            seed,
            steps: 0,
        }
    }

    pub fn for_vocab(vocab: &Vocabulary, seed: u64) -> Self {
        Self::new(
            vocab.num_identities(),
            vocab.num_attributes(),
            DEFAULT_HIDDEN,
            seed,
        )
    }

    pub fn shape(&self) -> NetShape {
        self.net.shape
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Optimizer steps applied since the last reset.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn params(&self) -> &[f64] {
        &self.net.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.net.params
    }

    pub fn tensors(&self) -> &[super::net::Tensor] {
        &self.net.tensors
    }

    /// Redraws every weight from `seed`; the output head starts at zero so
    /// every prediction is 0.5.
    pub fn reset_weights(&mut self, seed: u64) {
        self.net.reset(seed);
        self.seed = seed;
        self.steps = 0;
    }

    pub fn logits(
        &self,
        examples: &[(&AbstractState, &Behaviour)],
    ) -> Result<Vec<f64>, ModelError> {
        if examples.is_empty() {
            return Ok(Vec::new());
        }
        let cache = self.net.trunk_forward(examples)?;
        let w2 = self.net.view(T_OUT);
        let b2 = self.net.row(T_OUT_B)[0];
        Ok(cache.y.dot(&w2.row(0)).iter().map(|l| l + b2).collect())
    }

    pub fn predict_batch(
        &self,
        examples: &[(&AbstractState, &Behaviour)],
    ) -> Result<Vec<f64>, ModelError> {
        Ok(self
            .logits(examples)?
            .into_iter()
            .map(probability)
            .collect())
    }

    /// Success probability of `behaviour` from `state`, strictly inside (0, 1).
    pub fn predict(&self, state: &AbstractState, behaviour: &Behaviour) -> Result<f64, ModelError> {
        Ok(self.predict_batch(&[(state, behaviour)])?[0])
    }

    /// Two-point next-state distribution: `Δ(X, b)` with probability `q`,
    /// `X` otherwise. A single outcome when `Δ(X, b) = X`.
    pub fn next_state_distribution(
        &self,
        state: &AbstractState,
        behaviour: &Behaviour,
    ) -> Result<Vec<(AbstractState, f64)>, ModelError> {
        let q = self.predict(state, behaviour)?;
        two_point(state, behaviour, q)
    }

    /// Mean binary cross-entropy against soft targets, with its gradient
    /// accumulated into `grad`. Also returns the thresholded accuracy.
    pub fn loss_and_grad(
        &self,
        batch: &[Example<'_>],
        grad: &mut [f64],
    ) -> Result<(f64, f64), ModelError> {
        binary_loss_and_grad(&self.net, batch, grad)
    }

    pub fn loss(&self, batch: &[Example<'_>]) -> Result<f64, ModelError> {
        let pairs: Vec<_> = batch.iter().map(|&(s, b, _)| (s, b)).collect();
        let logits = self.logits(&pairs)?;
        let total: f64 = logits
            .iter()
            .zip(batch)
            .map(|(&x, &(_, _, rho))| x.max(0.0) - rho * x + (-x.abs()).exp().ln_1p())
            .sum();
        Ok(total / batch.len() as f64)
    }

    /// One Adam step on `batch`. Returns `(loss, accuracy)` before the update.
    pub fn train_step(
        &mut self,
        opt: &mut OptimizerState,
        batch: &[Example<'_>],
    ) -> Result<(f64, f64), ModelError> {
        let mut grad = vec![0.0; self.net.num_params()];
        let (loss, acc) = self.loss_and_grad(batch, &mut grad)?;
        if !loss.is_finite() {
            return Err(ModelError::Numerical {
                step: self.steps,
                loss,
            });
        }
        opt.step(&mut self.net.params, &grad);
        self.steps += 1;
        Ok((loss, acc))
    }

    /// Fits the model to the smoothed empirical success rates of `counts`.
    pub fn fit(
        &mut self,
        counts: &TransitionCounts,
        opt: &mut OptimizerState,
        config: &FitConfig,
    ) -> Result<FitReport, ModelError> {
        let rows = counts
            .entries()
            .map(|e| (&e.state, &e.behaviour, counts.rho(e)))
            .collect();
        let objective = CountsObjective { rows };
        let report = run_fit(&mut self.net, opt, &objective, config)?;
        self.steps += report.steps;
        Ok(report)
    }
}

impl SuccessModel for ParametricModel {
    fn success_probs(
        &self,
        state: &AbstractState,
        behaviours: &[Behaviour],
    ) -> Result<Vec<f64>, ModelError> {
        let pairs: Vec<_> = behaviours.iter().map(|b| (state, b)).collect();
        self.predict_batch(&pairs)
    }
}

pub(crate) fn two_point(
    state: &AbstractState,
    behaviour: &Behaviour,
    q: f64,
) -> Result<Vec<(AbstractState, f64)>, ModelError> {
    let next = apply_delta(state, behaviour)?;
    if &next == state {
        Ok(vec![(next, 1.0)])
    } else {
        Ok(vec![(next, q), (state.clone(), 1.0 - q)])
    }
}

fn probability(logit: f64) -> f64 {
    sigmoid(logit).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON)
}

fn binary_loss_and_grad(
    net: &Net,
    batch: &[Example<'_>],
    grad: &mut [f64],
) -> Result<(f64, f64), ModelError> {
    let pairs: Vec<_> = batch.iter().map(|&(s, b, _)| (s, b)).collect();
    let cache = net.trunk_forward(&pairs)?;
    let w2 = net.view(T_OUT).row(0).to_owned();
    let b2 = net.row(T_OUT_B)[0];
    let n = batch.len() as f64;
    let logits = cache.y.dot(&w2) + b2;
    let mut d_logit = Array1::zeros(batch.len());
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (i, &(_, _, rho)) in batch.iter().enumerate() {
        let x = logits[i];
        loss += x.max(0.0) - rho * x + (-x.abs()).exp().ln_1p();
        let p = sigmoid(x);
        d_logit[i] = (p - rho) / n;
        correct += usize::from((p > 0.5) == (rho > 0.5));
    }
    {
        let tensors = &net.tensors;
        row_mut(&tensors[T_OUT], grad).scaled_add(1.0, &cache.y.t().dot(&d_logit));
        row_mut(&tensors[T_OUT_B], grad)[0] += d_logit.sum();
    }
    let d_y: Array2<f64> = d_logit
        .insert_axis(ndarray::Axis(1))
        .dot(&w2.insert_axis(ndarray::Axis(0)));
    net.trunk_backward(&cache, &d_y, None, grad);
    Ok((loss / n, correct as f64 / n))
}

struct CountsObjective<'a> {
    rows: Vec<Example<'a>>,
}

impl Objective for CountsObjective<'_> {
    fn num_keys(&self) -> usize {
        self.rows.len()
    }

    fn loss_and_grad(
        &self,
        net: &Net,
        keys: &[usize],
        grad: &mut [f64],
    ) -> Result<(f64, f64), ModelError> {
        let batch: Vec<Example<'_>> = keys.iter().map(|&k| self.rows[k]).collect();
        binary_loss_and_grad(net, &batch, grad)
    }
}
