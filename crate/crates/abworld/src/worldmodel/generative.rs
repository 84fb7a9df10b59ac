use indexmap::IndexMap;
use ndarray::{s, Array2, Axis};

use super::adam::OptimizerState;
use super::fit::{run_fit, FitConfig, FitReport, Objective};
use super::net::{
    row_mut, softmax, view_mut, HeadKind, Net, NetShape, TrunkCache, T_SLOT_H, T_SLOT_HB,
    T_SLOT_OUT, T_SLOT_OUT_B,
};
use super::parametric::DEFAULT_HIDDEN;
use super::ModelError;
use crate::domain::{AbstractState, AbstractTransition, AttributeId, Behaviour, Vocabulary};

/// Per-slot categorical next-state model sharing the discriminative trunk.
#[derive(Clone, Debug, PartialEq)]
pub struct GenerativeModel {
    pub(crate) net: Net,
    pub(crate) seed: u64,
    pub(crate) steps: u64,
}

/// Empirical next-attribute frequencies for one `(state, behaviour)` key.
#[derive(Clone, Debug, PartialEq)]
pub struct SlotTargets {
    pub state: AbstractState,
    pub behaviour: Behaviour,
    /// One distribution over attributes per non-empty slot, in slot order.
    pub frequencies: Vec<Vec<f64>>,
}

/// Groups a transition log by key and turns next-state attributes into
/// per-slot frequencies.
pub fn slot_targets(
    dataset: &[AbstractTransition],
    attributes: usize,
) -> Result<Vec<SlotTargets>, ModelError> {
    let mut table: IndexMap<(u64, Behaviour), (SlotTargets, u64)> = IndexMap::new();
    for t in dataset {
        let slots: Vec<usize> = (0..t.state.len())
            .filter(|&i| !t.state.items()[i].is_empty())
            .collect();
        let (targets, n) = table
            .entry((t.state.canonical_hash(), t.behaviour.clone()))
            .or_insert_with(|| {
                let frequencies = vec![vec![0.0; attributes]; slots.len()];
                (
                    SlotTargets {
                        state: t.state.clone(),
                        behaviour: t.behaviour.clone(),
                        frequencies,
                    },
                    0,
                )
            });
        for (row, &slot) in targets.frequencies.iter_mut().zip(&slots) {
            let item = t.state.items()[slot];
            let attr = t
                .next_state
                .attribute_of(item.identity)
                .unwrap_or(item.attribute)
                .0 as usize;
            if attr >= attributes {
                return Err(ModelError::UnknownAttribute(attr as u8));
            }
            row[attr] += 1.0;
        }
        *n += 1;
    }
    Ok(table
        .into_values()
        .map(|(mut t, n)| {
            t.frequencies
                .iter_mut()
                .flatten()
                .for_each(|f| *f /= n as f64);
            t
        })
        .collect())
}

impl GenerativeModel {
    pub fn new(identities: usize, attributes: usize, hidden: usize, seed: u64) -> Self {
        let shape = NetShape {
            identities,
            attributes,
            hidden,
            head: HeadKind::Categorical,
        };
        GenerativeModel {
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

    pub fn params(&self) -> &[f64] {
        &self.net.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.net.params
    }

    pub fn tensors(&self) -> &[super::net::Tensor] {
        &self.net.tensors
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn reset_weights(&mut self, seed: u64) {
        self.net.reset(seed);
        self.seed = seed;
        self.steps = 0;
    }

    /// Per-slot attribute distributions for each example, non-empty slots only.
    pub fn slot_distributions(
        &self,
        examples: &[(&AbstractState, &Behaviour)],
    ) -> Result<Vec<Vec<Vec<f64>>>, ModelError> {
        if examples.is_empty() {
            return Ok(Vec::new());
        }
        let cache = self.net.trunk_forward(examples)?;
        let head = head_forward(&self.net, &cache);
        let mut rows = head.logits.rows().into_iter();
        Ok(cache
            .slots
            .iter()
            .map(|slots| {
                slots
                    .iter()
                    .map(|_| softmax(&rows.next().expect("one row per slot").to_vec()))
                    .collect()
            })
            .collect())
    }

    /// Most likely next state and its probability (product of per-slot maxima).
    pub fn modal_next_state(
        &self,
        state: &AbstractState,
        behaviour: &Behaviour,
    ) -> Result<(AbstractState, f64), ModelError> {
        let dists = self.slot_distributions(&[(state, behaviour)])?.remove(0);
        Ok(modal(state, &dists))
    }

    pub fn fit_generative(
        &mut self,
        dataset: &[AbstractTransition],
        opt: &mut OptimizerState,
        config: &FitConfig,
    ) -> Result<FitReport, ModelError> {
        let targets = slot_targets(dataset, self.net.shape.attributes)?;
        self.fit_targets(&targets, opt, config)
    }

    pub fn fit_targets(
        &mut self,
        targets: &[SlotTargets],
        opt: &mut OptimizerState,
        config: &FitConfig,
    ) -> Result<FitReport, ModelError> {
        let objective = SlotObjective { targets };
        let report = run_fit(&mut self.net, opt, &objective, config)?;
        self.steps += report.steps;
        Ok(report)
    }

    /// Mean (over examples) of the summed per-slot cross-entropy.
    pub fn loss_and_grad(
        &self,
        batch: &[&SlotTargets],
        grad: &mut [f64],
    ) -> Result<(f64, f64), ModelError> {
        categorical_loss_and_grad(&self.net, batch, grad)
    }
}

fn modal(state: &AbstractState, dists: &[Vec<f64>]) -> (AbstractState, f64) {
    let mut items = state.items().to_vec();
    let mut prob = 1.0;
    let slots = items.iter_mut().filter(|i| !i.is_empty());
    for (item, dist) in slots.zip(dists) {
        let (best, p) = argmax(dist);
        item.attribute = AttributeId(best as u8);
        prob *= p;
    }
    (
        AbstractState::new(items).expect("identities unchanged"),
        prob,
    )
}

fn argmax(values: &[f64]) -> (usize, f64) {
    values
        .iter()
        .copied()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |acc, (i, v)| if v > acc.1 { (i, v) } else { acc },
        )
}

struct HeadCache {
    /// `(example, token)` for every non-empty slot, in example then slot order.
    pairs: Vec<(usize, usize)>,
    pre: Array2<f64>,
    u: Array2<f64>,
    logits: Array2<f64>,
}

/// `u = relu(Wh_y y_i + Wh_e e_t + bh)` and `logits = Wo u + bo` per slot.
fn head_forward(net: &Net, cache: &TrunkCache) -> HeadCache {
    let h = net.shape.hidden;
    let wh = net.view(T_SLOT_H);
    let from_y = cache.y.dot(&wh.slice(s![.., ..h]).t());
    let from_e = cache.e.dot(&wh.slice(s![.., h..]).t());
    let pairs: Vec<(usize, usize)> = cache
        .slots
        .iter()
        .enumerate()
        .flat_map(|(i, slots)| slots.iter().map(move |&t| (i, t)))
        .collect();
    let mut pre = Array2::<f64>::zeros((pairs.len(), h));
    let bias = net.row(T_SLOT_HB);
    for (r, &(i, t)) in pairs.iter().enumerate() {
        let mut row = pre.row_mut(r);
        row += &from_y.row(i);
        row += &from_e.row(t);
        row += &bias;
    }
    let u = pre.mapv(|v| v.max(0.0));
    let mut logits = u.dot(&net.view(T_SLOT_OUT).t());
    logits += &net.row(T_SLOT_OUT_B);
    HeadCache {
        pairs,
        pre,
        u,
        logits,
    }
}

fn categorical_loss_and_grad(
    net: &Net,
    batch: &[&SlotTargets],
    grad: &mut [f64],
) -> Result<(f64, f64), ModelError> {
    let h = net.shape.hidden;
    let m = net.shape.attributes;
    let pairs: Vec<_> = batch.iter().map(|t| (&t.state, &t.behaviour)).collect();
    let cache = net.trunk_forward(&pairs)?;
    let head = head_forward(net, &cache);
    let n = batch.len() as f64;
    let mut d_logits = Array2::<f64>::zeros(head.logits.raw_dim());
    let mut loss = 0.0;
    let mut correct = 0usize;
    let mut r = 0;
    for (i, target) in batch.iter().enumerate() {
        let mut all_match = true;
        for freq in target.frequencies.iter().take(cache.slots[i].len()) {
            let logits = head.logits.row(r).to_vec();
            let p = softmax(&logits);
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let log_z = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
            for c in 0..m {
                loss -= freq[c] * (logits[c] - log_z);
                d_logits[[r, c]] = (p[c] - freq[c]) / n;
            }
            all_match &= argmax(&p).0 == argmax(freq).0;
            r += 1;
        }
        correct += usize::from(all_match);
    }
    view_mut(&net.tensors[T_SLOT_OUT], grad).scaled_add(1.0, &d_logits.t().dot(&head.u));
    row_mut(&net.tensors[T_SLOT_OUT_B], grad).scaled_add(1.0, &d_logits.sum_axis(Axis(0)));
    let mut d_pre = d_logits.dot(&net.view(T_SLOT_OUT));
    d_pre.zip_mut_with(&head.pre, |d, &p| {
        if p <= 0.0 {
            *d = 0.0;
        }
    });
    row_mut(&net.tensors[T_SLOT_HB], grad).scaled_add(1.0, &d_pre.sum_axis(Axis(0)));
    let mut d_from_y = Array2::<f64>::zeros((cache.y.nrows(), h));
    let mut d_from_e = Array2::<f64>::zeros((cache.e.nrows(), h));
    for (row, &(i, t)) in head.pairs.iter().enumerate() {
        let d = d_pre.row(row);
        let mut y = d_from_y.row_mut(i);
        y += &d;
        let mut e = d_from_e.row_mut(t);
        e += &d;
    }
    {
        let mut g_wh = view_mut(&net.tensors[T_SLOT_H], grad);
        g_wh.slice_mut(s![.., ..h])
            .scaled_add(1.0, &d_from_y.t().dot(&cache.y));
        g_wh.slice_mut(s![.., h..])
            .scaled_add(1.0, &d_from_e.t().dot(&cache.e));
    }
    let wh = net.view(T_SLOT_H);
    let d_y = d_from_y.dot(&wh.slice(s![.., ..h]));
    let d_e = d_from_e.dot(&wh.slice(s![.., h..]));
    net.trunk_backward(&cache, &d_y, Some(&d_e), grad);
    Ok((loss / n, correct as f64 / n))
}

struct SlotObjective<'a> {
    targets: &'a [SlotTargets],
}

impl Objective for SlotObjective<'_> {
    fn num_keys(&self) -> usize {
        self.targets.len()
    }

    fn loss_and_grad(
        &self,
        net: &Net,
        keys: &[usize],
        grad: &mut [f64],
    ) -> Result<(f64, f64), ModelError> {
        let batch: Vec<&SlotTargets> = keys.iter().map(|&k| &self.targets[k]).collect();
        categorical_loss_and_grad(net, &batch, grad)
    }
}

impl super::TransitionModel for GenerativeModel {
    fn imagine(
        &self,
        state: &AbstractState,
        behaviours: &[Behaviour],
    ) -> Result<Vec<(AbstractState, f64)>, ModelError> {
        let pairs: Vec<_> = behaviours.iter().map(|b| (state, b)).collect();
        Ok(self
            .slot_distributions(&pairs)?
            .iter()
            .map(|d| modal(state, d))
            .collect())
    }
}
