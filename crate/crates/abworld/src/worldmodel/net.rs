//! The shared encoder trunk: item and behaviour encoders, single-head
//! attention pooling conditioned on the behaviour, and a hidden MLP layer.
//! Parameters live in one flat vector so the optimizer, persistence and
//! gradient checks can treat every tensor uniformly.

use std::collections::HashMap;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::domain::{AbstractState, Behaviour, Item};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    /// One success logit per example.
    Binary,
    /// A categorical distribution over attributes for every item slot.
    Categorical,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetShape {
    pub identities: usize,
    pub attributes: usize,
    pub hidden: usize,
    pub head: HeadKind,
}

impl NetShape {
    pub fn width(&self) -> usize {
        self.identities.max(self.attributes)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
    /// Fan-in of the uniform initialisation; zero means zero-initialised.
    #[serde(skip)]
    pub fan_in: usize,
}

impl Tensor {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

pub(crate) const T_E: usize = 0;
pub(crate) const T_BE: usize = 1;
pub(crate) const T_B: usize = 2;
pub(crate) const T_BB: usize = 3;
pub(crate) const T_WQ: usize = 4;
pub(crate) const T_WK: usize = 5;
pub(crate) const T_WV: usize = 6;
pub(crate) const T_W1: usize = 7;
pub(crate) const T_B1: usize = 8;
/// Binary head: `w2` (1 x h).
pub(crate) const T_OUT: usize = 9;
/// Binary head: `b2` (1 x 1).
pub(crate) const T_OUT_B: usize = 10;
/// Categorical head: per-slot hidden layer `wh` (h x 2h) over `[y; e_t]`,
/// its bias, then `wo` (m x h) and `bo` (1 x m).
pub(crate) const T_SLOT_H: usize = 9;
pub(crate) const T_SLOT_HB: usize = 10;
pub(crate) const T_SLOT_OUT: usize = 11;
pub(crate) const T_SLOT_OUT_B: usize = 12;

pub fn layout(shape: &NetShape) -> Vec<Tensor> {
    let (w, h, m) = (shape.width(), shape.hidden, shape.attributes);
    let mut specs = vec![
        ("item_embed", 2 * w, h, 2),
        ("item_bias", 1, h, 0),
        ("behaviour_embed", 2 * w, h, 2),
        ("behaviour_bias", 1, h, 0),
        ("query", h, h, h),
        ("key", h, h, h),
        ("value", h, h, h),
        ("hidden", h, 2 * h, 2 * h),
        ("hidden_bias", 1, h, 0),
    ];
    match shape.head {
        HeadKind::Binary => specs.extend([("logit", 1, h, 0), ("logit_bias", 1, 1, 0)]),
        HeadKind::Categorical => specs.extend([
            ("slot_hidden", h, 2 * h, 2 * h),
            ("slot_hidden_bias", 1, h, 0),
            ("slot_logits", m, h, 0),
            ("slot_bias", 1, m, 0),
        ]),
    }
    let mut offset = 0;
    specs
        .into_iter()
        .map(|(name, rows, cols, fan_in)| {
            let t = Tensor {
                name: name.to_string(),
                offset,
                rows,
                cols,
                fan_in,
            };
            offset += rows * cols;
            t
        })
        .collect()
}

/// Network parameters plus their layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Net {
    pub shape: NetShape,
    pub tensors: Vec<Tensor>,
    pub params: Vec<f64>,
}

impl Net {
    pub fn new(shape: NetShape, seed: u64) -> Self {
        let tensors = layout(&shape);
        let total = tensors.last().map_or(0, |t| t.offset + t.len());
        let mut net = Net {
            shape,
            tensors,
            params: vec![0.0; total],
        };
        net.reset(seed);
        net
    }

    /// Redraws every weight: uniform in `±1/sqrt(fan_in)` for projections,
    /// zeros for biases and the output head.
    pub fn reset(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for t in &self.tensors {
            let slice = &mut self.params[t.offset..t.offset + t.rows * t.cols];
            if t.fan_in == 0 {
                slice.iter_mut().for_each(|v| *v = 0.0);
            } else {
                let bound = 1.0 / (t.fan_in as f64).sqrt();
                slice
                    .iter_mut()
                    .for_each(|v| *v = rng.gen_range(-bound..bound));
            }
        }
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub(crate) fn view(&self, t: usize) -> ArrayView2<'_, f64> {
        view(&self.tensors[t], &self.params)
    }

    pub(crate) fn row(&self, t: usize) -> ArrayView1<'_, f64> {
        let tensor = &self.tensors[t];
        ArrayView1::from(&self.params[tensor.range()])
    }

    fn check(&self, item: &Item) -> Result<(), ModelError> {
        if item.identity.0 as usize >= self.shape.identities {
            return Err(ModelError::UnknownIdentity(item.identity.0));
        }
        if item.attribute.0 as usize >= self.shape.attributes {
            return Err(ModelError::UnknownAttribute(item.attribute.0));
        }
        Ok(())
    }

    /// Forward pass of the trunk over a batch of `(state, behaviour)` pairs.
    pub(crate) fn trunk_forward(
        &self,
        examples: &[(&AbstractState, &Behaviour)],
    ) -> Result<TrunkCache, ModelError> {
        let h = self.shape.hidden;
        let w = self.shape.width();
        let mut tokens: Vec<Item> = Vec::new();
        let mut token_index: HashMap<Item, usize> = HashMap::new();
        let mut behaviours: Vec<Behaviour> = Vec::new();
        let mut behaviour_index: HashMap<&Behaviour, usize> = HashMap::new();
        let mut slots = Vec::with_capacity(examples.len());
        let mut beh = Vec::with_capacity(examples.len());
        for &(state, behaviour) in examples {
            let mut row = Vec::with_capacity(state.len());
            for item in state.non_empty() {
                self.check(item)?;
                let next = tokens.len();
                let idx = *token_index.entry(*item).or_insert(next);
                if idx == next {
                    tokens.push(*item);
                }
                row.push(idx);
            }
            slots.push(row);
            if let Some(&idx) = behaviour_index.get(behaviour) {
                beh.push(idx);
            } else {
                for c in behaviour.changes() {
                    self.check(c)?;
                }
                behaviour_index.insert(behaviour, behaviours.len());
                beh.push(behaviours.len());
                behaviours.push(behaviour.clone());
            }
        }

        let embed = self.view(T_E);
        let item_bias = self.row(T_BE);
        let mut e_pre = Array2::zeros((tokens.len(), h));
        for (mut row, item) in e_pre.rows_mut().into_iter().zip(&tokens) {
            row.assign(&item_bias);
            row += &embed.row(item.identity.0 as usize);
            row += &embed.row(w + item.attribute.0 as usize);
        }
        let e = e_pre.mapv(relu);
        let k = e.dot(&self.view(T_WK).t());
        let v = e.dot(&self.view(T_WV).t());

        let bembed = self.view(T_B);
        let bbias = self.row(T_BB);
        let mut g = Array2::zeros((behaviours.len(), h));
        let mut b_pre = Vec::with_capacity(behaviours.len());
        for (mut grow, b) in g.rows_mut().into_iter().zip(&behaviours) {
            let mut pre = Array2::zeros((b.len(), h));
            for (mut prow, c) in pre.rows_mut().into_iter().zip(b.changes()) {
                prow.assign(&bbias);
                prow += &bembed.row(c.identity.0 as usize);
                prow += &bembed.row(w + c.attribute.0 as usize);
                grow.zip_mut_with(&prow, |gv, &pv| *gv += relu(pv));
            }
            b_pre.push(pre);
        }
        let q = g.dot(&self.view(T_WQ).t());

        let scale = 1.0 / (h as f64).sqrt();
        let n = examples.len();
        let mut z = Array2::zeros((n, 2 * h));
        let mut attn = Vec::with_capacity(n);
        for i in 0..n {
            let qi = q.row(beh[i]);
            let scores: Vec<f64> = slots[i]
                .iter()
                .map(|&t| qi.dot(&k.row(t)) * scale)
                .collect();
            let a = softmax(&scores);
            let mut zi = z.row_mut(i);
            {
                let mut p = zi.slice_mut(s![..h]);
                for (&t, &aj) in slots[i].iter().zip(&a) {
                    p.scaled_add(aj, &v.row(t));
                }
            }
            zi.slice_mut(s![h..]).assign(&g.row(beh[i]));
            attn.push(a);
        }
        let mut y_pre = z.dot(&self.view(T_W1).t());
        y_pre += &self.row(T_B1);
        let y = y_pre.mapv(relu);
        Ok(TrunkCache {
            tokens,
            e_pre,
            e,
            k,
            v,
            behaviours,
            b_pre,
            g,
            q,
            slots,
            beh,
            attn,
            z,
            y_pre,
            y,
        })
    }

    /// Backpropagates `d_y` (and optional extra gradient on the token
    /// embeddings) through the trunk, accumulating into `grad`.
    pub(crate) fn trunk_backward(
        &self,
        cache: &TrunkCache,
        d_y: &Array2<f64>,
        d_e_extra: Option<&Array2<f64>>,
        grad: &mut [f64],
    ) {
        let h = self.shape.hidden;
        let w = self.shape.width();
        let scale = 1.0 / (h as f64).sqrt();

        let mut d_ypre = d_y.clone();
        d_ypre.zip_mut_with(&cache.y_pre, |d, &p| {
            if p <= 0.0 {
                *d = 0.0
            }
        });
        view_mut(&self.tensors[T_W1], grad).scaled_add(1.0, &d_ypre.t().dot(&cache.z));
        row_mut(&self.tensors[T_B1], grad).scaled_add(1.0, &d_ypre.sum_axis(Axis(0)));
        let d_z = d_ypre.dot(&self.view(T_W1));

        let mut d_k = Array2::<f64>::zeros(cache.k.raw_dim());
        let mut d_v = Array2::<f64>::zeros(cache.v.raw_dim());
        let mut d_q = Array2::<f64>::zeros(cache.q.raw_dim());
        let mut d_g = Array2::<f64>::zeros(cache.g.raw_dim());
        for i in 0..cache.slots.len() {
            let b = cache.beh[i];
            let d_p = d_z.slice(s![i, ..h]);
            d_g.row_mut(b).scaled_add(1.0, &d_z.slice(s![i, h..]));
            let a = &cache.attn[i];
            let d_a: Vec<f64> = cache.slots[i]
                .iter()
                .map(|&t| d_p.dot(&cache.v.row(t)))
                .collect();
            let mean: f64 = a.iter().zip(&d_a).map(|(x, y)| x * y).sum();
            for ((&t, &aj), &daj) in cache.slots[i].iter().zip(a).zip(&d_a) {
                d_v.row_mut(t).scaled_add(aj, &d_p);
                let ds = aj * (daj - mean) * scale;
                d_q.row_mut(b).scaled_add(ds, &cache.k.row(t));
                d_k.row_mut(t).scaled_add(ds, &cache.q.row(b));
            }
        }

        view_mut(&self.tensors[T_WQ], grad).scaled_add(1.0, &d_q.t().dot(&cache.g));
        d_g += &d_q.dot(&self.view(T_WQ));
        view_mut(&self.tensors[T_WK], grad).scaled_add(1.0, &d_k.t().dot(&cache.e));
        view_mut(&self.tensors[T_WV], grad).scaled_add(1.0, &d_v.t().dot(&cache.e));
        let mut d_e = d_k.dot(&self.view(T_WK));
        d_e += &d_v.dot(&self.view(T_WV));
        if let Some(extra) = d_e_extra {
            d_e += extra;
        }
        d_e.zip_mut_with(&cache.e_pre, |d, &p| {
            if p <= 0.0 {
                *d = 0.0
            }
        });
        {
            let mut g_embed = view_mut(&self.tensors[T_E], grad);
            for (row, item) in d_e.rows().into_iter().zip(&cache.tokens) {
                g_embed
                    .row_mut(item.identity.0 as usize)
                    .scaled_add(1.0, &row);
                g_embed
                    .row_mut(w + item.attribute.0 as usize)
                    .scaled_add(1.0, &row);
            }
        }
        row_mut(&self.tensors[T_BE], grad).scaled_add(1.0, &d_e.sum_axis(Axis(0)));

        let mut d_bbias = Array1::<f64>::zeros(h);
        {
            let mut g_bembed = view_mut(&self.tensors[T_B], grad);
            for (b, (behaviour, pre)) in cache.behaviours.iter().zip(&cache.b_pre).enumerate() {
                for (c, prow) in behaviour.changes().iter().zip(pre.rows()) {
                    let mut d = d_g.row(b).to_owned();
                    d.zip_mut_with(&prow, |dv, &pv| {
                        if pv <= 0.0 {
                            *dv = 0.0
                        }
                    });
                    g_bembed.row_mut(c.identity.0 as usize).scaled_add(1.0, &d);
                    g_bembed
                        .row_mut(w + c.attribute.0 as usize)
                        .scaled_add(1.0, &d);
                    d_bbias += &d;
                }
            }
        }
        row_mut(&self.tensors[T_BB], grad).scaled_add(1.0, &d_bbias);
    }
}

/// Intermediate values of a trunk forward pass needed for backprop.
pub(crate) struct TrunkCache {
    /// Distinct `(identity, attribute)` tokens of the batch.
    pub tokens: Vec<Item>,
    pub e_pre: Array2<f64>,
    pub e: Array2<f64>,
    pub k: Array2<f64>,
    pub v: Array2<f64>,
    pub behaviours: Vec<Behaviour>,
    pub b_pre: Vec<Array2<f64>>,
    pub g: Array2<f64>,
    pub q: Array2<f64>,
    /// Token index of each non-empty slot, per example.
    pub slots: Vec<Vec<usize>>,
    /// Behaviour index per example.
    pub beh: Vec<usize>,
    pub attn: Vec<Vec<f64>>,
    pub z: Array2<f64>,
    pub y_pre: Array2<f64>,
    pub y: Array2<f64>,
}

pub(crate) fn view<'a>(t: &Tensor, params: &'a [f64]) -> ArrayView2<'a, f64> {
    ArrayView2::from_shape((t.rows, t.cols), &params[t.range()]).expect("layout matches")
}

pub(crate) fn view_mut<'a>(t: &Tensor, params: &'a mut [f64]) -> ArrayViewMut2<'a, f64> {
    ArrayViewMut2::from_shape((t.rows, t.cols), &mut params[t.range()]).expect("layout matches")
}

pub(crate) fn row_mut<'a>(t: &Tensor, params: &'a mut [f64]) -> ArrayViewMut1<'a, f64> {
    ArrayViewMut1::from(&mut params[t.range()])
}

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

pub(crate) fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
