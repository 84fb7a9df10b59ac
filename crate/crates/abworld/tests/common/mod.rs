#![allow(dead_code)]

use abworld::domain::{AbstractState, Behaviour, Item};
use abworld::worldmodel::Tensor;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random states over `ids` identities and `attrs` attributes with 1..=max_slots
/// items, plus a random single- or two-item behaviour over their identities.
pub fn random_examples(
    n: usize,
    ids: u16,
    attrs: u8,
    max_slots: usize,
    seed: u64,
) -> Vec<(AbstractState, Behaviour)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let slots = rng.gen_range(1..=max_slots.min(ids as usize));
            let chosen = sample(&mut rng, ids as usize, slots).into_vec();
            let items: Vec<Item> = chosen
                .iter()
                .map(|&i| Item::new(i as u16, rng.gen_range(0..attrs)))
                .collect();
            let width = rng.gen_range(1..=slots.min(2));
            let changes = chosen[..width]
                .iter()
                .map(|&i| Item::new(i as u16, rng.gen_range(0..attrs)));
            (
                AbstractState::new(items).unwrap(),
                Behaviour::new(changes).unwrap(),
            )
        })
        .collect()
}

pub struct GradCheck {
    pub tensor: String,
    pub coordinates: usize,
    pub max_rel_err: f64,
}

/// Central differences with step `h` on up to `per_tensor` coordinates of
/// every tensor, compared with the analytic gradient.
pub fn grad_check(
    params: &mut [f64],
    tensors: &[Tensor],
    analytic: &[f64],
    mut loss: impl FnMut(&[f64]) -> f64,
    h: f64,
    per_tensor: usize,
    seed: u64,
) -> Vec<GradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    tensors
        .iter()
        .map(|t| {
            let picks: Vec<usize> = if t.len() <= per_tensor {
                t.range().collect()
            } else {
                sample(&mut rng, t.len(), per_tensor)
                    .into_iter()
                    .map(|i| t.offset + i)
                    .collect()
            };
            let mut worst: f64 = 0.0;
            for &i in &picks {
                let orig = params[i];
                params[i] = orig + h;
                let up = loss(params);
                params[i] = orig - h;
                let down = loss(params);
                params[i] = orig;
                let numeric = (up - down) / (2.0 * h);
                let a = analytic[i];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
                worst = worst.max(rel);
            }
            GradCheck {
                tensor: t.name.clone(),
                coordinates: picks.len(),
                max_rel_err: worst,
            }
        })
        .collect()
}

/// Overwrites `params` with uniform values in `[-scale, scale]`.
pub fn randomise(params: &mut [f64], scale: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    params
        .iter_mut()
        .for_each(|p| *p = rng.gen_range(-scale..scale));
}

/// A small explicit graph: node `i` is the one-item state `(0, i)` and the
/// edge to `j` is the behaviour "item 0 takes attribute j".
pub struct SmallGraph {
    pub nodes: usize,
    pub edges: std::collections::BTreeMap<(usize, usize), f64>,
}

impl SmallGraph {
    pub fn node(i: usize) -> AbstractState {
        AbstractState::new(vec![Item::new(0, i as u8)]).unwrap()
    }

    pub fn index(state: &AbstractState) -> usize {
        state.items()[0].attribute.0 as usize
    }

    pub fn random(nodes: usize, max_edges: usize, rng: &mut impl Rng) -> Self {
        let mut edges = std::collections::BTreeMap::new();
        let target = rng.gen_range(0..=max_edges.min(nodes * (nodes - 1)));
        while edges.len() < target {
            let (u, v) = (rng.gen_range(0..nodes), rng.gen_range(0..nodes));
            if u != v {
                edges.insert((u, v), rng.gen_range(0.01..1.0));
            }
        }
        SmallGraph { nodes, edges }
    }

    /// Highest path probability from `from` to `to` over all simple paths.
    pub fn brute_force(&self, from: usize, to: usize) -> Option<f64> {
        self.brute_force_path(from, to).map(|(p, _)| p)
    }

    /// The most probable simple path and its probability.
    pub fn brute_force_path(&self, from: usize, to: usize) -> Option<(f64, Vec<usize>)> {
        fn walk(
            g: &SmallGraph,
            to: usize,
            prob: f64,
            path: &mut Vec<usize>,
            best: &mut Option<(f64, Vec<usize>)>,
        ) {
            let at = *path.last().unwrap();
            if at == to {
                if best.as_ref().is_none_or(|(b, _)| prob > *b) {
                    *best = Some((prob, path.clone()));
                }
                return;
            }
            for (&(u, v), &q) in &g.edges {
                if u == at && !path.contains(&v) {
                    path.push(v);
                    walk(g, to, prob * q, path, best);
                    path.pop();
                }
            }
        }
        let mut best = None;
        walk(self, to, 1.0, &mut vec![from], &mut best);
        best
    }
}

impl abworld::plan::Successors for SmallGraph {
    fn successors(
        &self,
        state: &AbstractState,
    ) -> Result<Vec<(Behaviour, AbstractState, f64)>, abworld::worldmodel::ModelError> {
        let u = Self::index(state);
        Ok(self
            .edges
            .iter()
            .filter(|((a, _), _)| *a == u)
            .map(|(&(_, v), &q)| {
                let b = Behaviour::new([Item::new(0, v as u8)]).unwrap();
                (b, Self::node(v), q)
            })
            .collect())
    }
}
