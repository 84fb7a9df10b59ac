//! Count-based intrinsic reward and the max-backup tree search that seeks
//! rarely tried state-behaviour pairs in the model's imagination.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::abmdp::enumerate_behaviours;
use crate::domain::{AbstractState, Behaviour, DomainError};
use crate::worldmodel::{ModelError, TransitionModel};

pub const DEFAULT_EPSILON: f64 = 0.001;

/// `sqrt(T / (N + εT))`.
pub fn intrinsic_reward_value(total: u64, visits: u64, epsilon: f64) -> f64 {
    let t = total.max(1) as f64;
    (t / (visits as f64 + epsilon * t)).sqrt()
}

/// Visit counts `N(X, b)` and the number of executed abstract steps `T`.
#[derive(Clone, Debug)]
pub struct VisitCounter {
    visits: HashMap<(u64, Behaviour), u64>,
    total: u64,
    epsilon: f64,
}

impl Default for VisitCounter {
    fn default() -> Self {
        Self::new(DEFAULT_EPSILON)
    }
}

impl VisitCounter {
    pub fn new(epsilon: f64) -> Self {
        VisitCounter {
            visits: HashMap::new(),
            total: 0,
            epsilon,
        }
    }

    /// Counts one executed abstract step, successful or not.
    pub fn record(&mut self, state: &AbstractState, behaviour: &Behaviour) {
        *self
            .visits
            .entry((state.canonical_hash(), behaviour.clone()))
            .or_insert(0) += 1;
        self.total += 1;
    }

    pub fn visits(&self, state: &AbstractState, behaviour: &Behaviour) -> u64 {
        self.visits
            .get(&(state.canonical_hash(), behaviour.clone()))
            .copied()
            .unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn intrinsic_reward(&self, state: &AbstractState, behaviour: &Behaviour) -> f64 {
        intrinsic_reward_value(self.total, self.visits(state, behaviour), self.epsilon)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MctsConfig {
    pub num_simulations: usize,
    pub max_depth: usize,
    /// Edges predicted above this probability are always expanded.
    pub edge_validity_threshold: f64,
    /// Chance that an edge below the threshold is expanded anyway.
    pub random_behaviour_prob: f64,
    pub c_uct: f64,
}

impl Default for MctsConfig {
    fn default() -> Self {
        MctsConfig {
            num_simulations: 16,
            max_depth: 4,
            edge_validity_threshold: 0.5,
            random_behaviour_prob: 0.2,
            c_uct: std::f64::consts::SQRT_2,
        }
    }
}

#[derive(Debug)]
struct Edge {
    behaviour: Behaviour,
    child: usize,
    reward: f64,
}

#[derive(Debug)]
struct Node {
    state: AbstractState,
    depth: usize,
    parent: Option<usize>,
    children: Option<Vec<Edge>>,
    visits: u64,
    /// Largest reward on any explored root path through this node.
    value: f64,
    /// Largest reward on the incoming edge or anywhere below it.
    below: f64,
}

/// Search tree of one decision, exposed for inspection.
#[derive(Debug)]
pub struct SearchTree {
    nodes: Vec<Node>,
}

impl SearchTree {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Root children as `(behaviour, backed-up value, visits)`.
    pub fn root_children(&self) -> Vec<(Behaviour, f64, u64)> {
        self.nodes[0]
            .children
            .iter()
            .flatten()
            .map(|e| {
                (
                    e.behaviour.clone(),
                    self.nodes[e.child].value,
                    self.nodes[e.child].visits,
                )
            })
            .collect()
    }

    /// `(state, backed-up value)` of every node, root first.
    pub fn values(&self) -> Vec<(AbstractState, f64)> {
        self.nodes
            .iter()
            .map(|n| (n.state.clone(), n.value))
            .collect()
    }

    fn path_hashes(&self, mut node: usize) -> Vec<u64> {
        let mut out = vec![self.nodes[node].state.canonical_hash()];
        while let Some(p) = self.nodes[node].parent {
            out.push(self.nodes[p].state.canonical_hash());
            node = p;
        }
        out
    }
}

/// Explorer that chooses behaviours by tree search over imagined transitions.
pub struct Mcts {
    pub config: MctsConfig,
    pub num_attributes: usize,
    pub behaviour_items: usize,
}

impl Mcts {
    pub fn new(config: MctsConfig, num_attributes: usize, behaviour_items: usize) -> Self {
        Mcts {
            config,
            num_attributes,
            behaviour_items,
        }
    }

    fn behaviours(&self, state: &AbstractState) -> Result<Vec<Behaviour>, DomainError> {
        enumerate_behaviours(state, self.num_attributes, self.behaviour_items)
    }

    /// Picks the first behaviour of the most rewarding imagined path.
    pub fn select_behaviour<M: TransitionModel + ?Sized>(
        &self,
        model: &M,
        counter: &VisitCounter,
        root: &AbstractState,
        seed: u64,
    ) -> Result<Behaviour, ModelError> {
        Ok(self.search(model, counter, root, seed)?.0)
    }

    /// Runs the search and returns the chosen behaviour with the tree.
    pub fn search<M: TransitionModel + ?Sized>(
        &self,
        model: &M,
        counter: &VisitCounter,
        root: &AbstractState,
        seed: u64,
    ) -> Result<(Behaviour, SearchTree), ModelError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tree = SearchTree {
            nodes: vec![Node {
                state: root.clone(),
                depth: 0,
                parent: None,
                children: None,
                visits: 0,
                value: f64::NEG_INFINITY,
                below: f64::NEG_INFINITY,
            }],
        };
        let all = self.behaviours(root)?;
        for _ in 0..self.config.num_simulations {
            self.simulate(model, counter, &mut tree, &mut rng)?;
            if tree.nodes[0]
                .children
                .as_ref()
                .is_some_and(|c| c.is_empty())
            {
                break;
            }
        }
        let children = tree.nodes[0].children.as_deref().unwrap_or(&[]);
        let explored: Vec<&Edge> = children
            .iter()
            .filter(|e| tree.nodes[e.child].visits > 0)
            .collect();
        if explored.is_empty() {
            let choice = all
                .choose(&mut rng)
                .cloned()
                .ok_or(DomainError::EmptyBehaviour)?;
            return Ok((choice, tree));
        }
        let best = explored
            .iter()
            .map(|e| tree.nodes[e.child].value)
            .fold(f64::NEG_INFINITY, f64::max);
        let ties: Vec<&&Edge> = explored
            .iter()
            .filter(|e| tree.nodes[e.child].value == best)
            .collect();
        let choice = ties.choose(&mut rng).expect("non-empty").behaviour.clone();
        Ok((choice, tree))
    }

    fn expand<M: TransitionModel + ?Sized>(
        &self,
        model: &M,
        counter: &VisitCounter,
        tree: &mut SearchTree,
        node: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<(), ModelError> {
        let state = tree.nodes[node].state.clone();
        let on_path = tree.path_hashes(node);
        let behaviours = self.behaviours(&state)?;
        let imagined = model.imagine(&state, &behaviours)?;
        let mut edges = Vec::new();
        for (b, (next, q)) in behaviours.into_iter().zip(imagined) {
            // draw for every behaviour so the random stream does not depend on q
            let lucky = rng.gen_bool(self.config.random_behaviour_prob);
            if on_path.contains(&next.canonical_hash()) {
                continue;
            }
            if q > self.config.edge_validity_threshold || lucky {
                let reward = counter.intrinsic_reward(&state, &b);
                let child = tree.nodes.len();
                tree.nodes.push(Node {
                    state: next,
                    depth: tree.nodes[node].depth + 1,
                    parent: Some(node),
                    children: None,
                    visits: 0,
                    value: f64::NEG_INFINITY,
                    below: f64::NEG_INFINITY,
                });
                edges.push(Edge {
                    behaviour: b,
                    child,
                    reward,
                });
            }
        }
        tree.nodes[node].children = Some(edges);
        Ok(())
    }

    fn simulate<M: TransitionModel + ?Sized>(
        &self,
        model: &M,
        counter: &VisitCounter,
        tree: &mut SearchTree,
        rng: &mut ChaCha8Rng,
    ) -> Result<(), ModelError> {
        let mut node = 0;
        // (node, reward of the edge into it)
        let mut path: Vec<(usize, f64)> = vec![(0, f64::NEG_INFINITY)];
        loop {
            if tree.nodes[node].depth >= self.config.max_depth {
                break;
            }
            if tree.nodes[node].children.is_none() {
                self.expand(model, counter, tree, node, rng)?;
            }
            let edges = tree.nodes[node].children.as_deref().expect("expanded");
            if edges.is_empty() {
                break;
            }
            let pick = self.select_child(tree, node, rng);
            let edge = &tree.nodes[node].children.as_deref().expect("expanded")[pick];
            let (child, reward) = (edge.child, edge.reward);
            path.push((child, reward));
            node = child;
        }
        let path_max = path
            .iter()
            .map(|&(_, r)| r)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut suffix = f64::NEG_INFINITY;
        for &(n, r) in path.iter().rev() {
            suffix = suffix.max(r);
            let entry = &mut tree.nodes[n];
            entry.visits += 1;
            entry.value = entry.value.max(path_max);
            entry.below = entry.below.max(suffix);
        }
        Ok(())
    }

    /// UCT over children; unvisited children first, ties at random.
    fn select_child(&self, tree: &SearchTree, node: usize, rng: &mut ChaCha8Rng) -> usize {
        let edges = tree.nodes[node].children.as_deref().expect("expanded");
        let unvisited: Vec<usize> = (0..edges.len())
            .filter(|&i| tree.nodes[edges[i].child].visits == 0)
            .collect();
        if let Some(&i) = unvisited.choose(rng) {
            return i;
        }
        let qs: Vec<f64> = edges.iter().map(|e| tree.nodes[e.child].below).collect();
        let lo = qs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = qs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = if hi > lo { hi - lo } else { 1.0 };
        let ln_n = (tree.nodes[node].visits.max(1) as f64).ln();
        let scores: Vec<f64> = edges
            .iter()
            .zip(&qs)
            .map(|(e, q)| {
                let n = tree.nodes[e.child].visits as f64;
                (q - lo) / span + self.config.c_uct * (ln_n / n).sqrt()
            })
            .collect();
        let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let ties: Vec<usize> = (0..edges.len()).filter(|&i| scores[i] == best).collect();
        *ties.choose(rng).expect("non-empty")
    }
}

/// Uniformly random behaviour from the enumerated space of `root`.
pub fn random_explore_behaviour(
    root: &AbstractState,
    num_attributes: usize,
    behaviour_items: usize,
    rng: &mut impl Rng,
) -> Result<Behaviour, DomainError> {
    let all = enumerate_behaviours(root, num_attributes, behaviour_items)?;
    all.choose(rng).cloned().ok_or(DomainError::EmptyBehaviour)
}
