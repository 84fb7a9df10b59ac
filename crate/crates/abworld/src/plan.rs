//! Goal planning on the imagined transition graph and world-graph export.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::abmdp::{enumerate_behaviours, run_behaviour, AbMdpConfig};
use crate::craft::{CraftEnv, LowLevelState};
use crate::domain::{AbstractState, Behaviour, Item, Vocabulary};
use crate::worldmodel::{ModelError, TransitionModel};

/// Conjunction of required `(identity, attribute)` pairs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalPredicate {
    required: Vec<Item>,
}

impl GoalPredicate {
    /// `None` when `required` is empty.
    pub fn new(required: Vec<Item>) -> Option<Self> {
        (!required.is_empty()).then_some(GoalPredicate { required })
    }

    pub fn required(&self) -> &[Item] {
        &self.required
    }

    pub fn satisfied_by(&self, state: &AbstractState) -> bool {
        self.required.iter().all(|i| state.contains(i))
    }
}

/// `-ln q`.
pub fn edge_weight(q: f64) -> f64 {
    -q.ln()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    /// Cap on settled-node expansions.
    pub max_iters: usize,
    /// Edges at or below this probability are pruned.
    pub prob_cutoff: f64,
    pub replan: bool,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            max_iters: 100,
            prob_cutoff: 0.1,
            replan: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Plan {
    pub behaviours: Vec<Behaviour>,
    /// Product of the edge probabilities along the plan.
    pub probability: f64,
    /// Sum of `-ln q` along the plan.
    pub weight: f64,
}

/// Source of successors for the planner.
pub trait Successors {
    /// `(behaviour, next state, probability)` for every candidate edge out of `state`.
    fn successors(
        &self,
        state: &AbstractState,
    ) -> Result<Vec<(Behaviour, AbstractState, f64)>, ModelError>;
}

/// Successors imagined by a model over the enumerated behaviour space.
pub struct ImaginedGraph<'a, M: ?Sized> {
    pub model: &'a M,
    pub num_attributes: usize,
    pub behaviour_items: usize,
}

impl<M: TransitionModel + ?Sized> Successors for ImaginedGraph<'_, M> {
    fn successors(
        &self,
        state: &AbstractState,
    ) -> Result<Vec<(Behaviour, AbstractState, f64)>, ModelError> {
        let behaviours = enumerate_behaviours(state, self.num_attributes, self.behaviour_items)?;
        let imagined = self.model.imagine(state, &behaviours)?;
        Ok(behaviours
            .into_iter()
            .zip(imagined)
            .map(|(b, (next, q))| (b, next, q))
            .collect())
    }
}

#[derive(PartialEq)]
struct Frontier {
    weight: f64,
    seq: u64,
    node: usize,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on weight, then on insertion order
        other
            .weight
            .total_cmp(&self.weight)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Maximum-probability path to a goal state, or `None` (no plan) when no
/// goal state is settled within `max_iters` expansions.
pub fn dijkstra_plan<G: Successors + ?Sized>(
    graph: &G,
    start: &AbstractState,
    goal: &GoalPredicate,
    max_iters: usize,
    prob_cutoff: f64,
) -> Result<Option<Plan>, ModelError> {
    struct Entry {
        state: AbstractState,
        dist: f64,
        prob: f64,
        parent: Option<(usize, Behaviour)>,
        settled: bool,
    }
    let mut nodes = vec![Entry {
        state: start.clone(),
        dist: 0.0,
        prob: 1.0,
        parent: None,
        settled: false,
    }];
    let mut index: HashMap<AbstractState, usize> = HashMap::from([(start.clone(), 0)]);
    let mut heap = BinaryHeap::from([Frontier {
        weight: 0.0,
        seq: 0,
        node: 0,
    }]);
    let mut seq = 1;
    let mut expansions = 0;
    while let Some(Frontier { weight, node, .. }) = heap.pop() {
        if nodes[node].settled || weight > nodes[node].dist {
            continue;
        }
        nodes[node].settled = true;
        if goal.satisfied_by(&nodes[node].state) {
            let mut behaviours = Vec::new();
            let mut at = node;
            while let Some((parent, b)) = &nodes[at].parent {
                behaviours.push(b.clone());
                at = *parent;
            }
            behaviours.reverse();
            return Ok(Some(Plan {
                behaviours,
                probability: nodes[node].prob,
                weight: nodes[node].dist,
            }));
        }
        if expansions >= max_iters {
            break;
        }
        expansions += 1;
        let state = nodes[node].state.clone();
        for (b, next, q) in graph.successors(&state)? {
            if q <= prob_cutoff || next == state {
                continue;
            }
            let dist = nodes[node].dist + edge_weight(q);
            let prob = nodes[node].prob * q;
            let target = match index.get(&next) {
                Some(&i) => {
                    if nodes[i].settled || dist >= nodes[i].dist {
                        continue;
                    }
                    nodes[i].dist = dist;
                    nodes[i].prob = prob;
                    nodes[i].parent = Some((node, b));
                    i
                }
                None => {
                    let i = nodes.len();
                    index.insert(next.clone(), i);
                    nodes.push(Entry {
                        state: next,
                        dist,
                        prob,
                        parent: Some((node, b)),
                        settled: false,
                    });
                    i
                }
            };
            heap.push(Frontier {
                weight: dist,
                seq,
                node: target,
            });
            seq += 1;
        }
    }
    Ok(None)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub success: bool,
    pub abstract_steps: u32,
    pub low_level_steps: u32,
    /// True when the episode ended because no plan was found.
    pub no_plan: bool,
}

/// Plans from the observed abstract state and executes behaviours in the
/// environment until the goal holds, no plan exists, or the low-level step
/// limit is reached. With `replan`, a fresh plan is made after every step.
pub fn execute_plan<G: Successors + ?Sized>(
    env: &CraftEnv,
    graph: &G,
    start: &LowLevelState,
    goal: &GoalPredicate,
    planner: &PlannerConfig,
    abmdp: &AbMdpConfig,
    step_limit: u32,
) -> Result<EpisodeOutcome, ModelError> {
    let mut state = start.clone();
    let mut outcome = EpisodeOutcome {
        success: false,
        abstract_steps: 0,
        low_level_steps: 0,
        no_plan: false,
    };
    let mut queue: VecDeque<Behaviour> = VecDeque::new();
    loop {
        let x = env.map_m(&state);
        if goal.satisfied_by(&x) {
            outcome.success = true;
            return Ok(outcome);
        }
        if outcome.low_level_steps >= step_limit {
            return Ok(outcome);
        }
        if planner.replan || queue.is_empty() {
            match dijkstra_plan(graph, &x, goal, planner.max_iters, planner.prob_cutoff)? {
                Some(plan) if !plan.behaviours.is_empty() => queue = plan.behaviours.into(),
                _ => {
                    outcome.no_plan = true;
                    return Ok(outcome);
                }
            }
        }
        let b = queue.pop_front().expect("non-empty plan");
        let remaining = AbMdpConfig {
            k: abmdp.k.min(step_limit - outcome.low_level_steps),
            ..*abmdp
        };
        let (t, next) = run_behaviour(env, &state, &b, &remaining);
        outcome.abstract_steps += 1;
        outcome.low_level_steps += t.low_level_steps;
        state = next;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub from: usize,
    pub to: usize,
    pub behaviour: Behaviour,
    pub probability: f64,
}

/// Breadth-first expansion of the model's above-threshold transitions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldGraph {
    pub threshold: f64,
    pub nodes: Vec<AbstractState>,
    pub edges: Vec<GraphEdge>,
}

pub fn extract_world_graph<G: Successors + ?Sized>(
    graph: &G,
    root: &AbstractState,
    threshold: f64,
    max_nodes: usize,
) -> Result<WorldGraph, ModelError> {
    let mut out = WorldGraph {
        threshold,
        nodes: vec![root.clone()],
        edges: Vec::new(),
    };
    let mut index: HashMap<AbstractState, usize> = HashMap::from([(root.clone(), 0)]);
    let mut queue = VecDeque::from([0usize]);
    let mut expanded = HashSet::new();
    while let Some(node) = queue.pop_front() {
        if !expanded.insert(node) {
            continue;
        }
        let state = out.nodes[node].clone();
        for (b, next, q) in graph.successors(&state)? {
            if q <= threshold || next == state {
                continue;
            }
            let to = match index.get(&next) {
                Some(&i) => i,
                None if out.nodes.len() < max_nodes => {
                    let i = out.nodes.len();
                    index.insert(next.clone(), i);
                    out.nodes.push(next);
                    queue.push_back(i);
                    i
                }
                None => continue,
            };
            out.edges.push(GraphEdge {
                from: node,
                to,
                behaviour: b,
                probability: q,
            });
        }
    }
    Ok(out)
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

impl WorldGraph {
    pub fn to_dot(&self, vocab: &Vocabulary) -> String {
        let mut out = String::from("digraph world {\n  node [shape=box];\n");
        for (i, state) in self.nodes.iter().enumerate() {
            let _ = writeln!(
                out,
                "  n{i} [label=\"{}\"];",
                dot_escape(&state.describe(vocab))
            );
        }
        for e in &self.edges {
            let label = format!("{} / {:.3}", e.behaviour.describe(vocab), e.probability);
            let _ = writeln!(
                out,
                "  n{} -> n{} [label=\"{}\"];",
                e.from,
                e.to,
                dot_escape(&label)
            );
        }
        out.push_str("}\n");
        out
    }

    /// Adjacency list keyed by node index.
    pub fn to_json(&self, vocab: &Vocabulary) -> serde_json::Value {
        let nodes: Vec<_> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let edges: Vec<_> = self
                    .edges
                    .iter()
                    .filter(|e| e.from == i)
                    .map(|e| {
                        serde_json::json!({
                            "to": e.to,
                            "behaviour": e.behaviour.describe(vocab),
                            "probability": e.probability,
                        })
                    })
                    .collect();
                serde_json::json!({ "id": i, "state": s.describe(vocab), "edges": edges })
            })
            .collect();
        serde_json::json!({ "threshold": self.threshold, "nodes": nodes })
    }
}
