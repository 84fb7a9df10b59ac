//! Ground-truth solvers and datasets built by simulating behaviours.

use std::collections::{HashMap, HashSet, VecDeque};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::abmdp::{enumerate_behaviours, run_behaviour, AbMdpConfig};
use crate::craft::{CraftEnv, LowLevelState};
use crate::domain::{AbstractTransition, Behaviour};
use crate::plan::GoalPredicate;

/// Node budget of the oracle search.
const MAX_SEARCH_NODES: usize = 20_000;

pub fn env_goal(env: &CraftEnv) -> GoalPredicate {
    GoalPredicate::new(env.config().goal.clone()).expect("validated goal is non-empty")
}

fn behaviour_space(env: &CraftEnv, state: &LowLevelState, abmdp: &AbMdpConfig) -> Vec<Behaviour> {
    let x = env.map_m(state);
    enumerate_behaviours(
        &x,
        env.config().vocab.num_attributes(),
        abmdp.behaviour_items,
    )
    .expect("environment state supports the configured behaviour size")
}

/// The behaviour space with acquisitions (changes into the inventory) first,
/// so a step reachable by several behaviours is named by the item it gains,
/// as in "mine ore, get diamond".
fn acquisition_first(env: &CraftEnv, mut space: Vec<Behaviour>) -> Vec<Behaviour> {
    let inventory = env.config().scheme.in_inventory;
    space.sort_by_key(|b| {
        b.changes()
            .iter()
            .filter(|i| i.attribute != inventory)
            .count()
    });
    space
}

/// Fewest-behaviour plan to the goal found by breadth-first search over
/// simulated behaviour executions, preferring acquisitions among
/// behaviours with the same outcome. `None` if the goal is unreachable.
pub fn oracle_plan(
    env: &CraftEnv,
    start: &LowLevelState,
    goal: &GoalPredicate,
    abmdp: &AbMdpConfig,
) -> Option<Vec<Behaviour>> {
    if goal.satisfied_by(&env.map_m(start)) {
        return Some(Vec::new());
    }
    let mut parents: Vec<Option<(usize, Behaviour)>> = vec![None];
    let mut states = vec![start.clone()];
    let mut seen: HashSet<LowLevelState> = HashSet::from([start.clone()]);
    let mut queue = VecDeque::from([0usize]);
    while let Some(node) = queue.pop_front() {
        let state = states[node].clone();
        for b in acquisition_first(env, behaviour_space(env, &state, abmdp)) {
            let (_, next) = run_behaviour(env, &state, &b, abmdp);
            if !seen.insert(next.clone()) {
                continue;
            }
            let idx = states.len();
            states.push(next.clone());
            parents.push(Some((node, b)));
            if goal.satisfied_by(&env.map_m(&next)) {
                let mut plan = Vec::new();
                let mut at = idx;
                while let Some((parent, b)) = &parents[at] {
                    plan.push(b.clone());
                    at = *parent;
                }
                plan.reverse();
                return Some(plan);
            }
            if states.len() >= MAX_SEARCH_NODES {
                return None;
            }
            queue.push_back(idx);
        }
    }
    None
}

/// Transitions of a scripted solver that follows the oracle plan but takes a
/// uniformly random behaviour with probability `noise`. Episodes restart on
/// reaching the goal or the episode limit.
pub fn expert_dataset(
    env: &CraftEnv,
    abmdp: &AbMdpConfig,
    num_transitions: usize,
    noise: f64,
    seed: u64,
) -> Vec<AbstractTransition> {
    let goal = env_goal(env);
    let limit = env.config().episode_limit;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(num_transitions);
    let mut episode = 0u64;
    let mut state = env.reset(seed.wrapping_mul(1_000_003));
    let mut elapsed = 0u32;
    while out.len() < num_transitions {
        let x = env.map_m(&state);
        if goal.satisfied_by(&x) || elapsed >= limit {
            episode += 1;
            state = env.reset(seed.wrapping_mul(1_000_003).wrapping_add(episode));
            elapsed = 0;
            continue;
        }
        let space = behaviour_space(env, &state, abmdp);
        let b = if rng.gen_bool(noise) {
            space.choose(&mut rng).cloned().expect("non-empty space")
        } else {
            match oracle_plan(env, &state, &goal, abmdp) {
                Some(plan) if !plan.is_empty() => plan[0].clone(),
                _ => space.choose(&mut rng).cloned().expect("non-empty space"),
            }
        };
        let (t, next) = run_behaviour(env, &state, &b, abmdp);
        elapsed += t.low_level_steps;
        out.push(t);
        state = next;
    }
    out
}

/// Every behaviour executed once from every low-level state reachable from
/// the given layouts by behaviour executions.
pub fn exhaustive_dataset(
    env: &CraftEnv,
    abmdp: &AbMdpConfig,
    layouts: &[u64],
    max_states_per_layout: usize,
) -> Vec<AbstractTransition> {
    let mut out = Vec::new();
    for &layout in layouts {
        let start = env.reset(layout);
        let mut seen: HashSet<LowLevelState> = HashSet::from([start.clone()]);
        let mut queue = VecDeque::from([start]);
        while let Some(state) = queue.pop_front() {
            for b in behaviour_space(env, &state, abmdp) {
                let (t, next) = run_behaviour(env, &state, &b, abmdp);
                out.push(t);
                if seen.len() < max_states_per_layout && seen.insert(next.clone()) {
                    queue.push_back(next);
                }
            }
        }
    }
    out
}

/// Abstract states reachable through successful transitions in `dataset`,
/// as an adjacency map from state to successor states.
pub fn true_abstract_graph(
    dataset: &[AbstractTransition],
) -> HashMap<crate::domain::AbstractState, HashSet<crate::domain::AbstractState>> {
    let mut graph: HashMap<_, HashSet<_>> = HashMap::new();
    for t in dataset
        .iter()
        .filter(|t| t.success && t.state != t.next_state)
    {
        graph
            .entry(t.state.clone())
            .or_default()
            .insert(t.next_state.clone());
    }
    graph
}
