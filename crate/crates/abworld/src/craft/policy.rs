use std::collections::VecDeque;

use super::sim::{CraftEnv, Interaction, LowLevelState, PrimitiveAction};
use crate::domain::Behaviour;

impl CraftEnv {
    /// Interactions that, applied now, would make every component of `behaviour` hold.
    pub fn achieving_interactions(
        &self,
        state: &LowLevelState,
        behaviour: &Behaviour,
    ) -> Vec<Interaction> {
        self.candidate_interactions(state)
            .into_iter()
            .filter(|&i| {
                let mut next = state.clone();
                self.apply_interaction(&mut next, i) && behaviour.holds_in(&self.map_m(&next))
            })
            .collect()
    }

    /// Next primitive action of the scripted policy for `behaviour`.
    ///
    /// Walks the shortest path (ties broken N, E, S, W) to a cell from which an
    /// achieving interaction can be triggered, then triggers it. Returns
    /// [`PrimitiveAction::Noop`] when any component is already satisfied or no
    /// achieving interaction is reachable.
    pub fn behaviour_policy(
        &self,
        state: &LowLevelState,
        behaviour: &Behaviour,
    ) -> PrimitiveAction {
        let current = self.map_m(state);
        if behaviour
            .changes()
            .iter()
            .any(|c| current.attribute_of(c.identity) == Some(c.attribute))
        {
            return PrimitiveAction::Noop;
        }
        let candidates = self.achieving_interactions(state, behaviour);
        if candidates.is_empty() {
            return PrimitiveAction::Noop;
        }
        let n = self.rows() * self.cols();
        let mut goal = vec![None; n];
        for &cand in &candidates {
            for cell in self.trigger_cells(state, cand) {
                goal[cell].get_or_insert(cand);
            }
        }
        if let Some(cand) = goal[state.agent_cell()] {
            return Self::interaction_action(cand);
        }
        // BFS recording the first move taken out of the start cell.
        let mut first = vec![None; n];
        let mut seen = vec![false; n];
        let mut queue = VecDeque::new();
        seen[state.agent_cell()] = true;
        queue.push_back(state.agent_cell());
        while let Some(cell) = queue.pop_front() {
            for action in PrimitiveAction::MOVES {
                let Some(next) = self.neighbour(cell, action) else {
                    continue;
                };
                if seen[next] || !self.walkable(state, next) {
                    continue;
                }
                seen[next] = true;
                first[next] = if cell == state.agent_cell() {
                    Some(action)
                } else {
                    first[cell]
                };
                if goal[next].is_some() {
                    return first[next].expect("set above");
                }
                queue.push_back(next);
            }
        }
        PrimitiveAction::Noop
    }
}
