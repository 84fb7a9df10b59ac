//! Runs scripted behaviours in the crafting simulator until the abstract
//! state changes, and enumerates the behaviour space.

use serde::{Deserialize, Serialize};

use crate::craft::{CraftEnv, LowLevelState, PrimitiveAction};
use crate::domain::{AbstractState, AbstractTransition, AttributeId, Behaviour, DomainError, Item};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AbMdpConfig {
    /// Low-level step horizon of one abstract step.
    pub k: u32,
    /// Number of items a behaviour proposes to change.
    pub behaviour_items: usize,
}

impl Default for AbMdpConfig {
    fn default() -> Self {
        AbMdpConfig {
            k: 8,
            behaviour_items: 1,
        }
    }
}

/// Executes `behaviour` from `state` for at most `k` low-level steps,
/// stopping as soon as the abstract state changes.
///
/// A policy that idles would idle for the remaining steps, so the loop
/// stops early and charges the full horizon.
pub fn run_behaviour(
    env: &CraftEnv,
    state: &LowLevelState,
    behaviour: &Behaviour,
    config: &AbMdpConfig,
) -> (AbstractTransition, LowLevelState) {
    let k = config.k.max(1);
    let start = env.map_m(state);
    let mut current = state.clone();
    let mut steps = 0;
    while steps < k {
        let action = env.behaviour_policy(&current, behaviour);
        if action == PrimitiveAction::Noop {
            steps = k;
            break;
        }
        current = env.step(&current, action);
        steps += 1;
        let next = env.map_m(&current);
        if next.canonical_hash() != start.canonical_hash() {
            return (
                AbstractTransition::observed(start, behaviour.clone(), next, steps),
                current,
            );
        }
    }
    let next = env.map_m(&current);
    (
        AbstractTransition::observed(start, behaviour.clone(), next, steps),
        current,
    )
}

/// All behaviours over the non-empty slots of `state`: each subset of
/// `behaviour_items` identities (in identity order) crossed with every
/// assignment of attributes, in lexicographic order.
pub fn enumerate_behaviours(
    state: &AbstractState,
    num_attributes: usize,
    behaviour_items: usize,
) -> Result<Vec<Behaviour>, DomainError> {
    let mut ids: Vec<_> = state.non_empty().map(|i| i.identity).collect();
    ids.sort();
    crate::domain::count_behaviours(ids.len(), num_attributes, behaviour_items)?;
    let mut out = Vec::new();
    let mut subset: Vec<usize> = (0..behaviour_items).collect();
    loop {
        let assignments = num_attributes.pow(behaviour_items as u32);
        for code in 0..assignments {
            // base-m digits of `code`, most significant first
            let changes = subset.iter().enumerate().map(|(pos, &slot)| {
                let digit =
                    code / num_attributes.pow((behaviour_items - 1 - pos) as u32) % num_attributes;
                Item {
                    identity: ids[slot],
                    attribute: AttributeId(digit as u8),
                }
            });
            out.push(Behaviour::new(changes)?);
        }
        // next combination in lexicographic order
        let n = ids.len();
        let mut i = behaviour_items;
        let advanced = loop {
            if i == 0 {
                break false;
            }
            i -= 1;
            if subset[i] < n - behaviour_items + i {
                subset[i] += 1;
                for j in i + 1..behaviour_items {
                    subset[j] = subset[j - 1] + 1;
                }
                break true;
            }
        };
        if !advanced {
            out.sort();
            return Ok(out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::craft::{EnvConfig, Occupant};
    use crate::domain::{apply_delta, ItemIdentity};

    fn env(name: &str) -> CraftEnv {
        CraftEnv::new(EnvConfig::builtin(name).unwrap())
    }

    fn state(n: usize) -> AbstractState {
        AbstractState::new((0..n).map(|i| Item::new(i as u16, 0)).collect()).unwrap()
    }

    #[test]
    fn enumeration_sizes() {
        assert_eq!(enumerate_behaviours(&state(3), 3, 1).unwrap().len(), 9);
        assert_eq!(enumerate_behaviours(&state(3), 3, 2).unwrap().len(), 27);
        let one = enumerate_behaviours(&state(1), 3, 1).unwrap();
        assert_eq!(one.len(), 3);
        assert!(one.contains(&Behaviour::single(ItemIdentity(0), AttributeId(0))));
    }

    #[test]
    fn enumeration_order_and_uniqueness() {
        let all = enumerate_behaviours(&state(4), 3, 2).unwrap();
        let mut sorted = all.clone();
        sorted.sort();
        assert_eq!(all, sorted);
        sorted.dedup();
        assert_eq!(sorted.len(), all.len());
        assert_eq!(
            all.len() as u64,
            crate::domain::count_behaviours(4, 3, 2).unwrap()
        );
    }

    #[test]
    fn enumeration_rejects_too_many_items() {
        assert!(enumerate_behaviours(&state(1), 3, 2).is_err());
    }

    #[test]
    fn adjacent_grab_takes_one_step() {
        let e = env("craft2");
        let v = &e.config().vocab;
        let pickaxe = v.identity("pickaxe").unwrap();
        let b = Behaviour::single(pickaxe, v.attribute("IN_INVENTORY").unwrap());
        let mut s = e.reset(0);
        let cell = (0..e.rows() * e.cols())
            .find(|&c| matches!(s.occupant(c), Occupant::Entity(i) if e.config().entities[i as usize].item == pickaxe))
            .unwrap();
        s.agent = e
            .neighbours(cell)
            .find(|&n| s.occupant(n) == Occupant::None)
            .unwrap();
        let (t, after) = run_behaviour(&e, &s, &b, &AbMdpConfig::default());
        assert!(t.success);
        assert_eq!(t.low_level_steps, 1);
        assert_eq!(after.inventory_count(pickaxe), 1);
    }

    #[test]
    fn impossible_behaviour_burns_k() {
        let e = env("craft2");
        let v = &e.config().vocab;
        let gold = v.identity("gold").unwrap();
        let b = Behaviour::single(gold, v.attribute("IN_INVENTORY").unwrap());
        let s = e.reset(4);
        let (t, after) = run_behaviour(&e, &s, &b, &AbMdpConfig::default());
        assert_eq!(t.low_level_steps, 8);
        assert_eq!(t.next_state, t.state);
        assert!(!t.success);
        assert_eq!(after, s);
    }

    #[test]
    fn crafting_stairs_depletes_plank() {
        let e = env("craft4");
        let v = &e.config().vocab;
        let plank = v.identity("plank").unwrap();
        let stairs = v.identity("stairs").unwrap();
        let inv = v.attribute("IN_INVENTORY").unwrap();
        let absent = v.attribute("ABSENT").unwrap();
        let mut s = e.reset(2);
        s.inventory[plank.0 as usize] = 1;
        let b = Behaviour::single(stairs, inv);
        let (t, _) = run_behaviour(&e, &s, &b, &AbMdpConfig::default());
        assert!(t.success);
        assert_eq!(t.next_state.attribute_of(plank), Some(absent));
        assert_ne!(t.next_state, apply_delta(&t.state, &b).unwrap());
    }
}
