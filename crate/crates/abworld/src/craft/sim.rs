use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{EntityKind, EnvConfig, Terrain};
use crate::domain::{AbstractState, AttributeId, Item, ItemIdentity};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PrimitiveAction {
    North,
    East,
    South,
    West,
    Toggle,
    Grab,
    Mine,
    Craft(ItemIdentity),
    /// Does nothing; issued by behaviours that cannot make progress.
    Noop,
}

impl PrimitiveAction {
    pub const MOVES: [PrimitiveAction; 4] = [
        PrimitiveAction::North,
        PrimitiveAction::East,
        PrimitiveAction::South,
        PrimitiveAction::West,
    ];

    pub fn offset(self) -> Option<(isize, isize)> {
        match self {
            PrimitiveAction::North => Some((-1, 0)),
            PrimitiveAction::East => Some((0, 1)),
            PrimitiveAction::South => Some((1, 0)),
            PrimitiveAction::West => Some((0, -1)),
            _ => None,
        }
    }
}

/// What a cell holds on top of its terrain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Occupant {
    None,
    /// Index into `EnvConfig::entities`.
    Entity(u16),
}

/// Full low-level simulator state. Cheap to clone.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LowLevelState {
    pub(crate) occupants: Vec<Occupant>,
    pub(crate) agent: usize,
    pub(crate) inventory: Vec<u8>,
    pub(crate) gate_open: bool,
    pub(crate) harvest_locked: bool,
    pub(crate) seed: u64,
}

impl LowLevelState {
    pub fn agent_cell(&self) -> usize {
        self.agent
    }

    pub fn inventory_count(&self, item: ItemIdentity) -> u8 {
        self.inventory.get(item.0 as usize).copied().unwrap_or(0)
    }

    pub fn gate_open(&self) -> bool {
        self.gate_open
    }

    pub fn harvest_locked(&self) -> bool {
        self.harvest_locked
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn occupant(&self, cell: usize) -> Occupant {
        self.occupants[cell]
    }
}

/// A single object-perturbing interaction, independent of where the agent
/// stands. Movement only decides whether the agent can trigger it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Interaction {
    Grab(usize),
    Mine(usize),
    Toggle,
    Craft(ItemIdentity),
}

/// The crafting world: configuration plus the transition function.
#[derive(Clone, Debug)]
pub struct CraftEnv {
    config: Arc<EnvConfig>,
}

impl CraftEnv {
    pub fn new(config: EnvConfig) -> Self {
        CraftEnv {
            config: Arc::new(config),
        }
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn rows(&self) -> usize {
        self.config.rows
    }

    pub fn cols(&self) -> usize {
        self.config.cols
    }

    pub fn terrain(&self, cell: usize) -> Terrain {
        self.config.terrain[cell]
    }

    pub fn neighbour(&self, cell: usize, action: PrimitiveAction) -> Option<usize> {
        let (dr, dc) = action.offset()?;
        let (r, c) = (
            (cell / self.cols()) as isize + dr,
            (cell % self.cols()) as isize + dc,
        );
        if r < 0 || c < 0 || r >= self.rows() as isize || c >= self.cols() as isize {
            return None;
        }
        Some(r as usize * self.cols() + c as usize)
    }

    /// In-bounds neighbours in N, E, S, W order.
    pub fn neighbours(&self, cell: usize) -> impl Iterator<Item = usize> + '_ {
        PrimitiveAction::MOVES
            .into_iter()
            .filter_map(move |a| self.neighbour(cell, a))
    }

    pub fn walkable(&self, state: &LowLevelState, cell: usize) -> bool {
        match self.terrain(cell) {
            Terrain::Wall => false,
            Terrain::Gate => state.gate_open,
            Terrain::Floor(_) | Terrain::Bench => true,
        }
    }

    /// Deterministic initial state: entities drawn uniformly over the free
    /// cells of their spawn regions, then the agent.
    pub fn reset(&self, seed: u64) -> LowLevelState {
        let cfg = &*self.config;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut occupants = vec![Occupant::None; cfg.terrain.len()];
        for (idx, entity) in cfg.entities.iter().enumerate() {
            let free: Vec<usize> = (0..cfg.terrain.len())
                .filter(|&c| {
                    occupants[c] == Occupant::None
                        && cfg.terrain[c]
                            .region()
                            .is_some_and(|r| entity.spawn.contains(&r))
                })
                .collect();
            let cell = *free.choose(&mut rng).expect("validated spawn capacity");
            occupants[cell] = Occupant::Entity(idx as u16);
        }
        let free: Vec<usize> = (0..cfg.terrain.len())
            .filter(|&c| {
                occupants[c] == Occupant::None
                    && cfg.terrain[c]
                        .region()
                        .is_some_and(|r| cfg.agent_spawn.contains(&r))
            })
            .collect();
        let agent = *free
            .choose(&mut rng)
            .expect("validated agent spawn capacity");
        let mut inventory = vec![0u8; cfg.num_items()];
        for &(item, n) in &cfg.initial_inventory {
            inventory[item.0 as usize] = n;
        }
        LowLevelState {
            occupants,
            agent,
            inventory,
            gate_open: false,
            harvest_locked: false,
            seed,
        }
    }

    /// Cell (underfoot first, then N, E, S, W) that GRAB or MINE would act on.
    pub fn interaction_target(
        &self,
        state: &LowLevelState,
        at: usize,
        action: PrimitiveAction,
    ) -> Option<usize> {
        std::iter::once(at)
            .chain(self.neighbours(at))
            .find(|&c| match state.occupants[c] {
                Occupant::Entity(e) => {
                    let kind = &self.config.entities[e as usize].kind;
                    matches!(
                        (action, kind),
                        (PrimitiveAction::Grab, EntityKind::Grab)
                            | (PrimitiveAction::Mine, EntityKind::Mine { .. })
                    )
                }
                Occupant::None => false,
            })
    }

    pub fn near_bench(&self, at: usize) -> bool {
        std::iter::once(at)
            .chain(self.neighbours(at))
            .any(|c| self.terrain(c) == Terrain::Bench)
    }

    pub fn near_gate(&self, at: usize) -> bool {
        self.neighbours(at)
            .any(|c| self.terrain(c) == Terrain::Gate)
    }

    /// Applies an interaction's effect regardless of the agent's position.
    /// Returns whether anything changed.
    pub fn apply_interaction(&self, state: &mut LowLevelState, interaction: Interaction) -> bool {
        let cfg = &*self.config;
        match interaction {
            Interaction::Grab(cell) => match state.occupants[cell] {
                Occupant::Entity(e) if cfg.entities[e as usize].kind == EntityKind::Grab => {
                    let item = cfg.entities[e as usize].item.0 as usize;
                    state.inventory[item] = state.inventory[item].saturating_add(1);
                    state.occupants[cell] = Occupant::None;
                    true
                }
                _ => false,
            },
            Interaction::Mine(cell) => {
                let Occupant::Entity(e) = state.occupants[cell] else {
                    return false;
                };
                let EntityKind::Mine { tool, yields } = cfg.entities[e as usize].kind else {
                    return false;
                };
                if state.harvest_locked || tool.is_some_and(|t| state.inventory[t.0 as usize] == 0)
                {
                    return false;
                }
                let y = yields.0 as usize;
                state.inventory[y] = state.inventory[y].saturating_add(1);
                state.occupants[cell] = Occupant::None;
                true
            }
            Interaction::Toggle => {
                let Some(gate) = &cfg.gate else { return false };
                if state.gate_open || gate.key.is_some_and(|k| state.inventory[k.0 as usize] == 0) {
                    return false;
                }
                state.gate_open = true;
                true
            }
            Interaction::Craft(output) => {
                let Some(rule) = cfg.craft_rule(output) else {
                    return false;
                };
                let held = |i: &ItemIdentity| state.inventory[i.0 as usize] > 0;
                if !rule.required_tools.iter().all(held) || !rule.consumed_inputs.iter().all(held) {
                    return false;
                }
                for input in &rule.consumed_inputs {
                    state.inventory[input.0 as usize] -= 1;
                }
                let o = output.0 as usize;
                state.inventory[o] = state.inventory[o].saturating_add(1);
                if cfg.lock_harvest_after_craft {
                    state.harvest_locked = true;
                }
                true
            }
        }
    }

    /// Which interaction `action` triggers from the agent's cell, if any.
    pub fn resolve(&self, state: &LowLevelState, action: PrimitiveAction) -> Option<Interaction> {
        let at = state.agent;
        match action {
            PrimitiveAction::Grab => self
                .interaction_target(state, at, action)
                .map(Interaction::Grab),
            PrimitiveAction::Mine => self
                .interaction_target(state, at, action)
                .map(Interaction::Mine),
            PrimitiveAction::Toggle => self.near_gate(at).then_some(Interaction::Toggle),
            PrimitiveAction::Craft(item) => {
                let rule = self.config.craft_rule(item)?;
                (!rule.station_required || self.near_bench(at)).then_some(Interaction::Craft(item))
            }
            _ => None,
        }
    }

    /// Deterministic successor. Invalid actions leave the state unchanged.
    pub fn step(&self, state: &LowLevelState, action: PrimitiveAction) -> LowLevelState {
        let mut next = state.clone();
        if action.offset().is_some() {
            if let Some(cell) = self.neighbour(state.agent, action) {
                if self.walkable(state, cell) {
                    next.agent = cell;
                }
            }
        } else if let Some(interaction) = self.resolve(state, action) {
            self.apply_interaction(&mut next, interaction);
        }
        next
    }

    fn attribute(&self, state: &LowLevelState, item: ItemIdentity) -> AttributeId {
        let scheme = &self.config.scheme;
        let count = state.inventory[item.0 as usize];
        match count {
            0 => {}
            1 => return scheme.in_inventory,
            _ => return scheme.in_inventory_2.unwrap_or(scheme.in_inventory),
        }
        let on_grid = state.occupants.iter().any(|o| match o {
            Occupant::Entity(e) => self.config.entities[*e as usize].item == item,
            Occupant::None => false,
        });
        let closed_gate = self
            .config
            .gate
            .as_ref()
            .is_some_and(|g| g.item == item && !state.gate_open);
        if on_grid || closed_gate {
            scheme.in_world
        } else {
            scheme.absent
        }
    }

    /// Object-centric abstraction: one slot per tracked item, in vocabulary order.
    pub fn map_m(&self, state: &LowLevelState) -> AbstractState {
        let items = (0..self.config.num_items())
            .map(|i| {
                let identity = ItemIdentity(i as u16);
                Item {
                    identity,
                    attribute: self.attribute(state, identity),
                }
            })
            .collect();
        AbstractState::new(items).expect("one slot per identity")
    }

    /// All interactions that could exist in this state, in a fixed order.
    pub fn candidate_interactions(&self, state: &LowLevelState) -> Vec<Interaction> {
        let mut out = Vec::new();
        for (cell, occ) in state.occupants.iter().enumerate() {
            if let Occupant::Entity(e) = occ {
                out.push(match self.config.entities[*e as usize].kind {
                    EntityKind::Grab => Interaction::Grab(cell),
                    EntityKind::Mine { .. } => Interaction::Mine(cell),
                });
            }
        }
        if self.config.gate.is_some() && !state.gate_open {
            out.push(Interaction::Toggle);
        }
        out.extend(
            self.config
                .crafts
                .iter()
                .map(|r| Interaction::Craft(r.output)),
        );
        out
    }

    /// Cells from which `interaction` can be triggered.
    pub fn trigger_cells(&self, state: &LowLevelState, interaction: Interaction) -> Vec<usize> {
        let cells = 0..self.config.terrain.len();
        match interaction {
            Interaction::Grab(target) => cells
                .filter(|&c| {
                    self.interaction_target(state, c, PrimitiveAction::Grab) == Some(target)
                })
                .collect(),
            Interaction::Mine(target) => cells
                .filter(|&c| {
                    self.interaction_target(state, c, PrimitiveAction::Mine) == Some(target)
                })
                .collect(),
            Interaction::Toggle => cells.filter(|&c| self.near_gate(c)).collect(),
            Interaction::Craft(item) => match self.config.craft_rule(item) {
                Some(rule) if rule.station_required => {
                    cells.filter(|&c| self.near_bench(c)).collect()
                }
                Some(_) => vec![state.agent],
                None => Vec::new(),
            },
        }
    }

    pub fn interaction_action(interaction: Interaction) -> PrimitiveAction {
        match interaction {
            Interaction::Grab(_) => PrimitiveAction::Grab,
            Interaction::Mine(_) => PrimitiveAction::Mine,
            Interaction::Toggle => PrimitiveAction::Toggle,
            Interaction::Craft(item) => PrimitiveAction::Craft(item),
        }
    }

    /// Where each tracked item currently is. Used to check conservation.
    pub fn item_location(&self, state: &LowLevelState, item: ItemIdentity) -> ItemLocation {
        let on_grid = state.occupants.iter().filter(|o| match o {
            Occupant::Entity(e) => self.config.entities[*e as usize].item == item,
            Occupant::None => false,
        });
        let grid = on_grid.count();
        let inv = state.inventory[item.0 as usize] > 0;
        match (grid, inv) {
            (0, false) => ItemLocation::Absent,
            (0, true) => ItemLocation::Inventory,
            (1, false) => ItemLocation::Grid,
            _ => ItemLocation::Conflict,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ItemLocation {
    Grid,
    Inventory,
    Absent,
    Conflict,
}
