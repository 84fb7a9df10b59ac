//! Gridworld crafting environments and their scripted behaviour policies.

mod config;
mod policy;
mod sim;

pub use config::{
    AttributeScheme, ConfigError, CraftRule, CraftSpec, Entity, EntityKind, EntityKindSpec,
    EntitySpec, EnvConfig, EnvFile, Gate, GateSpec, Terrain, ABSENT, IN_INVENTORY, IN_INVENTORY_2,
    IN_WORLD,
};
pub use sim::{CraftEnv, Interaction, ItemLocation, LowLevelState, Occupant, PrimitiveAction};

/// Names of the bundled environments.
pub const BUILTIN_ENVS: [&str; 4] = ["craft2", "craft3", "craft4", "craft_adversarial"];
