//! Environment description files.
//!
//! An environment is a TOML document: scalar settings, an ASCII `layout`
//! map, `[[entity]]` tables for items placed on the grid, `[[craft]]`
//! rules, an optional `[gate]` (door + key) and an optional starting
//! `[inventory]`.
//!
//! Layout symbols: `#` wall, `D` gate cell, `B` crafting bench, `.` floor.
//! Any other lowercase letter is floor tagged as a named spawn region.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{AttributeId, DomainError, Item, ItemIdentity, Vocabulary};

pub const IN_WORLD: &str = "IN_WORLD";
pub const IN_INVENTORY: &str = "IN_INVENTORY";
pub const ABSENT: &str = "ABSENT";
/// Optional attribute for an inventory count of two or more.
pub const IN_INVENTORY_2: &str = "IN_INVENTORY_2";

const MAX_GRID: usize = 32;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed environment file: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("layout: {0}")]
    Layout(String),
    #[error("unknown item `{0}`")]
    UnknownItem(String),
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("attribute vocabulary must contain {0}")]
    MissingAttribute(&'static str),
    #[error("goal entry `{0}` is not of the form item:ATTRIBUTE")]
    BadGoal(String),
    #[error("spawn region `{region}` for `{what}` has too few free cells")]
    CrowdedRegion { what: String, region: String },
    #[error("craft rules form a cycle through `{0}`")]
    CraftCycle(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKindSpec {
    Grab,
    Mine,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntitySpec {
    pub item: String,
    pub kind: EntityKindSpec,
    #[serde(default)]
    pub tool: Option<String>,
    #[serde(default)]
    pub yields: Option<String>,
    #[serde(default = "default_spawn")]
    pub spawn: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CraftSpec {
    pub output: String,
    #[serde(default)]
    pub consumes: Vec<String>,
    #[serde(default)]
    pub tools: Vec<String>,
    #[serde(default = "default_true")]
    pub station: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateSpec {
    pub item: String,
    #[serde(default)]
    pub key: Option<String>,
}

/// The file as written on disk.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvFile {
    pub name: String,
    pub episode_limit: u32,
    pub attributes: Vec<String>,
    pub items: Vec<String>,
    pub goal: Vec<String>,
    pub layout: String,
    #[serde(default = "default_spawn")]
    pub agent_spawn: String,
    #[serde(default)]
    pub lock_harvest_after_craft: bool,
    #[serde(default)]
    pub entity: Vec<EntitySpec>,
    #[serde(default)]
    pub craft: Vec<CraftSpec>,
    #[serde(default)]
    pub gate: Option<GateSpec>,
    #[serde(default)]
    pub inventory: BTreeMap<String, u8>,
}

fn default_spawn() -> String {
    ".".to_string()
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Terrain {
    Floor(u8),
    Wall,
    Gate,
    Bench,
}

impl Terrain {
    pub fn region(self) -> Option<u8> {
        match self {
            Terrain::Floor(r) => Some(r),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EntityKind {
    Grab,
    Mine {
        tool: Option<ItemIdentity>,
        yields: ItemIdentity,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Entity {
    pub item: ItemIdentity,
    pub kind: EntityKind,
    pub spawn: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CraftRule {
    pub output: ItemIdentity,
    pub required_tools: Vec<ItemIdentity>,
    pub consumed_inputs: Vec<ItemIdentity>,
    pub station_required: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Gate {
    pub item: ItemIdentity,
    pub key: Option<ItemIdentity>,
}

/// Attribute ids the abstraction map assigns.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttributeScheme {
    pub in_world: AttributeId,
    pub in_inventory: AttributeId,
    pub absent: AttributeId,
    pub in_inventory_2: Option<AttributeId>,
}

/// A validated environment.
#[derive(Clone, Debug)]
pub struct EnvConfig {
    pub name: String,
    pub episode_limit: u32,
    pub vocab: Vocabulary,
    pub scheme: AttributeScheme,
    pub rows: usize,
    pub cols: usize,
    pub terrain: Vec<Terrain>,
    pub entities: Vec<Entity>,
    pub crafts: Vec<CraftRule>,
    pub gate: Option<Gate>,
    pub initial_inventory: Vec<(ItemIdentity, u8)>,
    pub agent_spawn: Vec<u8>,
    pub lock_harvest_after_craft: bool,
    pub goal: Vec<Item>,
    pub source: EnvFile,
}

impl EnvConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let file: EnvFile = toml::from_str(text)?;
        Self::from_file(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    /// One of the bundled environments: `craft2`, `craft3`, `craft4`,
    /// `craft_adversarial`.
    pub fn builtin(name: &str) -> Option<Self> {
        let text = match name {
            "craft2" => include_str!("../../envs/craft2.toml"),
            "craft3" => include_str!("../../envs/craft3.toml"),
            "craft4" => include_str!("../../envs/craft4.toml"),
            "craft_adversarial" => include_str!("../../envs/craft_adversarial.toml"),
            _ => return None,
        };
        Some(Self::from_toml_str(text).expect("bundled environment is valid"))
    }

    /// A bundled name, otherwise a path to an environment file.
    pub fn resolve(name_or_path: &str) -> Result<Self, ConfigError> {
        match Self::builtin(name_or_path) {
            Some(cfg) => Ok(cfg),
            None => Self::load(name_or_path),
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&self.source).expect("environment file serializes")
    }

    pub fn from_file(file: EnvFile) -> Result<Self, ConfigError> {
        let vocab = Vocabulary::new(file.items.clone(), file.attributes.clone())?;
        let attr = |name: &'static str| {
            vocab
                .attribute(name)
                .ok_or(ConfigError::MissingAttribute(name))
        };
        let scheme = AttributeScheme {
            in_world: attr(IN_WORLD)?,
            in_inventory: attr(IN_INVENTORY)?,
            absent: attr(ABSENT)?,
            in_inventory_2: vocab.attribute(IN_INVENTORY_2),
        };
        let item = |name: &str| {
            vocab
                .identity(name)
                .ok_or_else(|| ConfigError::UnknownItem(name.to_string()))
        };

        let (rows, cols, terrain) = parse_layout(&file.layout)?;
        let region_cells = |regions: &[u8]| {
            terrain
                .iter()
                .filter(|t| t.region().is_some_and(|r| regions.contains(&r)))
                .count()
        };
        let parse_regions = |spec: &str, what: &str| -> Result<Vec<u8>, ConfigError> {
            let regions: Vec<u8> = spec.bytes().filter(|b| !b.is_ascii_whitespace()).collect();
            if regions.is_empty()
                || regions
                    .iter()
                    .any(|&r| !(r == b'.' || r.is_ascii_lowercase()))
            {
                return Err(ConfigError::Invalid(format!(
                    "bad spawn region `{spec}` for `{what}`"
                )));
            }
            Ok(regions)
        };

        let mut entities = Vec::new();
        for spec in &file.entity {
            let id = item(&spec.item)?;
            let kind = match spec.kind {
                EntityKindSpec::Grab => {
                    if spec.yields.is_some() || spec.tool.is_some() {
                        return Err(ConfigError::Invalid(format!(
                            "grab entity `{}` takes no tool or yield",
                            spec.item
                        )));
                    }
                    EntityKind::Grab
                }
                EntityKindSpec::Mine => {
                    let yields = spec.yields.as_deref().ok_or_else(|| {
                        ConfigError::Invalid(format!("mine entity `{}` needs `yields`", spec.item))
                    })?;
                    let yields = item(yields)?;
                    if yields == id {
                        return Err(ConfigError::Invalid(format!(
                            "`{}` cannot yield itself",
                            spec.item
                        )));
                    }
                    EntityKind::Mine {
                        tool: spec.tool.as_deref().map(item).transpose()?,
                        yields,
                    }
                }
            };
            entities.push(Entity {
                item: id,
                kind,
                spawn: parse_regions(&spec.spawn, &spec.item)?,
            });
        }
        let mut on_grid: Vec<ItemIdentity> = entities.iter().map(|e| e.item).collect();
        on_grid.sort();
        if on_grid.windows(2).any(|w| w[0] == w[1]) {
            return Err(ConfigError::Invalid(
                "an item may be placed on the grid only once".into(),
            ));
        }

        let mut crafts = Vec::new();
        for spec in &file.craft {
            let rule = CraftRule {
                output: item(&spec.output)?,
                required_tools: spec
                    .tools
                    .iter()
                    .map(|t| item(t))
                    .collect::<Result<_, _>>()?,
                consumed_inputs: spec
                    .consumes
                    .iter()
                    .map(|t| item(t))
                    .collect::<Result<_, _>>()?,
                station_required: spec.station,
            };
            if crafts.iter().any(|r: &CraftRule| r.output == rule.output) {
                return Err(ConfigError::Invalid(format!(
                    "two craft rules for `{}`",
                    spec.output
                )));
            }
            crafts.push(rule);
        }
        check_craft_dag(&crafts, &vocab)?;
        if crafts.iter().any(|r| r.station_required) && !terrain.contains(&Terrain::Bench) {
            return Err(ConfigError::Layout("craft rules need a bench `B`".into()));
        }

        let gate = match &file.gate {
            Some(g) => Some(Gate {
                item: item(&g.item)?,
                key: g.key.as_deref().map(item).transpose()?,
            }),
            None => None,
        };
        let has_gate_cells = terrain.contains(&Terrain::Gate);
        if gate.is_some() != has_gate_cells {
            return Err(ConfigError::Layout(
                "gate cells `D` and a [gate] table must appear together".into(),
            ));
        }

        let initial_inventory = file
            .inventory
            .iter()
            .filter(|(_, &n)| n > 0)
            .map(|(name, &n)| Ok((item(name)?, n)))
            .collect::<Result<Vec<_>, ConfigError>>()?;

        let goal = file
            .goal
            .iter()
            .map(|g| {
                let (i, a) = g
                    .split_once(':')
                    .ok_or_else(|| ConfigError::BadGoal(g.clone()))?;
                let a = vocab
                    .attribute(a.trim())
                    .ok_or_else(|| ConfigError::UnknownAttribute(a.to_string()))?;
                Ok(Item {
                    identity: item(i.trim())?,
                    attribute: a,
                })
            })
            .collect::<Result<Vec<_>, ConfigError>>()?;
        if goal.is_empty() {
            return Err(ConfigError::Invalid(
                "goal must name at least one item".into(),
            ));
        }
        if file.episode_limit == 0 {
            return Err(ConfigError::Invalid(
                "episode_limit must be positive".into(),
            ));
        }

        let agent_spawn = parse_regions(&file.agent_spawn, "agent")?;

        // every region must hold everything that can spawn into it
        let mut demand: BTreeMap<Vec<u8>, usize> = BTreeMap::new();
        for e in &entities {
            *demand.entry(e.spawn.clone()).or_default() += 1;
        }
        for (regions, n) in &demand {
            if region_cells(regions) < *n {
                return Err(ConfigError::CrowdedRegion {
                    what: "entities".into(),
                    region: String::from_utf8_lossy(regions).into_owned(),
                });
            }
        }
        let all_regions: Vec<u8> = entities
            .iter()
            .flat_map(|e| e.spawn.iter().copied())
            .collect();
        let shared = agent_spawn.iter().any(|r| all_regions.contains(r));
        let reserved = if shared { entities.len() } else { 0 };
        if region_cells(&agent_spawn) <= reserved {
            return Err(ConfigError::CrowdedRegion {
                what: "agent".into(),
                region: file.agent_spawn.clone(),
            });
        }

        Ok(EnvConfig {
            name: file.name.clone(),
            episode_limit: file.episode_limit,
            vocab,
            scheme,
            rows,
            cols,
            terrain,
            entities,
            crafts,
            gate,
            initial_inventory,
            agent_spawn,
            lock_harvest_after_craft: file.lock_harvest_after_craft,
            goal,
            source: file,
        })
    }

    pub fn num_items(&self) -> usize {
        self.vocab.num_identities()
    }

    pub fn craft_rule(&self, output: ItemIdentity) -> Option<&CraftRule> {
        self.crafts.iter().find(|r| r.output == output)
    }
}

fn parse_layout(text: &str) -> Result<(usize, usize, Vec<Terrain>), ConfigError> {
    let lines: Vec<&str> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect();
    if lines.is_empty() {
        return Err(ConfigError::Layout("empty layout".into()));
    }
    let cols = lines[0].chars().count();
    if lines.len() > MAX_GRID || cols > MAX_GRID {
        return Err(ConfigError::Layout(format!(
            "grid larger than {MAX_GRID}x{MAX_GRID}"
        )));
    }
    let mut terrain = Vec::with_capacity(lines.len() * cols);
    for (r, line) in lines.iter().enumerate() {
        if line.chars().count() != cols {
            return Err(ConfigError::Layout(format!(
                "row {r} has a different width"
            )));
        }
        for ch in line.chars() {
            terrain.push(match ch {
                '#' => Terrain::Wall,
                'D' => Terrain::Gate,
                'B' => Terrain::Bench,
                '.' => Terrain::Floor(b'.'),
                c if c.is_ascii_lowercase() => Terrain::Floor(c as u8),
                c => return Err(ConfigError::Layout(format!("unknown symbol `{c}`"))),
            });
        }
    }
    Ok((lines.len(), cols, terrain))
}

fn check_craft_dag(rules: &[CraftRule], vocab: &Vocabulary) -> Result<(), ConfigError> {
    // colour: 0 unvisited, 1 on stack, 2 done
    fn visit(
        node: ItemIdentity,
        rules: &[CraftRule],
        colour: &mut Vec<u8>,
        vocab: &Vocabulary,
    ) -> Result<(), ConfigError> {
        let idx = node.0 as usize;
        match colour[idx] {
            1 => {
                return Err(ConfigError::CraftCycle(
                    vocab.identity_name(node).to_string(),
                ))
            }
            2 => return Ok(()),
            _ => {}
        }
        colour[idx] = 1;
        if let Some(rule) = rules.iter().find(|r| r.output == node) {
            for &dep in rule.consumed_inputs.iter().chain(&rule.required_tools) {
                visit(dep, rules, colour, vocab)?;
            }
        }
        colour[idx] = 2;
        Ok(())
    }
    let mut colour = vec![0u8; vocab.num_identities()];
    for rule in rules {
        visit(rule.output, rules, &mut colour, vocab)?;
    }
    Ok(())
}
