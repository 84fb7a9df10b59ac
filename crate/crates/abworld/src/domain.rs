//! Item-attribute abstract states, behaviours and the deterministic
//! set-update operator used to imagine successful transitions.

use std::collections::HashSet;
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DomainError {
    #[error("item identity {0} does not occur in the state")]
    IdentityNotPresent(u16),
    #[error("a behaviour must name at least one item")]
    EmptyBehaviour,
    #[error("identity {0} is named more than once")]
    DuplicateIdentity(u16),
    #[error("cannot choose {items} items out of {slots}")]
    TooManyItems { items: usize, slots: usize },
    #[error("attribute vocabulary is empty")]
    NoAttributes,
    #[error("behaviour count does not fit in 64 bits")]
    Overflow,
    #[error("vocabulary entry `{0}` appears twice")]
    DuplicateName(String),
    #[error("vocabulary too large: {0} entries")]
    VocabularyTooLarge(usize),
    #[error("identity {0} is outside the vocabulary")]
    UnknownIdentity(u16),
    #[error("attribute {0} is outside the vocabulary")]
    UnknownAttribute(u8),
}

/// Index into the identity vocabulary of an environment.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ItemIdentity(pub u16);

impl ItemIdentity {
    /// Reserved identity of an unused slot. Its embedding is all zeros.
    pub const EMPTY: ItemIdentity = ItemIdentity(u16::MAX);

    pub fn is_empty(self) -> bool {
        self == Self::EMPTY
    }
}

/// Index into the attribute vocabulary of an environment.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AttributeId(pub u8);

impl AttributeId {
    /// Attribute carried by empty slots.
    pub const EMPTY: AttributeId = AttributeId(u8::MAX);
}

/// One `(identity, attribute)` pair. Also used for the proposed changes
/// of a behaviour, where the attribute is the desired new value.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
#[serde(from = "(u16, u8)", into = "(u16, u8)")]
pub struct Item {
    pub identity: ItemIdentity,
    pub attribute: AttributeId,
}

impl Item {
    pub const EMPTY: Item = Item {
        identity: ItemIdentity::EMPTY,
        attribute: AttributeId::EMPTY,
    };

    pub fn new(identity: u16, attribute: u8) -> Self {
        Item {
            identity: ItemIdentity(identity),
            attribute: AttributeId(attribute),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.identity.is_empty()
    }
}

impl From<(u16, u8)> for Item {
    fn from((id, attr): (u16, u8)) -> Self {
        Item::new(id, attr)
    }
}

impl From<Item> for (u16, u8) {
    fn from(item: Item) -> Self {
        (item.identity.0, item.attribute.0)
    }
}

/// Names for identities and attributes plus the one-hot embedding layout.
///
/// Identity and attribute one-hots are padded to a common width so both
/// halves of an item vector have the same dimension.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    identities: Vec<String>,
    attributes: Vec<String>,
}

impl Vocabulary {
    pub fn new(identities: Vec<String>, attributes: Vec<String>) -> Result<Self, DomainError> {
        if attributes.is_empty() {
            return Err(DomainError::NoAttributes);
        }
        if identities.len() >= u16::MAX as usize {
            return Err(DomainError::VocabularyTooLarge(identities.len()));
        }
        if attributes.len() >= u8::MAX as usize {
            return Err(DomainError::VocabularyTooLarge(attributes.len()));
        }
        for names in [&identities, &attributes] {
            let mut seen = HashSet::new();
            for n in names.iter() {
                if !seen.insert(n.as_str()) {
                    return Err(DomainError::DuplicateName(n.clone()));
                }
            }
        }
        Ok(Vocabulary {
            identities,
            attributes,
        })
    }

    pub fn num_identities(&self) -> usize {
        self.identities.len()
    }

    pub fn num_attributes(&self) -> usize {
        self.attributes.len()
    }

    /// Width of each one-hot half (`d_iden == d_attr`).
    pub fn width(&self) -> usize {
        self.identities.len().max(self.attributes.len())
    }

    /// Dimension of an encoded item, `d_iden + d_attr`.
    pub fn item_dim(&self) -> usize {
        2 * self.width()
    }

    pub fn identity(&self, name: &str) -> Option<ItemIdentity> {
        self.identities
            .iter()
            .position(|n| n == name)
            .map(|i| ItemIdentity(i as u16))
    }

    pub fn attribute(&self, name: &str) -> Option<AttributeId> {
        self.attributes
            .iter()
            .position(|n| n == name)
            .map(|i| AttributeId(i as u8))
    }

    pub fn identity_name(&self, id: ItemIdentity) -> &str {
        if id.is_empty() {
            return "EMPTY";
        }
        self.identities
            .get(id.0 as usize)
            .map(String::as_str)
            .unwrap_or("?")
    }

    pub fn attribute_name(&self, attr: AttributeId) -> &str {
        if attr == AttributeId::EMPTY {
            return "EMPTY";
        }
        self.attributes
            .get(attr.0 as usize)
            .map(String::as_str)
            .unwrap_or("?")
    }

    pub fn identities(&self) -> &[String] {
        &self.identities
    }

    pub fn attributes(&self) -> &[String] {
        &self.attributes
    }

    /// Checks that a non-empty item refers to known vocabulary entries.
    pub fn check(&self, item: &Item) -> Result<(), DomainError> {
        if item.is_empty() {
            return Ok(());
        }
        if item.identity.0 as usize >= self.identities.len() {
            return Err(DomainError::UnknownIdentity(item.identity.0));
        }
        if item.attribute.0 as usize >= self.attributes.len() {
            return Err(DomainError::UnknownAttribute(item.attribute.0));
        }
        Ok(())
    }

    /// Writes the concatenated one-hot embedding of `item` into `out`
    /// (length `item_dim()`). Empty slots encode as all zeros.
    pub fn encode_item(&self, item: &Item, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        if item.is_empty() {
            return;
        }
        out[item.identity.0 as usize] = 1.0;
        out[self.width() + item.attribute.0 as usize] = 1.0;
    }

    /// Row-major `N x (d_iden + d_attr)` matrix encoding of a state.
    pub fn encode_state(&self, state: &AbstractState) -> Vec<f64> {
        let d = self.item_dim();
        let mut out = vec![0.0; state.len() * d];
        for (row, item) in out.chunks_mut(d).zip(state.items()) {
            self.encode_item(item, row);
        }
        out
    }

    pub fn describe_item(&self, item: &Item) -> String {
        format!(
            "{}:{}",
            self.identity_name(item.identity),
            self.attribute_name(item.attribute)
        )
    }
}

/// Ordered set of item slots, with a digest of the `(identity, attribute)`
/// pairs in slot order.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "Vec<Item>", into = "Vec<Item>")]
pub struct AbstractState {
    items: Vec<Item>,
    hash: u64,
}

impl AbstractState {
    pub fn new(items: Vec<Item>) -> Result<Self, DomainError> {
        let mut seen = HashSet::new();
        for item in items.iter().filter(|i| !i.is_empty()) {
            if !seen.insert(item.identity) {
                return Err(DomainError::DuplicateIdentity(item.identity.0));
            }
        }
        let hash = canonical_hash(&items);
        Ok(AbstractState { items, hash })
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn canonical_hash(&self) -> u64 {
        self.hash
    }

    pub fn non_empty(&self) -> impl Iterator<Item = &Item> {
        self.items.iter().filter(|i| !i.is_empty())
    }

    pub fn attribute_of(&self, identity: ItemIdentity) -> Option<AttributeId> {
        self.non_empty()
            .find(|i| i.identity == identity)
            .map(|i| i.attribute)
    }

    pub fn contains(&self, item: &Item) -> bool {
        !item.is_empty() && self.items.contains(item)
    }

    /// `(identity, old, new)` for every slot whose attribute differs.
    pub fn changes_to(
        &self,
        next: &AbstractState,
    ) -> Vec<(ItemIdentity, AttributeId, AttributeId)> {
        self.items
            .iter()
            .zip(next.items.iter())
            .filter(|(a, b)| {
                a.identity == b.identity && a.attribute != b.attribute && !a.is_empty()
            })
            .map(|(a, b)| (a.identity, a.attribute, b.attribute))
            .collect()
    }

    pub fn describe(&self, vocab: &Vocabulary) -> String {
        self.non_empty()
            .map(|i| vocab.describe_item(i))
            .collect::<Vec<_>>()
            .join(", ")
    }
}

impl PartialEq for AbstractState {
    fn eq(&self, other: &Self) -> bool {
        self.hash == other.hash && self.items == other.items
    }
}

impl Eq for AbstractState {}

impl Hash for AbstractState {
    fn hash<H: Hasher>(&self, state: &mut H) {
        state.write_u64(self.hash);
    }
}

impl TryFrom<Vec<Item>> for AbstractState {
    type Error = DomainError;
    fn try_from(items: Vec<Item>) -> Result<Self, Self::Error> {
        AbstractState::new(items)
    }
}

impl From<AbstractState> for Vec<Item> {
    fn from(state: AbstractState) -> Self {
        state.items
    }
}

/// FNV-1a over the id-level slot contents followed by a 64-bit finalizer.
/// Embeddings never enter the digest.
fn canonical_hash(items: &[Item]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    for item in items {
        let [a, b] = item.identity.0.to_le_bytes();
        for byte in [a, b, item.attribute.0] {
            h ^= byte as u64;
            h = h.wrapping_mul(PRIME);
        }
    }
    h ^= items.len() as u64;
    // splitmix64 finalizer
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

/// A proposed attribute change for one or more distinct items. The changes
/// are kept sorted by identity so equal sets compare equal.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
#[serde(try_from = "Vec<Item>", into = "Vec<Item>")]
pub struct Behaviour {
    changes: Vec<Item>,
}

impl Behaviour {
    pub fn new(changes: impl IntoIterator<Item = Item>) -> Result<Self, DomainError> {
        let mut changes: Vec<Item> = changes.into_iter().collect();
        if changes.is_empty() {
            return Err(DomainError::EmptyBehaviour);
        }
        changes.sort();
        for pair in changes.windows(2) {
            if pair[0].identity == pair[1].identity {
                return Err(DomainError::DuplicateIdentity(pair[0].identity.0));
            }
        }
        if let Some(e) = changes.iter().find(|c| c.is_empty()) {
            return Err(DomainError::IdentityNotPresent(e.identity.0));
        }
        Ok(Behaviour { changes })
    }

    pub fn single(identity: ItemIdentity, attribute: AttributeId) -> Self {
        Behaviour {
            changes: vec![Item {
                identity,
                attribute,
            }],
        }
    }

    pub fn changes(&self) -> &[Item] {
        &self.changes
    }

    pub fn len(&self) -> usize {
        self.changes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.changes.is_empty()
    }

    /// True iff every proposed `(identity, new attribute)` pair is in `state`.
    pub fn holds_in(&self, state: &AbstractState) -> bool {
        self.changes.iter().all(|c| state.contains(c))
    }

    pub fn describe(&self, vocab: &Vocabulary) -> String {
        self.changes
            .iter()
            .map(|c| {
                format!(
                    "{}->{}",
                    vocab.identity_name(c.identity),
                    vocab.attribute_name(c.attribute)
                )
            })
            .collect::<Vec<_>>()
            .join("+")
    }
}

impl TryFrom<Vec<Item>> for Behaviour {
    type Error = DomainError;
    fn try_from(changes: Vec<Item>) -> Result<Self, Self::Error> {
        Behaviour::new(changes)
    }
}

impl From<Behaviour> for Vec<Item> {
    fn from(b: Behaviour) -> Self {
        b.changes
    }
}

impl fmt::Display for Behaviour {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .changes
            .iter()
            .map(|c| format!("{}->{}", c.identity.0, c.attribute.0))
            .collect();
        write!(f, "{}", parts.join("+"))
    }
}

/// One abstract step: a behaviour executed from `state` until the abstract
/// state changed or the step horizon elapsed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbstractTransition {
    pub state: AbstractState,
    pub behaviour: Behaviour,
    pub next_state: AbstractState,
    pub success: bool,
    pub low_level_steps: u32,
}

impl AbstractTransition {
    /// Builds a transition, deriving `success` from the next state.
    pub fn observed(
        state: AbstractState,
        behaviour: Behaviour,
        next_state: AbstractState,
        low_level_steps: u32,
    ) -> Self {
        let success = behaviour.holds_in(&next_state);
        AbstractTransition {
            state,
            behaviour,
            next_state,
            success,
            low_level_steps,
        }
    }
}

/// A transition succeeded iff all proposed changes are members of the next state.
pub fn is_success(transition: &AbstractTransition) -> bool {
    transition.behaviour.holds_in(&transition.next_state)
}

/// Expected next state after a successful behaviour: the named items take
/// their new attributes, everything else is untouched.
pub fn apply_delta(
    state: &AbstractState,
    behaviour: &Behaviour,
) -> Result<AbstractState, DomainError> {
    let mut items = state.items.clone();
    for change in behaviour.changes() {
        let slot = items
            .iter_mut()
            .find(|i| !i.is_empty() && i.identity == change.identity)
            .ok_or(DomainError::IdentityNotPresent(change.identity.0))?;
        slot.attribute = change.attribute;
    }
    let hash = canonical_hash(&items);
    Ok(AbstractState { items, hash })
}

/// Size of the behaviour space, `C(n, i) * m^i`.
pub fn count_behaviours(n: usize, m: usize, i: usize) -> Result<u64, DomainError> {
    if m == 0 {
        return Err(DomainError::NoAttributes);
    }
    if i == 0 {
        return Err(DomainError::EmptyBehaviour);
    }
    if i > n {
        return Err(DomainError::TooManyItems { items: i, slots: n });
    }
    let mut binom: u64 = 1;
    for j in 0..i as u64 {
        // binom * (n - j) / (j + 1) stays integral at every step
        binom = binom
            .checked_mul(n as u64 - j)
            .ok_or(DomainError::Overflow)?
            / (j + 1);
    }
    let pow = (m as u64)
        .checked_pow(i as u32)
        .ok_or(DomainError::Overflow)?;
    binom.checked_mul(pow).ok_or(DomainError::Overflow)
}
