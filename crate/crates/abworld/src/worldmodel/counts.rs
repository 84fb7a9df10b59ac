use indexmap::IndexMap;

use crate::domain::{AbstractState, AbstractTransition, Behaviour};

/// Smoothing constant of the empirical success estimate.
pub const DEFAULT_EPSILON: f64 = 1e-3;

/// Success/total tallies for one `(state, behaviour)` key.
#[derive(Clone, Debug, PartialEq)]
pub struct CountEntry {
    pub state: AbstractState,
    pub behaviour: Behaviour,
    pub success: u64,
    pub total: u64,
}

/// Hash map from `(state hash, behaviour)` to success counts, plus the
/// append-only dataset the counts were built from. Insertion order is kept
/// so iteration (and therefore batch sampling) is reproducible.
#[derive(Clone, Debug)]
pub struct TransitionCounts {
    table: IndexMap<(u64, Behaviour), CountEntry>,
    dataset: Vec<AbstractTransition>,
    epsilon: f64,
}

impl Default for TransitionCounts {
    fn default() -> Self {
        Self::new(DEFAULT_EPSILON)
    }
}

impl TransitionCounts {
    pub fn new(epsilon: f64) -> Self {
        TransitionCounts {
            table: IndexMap::new(),
            dataset: Vec::new(),
            epsilon,
        }
    }

    pub fn from_dataset(
        dataset: impl IntoIterator<Item = AbstractTransition>,
        epsilon: f64,
    ) -> Self {
        let mut counts = Self::new(epsilon);
        for t in dataset {
            counts.record(t);
        }
        counts
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn record(&mut self, t: AbstractTransition) {
        let entry = self
            .table
            .entry((t.state.canonical_hash(), t.behaviour.clone()))
            .or_insert_with(|| CountEntry {
                state: t.state.clone(),
                behaviour: t.behaviour.clone(),
                success: 0,
                total: 0,
            });
        entry.total += 1;
        entry.success += u64::from(t.success);
        self.dataset.push(t);
    }

    pub fn get(&self, state: &AbstractState, behaviour: &Behaviour) -> Option<&CountEntry> {
        self.table.get(&(state.canonical_hash(), behaviour.clone()))
    }

    /// `(successes + ε) / (total + 2ε)`; exactly 0.5 for unseen keys.
    pub fn empirical_success_prob(&self, state: &AbstractState, behaviour: &Behaviour) -> f64 {
        let (s, n) = self
            .get(state, behaviour)
            .map_or((0, 0), |e| (e.success, e.total));
        smoothed(s, n, self.epsilon)
    }

    pub fn rho(&self, entry: &CountEntry) -> f64 {
        smoothed(entry.success, entry.total, self.epsilon)
    }

    pub fn num_keys(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dataset.is_empty()
    }

    pub fn entries(&self) -> impl ExactSizeIterator<Item = &CountEntry> {
        self.table.values()
    }

    pub fn entry_at(&self, index: usize) -> &CountEntry {
        &self.table[index]
    }

    pub fn dataset(&self) -> &[AbstractTransition] {
        &self.dataset
    }
}

pub fn smoothed(success: u64, total: u64, epsilon: f64) -> f64 {
    (success as f64 + epsilon) / (total as f64 + 2.0 * epsilon)
}
