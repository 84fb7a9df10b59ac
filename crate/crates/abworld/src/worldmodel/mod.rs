//! Success-probability world models: empirical counts, the parametric
//! attention model, a generative per-slot baseline, and their persistence.

mod adam;
mod counts;
mod fit;
mod generative;
mod net;
mod parametric;
pub mod persist;

use std::cell::RefCell;
use std::collections::HashMap;

use thiserror::Error;

pub use adam::{AdamConfig, OptimizerState};
pub use counts::{smoothed, CountEntry, TransitionCounts, DEFAULT_EPSILON};
pub use fit::{FitConfig, FitReport};
pub use generative::{slot_targets, GenerativeModel, SlotTargets};
pub use net::{HeadKind, NetShape, Tensor};
pub use parametric::{Example, ParametricModel, DEFAULT_HIDDEN};

use crate::domain::{apply_delta, AbstractState, Behaviour, DomainError};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("identity {0} is outside the model vocabulary")]
    UnknownIdentity(u16),
    #[error("attribute {0} is outside the model vocabulary")]
    UnknownAttribute(u8),
    #[error("no training data")]
    EmptyData,
    #[error("non-finite loss {loss} at optimizer step {step}")]
    Numerical { step: u64, loss: f64 },
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed model file: {0}")]
    Format(String),
    #[error("malformed json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Anything that scores `(state, behaviour)` pairs with a success probability.
pub trait SuccessModel {
    fn success_probs(
        &self,
        state: &AbstractState,
        behaviours: &[Behaviour],
    ) -> Result<Vec<f64>, ModelError>;

    fn success_prob(
        &self,
        state: &AbstractState,
        behaviour: &Behaviour,
    ) -> Result<f64, ModelError> {
        Ok(self.success_probs(state, std::slice::from_ref(behaviour))?[0])
    }
}

/// Imagined outcome of each behaviour: the predicted next state and the
/// probability attached to reaching it.
pub trait TransitionModel {
    fn imagine(
        &self,
        state: &AbstractState,
        behaviours: &[Behaviour],
    ) -> Result<Vec<(AbstractState, f64)>, ModelError>;
}

/// Discriminative models imagine `Δ(X, b)` reached with probability `q`.
impl<M: SuccessModel> TransitionModel for M {
    fn imagine(
        &self,
        state: &AbstractState,
        behaviours: &[Behaviour],
    ) -> Result<Vec<(AbstractState, f64)>, ModelError> {
        let probs = self.success_probs(state, behaviours)?;
        behaviours
            .iter()
            .zip(probs)
            .map(|(b, q)| Ok((apply_delta(state, b)?, q)))
            .collect()
    }
}

/// The non-parametric model: plan directly on the smoothed counts.
impl SuccessModel for TransitionCounts {
    fn success_probs(
        &self,
        state: &AbstractState,
        behaviours: &[Behaviour],
    ) -> Result<Vec<f64>, ModelError> {
        Ok(behaviours
            .iter()
            .map(|b| self.empirical_success_prob(state, b))
            .collect())
    }
}

impl<M: SuccessModel + ?Sized> SuccessModel for &M {
    fn success_probs(
        &self,
        state: &AbstractState,
        behaviours: &[Behaviour],
    ) -> Result<Vec<f64>, ModelError> {
        (**self).success_probs(state, behaviours)
    }
}

/// Caches imagined transitions per `(state hash, behaviour)`; valid while
/// the wrapped model is not modified.
pub struct Memoized<'a> {
    inner: &'a dyn TransitionModel,
    cache: RefCell<HashMap<(u64, Behaviour), (AbstractState, f64)>>,
}

impl<'a> Memoized<'a> {
    pub fn new(inner: &'a dyn TransitionModel) -> Self {
        Memoized {
            inner,
            cache: RefCell::new(HashMap::new()),
        }
    }
}

impl TransitionModel for Memoized<'_> {
    fn imagine(
        &self,
        state: &AbstractState,
        behaviours: &[Behaviour],
    ) -> Result<Vec<(AbstractState, f64)>, ModelError> {
        let hash = state.canonical_hash();
        let missing: Vec<Behaviour> = {
            let cache = self.cache.borrow();
            behaviours
                .iter()
                .filter(|b| !cache.contains_key(&(hash, (*b).clone())))
                .cloned()
                .collect()
        };
        if !missing.is_empty() {
            let outcomes = self.inner.imagine(state, &missing)?;
            let mut cache = self.cache.borrow_mut();
            for (b, o) in missing.into_iter().zip(outcomes) {
                cache.insert((hash, b), o);
            }
        }
        let cache = self.cache.borrow();
        Ok(behaviours
            .iter()
            .map(|b| cache[&(hash, b.clone())].clone())
            .collect())
    }
}
