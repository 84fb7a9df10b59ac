//! Abstracted item-attribute world models for gridworld crafting.
//!
//! Behaviours propose attribute changes for items; a learned model predicts
//! the probability that a behaviour succeeds from an abstract state, and
//! planning searches the graph of imagined successful transitions.

pub mod abmdp;
pub mod craft;
pub mod domain;
pub mod explore;
pub mod harness;
pub mod plan;
pub mod worldmodel;
