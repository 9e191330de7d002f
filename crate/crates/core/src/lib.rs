//! Toolkit for multi-file refactoring tasks: structural assertions over Python
//! syntax trees, patch evaluation, a state-aware agent loop and a synthetic
//! state-reconstruction gym.

pub mod assertlang;
pub mod evaluator;
pub mod harness;
pub mod lmclient;
pub mod pytree;
pub mod stategym;
pub mod taskspec;
