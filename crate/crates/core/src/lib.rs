//! Tabular value-equivalent and proper-value-equivalent model learning.
//!
//! The crate is organised bottom-up:
//!
//! * [`mdp`]: finite MDPs, Bellman and transition operators, evaluation and planning.
//! * [`env`]: Four Rooms, ring/false-ring pairs and other fixtures.
//! * [`model`]: learnable models, VE/PVE losses, gradients, Adam and training.
//! * [`policy_gen`]: random and policy-iteration-derived datasets.
//! * [`analysis`]: model-space geometry, trajectories and bound checks.
//! * [`checks`]: constructive fixtures as runnable checks.

pub mod analysis;
pub mod checks;
pub mod dataset;
pub mod env;
pub mod error;
pub mod mdp;
pub mod model;
pub mod policy_gen;
pub mod rng;

pub use dataset::{DatasetSemantics, PolicyValueDataset};
pub use error::{PveError, Result};
pub use mdp::{
    sup_norm, weighted_norm, EvalMethod, Policy, StateDistribution, StateFunction, TabularMdp,
    DEFAULT_EVAL_TOL,
};
pub use model::{LossKind, LossSpec, ModelParams, Rank};
