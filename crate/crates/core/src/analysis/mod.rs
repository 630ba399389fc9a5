//! Model-space geometry, trajectory sampling and bound verification.

pub mod bounds;
pub mod geometry;
pub mod trajectories;

pub use bounds::{
    muzero_bound_check, muzero_intermediate_check, muzero_loss_monte_carlo, muzero_terms,
    verify_pve_bound, verify_weighted_bound, BoundCase, BoundReport, McEstimate, MuZeroTerms,
    BOUND_SLACK, DEFAULT_TELEPORT_EPS,
};
pub use geometry::{
    devectorize_model, diameter, diameter_of, pca_project, vector_len, vectorize_model, ModelVector,
    Projection,
};
pub use trajectories::{sample_trajectories, step};
