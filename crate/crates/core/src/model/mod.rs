//! Learnable tabular models, VE and PVE losses, gradients and training.

pub mod adam;
pub mod loss;
pub mod params;
pub mod train;

pub use adam::{adam_step, AdamConfig, OptimizerState};
pub use loss::{
    loss_gradient, order_k_ve_loss, order_k_ve_loss_of, pve_loss, pve_loss_of, LossKind, LossSpec,
    Objective,
};
pub use params::{init_params, realize_model, ModelParams, Rank};
pub use train::{train, Snapshot, TrainConfig, TrainOutcome, Trainer, EVAL_PAIRS};
