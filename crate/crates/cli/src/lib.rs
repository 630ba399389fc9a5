//! Experiment harness for tabular VE/PVE model learning on Four Rooms.
//!
//! Each command has a settings type read from a flat config file, a `run_*`
//! function returning in-memory results and a `cmd_*` function that writes
//! them under a content-addressed output directory.

pub mod capacity;
pub mod common;
pub mod config;
pub mod error;
pub mod model_file;
pub mod model_space;
pub mod output;
pub mod trajectories;
pub mod verify;

pub use config::Config;
pub use error::{LabError, LabResult};
