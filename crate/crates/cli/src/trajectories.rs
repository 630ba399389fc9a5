//! Rollouts of the environment-optimal policy in the environment or in a saved model.

use std::path::{Path, PathBuf};

use pve_core::analysis::sample_trajectories;
use pve_core::env::FourRooms;

use crate::common::{EnvSettings, ENV_KEYS};
use crate::config::{Config, Settings};
use crate::error::{LabError, LabResult};
use crate::model_file::read_model;
use crate::output::{prepare_run_dir, Csv};

pub const SECTION: &str = "trajectories";
const KEYS: [&str; 4] = ["model", "n_traj", "horizon", "start"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Start {
    BottomRight,
    BottomLeft,
    State(usize),
}

impl Start {
    fn parse(s: &str) -> LabResult<Self> {
        match s {
            "bottom-right" => Ok(Start::BottomRight),
            "bottom-left" => Ok(Start::BottomLeft),
            _ => s
                .parse()
                .map(Start::State)
                .map_err(|_| LabError::Config(format!("bad start {s:?}"))),
        }
    }

    fn label(&self) -> String {
        match self {
            Start::BottomRight => "bottom-right".into(),
            Start::BottomLeft => "bottom-left".into(),
            Start::State(s) => s.to_string(),
        }
    }

    fn resolve(&self, rooms: &FourRooms) -> LabResult<usize> {
        match *self {
            Start::BottomRight => Ok(rooms.bottom_right_state()),
            Start::BottomLeft => Ok(rooms.bottom_left_state()),
            Start::State(s) if s < rooms.n_states() => Ok(s),
            Start::State(s) => Err(LabError::Config(format!("start state {s} out of range"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySettings {
    pub env: EnvSettings,
    /// Model file to roll out in; `None` uses the environment.
    pub model: Option<PathBuf>,
    pub n_traj: usize,
    pub horizon: usize,
    pub start: Start,
    pub seed: u64,
}

impl Default for TrajectorySettings {
    fn default() -> Self {
        Self {
            env: EnvSettings::default(),
            model: None,
            n_traj: 5000,
            horizon: 30,
            start: Start::BottomRight,
            seed: 0,
        }
    }
}

impl TrajectorySettings {
    pub fn from_config(config: &Config, seed: u64) -> LabResult<Self> {
        config.check_keys(SECTION, &KEYS)?;
        let d = Self::default();
        let model = match config.get(SECTION, "model") {
            None | Some("env") => None,
            Some(path) => Some(PathBuf::from(path)),
        };
        let start = match config.get(SECTION, "start") {
            None => d.start,
            Some(s) => Start::parse(s)?,
        };
        let s = Self {
            env: EnvSettings::from_config(config)?,
            model,
            n_traj: config.value(SECTION, "n_traj", d.n_traj)?,
            horizon: config.value(SECTION, "horizon", d.horizon)?,
            start,
            seed,
        };
        if s.horizon == 0 {
            return Err(LabError::Config(format!("[{SECTION}] horizon must be >= 1")));
        }
        Ok(s)
    }

    pub fn record(&self) -> Settings {
        let mut s = Settings::default();
        s.push("seed", self.seed);
        self.env.record(&mut s);
        s.push(
            "model",
            self.model.as_ref().map_or("env".to_string(), |p| p.display().to_string()),
        );
        s.push("n_traj", self.n_traj);
        s.push("horizon", self.horizon);
        s.push("start", self.start.label());
        s
    }
}

#[derive(Debug, Clone)]
pub struct TrajectoryOutput {
    pub table: Csv,
    pub cells: Csv,
    pub transitions: usize,
    /// Transitions that are neither a stay nor a move to a grid neighbour.
    pub non_adjacent: usize,
}

pub fn run_trajectories(s: &TrajectorySettings) -> LabResult<TrajectoryOutput> {
    let rooms = s.env.build()?;
    let env = rooms.mdp();
    let (_, policy) = env.value_iteration(1e-10)?;
    let dynamics = match &s.model {
        None => env.clone(),
        Some(path) => {
            let model = read_model(path)?;
            if model.n_states() != env.n_states() || model.n_actions() != env.n_actions() {
                return Err(LabError::ModelFile(format!(
                    "{} is {}x{}, the environment is {}x{}",
                    path.display(),
                    model.n_states(),
                    model.n_actions(),
                    env.n_states(),
                    env.n_actions()
                )));
            }
            model
        }
    };
    let start = s.start.resolve(&rooms)?;
    let trajs = sample_trajectories(&dynamics, &policy, s.n_traj, s.horizon, start, s.seed)?;

    let mut table = Csv::new(&["traj_id", "t", "state"]);
    let mut non_adjacent = 0;
    for (i, traj) in trajs.iter().enumerate() {
        for (t, state) in traj.iter().enumerate() {
            table.row(&[i.to_string(), t.to_string(), state.to_string()]);
        }
        non_adjacent += traj.windows(2).filter(|w| !rooms.is_grid_move(w[0], w[1])).count();
    }
    let mut cells = Csv::new(&["state", "row", "col"]);
    for state in 0..rooms.n_states() {
        let (r, c) = rooms.cell(state);
        cells.row(&[state.to_string(), r.to_string(), c.to_string()]);
    }
    Ok(TrajectoryOutput {
        table,
        cells,
        transitions: s.n_traj * s.horizon,
        non_adjacent,
    })
}

pub fn cmd_trajectories(config: &Config, seed: u64, out: Option<&Path>, force: bool) -> LabResult<(PathBuf, TrajectoryOutput)> {
    config.check_keys("env", &ENV_KEYS)?;
    let s = TrajectorySettings::from_config(config, seed)?;
    let dir = prepare_run_dir(out, "trajectories", &s.record(), &[], force)?;
    let result = run_trajectories(&s)?;
    result.table.write(&dir.join("trajectories.csv"))?;
    result.cells.write(&dir.join("cells.csv"))?;
    std::fs::write(
        dir.join("summary.txt"),
        format!("transitions = {}\nnon_adjacent = {}\n", result.transitions, result.non_adjacent),
    )?;
    Ok((dir, result))
}
