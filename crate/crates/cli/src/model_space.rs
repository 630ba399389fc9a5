//! Populations of order-k VE and PVE models trained in lockstep and projected
//! into a shared principal-component plane at every snapshot.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use pve_core::analysis::{diameter, diameter_of, pca_project, vectorize_model};
use pve_core::model::{init_params, AdamConfig, LossSpec, Objective, Trainer};
use pve_core::policy_gen::{build_dataset, DatasetKind, DatasetSpec};
use pve_core::rng::stream_seed;
use pve_core::{Rank, TabularMdp};

use crate::common::{parse_rank, par_map, EnvSettings, Order, ENV_KEYS};
use crate::config::{Config, Settings};
use crate::error::{LabError, LabResult};
use crate::model_file::write_model;
use crate::output::{num, prepare_run_dir, Csv};

pub const SECTION: &str = "model_space";
const KEYS: [&str; 12] = [
    "ks",
    "models_per_k",
    "iters",
    "lr",
    "batch_size",
    "snapshot_every",
    "dataset_size",
    "share_dataset",
    "pve_k",
    "groups",
    "rank",
    "save_models",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sharing {
    /// One dataset per class, shared by all its models.
    PerClass,
    /// A fresh dataset for every model.
    PerModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpaceSettings {
    pub env: EnvSettings,
    pub ks: Vec<Order>,
    pub models_per_k: usize,
    pub iters: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub snapshot_every: usize,
    pub dataset_size: usize,
    pub share_dataset: Sharing,
    /// Operator order used inside the PVE loss.
    pub pve_k: usize,
    pub groups: usize,
    pub rank: Rank,
    pub save_models: bool,
    pub seed: u64,
}

impl Default for ModelSpaceSettings {
    fn default() -> Self {
        Self {
            env: EnvSettings::default(),
            ks: vec![Order::Finite(1), Order::Finite(5), Order::Finite(10), Order::Infinite],
            models_per_k: 12,
            iters: 50_000,
            lr: 1e-3,
            batch_size: 50,
            snapshot_every: 1000,
            dataset_size: 100_000,
            share_dataset: Sharing::PerClass,
            pve_k: 1,
            groups: 3,
            rank: Rank::Full,
            save_models: true,
            seed: 0,
        }
    }
}

impl ModelSpaceSettings {
    pub fn from_config(config: &Config, seed: u64) -> LabResult<Self> {
        config.check_keys(SECTION, &KEYS)?;
        let d = Self::default();
        let bad = |what: &str| LabError::Config(format!("[{SECTION}] {what}"));
        let ks: Vec<Order> = config.list(SECTION, "ks", d.ks.clone())?;
        let share_dataset = match config.get(SECTION, "share_dataset") {
            None | Some("per_k") => Sharing::PerClass,
            Some("per_model") => Sharing::PerModel,
            Some(other) => return Err(bad(&format!("share_dataset must be per_k or per_model, got {other:?}"))),
        };
        let rank = match config.get(SECTION, "rank") {
            None => d.rank,
            Some(r) => parse_rank(r)?,
        };
        let s = Self {
            env: EnvSettings::from_config(config)?,
            ks,
            models_per_k: config.value(SECTION, "models_per_k", d.models_per_k)?,
            iters: config.value(SECTION, "iters", d.iters)?,
            lr: config.value(SECTION, "lr", d.lr)?,
            batch_size: config.value(SECTION, "batch_size", d.batch_size)?,
            snapshot_every: config.value(SECTION, "snapshot_every", d.snapshot_every)?,
            dataset_size: config.value(SECTION, "dataset_size", d.dataset_size)?,
            share_dataset,
            pve_k: config.value(SECTION, "pve_k", d.pve_k)?,
            groups: config.value(SECTION, "groups", d.groups)?,
            rank,
            save_models: config.value(SECTION, "save_models", d.save_models)?,
            seed,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> LabResult<()> {
        let bad = |what: &str| Err(LabError::Config(format!("[{SECTION}] {what}")));
        if self.ks.is_empty() {
            return bad("ks is empty");
        }
        let mut sorted = self.ks.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.ks.len() {
            return bad("ks has duplicates");
        }
        if self.models_per_k == 0 || self.batch_size == 0 || self.snapshot_every == 0 || self.dataset_size == 0 {
            return bad("models_per_k, batch_size, snapshot_every and dataset_size must be >= 1");
        }
        if self.ks.len() * self.models_per_k < 2 {
            return bad("need at least 2 models in total");
        }
        if self.pve_k == 0 {
            return bad("pve_k must be >= 1");
        }
        if self.groups == 0 || !self.models_per_k.is_multiple_of(self.groups) {
            return bad("groups must divide models_per_k");
        }
        if !(self.lr > 0.0) {
            return bad("lr must be positive");
        }
        Ok(())
    }

    pub fn record(&self) -> Settings {
        let mut s = Settings::default();
        s.push("seed", self.seed);
        self.env.record(&mut s);
        s.push("ks", self.ks.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(","));
        s.push("models_per_k", self.models_per_k);
        s.push("iters", self.iters);
        s.push("lr", self.lr);
        s.push("batch_size", self.batch_size);
        s.push("snapshot_every", self.snapshot_every);
        s.push("dataset_size", self.dataset_size);
        s.push(
            "share_dataset",
            match self.share_dataset {
                Sharing::PerClass => "per_k",
                Sharing::PerModel => "per_model",
            },
        );
        s.push("pve_k", self.pve_k);
        s.push("groups", self.groups);
        s.push("rank", self.rank.label());
        s.push("save_models", self.save_models);
        s
    }

    /// Iterations at which models are recorded, starting with the initialization.
    pub fn snapshot_iterations(&self) -> Vec<usize> {
        let mut its: Vec<usize> = (0..=self.iters).step_by(self.snapshot_every).collect();
        if *its.last().unwrap() != self.iters {
            its.push(self.iters);
        }
        its
    }
}

/// Per-model measurements at one snapshot.
#[derive(Debug, Clone)]
struct ModelState {
    vector: DVector<f64>,
    loss: f64,
    ratio: f64,
    model: TabularMdp,
}

/// What a model-space run produces.
#[derive(Debug, Clone)]
pub struct ModelSpaceOutput {
    pub points: Csv,
    pub diameters: Csv,
    pub groups: Csv,
    /// `(run_id, final model)`.
    pub final_models: Vec<(String, TabularMdp)>,
    /// `(class, 2-d diameter)` at the last snapshot.
    pub final_diameters: Vec<(Order, f64)>,
    /// `(class, opt_value_ratio of each model)` at the last snapshot.
    pub final_ratios: Vec<(Order, Vec<f64>)>,
}

fn run_id(k: Order, m: usize) -> String {
    format!("k{k}-m{m:02}")
}

/// Environment value of the model's optimal policy relative to the environment optimum,
/// both averaged uniformly over states.
pub fn opt_value_ratio(env: &TabularMdp, model: &TabularMdp, env_opt_mean: f64) -> LabResult<f64> {
    let (_, pi) = model.policy_iteration()?;
    Ok(env.evaluate(&pi)?.values().mean() / env_opt_mean)
}

pub fn run_model_space(s: &ModelSpaceSettings, workers: usize) -> LabResult<ModelSpaceOutput> {
    s.validate()?;
    let rooms = s.env.build()?;
    let env = rooms.mdp();
    let (ns, na) = (env.n_states(), env.n_actions());
    let (v_star, _) = env.value_iteration(1e-10)?;
    let env_opt_mean = v_star.values().mean();

    // datasets and objectives
    let dataset_for = |k: Order, index: u64| -> LabResult<Objective> {
        let component = format!("model-space-dataset/k{k}");
        let mut spec = DatasetSpec::new(s.dataset_size, DatasetKind::RandomMixed, stream_seed(s.seed, &component, index));
        let loss = match k {
            Order::Finite(k) => LossSpec::order_k(k),
            Order::Infinite => {
                spec.value_labels = true;
                LossSpec::pve(s.pve_k)
            }
        };
        Ok(Objective::new(env, &build_dataset(env, &spec)?, loss)?)
    };
    let mut objectives = Vec::new();
    // objective index of each model, class-major
    let mut owner = Vec::new();
    for &k in &s.ks {
        match s.share_dataset {
            Sharing::PerClass => {
                objectives.push(dataset_for(k, 0)?);
                owner.extend(std::iter::repeat_n(objectives.len() - 1, s.models_per_k));
            }
            Sharing::PerModel => {
                for m in 0..s.models_per_k {
                    objectives.push(dataset_for(k, m as u64)?);
                    owner.push(objectives.len() - 1);
                }
            }
        }
    }

    let mut trainers = Vec::with_capacity(owner.len());
    let mut labels = Vec::with_capacity(owner.len());
    for (ci, &k) in s.ks.iter().enumerate() {
        for m in 0..s.models_per_k {
            let index = ci * s.models_per_k + m;
            let init = init_params(ns, na, s.rank, env.discount(), stream_seed(s.seed, &format!("model-space-init/k{k}"), m as u64))?;
            let batches = stream_seed(s.seed, &format!("model-space-batches/k{k}"), m as u64);
            trainers.push(Trainer::new(&objectives[owner[index]], init, AdamConfig::with_lr(s.lr), s.batch_size, batches)?);
            labels.push((k, m));
        }
    }

    let mut points = Csv::new(&["run_id", "k", "snapshot", "model_id", "pc1", "pc2", "loss", "opt_value_ratio"]);
    let mut diameters = Csv::new(&["k", "snapshot", "diameter_2d", "diameter_raw"]);
    let mut groups = Csv::new(&["k", "snapshot", "group", "diameter_2d"]);
    let mut last_states = Vec::new();
    let mut last_points = DMatrix::zeros(0, 2);

    for target in s.snapshot_iterations() {
        let states = par_map(&mut trainers, workers, |t| -> LabResult<ModelState> {
            let remaining = target - t.iteration();
            if remaining > 0 {
                t.step_n(remaining)?;
            }
            let model = t.params().realize()?;
            Ok(ModelState {
                vector: vectorize_model(&model),
                loss: t.eval_loss()?,
                ratio: opt_value_ratio(env, &model, env_opt_mean)?,
                model,
            })
        })
        .into_iter()
        .collect::<LabResult<Vec<_>>>()?;

        let vectors: Vec<_> = states.iter().map(|st| st.vector.clone()).collect();
        let proj = pca_project(&vectors, 2)?;
        for (i, st) in states.iter().enumerate() {
            let (k, m) = labels[i];
            points.row(&[
                run_id(k, m),
                k.to_string(),
                target.to_string(),
                i.to_string(),
                num(proj.points[(i, 0)]),
                num(proj.points[(i, 1)]),
                num(st.loss),
                num(st.ratio),
            ]);
        }
        for (ci, &k) in s.ks.iter().enumerate() {
            let range = ci * s.models_per_k..(ci + 1) * s.models_per_k;
            let class_points = proj.points.rows(range.start, s.models_per_k).into_owned();
            diameters.row(&[
                k.to_string(),
                target.to_string(),
                num(diameter(&class_points)?),
                num(diameter_of(&vectors[range.clone()])?),
            ]);
            let size = s.models_per_k / s.groups;
            for g in 0..s.groups {
                let rows = class_points.rows(g * size, size).into_owned();
                groups.row(&[k.to_string(), target.to_string(), g.to_string(), num(diameter(&rows)?)]);
            }
        }
        last_points = proj.points;
        last_states = states;
    }

    let mut final_diameters = Vec::new();
    let mut final_ratios = Vec::new();
    for (ci, &k) in s.ks.iter().enumerate() {
        let rows = last_points.rows(ci * s.models_per_k, s.models_per_k).into_owned();
        final_diameters.push((k, diameter(&rows)?));
        final_ratios.push((
            k,
            last_states[ci * s.models_per_k..(ci + 1) * s.models_per_k]
                .iter()
                .map(|st| st.ratio)
                .collect(),
        ));
    }
    let final_models = labels
        .iter()
        .zip(last_states)
        .map(|(&(k, m), st)| (run_id(k, m), st.model))
        .collect();
    Ok(ModelSpaceOutput {
        points,
        diameters,
        groups,
        final_models,
        final_diameters,
        final_ratios,
    })
}

/// Run the experiment and write its files; returns the output directory.
pub fn cmd_model_space(
    config: &Config,
    seed: u64,
    out: Option<&Path>,
    force: bool,
    workers: usize,
) -> LabResult<PathBuf> {
    config.check_keys("env", &ENV_KEYS)?;
    let s = ModelSpaceSettings::from_config(config, seed)?;
    let notes = vec![format!(
        "diameter groups: {} sets of {} models per class",
        s.groups,
        s.models_per_k / s.groups
    )];
    let dir = prepare_run_dir(out, "model-space", &s.record(), &notes, force)?;
    let result = run_model_space(&s, workers)?;
    result.points.write(&dir.join("points.csv"))?;
    result.diameters.write(&dir.join("diameters.csv"))?;
    result.groups.write(&dir.join("diameter_groups.csv"))?;
    if s.save_models {
        let models = dir.join("models");
        std::fs::create_dir_all(&models)?;
        for (id, model) in &result.final_models {
            write_model(&models.join(format!("{id}.model")), model, &s.rank.label())?;
        }
    }
    Ok(dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelSpaceSettings {
        ModelSpaceSettings {
            ks: vec![Order::Finite(1), Order::Infinite],
            models_per_k: 2,
            iters: 30,
            snapshot_every: 20,
            dataset_size: 20,
            batch_size: 5,
            groups: 1,
            ..Default::default()
        }
    }

    #[test]
    fn snapshot_schedule() {
        let s = tiny();
        assert_eq!(s.snapshot_iterations(), vec![0, 20, 30]);
    }

    #[test]
    fn tiny_run_shapes() {
        let out = run_model_space(&tiny(), 2).unwrap();
        // 3 snapshots of 4 models
        assert_eq!(out.points.as_str().lines().count(), 1 + 12);
        assert_eq!(out.diameters.as_str().lines().count(), 1 + 6);
        assert_eq!(out.final_models.len(), 4);
        assert_eq!(out.final_models[3].0, "kinf-m01");
        for (_, ratios) in &out.final_ratios {
            assert!(ratios.iter().all(|r| *r <= 1.0 + 1e-9));
        }
    }

    #[test]
    fn worker_count_does_not_change_output() {
        let a = run_model_space(&tiny(), 1).unwrap();
        let b = run_model_space(&tiny(), 3).unwrap();
        assert_eq!(a.points.as_str(), b.points.as_str());
        assert_eq!(a.groups.as_str(), b.groups.as_str());
    }

    #[test]
    fn config_validation() {
        let c = Config::parse("[model_space]\nmodels_per_k = 4\ngroups = 3").unwrap();
        assert!(ModelSpaceSettings::from_config(&c, 0).is_err());
        let c = Config::parse("[model_space]\nks = 1, 1").unwrap();
        assert!(ModelSpaceSettings::from_config(&c, 0).is_err());
        let c = Config::parse("[model_space]\nks = 2, inf\nrank = 8").unwrap();
        let s = ModelSpaceSettings::from_config(&c, 0).unwrap();
        assert_eq!(s.ks, vec![Order::Finite(2), Order::Infinite]);
        assert_eq!(s.rank, Rank::Low(8));
    }
}
