//! PVE models with rank-limited transitions, trained against policy families
//! with deterministic or stochastic noise.

use std::path::{Path, PathBuf};

use pve_core::model::{init_params, AdamConfig, LossSpec, Objective, Trainer};
use pve_core::policy_gen::{build_dataset, DatasetKind, DatasetSpec};
use pve_core::rng::stream_seed;
use pve_core::{Rank, TabularMdp};

use crate::common::{mean_and_se, normalize_rank, par_map, parse_rank, EnvSettings, ENV_KEYS};
use crate::config::{Config, Settings};
use crate::error::{LabError, LabResult};
use crate::model_file::write_model;
use crate::output::{num, prepare_run_dir, Csv};

pub const SECTION: &str = "capacity";
const KEYS: [&str; 10] = [
    "ranks",
    "families",
    "seeds",
    "iters",
    "lr",
    "batch_size",
    "dataset_size",
    "augment_per_policy",
    "noise_fraction",
    "save_models",
];

/// The policy set a model is trained to be PVE with respect to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Family {
    Stochastic,
    Deterministic,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Stochastic => "stochastic",
            Family::Deterministic => "deterministic",
        }
    }

    pub fn parse(s: &str) -> LabResult<Self> {
        match s {
            "stochastic" => Ok(Family::Stochastic),
            "deterministic" => Ok(Family::Deterministic),
            _ => Err(LabError::Config(format!("unknown family {s:?}"))),
        }
    }

    fn dataset_kind(&self) -> DatasetKind {
        match self {
            Family::Stochastic => DatasetKind::PiDerivedStochastic,
            Family::Deterministic => DatasetKind::PiDerivedDeterministic,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacitySettings {
    pub env: EnvSettings,
    pub ranks: Vec<Rank>,
    pub families: Vec<Family>,
    pub seeds: usize,
    pub iters: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub dataset_size: usize,
    pub augment_per_policy: usize,
    pub noise_fraction: f64,
    pub save_models: bool,
    pub seed: u64,
}

impl Default for CapacitySettings {
    fn default() -> Self {
        Self {
            env: EnvSettings::default(),
            ranks: vec![Rank::Low(10), Rank::Low(40), Rank::Low(104)],
            families: vec![Family::Stochastic, Family::Deterministic],
            seeds: 3,
            iters: 100_000,
            lr: 1e-3,
            batch_size: 50,
            dataset_size: 100_000,
            augment_per_policy: 100,
            noise_fraction: 0.1,
            save_models: true,
            seed: 0,
        }
    }
}

fn rank_label(rank: Rank, n_states: usize) -> String {
    match rank {
        Rank::Full => n_states.to_string(),
        Rank::Low(r) => r.to_string(),
    }
}

impl CapacitySettings {
    pub fn from_config(config: &Config, seed: u64) -> LabResult<Self> {
        config.check_keys(SECTION, &KEYS)?;
        let d = Self::default();
        let ranks = match config.get(SECTION, "ranks") {
            None => d.ranks.clone(),
            Some(raw) => raw.split(',').map(|r| parse_rank(r.trim())).collect::<LabResult<_>>()?,
        };
        let families = match config.get(SECTION, "families") {
            None => d.families.clone(),
            Some(raw) => raw.split(',').map(|f| Family::parse(f.trim())).collect::<LabResult<_>>()?,
        };
        let s = Self {
            env: EnvSettings::from_config(config)?,
            ranks,
            families,
            seeds: config.value(SECTION, "seeds", d.seeds)?,
            iters: config.value(SECTION, "iters", d.iters)?,
            lr: config.value(SECTION, "lr", d.lr)?,
            batch_size: config.value(SECTION, "batch_size", d.batch_size)?,
            dataset_size: config.value(SECTION, "dataset_size", d.dataset_size)?,
            augment_per_policy: config.value(SECTION, "augment_per_policy", d.augment_per_policy)?,
            noise_fraction: config.value(SECTION, "noise_fraction", d.noise_fraction)?,
            save_models: config.value(SECTION, "save_models", d.save_models)?,
            seed,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> LabResult<()> {
        let bad = |what: &str| Err(LabError::Config(format!("[{SECTION}] {what}")));
        if self.ranks.is_empty() || self.families.is_empty() {
            return bad("ranks and families must be nonempty");
        }
        if self.seeds == 0 || self.batch_size == 0 || self.dataset_size == 0 || self.augment_per_policy == 0 {
            return bad("seeds, batch_size, dataset_size and augment_per_policy must be >= 1");
        }
        if !(self.noise_fraction > 0.0 && self.noise_fraction <= 1.0) {
            return bad("noise_fraction must lie in (0, 1]");
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
        s.push("ranks", self.ranks.iter().map(|r| r.label()).collect::<Vec<_>>().join(","));
        s.push("families", self.families.iter().map(|f| f.name()).collect::<Vec<_>>().join(","));
        s.push("seeds", self.seeds);
        s.push("iters", self.iters);
        s.push("lr", self.lr);
        s.push("batch_size", self.batch_size);
        s.push("dataset_size", self.dataset_size);
        s.push("augment_per_policy", self.augment_per_policy);
        s.push("noise_fraction", self.noise_fraction);
        s.push("save_models", self.save_models);
        s
    }
}

/// One trained model of the sweep.
#[derive(Debug, Clone)]
pub struct CapacityCell {
    pub rank: String,
    pub family: Family,
    pub seed: usize,
    pub opt_value_mean: f64,
    pub model: TabularMdp,
}

#[derive(Debug, Clone)]
pub struct CapacityOutput {
    pub cells: Vec<CapacityCell>,
    pub env_opt_value: f64,
    pub table: Csv,
    pub summary: Csv,
}

impl CapacityOutput {
    /// Mean over seeds of `opt_value_mean` for one rank label and family.
    pub fn seed_mean(&self, rank: &str, family: Family) -> Option<f64> {
        let xs: Vec<f64> = self
            .cells
            .iter()
            .filter(|c| c.rank == rank && c.family == family)
            .map(|c| c.opt_value_mean)
            .collect();
        (!xs.is_empty()).then(|| mean_and_se(&xs).0)
    }
}

struct Job {
    rank: Rank,
    label: String,
    init_seed: u64,
    batch_seed: u64,
}

pub fn run_capacity(s: &CapacitySettings, workers: usize) -> LabResult<CapacityOutput> {
    s.validate()?;
    let rooms = s.env.build()?;
    let env = rooms.mdp();
    let (ns, na) = (env.n_states(), env.n_actions());
    let (v_star, _) = env.value_iteration(1e-10)?;
    let env_opt_value = v_star.values().mean();

    let mut cells = Vec::new();
    for &family in &s.families {
        for seed in 0..s.seeds {
            let mut spec = DatasetSpec::new(
                s.dataset_size,
                family.dataset_kind(),
                stream_seed(s.seed, &format!("capacity-dataset/{}", family.name()), seed as u64),
            );
            spec.augment_per_policy = s.augment_per_policy;
            spec.noise_fraction = s.noise_fraction;
            let objective = Objective::new(env, &build_dataset(env, &spec)?, LossSpec::pve(1))?;
            let mut jobs: Vec<Job> = s
                .ranks
                .iter()
                .map(|&rank| {
                    let label = rank_label(rank, ns);
                    let component = format!("capacity/{}/rank{label}", family.name());
                    Job {
                        rank: normalize_rank(rank, ns),
                        init_seed: stream_seed(s.seed, &format!("{component}/init"), seed as u64),
                        batch_seed: stream_seed(s.seed, &format!("{component}/batches"), seed as u64),
                        label,
                    }
                })
                .collect();
            let trained = par_map(&mut jobs, workers, |job| -> LabResult<(String, f64, TabularMdp)> {
                let init = init_params(ns, na, job.rank, env.discount(), job.init_seed)?;
                let mut trainer = Trainer::new(&objective, init, AdamConfig::with_lr(s.lr), s.batch_size, job.batch_seed)?;
                trainer.step_n(s.iters)?;
                let model = trainer.params().realize()?;
                let (_, pi) = model.policy_iteration()?;
                let value = env.evaluate(&pi)?.values().mean();
                Ok((job.label.clone(), value, model))
            });
            for item in trained {
                let (rank, opt_value_mean, model) = item?;
                cells.push(CapacityCell {
                    rank,
                    family,
                    seed,
                    opt_value_mean,
                    model,
                });
            }
        }
    }

    let mut table = Csv::new(&["rank", "family", "seed", "opt_value_mean", "env_opt_value"]);
    let mut summary = Csv::new(&["rank", "family", "mean", "std_error", "env_opt_value"]);
    for rank in &s.ranks {
        let label = rank_label(*rank, ns);
        for &family in &s.families {
            let group: Vec<&CapacityCell> = cells.iter().filter(|c| c.rank == label && c.family == family).collect();
            for c in &group {
                table.row(&[
                    label.clone(),
                    family.name().to_string(),
                    c.seed.to_string(),
                    num(c.opt_value_mean),
                    num(env_opt_value),
                ]);
            }
            let values: Vec<f64> = group.iter().map(|c| c.opt_value_mean).collect();
            let (mean, se) = mean_and_se(&values);
            summary.row(&[label.clone(), family.name().to_string(), num(mean), num(se), num(env_opt_value)]);
        }
    }
    Ok(CapacityOutput {
        cells,
        env_opt_value,
        table,
        summary,
    })
}

pub fn cmd_capacity(config: &Config, seed: u64, out: Option<&Path>, force: bool, workers: usize) -> LabResult<PathBuf> {
    config.check_keys("env", &ENV_KEYS)?;
    let s = CapacitySettings::from_config(config, seed)?;
    let notes = vec!["a rank equal to the number of states is trained as an unconstrained model".to_string()];
    let dir = prepare_run_dir(out, "capacity-sweep", &s.record(), &notes, force)?;
    let result = run_capacity(&s, workers)?;
    result.table.write(&dir.join("capacity.csv"))?;
    result.summary.write(&dir.join("capacity_summary.csv"))?;
    if s.save_models {
        let models = dir.join("models");
        std::fs::create_dir_all(&models)?;
        for c in &result.cells {
            let name = format!("rank{}-{}-seed{}.model", c.rank, c.family.name(), c.seed);
            write_model(&models.join(name), &c.model, &c.rank)?;
        }
    }
    Ok(dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_sweep() {
        let s = CapacitySettings {
            ranks: vec![Rank::Low(2), Rank::Low(104)],
            seeds: 2,
            iters: 20,
            dataset_size: 30,
            augment_per_policy: 10,
            save_models: false,
            ..Default::default()
        };
        let out = run_capacity(&s, 2).unwrap();
        assert_eq!(out.cells.len(), 8);
        assert_eq!(out.table.as_str().lines().count(), 9);
        assert_eq!(out.summary.as_str().lines().count(), 5);
        assert!(out.cells.iter().all(|c| c.opt_value_mean <= out.env_opt_value + 1e-9));
        assert!(out.seed_mean("104", Family::Deterministic).is_some());
        assert!(out.table.as_str().starts_with("rank,family,seed,opt_value_mean,env_opt_value\n2,stochastic,0,"));
    }

    #[test]
    fn families_parse() {
        let c = Config::parse("[capacity]\nfamilies = deterministic\nranks = 5, full").unwrap();
        let s = CapacitySettings::from_config(&c, 1).unwrap();
        assert_eq!(s.families, vec![Family::Deterministic]);
        assert_eq!(s.ranks, vec![Rank::Low(5), Rank::Full]);
        assert!(CapacitySettings::from_config(&Config::parse("[capacity]\nfamilies = both").unwrap(), 0).is_err());
    }
}
