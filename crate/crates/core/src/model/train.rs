use rand::Rng;

use crate::dataset::PolicyValueDataset;
use crate::error::{PveError, Result};
use crate::mdp::TabularMdp;
use crate::model::adam::{AdamConfig, OptimizerState};
use crate::model::loss::{LossSpec, Objective};
use crate::model::params::{init_params, ModelParams, Rank};
use crate::rng::{stream_rng, StreamRng};

/// Number of leading pairs used to report snapshot losses.
pub const EVAL_PAIRS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub loss: LossSpec,
    pub rank: Rank,
    pub iters: usize,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub snapshot_every: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// Model-space defaults: batch 50, learning rate 1e-3, snapshots every 1000.
    pub fn model_space(loss: LossSpec, iters: usize, seed: u64) -> Self {
        Self {
            loss,
            rank: Rank::Full,
            iters,
            adam: AdamConfig::with_lr(1e-3),
            batch_size: 50,
            snapshot_every: 1000,
            seed,
        }
    }
}

/// Minibatch Adam descent on a prepared objective, advanced step by step.
#[derive(Debug, Clone)]
pub struct Trainer<'a> {
    objective: &'a Objective,
    params: ModelParams,
    optimizer: OptimizerState,
    rng: StreamRng,
    batch: Vec<usize>,
    iteration: usize,
}

impl<'a> Trainer<'a> {
    pub fn new(objective: &'a Objective, params: ModelParams, adam: AdamConfig, batch_size: usize, seed: u64) -> Result<Self> {
        if batch_size == 0 {
            return Err(PveError::InvalidArgument("batch size must be >= 1".into()));
        }
        if objective.is_empty() {
            return Err(PveError::InvalidArgument("empty dataset".into()));
        }
        let optimizer = OptimizerState::new(adam, &params);
        Ok(Self {
            objective,
            params,
            optimizer,
            rng: stream_rng(seed, "minibatch", 0),
            batch: vec![0; batch_size],
            iteration: 0,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn into_params(self) -> ModelParams {
        self.params
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// One update on a uniformly sampled minibatch; returns the batch loss.
    pub fn step(&mut self) -> Result<f64> {
        let n = self.objective.len();
        for idx in self.batch.iter_mut() {
            *idx = self.rng.gen_range(0..n);
        }
        let (loss, grad) = self.objective.loss_and_gradient(&self.params, &self.batch)?;
        if !loss.is_finite() || !grad.is_finite() {
            return Err(PveError::Divergence {
                iteration: self.iteration,
                loss,
            });
        }
        self.optimizer.step(&mut self.params, &grad)?;
        self.iteration += 1;
        Ok(loss)
    }

    /// `n` updates; returns the last batch loss (NaN when `n = 0`).
    pub fn step_n(&mut self, n: usize) -> Result<f64> {
        let mut last = f64::NAN;
        for _ in 0..n {
            last = self.step()?;
        }
        Ok(last)
    }

    /// Loss on the leading evaluation pairs.
    pub fn eval_loss(&self) -> Result<f64> {
        let m = self.objective.len().min(EVAL_PAIRS);
        let idx: Vec<usize> = (0..m).collect();
        let loss = self.objective.loss_on(&self.params, &idx)?;
        if !loss.is_finite() {
            return Err(PveError::Divergence {
                iteration: self.iteration,
                loss,
            });
        }
        Ok(loss)
    }
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub iteration: usize,
    pub params: ModelParams,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub snapshots: Vec<Snapshot>,
    pub final_loss: f64,
}

/// Train one model from a seeded initialization and keep periodic snapshots.
///
/// The first snapshot is the initialization; the last one is the final model.
pub fn train(env: &TabularMdp, config: &TrainConfig, dataset: &PolicyValueDataset) -> Result<TrainOutcome> {
    if config.snapshot_every == 0 {
        return Err(PveError::InvalidArgument("snapshot_every must be >= 1".into()));
    }
    let objective = Objective::new(env, dataset, config.loss)?;
    let init = init_params(env.n_states(), env.n_actions(), config.rank, env.discount(), config.seed)?;
    let mut trainer = Trainer::new(&objective, init, config.adam, config.batch_size, config.seed)?;
    let mut snapshots = vec![Snapshot {
        iteration: 0,
        params: trainer.params().clone(),
        loss: trainer.eval_loss()?,
    }];
    while trainer.iteration() < config.iters {
        let todo = config.snapshot_every.min(config.iters - trainer.iteration());
        trainer.step_n(todo)?;
        snapshots.push(Snapshot {
            iteration: trainer.iteration(),
            params: trainer.params().clone(),
            loss: trainer.eval_loss()?,
        });
    }
    let final_loss = snapshots.last().unwrap().loss;
    Ok(TrainOutcome { snapshots, final_loss })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::DatasetSemantics;
    use crate::mdp::Policy;
    use nalgebra::DMatrix;

    fn two_state_env() -> TabularMdp {
        TabularMdp::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.5, 0.0]),
            vec![
                DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.2, 0.8]),
                DMatrix::from_row_slice(2, 2, &[0.3, 0.7, 0.6, 0.4]),
            ],
            0.9,
        )
        .unwrap()
    }

    fn labeled(env: &TabularMdp) -> PolicyValueDataset {
        let pairs = crate::env::all_deterministic_policies(2, 2)
            .into_iter()
            .chain([Policy::uniform(2, 2)])
            .map(|pi| {
                let v = env.evaluate(&pi).unwrap();
                (pi, v)
            })
            .collect();
        PolicyValueDataset::new(pairs, DatasetSemantics::ExactValues).unwrap()
    }

    #[test]
    fn zero_iterations_keep_only_initialization() {
        let env = two_state_env();
        let cfg = TrainConfig::model_space(LossSpec::pve(1), 0, 3);
        let out = train(&env, &cfg, &labeled(&env)).unwrap();
        assert_eq!(out.snapshots.len(), 1);
        assert_eq!(
            out.snapshots[0].params,
            init_params(2, 2, Rank::Full, 0.9, 3).unwrap()
        );
    }

    #[test]
    fn small_pve_run_converges() {
        let env = two_state_env();
        let mut cfg = TrainConfig::model_space(LossSpec::pve(1), 10_000, 5);
        cfg.batch_size = 5;
        cfg.adam = AdamConfig::with_lr(3e-3);
        let out = train(&env, &cfg, &labeled(&env)).unwrap();
        assert_eq!(out.snapshots.len(), 11);
        assert!(out.final_loss < 1e-6, "final loss {}", out.final_loss);
    }

    #[test]
    fn runs_are_deterministic() {
        let env = two_state_env();
        let mut cfg = TrainConfig::model_space(LossSpec::pve(1), 300, 8);
        cfg.snapshot_every = 100;
        let a = train(&env, &cfg, &labeled(&env)).unwrap();
        let b = train(&env, &cfg, &labeled(&env)).unwrap();
        for (x, y) in a.snapshots.iter().zip(&b.snapshots) {
            assert_eq!(x.params, y.params);
            assert_eq!(x.loss.to_bits(), y.loss.to_bits());
        }
    }

    #[test]
    fn non_finite_loss_aborts() {
        let env = two_state_env();
        let data = labeled(&env);
        let objective = Objective::new(&env, &data, LossSpec::pve(1)).unwrap();
        let mut params = init_params(2, 2, Rank::Full, 0.9, 1).unwrap();
        params.reward_mut()[(0, 0)] = f64::NAN;
        let mut trainer = Trainer::new(&objective, params, AdamConfig::default(), 4, 0).unwrap();
        assert!(matches!(trainer.step(), Err(PveError::Divergence { .. })));
    }
}
