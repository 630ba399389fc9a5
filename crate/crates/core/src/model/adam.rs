use crate::error::{PveError, Result};
use crate::model::params::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.99,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

/// Bias-corrected Adam moments shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub step: u64,
    m: ModelParams,
    v: ModelParams,
}

impl OptimizerState {
    pub fn new(config: AdamConfig, params: &ModelParams) -> Self {
        Self {
            config,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn first_moment(&self) -> &ModelParams {
        &self.m
    }

    pub fn second_moment(&self) -> &ModelParams {
        &self.v
    }

    /// Apply one update to `params` in place.
    pub fn step(&mut self, params: &mut ModelParams, grad: &ModelParams) -> Result<()> {
        if grad.blocks().len() != params.blocks().len()
            || grad
                .blocks()
                .iter()
                .zip(params.blocks())
                .any(|(g, p)| g.shape() != p.shape())
        {
            return Err(PveError::Shape("gradient does not match parameters".into()));
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        let blocks = params
            .blocks_mut()
            .iter_mut()
            .zip(grad.blocks())
            .zip(self.m.blocks_mut().iter_mut().zip(self.v.blocks_mut().iter_mut()));
        for ((p, g), (m, v)) in blocks {
            let p = p.as_mut_slice();
            let m = m.as_mut_slice();
            let v = v.as_mut_slice();
            for (i, &gi) in g.as_slice().iter().enumerate() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Functional form of one Adam update.
pub fn adam_step(
    state: &OptimizerState,
    params: &ModelParams,
    grad: &ModelParams,
) -> Result<(ModelParams, OptimizerState)> {
    let mut state = state.clone();
    let mut params = params.clone();
    state.step(&mut params, grad)?;
    Ok((params, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::{init_params, Rank};

    #[test]
    fn zero_gradient_leaves_params() {
        let params = init_params(3, 2, Rank::Full, 0.9, 1).unwrap();
        let state = OptimizerState::new(AdamConfig::default(), &params);
        let (next, state) = adam_step(&state, &params, &params.zeros_like()).unwrap();
        assert_eq!(next, params);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn first_step_matches_hand_computation() {
        let params = ModelParams::zeros(1, 1, Rank::Full, 0.5).unwrap();
        let mut grad = params.zeros_like();
        grad.reward_mut()[(0, 0)] = 0.3;
        grad.blocks_mut()[1][(0, 0)] = -2.0;
        let cfg = AdamConfig::with_lr(0.1);
        let state = OptimizerState::new(cfg, &params);
        let (next, _) = adam_step(&state, &params, &grad).unwrap();
        // after bias correction m̂ = g and v̂ = g², so the step is −lr·g/(|g| + ε)
        let expect_r = -0.1 * 0.3 / (0.3 + 1e-8);
        let expect_l = -0.1 * -2.0 / (2.0 + 1e-8);
        assert!((next.reward()[(0, 0)] - expect_r).abs() < 1e-15);
        assert!((next.blocks()[1][(0, 0)] - expect_l).abs() < 1e-15);
    }

    #[test]
    fn second_step_matches_hand_computation() {
        let params = ModelParams::zeros(1, 1, Rank::Full, 0.5).unwrap();
        let mut g1 = params.zeros_like();
        g1.reward_mut()[(0, 0)] = 1.0;
        let mut g2 = params.zeros_like();
        g2.reward_mut()[(0, 0)] = -0.5;
        let cfg = AdamConfig::with_lr(0.01);
        let mut state = OptimizerState::new(cfg, &params);
        let mut p = params.clone();
        state.step(&mut p, &g1).unwrap();
        state.step(&mut p, &g2).unwrap();
        let (b1, b2) = (0.99f64, 0.999f64);
        let m1 = (1.0 - b1) * 1.0;
        let v1 = (1.0 - b2) * 1.0;
        let step1 = 0.01 * (m1 / (1.0 - b1)) / ((v1 / (1.0 - b2)).sqrt() + 1e-8);
        let m2 = b1 * m1 + (1.0 - b1) * -0.5;
        let v2 = b2 * v1 + (1.0 - b2) * 0.25;
        let step2 = 0.01 * (m2 / (1.0 - b1 * b1)) / ((v2 / (1.0 - b2 * b2)).sqrt() + 1e-8);
        assert!((p.reward()[(0, 0)] - (-step1 - step2)).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let a = init_params(3, 2, Rank::Full, 0.9, 1).unwrap();
        let b = init_params(3, 2, Rank::Low(1), 0.9, 1).unwrap();
        let mut state = OptimizerState::new(AdamConfig::default(), &a);
        let mut p = a.clone();
        assert!(state.step(&mut p, &b).is_err());
    }
}
