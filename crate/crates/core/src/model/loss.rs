use nalgebra::DMatrix;

use crate::dataset::{DatasetSemantics, PolicyValueDataset};
use crate::error::{PveError, Result};
use crate::mdp::TabularMdp;
use crate::model::params::{softmax_rows, softmax_rows_backward, ModelParams, Rank};

/// Which loss a model is trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// `mean (T̃^k v − T^k v)²` over arbitrary functions.
    OrderKVe,
    /// `mean (T̃^k v_π − v_π)²` over value functions.
    Pve,
}

/// Loss kind plus operator order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LossSpec {
    pub kind: LossKind,
    pub k: usize,
}

impl LossSpec {
    pub fn order_k(k: usize) -> Self {
        Self {
            kind: LossKind::OrderKVe,
            k,
        }
    }

    pub fn pve(k: usize) -> Self {
        Self {
            kind: LossKind::Pve,
            k,
        }
    }
}

fn check_dims(model: &TabularMdp, env: &TabularMdp, data: &PolicyValueDataset) -> Result<()> {
    if data.is_empty() {
        return Err(PveError::InvalidArgument("empty batch".into()));
    }
    if model.n_states() != env.n_states() || model.n_actions() != env.n_actions() {
        return Err(PveError::Shape("model and environment differ in size".into()));
    }
    if data.n_states() != Some(env.n_states()) || data.n_actions() != Some(env.n_actions()) {
        return Err(PveError::Shape("dataset does not match environment".into()));
    }
    Ok(())
}

fn mean_sq(x: &nalgebra::DVector<f64>) -> f64 {
    x.norm_squared() / x.len() as f64
}

/// Order-k VE loss of a realized model, computed with the exact operators.
pub fn order_k_ve_loss_of(
    model: &TabularMdp,
    env: &TabularMdp,
    data: &PolicyValueDataset,
    k: usize,
) -> Result<f64> {
    check_dims(model, env, data)?;
    let mut total = 0.0;
    for (pi, v) in data.pairs() {
        let model_side = model.k_step_bellman(pi, v, k)?;
        let env_side = env.k_step_bellman(pi, v, k)?;
        total += mean_sq(&(model_side.values() - env_side.values()));
    }
    Ok(total / data.len() as f64)
}

/// PVE loss of a realized model, computed with the exact operators.
pub fn pve_loss_of(
    model: &TabularMdp,
    env: &TabularMdp,
    data: &PolicyValueDataset,
    k: usize,
) -> Result<f64> {
    check_dims(model, env, data)?;
    if data.semantics() != DatasetSemantics::ExactValues {
        return Err(PveError::InvalidArgument("PVE loss needs a value-labeled batch".into()));
    }
    let mut total = 0.0;
    for (pi, v) in data.pairs() {
        let model_side = model.k_step_bellman(pi, v, k)?;
        total += mean_sq(&(model_side.values() - v.values()));
    }
    Ok(total / data.len() as f64)
}

/// Order-k VE loss of parameterized model.
pub fn order_k_ve_loss(
    params: &ModelParams,
    env: &TabularMdp,
    data: &PolicyValueDataset,
    k: usize,
) -> Result<f64> {
    order_k_ve_loss_of(&params.realize()?, env, data, k)
}

/// PVE loss of a parameterized model.
pub fn pve_loss(params: &ModelParams, env: &TabularMdp, data: &PolicyValueDataset, k: usize) -> Result<f64> {
    pve_loss_of(&params.realize()?, env, data, k)
}

/// Loss and exact gradient with respect to every parameter, over the whole dataset.
pub fn loss_gradient(
    params: &ModelParams,
    env: &TabularMdp,
    data: &PolicyValueDataset,
    spec: LossSpec,
) -> Result<(f64, ModelParams)> {
    let objective = Objective::new(env, data, spec)?;
    objective.loss_and_gradient(params, &objective.all_indices())
}

/// A dataset prepared for fast batched loss and gradient evaluation.
///
/// Environment-side targets are computed once here. Each pair is a column:
/// `policies[a][(s, i)] = π_i(a|s)`, `inputs[(s, i)]` is the function the model
/// operator is applied to and `targets[(s, i)]` what the result is compared to.
#[derive(Debug, Clone)]
pub struct Objective {
    spec: LossSpec,
    n_states: usize,
    n_actions: usize,
    policies: Vec<DMatrix<f64>>,
    inputs: DMatrix<f64>,
    targets: DMatrix<f64>,
}

/// Realized model quantities shared by forward and backward passes.
struct Realized {
    reward: DMatrix<f64>,
    /// `P_a` stacked vertically: rows `a·|S| .. (a+1)·|S|`.
    p_stack: DMatrix<f64>,
    p_stack_t: DMatrix<f64>,
    discount: f64,
}

impl Objective {
    pub fn new(env: &TabularMdp, data: &PolicyValueDataset, spec: LossSpec) -> Result<Self> {
        if spec.k == 0 {
            return Err(PveError::InvalidArgument("loss order k must be >= 1".into()));
        }
        if data.is_empty() {
            return Err(PveError::InvalidArgument("empty dataset".into()));
        }
        let (ns, na) = (env.n_states(), env.n_actions());
        if data.n_states() != Some(ns) || data.n_actions() != Some(na) {
            return Err(PveError::Shape("dataset does not match environment".into()));
        }
        if spec.kind == LossKind::Pve && data.semantics() != DatasetSemantics::ExactValues {
            return Err(PveError::InvalidArgument("PVE loss needs a value-labeled batch".into()));
        }
        let n = data.len();
        let mut policies = vec![DMatrix::zeros(ns, n); na];
        let mut inputs = DMatrix::zeros(ns, n);
        let mut targets = DMatrix::zeros(ns, n);
        for (i, (pi, v)) in data.pairs().iter().enumerate() {
            for (a, mat) in policies.iter_mut().enumerate() {
                mat.column_mut(i).copy_from(&pi.probs().column(a));
            }
            inputs.column_mut(i).copy_from(v.values());
            match spec.kind {
                LossKind::Pve => targets.column_mut(i).copy_from(v.values()),
                LossKind::OrderKVe => {
                    let t = env.k_step_bellman(pi, v, spec.k)?;
                    targets.column_mut(i).copy_from(t.values());
                }
            }
        }
        Ok(Self {
            spec,
            n_states: ns,
            n_actions: na,
            policies,
            inputs,
            targets,
        })
    }

    pub fn spec(&self) -> LossSpec {
        self.spec
    }

    pub fn len(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn all_indices(&self) -> Vec<usize> {
        (0..self.len()).collect()
    }

    fn check_params(&self, params: &ModelParams) -> Result<()> {
        if params.n_states() != self.n_states || params.n_actions() != self.n_actions {
            return Err(PveError::Shape("parameters do not match the dataset".into()));
        }
        Ok(())
    }

    fn realize(&self, params: &ModelParams, factors: Option<&[(DMatrix<f64>, DMatrix<f64>)]>) -> Realized {
        let ns = self.n_states;
        let mut p_stack = DMatrix::zeros(ns * self.n_actions, ns);
        for a in 0..self.n_actions {
            let p = match (params.rank(), factors) {
                (Rank::Full, _) => softmax_rows(params.logits(a).unwrap()),
                (Rank::Low(_), Some(f)) => &f[a].0 * &f[a].1,
                (Rank::Low(_), None) => unreachable!("factors are computed for low-rank models"),
            };
            p_stack.rows_mut(a * ns, ns).copy_from(&p);
        }
        let p_stack_t = p_stack.transpose();
        Realized {
            reward: params.reward().clone(),
            p_stack,
            p_stack_t,
            discount: params.discount(),
        }
    }

    /// Loss over the whole dataset.
    pub fn loss(&self, params: &ModelParams) -> Result<f64> {
        self.loss_on(params, &self.all_indices())
    }

    /// Loss over the pairs at `indices`.
    pub fn loss_on(&self, params: &ModelParams, indices: &[usize]) -> Result<f64> {
        self.check_params(params)?;
        let factors = params.factors();
        let realized = self.realize(params, factors.as_deref());
        let pis: Vec<DMatrix<f64>> = self.policies.iter().map(|p| p.select_columns(indices)).collect();
        let x0 = self.inputs.select_columns(indices);
        let t = self.targets.select_columns(indices);
        let xs = self.forward(&realized, &pis, x0);
        let diff = xs.last().unwrap() - t;
        Ok(diff.norm_squared() / diff.len() as f64)
    }

    /// Loss and gradient over the pairs at `indices`.
    pub fn loss_and_gradient(&self, params: &ModelParams, indices: &[usize]) -> Result<(f64, ModelParams)> {
        self.check_params(params)?;
        if indices.is_empty() {
            return Err(PveError::InvalidArgument("empty batch".into()));
        }
        let ns = self.n_states;
        let na = self.n_actions;
        let b = indices.len();
        let factors = params.factors();
        let realized = self.realize(params, factors.as_deref());
        let pis: Vec<DMatrix<f64>> = self.policies.iter().map(|p| p.select_columns(indices)).collect();
        let x0 = self.inputs.select_columns(indices);
        let t = self.targets.select_columns(indices);
        let xs = self.forward(&realized, &pis, x0);
        let diff = xs.last().unwrap() - t;
        let scale = (ns * b) as f64;
        let loss = diff.norm_squared() / scale;

        let gamma = realized.discount;
        let mut lam = diff * (2.0 / scale);
        let mut d_reward = DMatrix::zeros(ns, na);
        let mut d_p_stack = DMatrix::zeros(ns * na, ns);
        let mut m = DMatrix::zeros(ns * na, b);
        for j in (1..=self.spec.k).rev() {
            for (a, pi) in pis.iter().enumerate() {
                for i in 0..b {
                    let lam_col = lam.column(i);
                    let pi_col = pi.column(i);
                    for s in 0..ns {
                        let w = lam_col[s] * pi_col[s];
                        d_reward[(s, a)] += w;
                        m[(a * ns + s, i)] = gamma * w;
                    }
                }
            }
            let x_prev_t = xs[j - 1].transpose();
            d_p_stack.gemm(1.0, &m, &x_prev_t, 1.0);
            if j > 1 {
                lam = &realized.p_stack_t * &m;
            }
        }

        let mut grad = params.zeros_like();
        let mut blocks = vec![d_reward];
        match params.rank() {
            Rank::Full => {
                for a in 0..na {
                    let p = realized.p_stack.rows(a * ns, ns).into_owned();
                    let dp = d_p_stack.rows(a * ns, ns).into_owned();
                    blocks.push(softmax_rows_backward(&p, &dp));
                }
            }
            Rank::Low(_) => {
                let factors = factors.unwrap();
                for (a, (d, k)) in factors.iter().enumerate() {
                    let dp = d_p_stack.rows(a * ns, ns);
                    let dd = dp * k.transpose();
                    let dk = d.tr_mul(&dp);
                    blocks.push(softmax_rows_backward(d, &dd));
                    blocks.push(softmax_rows_backward(k, &dk));
                }
            }
        }
        grad.set_blocks(blocks);
        Ok((loss, grad))
    }

    /// `X_0, …, X_k` with `X_j = T̃ X_{j−1}` applied column-wise.
    fn forward(&self, realized: &Realized, pis: &[DMatrix<f64>], x0: DMatrix<f64>) -> Vec<DMatrix<f64>> {
        let ns = self.n_states;
        let b = x0.ncols();
        let gamma = realized.discount;
        let mut r_pi = DMatrix::zeros(ns, b);
        for (a, pi) in pis.iter().enumerate() {
            let r = realized.reward.column(a);
            for i in 0..b {
                let mut col = r_pi.column_mut(i);
                let pi_col = pi.column(i);
                for s in 0..ns {
                    col[s] += pi_col[s] * r[s];
                }
            }
        }
        let mut xs = Vec::with_capacity(self.spec.k + 1);
        xs.push(x0);
        let mut y = DMatrix::zeros(ns * self.n_actions, b);
        for _ in 0..self.spec.k {
            y.gemm(1.0, &realized.p_stack, xs.last().unwrap(), 0.0);
            let mut next = r_pi.clone();
            for (a, pi) in pis.iter().enumerate() {
                for i in 0..b {
                    let y_col = y.column(i);
                    let pi_col = pi.column(i);
                    let mut out = next.column_mut(i);
                    for s in 0..ns {
                        out[s] += gamma * pi_col[s] * y_col[a * ns + s];
                    }
                }
            }
            xs.push(next);
        }
        xs
    }
}
