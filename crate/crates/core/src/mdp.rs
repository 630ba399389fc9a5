//! Finite MDPs and the exact dynamic-programming operators over them.
//!
//! Everything here is dense and exact: rewards are an `n_states × n_actions`
//! matrix, transitions one `n_states × n_states` row-stochastic matrix per
//! action. All operations are pure and take `&self`.

use std::ops::Deref;

use nalgebra::{DMatrix, DVector};

use crate::error::{shape_err, PveError, Result};

/// Tolerance used when validating probability rows.
pub const PROB_TOL: f64 = 1e-9;

/// A real vector indexed by state: value functions and arbitrary `v ∈ 𝕍`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateFunction(DVector<f64>);

impl StateFunction {
    pub fn new(values: DVector<f64>) -> Result<Self> {
        if values.iter().any(|x| !x.is_finite()) {
            return Err(PveError::InvalidArgument(
                "state function has non-finite entries".into(),
            ));
        }
        Ok(Self(values))
    }

    pub fn from_vec(values: Vec<f64>) -> Result<Self> {
        Self::new(DVector::from_vec(values))
    }

    pub fn zeros(n: usize) -> Self {
        Self(DVector::zeros(n))
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self(DVector::from_element(n, c))
    }

    pub(crate) fn from_raw(values: DVector<f64>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }
}

impl Deref for StateFunction {
    type Target = DVector<f64>;

    fn deref(&self) -> &DVector<f64> {
        &self.0
    }
}

/// A probability distribution over states.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDistribution(DVector<f64>);

impl StateDistribution {
    pub fn new(weights: DVector<f64>) -> Result<Self> {
        if weights.iter().any(|&w| !(w >= -PROB_TOL) || !w.is_finite()) {
            return Err(PveError::InvalidArgument(
                "distribution has negative or non-finite weights".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > PROB_TOL {
            return Err(PveError::InvalidArgument(format!(
                "distribution sums to {total}, expected 1"
            )));
        }
        Ok(Self(weights))
    }

    pub fn uniform(n: usize) -> Self {
        Self(DVector::from_element(n, 1.0 / n as f64))
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn min_weight(&self) -> f64 {
        self.0.min()
    }
}

impl Deref for StateDistribution {
    type Target = DVector<f64>;

    fn deref(&self) -> &DVector<f64> {
        &self.0
    }
}

/// A stationary Markov policy: row `s` is the action distribution `π(·|s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    probs: DMatrix<f64>,
}

impl Policy {
    pub fn new(probs: DMatrix<f64>) -> Result<Self> {
        if probs.nrows() == 0 || probs.ncols() == 0 {
            return Err(PveError::InvalidArgument("empty policy".into()));
        }
        for s in 0..probs.nrows() {
            let row = probs.row(s);
            if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                return Err(PveError::InvalidArgument(format!(
                    "policy row {s} has negative or non-finite entries"
                )));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > PROB_TOL {
                return Err(PveError::InvalidArgument(format!(
                    "policy row {s} sums to {total}"
                )));
            }
        }
        Ok(Self { probs })
    }

    /// One-hot policy choosing `actions[s]` in state `s`.
    pub fn deterministic(actions: &[usize], n_actions: usize) -> Result<Self> {
        if let Some(&a) = actions.iter().find(|&&a| a >= n_actions) {
            return Err(PveError::InvalidArgument(format!(
                "action {a} out of range for {n_actions} actions"
            )));
        }
        let mut probs = DMatrix::zeros(actions.len(), n_actions);
        for (s, &a) in actions.iter().enumerate() {
            probs[(s, a)] = 1.0;
        }
        Self::new(probs)
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            probs: DMatrix::from_element(n_states, n_actions, 1.0 / n_actions as f64),
        }
    }

    pub(crate) fn from_raw(probs: DMatrix<f64>) -> Self {
        Self { probs }
    }

    pub fn n_states(&self) -> usize {
        self.probs.nrows()
    }

    pub fn n_actions(&self) -> usize {
        self.probs.ncols()
    }

    pub fn probs(&self) -> &DMatrix<f64> {
        &self.probs
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[(s, a)]
    }

    /// True iff every row has exactly one entry equal to 1.
    pub fn is_deterministic(&self) -> bool {
        (0..self.n_states()).all(|s| {
            let row = self.probs.row(s);
            row.iter().filter(|&&p| p == 1.0).count() == 1
                && row.iter().filter(|&&p| p != 0.0).count() == 1
        })
    }

    /// The chosen action per state, if the policy is deterministic.
    pub fn actions(&self) -> Option<Vec<usize>> {
        if !self.is_deterministic() {
            return None;
        }
        Some(
            (0..self.n_states())
                .map(|s| self.probs.row(s).iter().position(|&p| p == 1.0).unwrap())
                .collect(),
        )
    }
}

/// How `policy_evaluation` computes `v_π`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMethod {
    /// Dense LU solve of `(I − γ P_π) v = r_π`.
    Exact,
    /// Repeated application of `T_π` until the sup-norm change drops below tol.
    Iterative,
}

pub const DEFAULT_EVAL_TOL: f64 = 1e-10;

const MAX_SWEEPS: usize = 5_000_000;
const MAX_POWER_ITERS: usize = 200_000;

/// A finite MDP `⟨S, A, r, p, γ⟩`.
///
/// `reward[(s, a)]` is the expected reward of taking `a` in `s`;
/// `transition[a][(s, s')]` is `p(s'|s, a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    reward: DMatrix<f64>,
    transition: Vec<DMatrix<f64>>,
    discount: f64,
}

impl TabularMdp {
    pub fn new(reward: DMatrix<f64>, transition: Vec<DMatrix<f64>>, discount: f64) -> Result<Self> {
        let (n_states, n_actions) = reward.shape();
        if n_states == 0 || n_actions == 0 {
            return Err(PveError::InvalidMdp("empty state or action space".into()));
        }
        if transition.len() != n_actions {
            return Err(PveError::InvalidMdp(format!(
                "{} transition matrices for {n_actions} actions",
                transition.len()
            )));
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(PveError::InvalidMdp(format!(
                "discount {discount} outside [0, 1)"
            )));
        }
        if reward.iter().any(|r| !r.is_finite()) {
            return Err(PveError::InvalidMdp("non-finite reward".into()));
        }
        for (a, p) in transition.iter().enumerate() {
            if p.shape() != (n_states, n_states) {
                return Err(PveError::InvalidMdp(format!(
                    "transition matrix for action {a} has shape {:?}",
                    p.shape()
                )));
            }
            for s in 0..n_states {
                let row = p.row(s);
                if row.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
                    return Err(PveError::InvalidMdp(format!(
                        "negative or non-finite probability at action {a}, state {s}"
                    )));
                }
                let total: f64 = row.iter().sum();
                if (total - 1.0).abs() > PROB_TOL {
                    return Err(PveError::InvalidMdp(format!(
                        "row (a={a}, s={s}) sums to {total}"
                    )));
                }
            }
        }
        Ok(Self {
            reward,
            transition,
            discount,
        })
    }

    pub fn n_states(&self) -> usize {
        self.reward.nrows()
    }

    pub fn n_actions(&self) -> usize {
        self.reward.ncols()
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn reward(&self) -> &DMatrix<f64> {
        &self.reward
    }

    pub fn transition(&self, action: usize) -> &DMatrix<f64> {
        &self.transition[action]
    }

    pub fn transitions(&self) -> &[DMatrix<f64>] {
        &self.transition
    }

    pub fn with_discount(&self, discount: f64) -> Result<Self> {
        Self::new(self.reward.clone(), self.transition.clone(), discount)
    }

    fn check_policy(&self, policy: &Policy) -> Result<()> {
        if policy.n_states() != self.n_states() || policy.n_actions() != self.n_actions() {
            return Err(shape_err(format!(
                "policy is {}x{}, MDP is {}x{}",
                policy.n_states(),
                policy.n_actions(),
                self.n_states(),
                self.n_actions()
            )));
        }
        Ok(())
    }

    fn check_fn(&self, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.n_states() {
            return Err(shape_err(format!(
                "function has {} entries, MDP has {} states",
                v.len(),
                self.n_states()
            )));
        }
        Ok(())
    }

    /// `r_π(s) = Σ_a π(a|s) r(s, a)`.
    pub fn policy_reward(&self, policy: &Policy) -> Result<DVector<f64>> {
        self.check_policy(policy)?;
        Ok(self.reward.component_mul(policy.probs()).column_sum())
    }

    /// `P_π(s, s') = Σ_a π(a|s) p(s'|s, a)`.
    pub fn policy_transition(&self, policy: &Policy) -> Result<DMatrix<f64>> {
        self.check_policy(policy)?;
        let n = self.n_states();
        let mut out = DMatrix::zeros(n, n);
        for (a, p) in self.transition.iter().enumerate() {
            let weights = policy.probs().column(a);
            for (mut col_out, col_p) in out.column_iter_mut().zip(p.column_iter()) {
                col_out += col_p.component_mul(&weights);
            }
        }
        Ok(out)
    }

    /// `T_π[v](s) = Σ_a π(a|s) [r(s,a) + γ Σ_{s'} p(s'|s,a) v(s')]`.
    pub fn bellman_operator(&self, policy: &Policy, v: &StateFunction) -> Result<StateFunction> {
        self.check_policy(policy)?;
        self.check_fn(v)?;
        Ok(StateFunction::from_raw(self.bellman_raw(policy, v)))
    }

    fn bellman_raw(&self, policy: &Policy, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.n_states());
        for (a, p) in self.transition.iter().enumerate() {
            let backup = self.reward.column(a) + p * v * self.discount;
            out += backup.component_mul(&policy.probs().column(a));
        }
        out
    }

    /// `T_π^k v`, computed by `k` successive applications of the operator.
    pub fn k_step_bellman(&self, policy: &Policy, v: &StateFunction, k: usize) -> Result<StateFunction> {
        if k == 0 {
            return Err(PveError::InvalidArgument(
                "k-step Bellman operator needs k >= 1".into(),
            ));
        }
        self.check_policy(policy)?;
        self.check_fn(v)?;
        let mut x = v.values().clone();
        for _ in 0..k {
            x = self.bellman_raw(policy, &x);
        }
        Ok(StateFunction::from_raw(x))
    }

    /// `𝒫_π^k[x](s) = E[x(S_{t+k}) | S_t = s, π]`; `k = 0` is the identity.
    pub fn transition_operator_k(&self, policy: &Policy, x: &StateFunction, k: usize) -> Result<StateFunction> {
        self.check_fn(x)?;
        let p = self.policy_transition(policy)?;
        let mut y = x.values().clone();
        for _ in 0..k {
            y = &p * y;
        }
        Ok(StateFunction::from_raw(y))
    }

    /// `v_π` by exact linear solve or by fixed-point iteration.
    pub fn policy_evaluation(&self, policy: &Policy, method: EvalMethod, tol: f64) -> Result<StateFunction> {
        self.check_policy(policy)?;
        if !(tol > 0.0) {
            return Err(PveError::InvalidArgument(format!("tolerance {tol} must be > 0")));
        }
        let v = match method {
            EvalMethod::Exact => {
                let p = self.policy_transition(policy)?;
                let r = self.policy_reward(policy)?;
                let n = self.n_states();
                let system = DMatrix::identity(n, n) - p * self.discount;
                let lu = system.clone().lu();
                let mut v = lu
                    .solve(&r)
                    .ok_or_else(|| PveError::Numerical("singular evaluation system".into()))?;
                // one step of iterative refinement
                let resid = &r - &system * &v;
                if let Some(dv) = lu.solve(&resid) {
                    v += dv;
                }
                v
            }
            EvalMethod::Iterative => {
                let mut v = DVector::zeros(self.n_states());
                let mut converged = false;
                let mut change = f64::INFINITY;
                for _ in 0..MAX_SWEEPS {
                    let next = self.bellman_raw(policy, &v);
                    change = (&next - &v).amax();
                    v = next;
                    if change < tol {
                        converged = true;
                        break;
                    }
                }
                if !converged {
                    return Err(PveError::NoConvergence {
                        iterations: MAX_SWEEPS,
                        last_change: change,
                    });
                }
                v
            }
        };
        let residual = (self.bellman_raw(policy, &v) - &v).amax();
        if !(residual <= 10.0 * tol) {
            return Err(PveError::Numerical(format!(
                "policy evaluation residual {residual:e} exceeds {:e}",
                10.0 * tol
            )));
        }
        Ok(StateFunction::from_raw(v))
    }

    /// Exact evaluation at the default tolerance.
    pub fn evaluate(&self, policy: &Policy) -> Result<StateFunction> {
        self.policy_evaluation(policy, EvalMethod::Exact, DEFAULT_EVAL_TOL)
    }

    /// Stationary distribution of `(1−ε) P_π + ε·Uniform` by power iteration.
    pub fn stationary_distribution(&self, policy: &Policy, teleport_eps: f64) -> Result<StateDistribution> {
        if !(0.0..0.5).contains(&teleport_eps) {
            return Err(PveError::InvalidArgument(format!(
                "teleport_eps {teleport_eps} outside [0, 0.5)"
            )));
        }
        let n = self.n_states();
        let p_t = self.policy_transition(policy)?.transpose() * (1.0 - teleport_eps);
        let teleport = teleport_eps / n as f64;
        let mut d = DVector::from_element(n, 1.0 / n as f64);
        let mut change = f64::INFINITY;
        for _ in 0..MAX_POWER_ITERS {
            let mut next = &p_t * &d;
            next.add_scalar_mut(teleport);
            let total = next.sum();
            next /= total;
            change = (&next - &d).abs().sum();
            d = next;
            if change < 1e-12 {
                return StateDistribution::new(d);
            }
        }
        Err(PveError::NoConvergence {
            iterations: MAX_POWER_ITERS,
            last_change: change,
        })
    }

    /// `Q(s, a) = r(s,a) + γ Σ_{s'} p(s'|s,a) v(s')`.
    pub fn q_values(&self, v: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_fn(v)?;
        let mut q = self.reward.clone();
        for (a, p) in self.transition.iter().enumerate() {
            let mut col = q.column_mut(a);
            col += p * v * self.discount;
        }
        Ok(q)
    }

    /// Deterministic greedy policy; ties go to the lowest action index.
    pub fn greedy_policy(&self, v: &StateFunction) -> Result<Policy> {
        let q = self.q_values(v)?;
        let actions = argmax_rows(&q);
        Policy::deterministic(&actions, self.n_actions())
    }

    /// Value iteration until the Bellman-optimality residual is below `tol`.
    pub fn value_iteration(&self, tol: f64) -> Result<(StateFunction, Policy)> {
        if !(tol > 0.0) {
            return Err(PveError::InvalidArgument(format!("tolerance {tol} must be > 0")));
        }
        let mut v = DVector::zeros(self.n_states());
        let mut change = f64::INFINITY;
        for _ in 0..MAX_SWEEPS {
            let q = self.q_values(&v)?;
            let next = DVector::from_iterator(self.n_states(), q.row_iter().map(|r| r.max()));
            change = (&next - &v).amax();
            v = next;
            if change < tol {
                let v = StateFunction::from_raw(v);
                let policy = self.greedy_policy(&v)?;
                return Ok((v, policy));
            }
        }
        Err(PveError::NoConvergence {
            iterations: MAX_SWEEPS,
            last_change: change,
        })
    }

    /// Howard policy iteration with exact evaluation. Returns the optimal
    /// values and a deterministic optimal policy; much faster than value
    /// iteration when `γ` is close to 1.
    pub fn policy_iteration(&self) -> Result<(StateFunction, Policy)> {
        let n_actions = self.n_actions();
        let mut actions = vec![0usize; self.n_states()];
        // Each improvement strictly increases the value; the bound is generous.
        for _ in 0..10_000 {
            let policy = Policy::deterministic(&actions, n_actions)?;
            let v = self.evaluate(&policy)?;
            let q = self.q_values(&v)?;
            let mut changed = false;
            for (s, current) in actions.iter_mut().enumerate() {
                let row = q.row(s);
                let best = argmax(row.iter().copied());
                let margin = 1e-12 * row[*current].abs().max(1.0);
                if row[best] > row[*current] + margin {
                    *current = best;
                    changed = true;
                }
            }
            if !changed {
                return Ok((v, policy));
            }
        }
        Err(PveError::Internal("policy iteration failed to terminate".into()))
    }
}

pub(crate) fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, x) in values.enumerate() {
        if x > best_val {
            best = i;
            best_val = x;
        }
    }
    best
}

pub(crate) fn argmax_rows(q: &DMatrix<f64>) -> Vec<usize> {
    q.row_iter().map(|r| argmax(r.iter().copied())).collect()
}

/// `sqrt(Σ_s d(s) x(s)²)`.
pub fn weighted_norm(x: &DVector<f64>, d: &StateDistribution) -> Result<f64> {
    if x.len() != d.len() {
        return Err(shape_err(format!(
            "function has {} entries, distribution {}",
            x.len(),
            d.len()
        )));
    }
    Ok(x.iter().zip(d.iter()).map(|(xi, di)| di * xi * xi).sum::<f64>().sqrt())
}

pub fn sup_norm(x: &DVector<f64>) -> f64 {
    x.amax()
}
