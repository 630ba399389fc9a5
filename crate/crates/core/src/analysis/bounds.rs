use nalgebra::DVector;
use rand::Rng;

use crate::analysis::trajectories::{sample_index, step};
use crate::error::{PveError, Result};
use crate::mdp::{sup_norm, weighted_norm, Policy, StateDistribution, StateFunction, TabularMdp};
use crate::model::{init_params, Rank};
use crate::policy_gen::{sample_random_function, sample_random_policy, PolicyMode};
use crate::rng::{stream_rng, StreamRng};

/// Absolute slack allowed when comparing the two sides of a bound.
pub const BOUND_SLACK: f64 = 1e-9;

pub const DEFAULT_TELEPORT_EPS: f64 = 1e-3;

/// Both sides of an inequality `lhs ≤ rhs` and the terms that make them up.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub lhs: f64,
    pub rhs: f64,
    pub components: Vec<(&'static str, f64)>,
    pub g: Option<f64>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub teleport_eps: Option<f64>,
    pub note: Option<String>,
    pub satisfied: bool,
}

impl BoundReport {
    fn new(lhs: f64, rhs: f64) -> Self {
        Self {
            lhs,
            rhs,
            components: Vec::new(),
            g: None,
            a: None,
            b: None,
            teleport_eps: None,
            note: None,
            satisfied: lhs <= rhs + BOUND_SLACK,
        }
    }

    pub fn component(&self, name: &str) -> Option<f64> {
        self.components.iter().find(|(n, _)| *n == name).map(|(_, v)| *v)
    }
}

fn check_pair(env: &TabularMdp, model: &TabularMdp, k: usize, n: usize) -> Result<()> {
    if k == 0 || n == 0 {
        return Err(PveError::InvalidArgument("k and n must be >= 1".into()));
    }
    if env.n_states() != model.n_states() || env.n_actions() != model.n_actions() {
        return Err(PveError::Shape("model and environment differ in size".into()));
    }
    if env.discount() != model.discount() {
        return Err(PveError::InvalidArgument("model and environment differ in discount".into()));
    }
    Ok(())
}

/// `‖v_π − T̃^k v_π‖∞ ≤ (γ^k + γ^n)‖v_π − v‖∞ + ‖T^n v − T̃^k v‖∞`.
pub fn verify_pve_bound(
    env: &TabularMdp,
    model: &TabularMdp,
    policy: &Policy,
    v: &StateFunction,
    k: usize,
    n: usize,
) -> Result<BoundReport> {
    check_pair(env, model, k, n)?;
    let gamma = env.discount();
    let v_pi = env.evaluate(policy)?;
    let lhs = sup_norm(&(v_pi.values() - model.k_step_bellman(policy, &v_pi, k)?.values()));
    let eps_v = sup_norm(&(v_pi.values() - v.values()));
    let eps_ve = sup_norm(&(env.k_step_bellman(policy, v, n)?.values() - model.k_step_bellman(policy, v, k)?.values()));
    let rhs = (gamma.powi(k as i32) + gamma.powi(n as i32)) * eps_v + eps_ve;
    let mut report = BoundReport::new(lhs, rhs);
    report.components = vec![("eps_v", eps_v), ("eps_ve", eps_ve)];
    Ok(report)
}

/// `g = ‖x‖∞ / max(‖x‖_d, 1e-12)`, or 1 when `x = 0`.
fn smoothness(x: &DVector<f64>, d: &StateDistribution) -> Result<(f64, Option<String>)> {
    let sup = sup_norm(x);
    if sup == 0.0 {
        return Ok((1.0, Some("v equals v_pi; g set to 1".into())));
    }
    Ok((sup / weighted_norm(x, d)?.max(1e-12), None))
}

/// The `d_π`-weighted bound:
/// `‖v_π − T̃^k v_π‖_d ≤ (g γ^k + γ^n)‖v_π − v‖_d + ‖T^n v − T̃^k v‖_d`.
pub fn verify_weighted_bound(
    env: &TabularMdp,
    model: &TabularMdp,
    policy: &Policy,
    v: &StateFunction,
    k: usize,
    n: usize,
    teleport_eps: f64,
) -> Result<BoundReport> {
    check_pair(env, model, k, n)?;
    let gamma = env.discount();
    let d = env.stationary_distribution(policy, teleport_eps)?;
    let v_pi = env.evaluate(policy)?;
    let err = v_pi.values() - v.values();
    let (g, note) = smoothness(&err, &d)?;
    let lhs = weighted_norm(&(v_pi.values() - model.k_step_bellman(policy, &v_pi, k)?.values()), &d)?;
    let eps_v = weighted_norm(&err, &d)?;
    let eps_ve = weighted_norm(
        &(env.k_step_bellman(policy, v, n)?.values() - model.k_step_bellman(policy, v, k)?.values()),
        &d,
    )?;
    let rhs = (g * gamma.powi(k as i32) + gamma.powi(n as i32)) * eps_v + eps_ve;
    let mut report = BoundReport::new(lhs, rhs);
    report.components = vec![
        ("eps_v", eps_v),
        ("eps_ve", eps_ve),
        ("g_conservative", 1.0 / d.min_weight().sqrt()),
    ];
    report.g = Some(g);
    report.teleport_eps = Some(teleport_eps);
    report.note = note;
    Ok(report)
}

/// Terms of the analytic lower bound on the expected MuZero model loss.
#[derive(Debug, Clone, PartialEq)]
pub struct MuZeroTerms {
    /// `‖T^n v − v‖²_d`.
    pub value: f64,
    /// `‖𝒫^K T^n v − 𝒫̃^K v‖²_d`.
    pub transition: f64,
    /// `Σ_{k=0}^{K} ‖𝒫^k r_π − 𝒫̃^k r̃_π‖²_d`.
    pub reward: f64,
    /// `Σ_{k=0}^{K} ‖𝒫^k r_π − 𝒫̃^k r̃_π‖_d` (unsquared).
    pub reward_unsquared: f64,
    pub d: StateDistribution,
}

impl MuZeroTerms {
    pub fn total(&self) -> f64 {
        self.value + self.transition + self.reward
    }
}

/// Compute the retained terms of the MuZero loss lower bound.
pub fn muzero_terms(
    env: &TabularMdp,
    model: &TabularMdp,
    policy: &Policy,
    v: &StateFunction,
    n: usize,
    big_k: usize,
    teleport_eps: f64,
) -> Result<MuZeroTerms> {
    check_pair(env, model, big_k, n)?;
    let d = env.stationary_distribution(policy, teleport_eps)?;
    let tn_v = env.k_step_bellman(policy, v, n)?;
    let value = weighted_norm(&(tn_v.values() - v.values()), &d)?.powi(2);
    let env_side = env.transition_operator_k(policy, &tn_v, big_k)?;
    let model_side = model.transition_operator_k(policy, v, big_k)?;
    let transition = weighted_norm(&(env_side.values() - model_side.values()), &d)?.powi(2);
    let r_pi = StateFunction::new(env.policy_reward(policy)?)?;
    let r_tilde = StateFunction::new(model.policy_reward(policy)?)?;
    let mut reward = 0.0;
    let mut reward_unsquared = 0.0;
    for k in 0..=big_k {
        let a = env.transition_operator_k(policy, &r_pi, k)?;
        let b = model.transition_operator_k(policy, &r_tilde, k)?;
        let norm = weighted_norm(&(a.values() - b.values()), &d)?;
        reward += norm * norm;
        reward_unsquared += norm;
    }
    Ok(MuZeroTerms {
        value,
        transition,
        reward,
        reward_unsquared,
        d,
    })
}

/// `a·b·L ≥ ‖v_π − T̃^K v_π‖²_d` with `L` the retained lower-bound terms,
/// `a = γ^K (g + γ^n)/(1 − γ^n)` and `b = a + K + 2`.
///
/// The component `rhs_max_a1` reports `max(a, 1)·b·L`, the constant that the
/// squaring step supports when `a < 1`.
pub fn muzero_bound_check(
    env: &TabularMdp,
    model: &TabularMdp,
    policy: &Policy,
    v: &StateFunction,
    n: usize,
    big_k: usize,
    teleport_eps: f64,
) -> Result<BoundReport> {
    let terms = muzero_terms(env, model, policy, v, n, big_k, teleport_eps)?;
    let gamma = env.discount();
    let v_pi = env.evaluate(policy)?;
    let (g, note) = smoothness(&(v_pi.values() - v.values()), &terms.d)?;
    let gn = gamma.powi(n as i32);
    let a = gamma.powi(big_k as i32) * (g + gn) / (1.0 - gn);
    let b = a + big_k as f64 + 2.0;
    let l = terms.total();
    let lhs = weighted_norm(
        &(v_pi.values() - model.k_step_bellman(policy, &v_pi, big_k)?.values()),
        &terms.d,
    )?
    .powi(2);
    let mut report = BoundReport::new(lhs, a * b * l);
    report.components = vec![
        ("value_term", terms.value),
        ("transition_term", terms.transition),
        ("reward_term", terms.reward),
        ("loss_lower_bound", l),
        ("rhs_max_a1", a.max(1.0) * b * l),
    ];
    report.g = Some(g);
    report.a = Some(a);
    report.b = Some(b);
    report.teleport_eps = Some(teleport_eps);
    report.note = note;
    Ok(report)
}

/// The reward-decomposition step of the derivation:
/// `‖T^{K+n} v − T̃^K v‖_d ≤ ‖𝒫^K T^n v − 𝒫̃^K v‖_d + Σ_{k=0}^{K} ‖𝒫^k r_π − 𝒫̃^k r̃_π‖_d`.
pub fn muzero_intermediate_check(
    env: &TabularMdp,
    model: &TabularMdp,
    policy: &Policy,
    v: &StateFunction,
    n: usize,
    big_k: usize,
    teleport_eps: f64,
) -> Result<BoundReport> {
    let terms = muzero_terms(env, model, policy, v, n, big_k, teleport_eps)?;
    let lhs = weighted_norm(
        &(env.k_step_bellman(policy, v, big_k + n)?.values() - model.k_step_bellman(policy, v, big_k)?.values()),
        &terms.d,
    )?;
    let rhs = terms.transition.sqrt() + terms.reward_unsquared;
    let mut report = BoundReport::new(lhs, rhs);
    report.components = vec![
        ("transition_norm", terms.transition.sqrt()),
        ("reward_norm_sum", terms.reward_unsquared),
    ];
    report.teleport_eps = Some(teleport_eps);
    Ok(report)
}

/// Sample mean and standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Monte-Carlo estimate of `E_{d}[ℓ^μ(S)]` with `v^targ = v`.
///
/// For each start state `s ~ d` the environment is rolled out `K + n` steps
/// under `π`; the model is rolled out `K` steps from `s`, also under `π`.
/// The per-state loss sums, for `k = 0..=K`, the squared errors of the
/// `n`-step value target against `v(z^k)` and of the environment reward
/// against the model reward.
#[allow(clippy::too_many_arguments)]
pub fn muzero_loss_monte_carlo(
    env: &TabularMdp,
    model: &TabularMdp,
    policy: &Policy,
    v: &StateFunction,
    n: usize,
    big_k: usize,
    teleport_eps: f64,
    samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    check_pair(env, model, big_k, n)?;
    if samples < 2 {
        return Err(PveError::InvalidArgument("need at least 2 samples".into()));
    }
    let gamma = env.discount();
    let d = env.stationary_distribution(policy, teleport_eps)?;
    let mut rng: StreamRng = stream_rng(seed, "muzero-monte-carlo", 0);
    let horizon = big_k + n;
    let mut env_states = vec![0usize; horizon + 1];
    let mut env_rewards = vec![0.0; horizon];
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..samples {
        let start = sample_index(&mut rng, d.iter().copied());
        env_states[0] = start;
        for t in 0..horizon {
            let (a, next) = step(&mut rng, env, policy, env_states[t]);
            env_rewards[t] = env.reward()[(env_states[t], a)];
            env_states[t + 1] = next;
        }
        let mut z = start;
        let mut loss = 0.0;
        for k in 0..=big_k {
            let mut target = gamma.powi(n as i32) * v[env_states[k + n]];
            for j in 0..n {
                target += gamma.powi(j as i32) * env_rewards[k + j];
            }
            loss += (target - v[z]).powi(2);
            let (a, next) = step(&mut rng, model, policy, z);
            loss += (env_rewards[k] - model.reward()[(z, a)]).powi(2);
            z = next;
        }
        sum += loss;
        sum_sq += loss * loss;
    }
    let m = samples as f64;
    let mean = sum / m;
    let var = ((sum_sq - m * mean * mean) / (m - 1.0)).max(0.0);
    Ok(McEstimate {
        mean,
        std_error: (var / m).sqrt(),
        samples,
    })
}

/// One randomized input for the bound verifiers.
#[derive(Debug, Clone)]
pub struct BoundCase {
    pub env: TabularMdp,
    pub model: TabularMdp,
    pub policy: Policy,
    pub v: StateFunction,
    pub k: usize,
    pub n: usize,
}

impl BoundCase {
    /// Random environment and model on 4–6 states and 2–3 actions with a
    /// shared discount in `[0.5, 0.95]`, a random deterministic or stochastic
    /// policy, and `v` either random, a perturbation of `v_π`, or `v_π` itself.
    pub fn sample(rng: &mut StreamRng) -> Result<Self> {
        let ns = rng.gen_range(4..=6);
        let na = rng.gen_range(2..=3);
        let gamma = rng.gen_range(0.5..=0.95);
        let env = init_params(ns, na, Rank::Full, gamma, rng.gen())?.realize()?;
        let model = init_params(ns, na, Rank::Full, gamma, rng.gen())?.realize()?;
        let mode = if rng.gen_bool(0.5) {
            PolicyMode::Deterministic
        } else {
            PolicyMode::Stochastic
        };
        let policy = sample_random_policy(rng, ns, na, mode);
        let v_pi = env.evaluate(&policy)?;
        let noise = sample_random_function(rng, ns, -1.0, 1.0)?;
        let v = match rng.gen_range(0..3) {
            0 => noise,
            1 => StateFunction::new(v_pi.values() + noise.values() * 0.1)?,
            _ => v_pi,
        };
        Ok(Self {
            env,
            model,
            policy,
            v,
            k: rng.gen_range(1..=3),
            n: rng.gen_range(1..=3),
        })
    }
}
