//! Policy and function generators for the training datasets.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::Rng;

use crate::dataset::{DatasetSemantics, PolicyValueDataset};
use crate::error::{PveError, Result};
use crate::mdp::{argmax, Policy, StateFunction, TabularMdp};
use crate::rng::{stream_rng, StreamRng};

/// Deterministic or stochastic sampling/noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyMode {
    Deterministic,
    Stochastic,
}

/// Independent uniform action per state (det) or normalized `U(0, 1)` weights (stoch).
pub fn sample_random_policy<R: Rng + ?Sized>(
    rng: &mut R,
    n_states: usize,
    n_actions: usize,
    mode: PolicyMode,
) -> Policy {
    let mut probs = DMatrix::zeros(n_states, n_actions);
    for s in 0..n_states {
        match mode {
            PolicyMode::Deterministic => probs[(s, rng.gen_range(0..n_actions))] = 1.0,
            PolicyMode::Stochastic => {
                let mut total = 0.0;
                for a in 0..n_actions {
                    // strictly positive weights keep the row normalizable
                    let f: f64 = loop {
                        let f = rng.gen::<f64>();
                        if f > 0.0 {
                            break f;
                        }
                    };
                    probs[(s, a)] = f;
                    total += f;
                }
                for a in 0..n_actions {
                    probs[(s, a)] /= total;
                }
            }
        }
    }
    Policy::from_raw(probs)
}

/// I.i.d. `U(lo, hi)` entries.
pub fn sample_random_function<R: Rng + ?Sized>(
    rng: &mut R,
    n_states: usize,
    lo: f64,
    hi: f64,
) -> Result<StateFunction> {
    if !(lo < hi) {
        return Err(PveError::InvalidArgument(format!("need lo < hi, got [{lo}, {hi}]")));
    }
    StateFunction::from_vec((0..n_states).map(|_| rng.gen_range(lo..hi)).collect())
}

fn subset_size(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64).round() as usize).clamp(1, n)
}

fn improvement_margin(q: f64) -> f64 {
    1e-12 * q.abs().max(1.0)
}

/// Policies visited by policy iteration that improves only a random subset of
/// states per step, restarted from a fresh random deterministic policy each
/// time it reaches an optimal one.
///
/// Every visited policy (including each run's initial and optimal policy) is
/// stored until `target_count` policies are collected. When an update at the
/// sampled states changes nothing, the subset is resampled up to ten times;
/// after that the subset is drawn from the improvable states only, so a run
/// ends exactly when its policy is optimal.
pub fn generate_pi_policies(
    env: &TabularMdp,
    target_count: usize,
    update_fraction: f64,
    seed: u64,
) -> Result<Vec<Policy>> {
    if target_count == 0 {
        return Err(PveError::InvalidArgument("target_count must be >= 1".into()));
    }
    if !(update_fraction > 0.0 && update_fraction <= 1.0) {
        return Err(PveError::InvalidArgument(format!(
            "update_fraction {update_fraction} outside (0, 1]"
        )));
    }
    let (ns, na) = (env.n_states(), env.n_actions());
    let m = subset_size(update_fraction, ns);
    let mut rng = stream_rng(seed, "policy-iteration", 0);
    let mut stored = Vec::with_capacity(target_count);
    'runs: loop {
        let mut actions: Vec<usize> = (0..ns).map(|_| rng.gen_range(0..na)).collect();
        loop {
            let pi = Policy::deterministic(&actions, na)?;
            let v = env.evaluate(&pi)?;
            stored.push(pi);
            if stored.len() == target_count {
                break 'runs;
            }
            let q = env.q_values(&v)?;
            let best: Vec<usize> = (0..ns).map(|s| argmax(q.row(s).iter().copied())).collect();
            let improvable: Vec<usize> = (0..ns)
                .filter(|&s| {
                    let cur = q[(s, actions[s])];
                    q[(s, best[s])] > cur + improvement_margin(cur)
                })
                .collect();
            if improvable.is_empty() {
                continue 'runs;
            }
            let mut changed = false;
            for _ in 0..10 {
                for s in sample(&mut rng, ns, m).into_iter() {
                    if improvable.binary_search(&s).is_ok() {
                        actions[s] = best[s];
                        changed = true;
                    }
                }
                if changed {
                    break;
                }
            }
            if !changed {
                let take = m.min(improvable.len());
                for i in sample(&mut rng, improvable.len(), take).into_iter() {
                    let s = improvable[i];
                    actions[s] = best[s];
                }
            }
        }
    }
    Ok(stored)
}

/// Copies of `policy` with the rows at a random `fraction` of states replaced
/// by uniform (stoch) or random one-hot (det) distributions.
pub fn augment_with_noise<R: Rng + ?Sized>(
    policy: &Policy,
    mode: PolicyMode,
    fraction: f64,
    copies: usize,
    rng: &mut R,
) -> Result<Vec<Policy>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(PveError::InvalidArgument(format!("fraction {fraction} outside (0, 1]")));
    }
    let (ns, na) = (policy.n_states(), policy.n_actions());
    let m = subset_size(fraction, ns);
    let mut out = Vec::with_capacity(copies);
    for _ in 0..copies {
        let mut probs = policy.probs().clone();
        for s in sample(rng, ns, m).into_iter() {
            let mut row = probs.row_mut(s);
            match mode {
                PolicyMode::Stochastic => row.fill(1.0 / na as f64),
                PolicyMode::Deterministic => {
                    row.fill(0.0);
                    row[rng.gen_range(0..na)] = 1.0;
                }
            }
        }
        out.push(Policy::from_raw(probs));
    }
    Ok(out)
}

/// Pair each policy with its exact value under `env`.
pub fn label_with_values(env: &TabularMdp, policies: Vec<Policy>) -> Result<PolicyValueDataset> {
    let pairs = policies
        .into_iter()
        .map(|pi| {
            let v = env.evaluate(&pi)?;
            Ok((pi, v))
        })
        .collect::<Result<Vec<_>>>()?;
    PolicyValueDataset::new(pairs, DatasetSemantics::ExactValues)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    /// Equal mix of random deterministic and stochastic policies.
    RandomMixed,
    /// Policy-iteration policies with uniform-row noise.
    PiDerivedStochastic,
    /// Policy-iteration policies with one-hot-row noise.
    PiDerivedDeterministic,
}

impl DatasetKind {
    pub fn name(&self) -> &'static str {
        match self {
            DatasetKind::RandomMixed => "random-mixed",
            DatasetKind::PiDerivedStochastic => "pi-derived-stochastic",
            DatasetKind::PiDerivedDeterministic => "pi-derived-deterministic",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "random-mixed" => Some(DatasetKind::RandomMixed),
            "pi-derived-stochastic" => Some(DatasetKind::PiDerivedStochastic),
            "pi-derived-deterministic" => Some(DatasetKind::PiDerivedDeterministic),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetSpec {
    pub count: usize,
    pub kind: DatasetKind,
    pub noise_fraction: f64,
    pub augment_per_policy: usize,
    /// Label random-mixed policies with their exact values instead of random functions.
    pub value_labels: bool,
    pub seed: u64,
}

impl DatasetSpec {
    pub fn new(count: usize, kind: DatasetKind, seed: u64) -> Self {
        Self {
            count,
            kind,
            noise_fraction: 0.1,
            augment_per_policy: 100,
            value_labels: kind != DatasetKind::RandomMixed,
            seed,
        }
    }
}

fn random_mixed_policy(rng: &mut StreamRng, ns: usize, na: usize) -> Policy {
    let mode = if rng.gen_bool(0.5) {
        PolicyMode::Deterministic
    } else {
        PolicyMode::Stochastic
    };
    sample_random_policy(rng, ns, na, mode)
}

/// Build the dataset described by `spec` on `env`.
pub fn build_dataset(env: &TabularMdp, spec: &DatasetSpec) -> Result<PolicyValueDataset> {
    if spec.count == 0 {
        return Err(PveError::InvalidArgument("dataset count must be >= 1".into()));
    }
    let (ns, na) = (env.n_states(), env.n_actions());
    match spec.kind {
        DatasetKind::RandomMixed => {
            let mut rng = stream_rng(spec.seed, "random-mixed", 0);
            if spec.value_labels {
                let policies = (0..spec.count).map(|_| random_mixed_policy(&mut rng, ns, na)).collect();
                label_with_values(env, policies)
            } else {
                let pairs = (0..spec.count)
                    .map(|_| {
                        let pi = random_mixed_policy(&mut rng, ns, na);
                        let v = sample_random_function(&mut rng, ns, -1.0, 1.0)?;
                        Ok((pi, v))
                    })
                    .collect::<Result<Vec<_>>>()?;
                PolicyValueDataset::new(pairs, DatasetSemantics::ArbitraryFunctions)
            }
        }
        DatasetKind::PiDerivedStochastic | DatasetKind::PiDerivedDeterministic => {
            if spec.augment_per_policy == 0 {
                return Err(PveError::InvalidArgument("augment_per_policy must be >= 1".into()));
            }
            let mode = if spec.kind == DatasetKind::PiDerivedDeterministic {
                PolicyMode::Deterministic
            } else {
                PolicyMode::Stochastic
            };
            let n_base = spec.count.div_ceil(spec.augment_per_policy);
            let bases = generate_pi_policies(env, n_base, 0.1, spec.seed)?;
            let mut rng = stream_rng(spec.seed, "noise", 0);
            let mut policies = Vec::with_capacity(n_base * spec.augment_per_policy);
            for base in &bases {
                policies.extend(augment_with_noise(
                    base,
                    mode,
                    spec.noise_fraction,
                    spec.augment_per_policy,
                    &mut rng,
                )?);
            }
            policies.truncate(spec.count);
            label_with_values(env, policies)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::build_four_rooms;
    use crate::rng::seeded_rng;

    #[test]
    fn det_and_stoch_rows() {
        let mut rng = seeded_rng(1);
        let det = sample_random_policy(&mut rng, 5, 3, PolicyMode::Deterministic);
        assert!(det.is_deterministic());
        let stoch = sample_random_policy(&mut rng, 5, 3, PolicyMode::Stochastic);
        for s in 0..5 {
            assert!((stoch.probs().row(s).sum() - 1.0).abs() < 1e-12);
        }
        Policy::new(stoch.probs().clone()).unwrap();
    }

    #[test]
    fn det_action_frequencies_are_balanced() {
        let mut rng = seeded_rng(2);
        let mut counts = [0usize; 4];
        for _ in 0..10_000 {
            let pi = sample_random_policy(&mut rng, 1, 4, PolicyMode::Deterministic);
            counts[pi.actions().unwrap()[0]] += 1;
        }
        for c in counts {
            let f = c as f64 / 10_000.0;
            assert!((0.23..=0.27).contains(&f), "{counts:?}");
        }
    }

    #[test]
    fn random_functions() {
        let mut rng = seeded_rng(3);
        let v = sample_random_function(&mut rng, 50, -1.0, 1.0).unwrap();
        assert!(v.iter().all(|x| x.abs() < 1.0));
        let narrow = sample_random_function(&mut rng, 50, 0.3, 0.3 + 1e-9).unwrap();
        assert!(narrow.max() - narrow.min() < 1e-9);
        assert!(sample_random_function(&mut rng, 3, 1.0, 1.0).is_err());
        let a = sample_random_function(&mut seeded_rng(4), 10, -1.0, 1.0).unwrap();
        let b = sample_random_function(&mut seeded_rng(4), 10, -1.0, 1.0).unwrap();
        assert_eq!(a, b);
    }

    fn check_runs(env: &TabularMdp, policies: &[Policy]) -> usize {
        let (v_star, _) = env.policy_iteration().unwrap();
        let mut optimal_seen = 0;
        let mut prev: Option<(nalgebra::DVector<f64>, bool)> = None;
        for pi in policies {
            assert!(pi.is_deterministic());
            let v = env.evaluate(pi).unwrap().into_inner();
            let optimal = (&v - v_star.values()).amax() < 1e-6;
            if let Some((p, prev_optimal)) = &prev {
                // a run restarts only after reaching an optimal policy
                if !prev_optimal {
                    assert!(v.iter().zip(p.iter()).all(|(a, b)| *a >= b - 1e-9));
                }
            }
            optimal_seen += optimal as usize;
            prev = Some((v, optimal));
        }
        optimal_seen
    }

    #[test]
    fn pi_runs_improve_until_optimal() {
        let env = build_four_rooms(0.2, 0.9).unwrap();
        let policies = generate_pi_policies(&env, 400, 0.1, 5).unwrap();
        assert_eq!(policies.len(), 400);
        assert!(check_runs(&env, &policies) >= 1);
    }

    #[test]
    fn full_update_is_standard_policy_iteration() {
        let env = build_four_rooms(0.2, 0.9).unwrap();
        let policies = generate_pi_policies(&env, 60, 1.0, 1).unwrap();
        assert!(check_runs(&env, &policies) >= 2);
    }

    #[test]
    fn augmentation_modes() {
        let mut rng = seeded_rng(6);
        let base = Policy::deterministic(&[0; 20], 4).unwrap();
        let det = augment_with_noise(&base, PolicyMode::Deterministic, 0.1, 100, &mut rng).unwrap();
        assert_eq!(det.len(), 100);
        assert!(det.iter().all(|p| p.is_deterministic()));
        let stoch = augment_with_noise(&base, PolicyMode::Stochastic, 0.1, 100, &mut rng).unwrap();
        assert!(stoch.iter().any(|p| !p.is_deterministic()));
        for p in &stoch {
            let changed = (0..20).filter(|&s| p.probs().row(s) != base.probs().row(s)).count();
            assert_eq!(changed, 2);
        }
        let full = augment_with_noise(&base, PolicyMode::Stochastic, 1.0, 1, &mut rng).unwrap();
        assert_eq!(full[0], Policy::uniform(20, 4));
    }

    #[test]
    fn labels_are_fixed_points_and_idempotent() {
        let env = build_four_rooms(0.2, 0.9).unwrap();
        let mut rng = seeded_rng(7);
        let policies: Vec<Policy> = (0..5)
            .map(|_| sample_random_policy(&mut rng, 104, 4, PolicyMode::Stochastic))
            .collect();
        let data = label_with_values(&env, policies.clone()).unwrap();
        for (pi, v) in data.pairs() {
            let tv = env.bellman_operator(pi, v).unwrap();
            assert!((tv.values() - v.values()).amax() < 1e-8);
        }
        let again = label_with_values(&env, policies).unwrap();
        assert_eq!(data, again);
        let (v_star, pi_star) = env.value_iteration(1e-10).unwrap();
        let labeled = label_with_values(&env, vec![pi_star]).unwrap();
        assert!((labeled.pairs()[0].1.values() - v_star.values()).amax() < 1e-6);
    }

    #[test]
    fn dataset_kinds() {
        let env = build_four_rooms(0.2, 0.9).unwrap();
        let spec = DatasetSpec::new(30, DatasetKind::RandomMixed, 1);
        let d = build_dataset(&env, &spec).unwrap();
        assert_eq!(d.len(), 30);
        assert_eq!(d.semantics(), DatasetSemantics::ArbitraryFunctions);
        let mut spec = DatasetSpec::new(25, DatasetKind::PiDerivedDeterministic, 1);
        spec.augment_per_policy = 10;
        let d = build_dataset(&env, &spec).unwrap();
        assert_eq!(d.len(), 25);
        assert!(d.pairs().iter().all(|(p, _)| p.is_deterministic()));
        d.validate_values(&env, 1e-8).unwrap();
        assert_eq!(d, build_dataset(&env, &spec).unwrap());
    }
}
