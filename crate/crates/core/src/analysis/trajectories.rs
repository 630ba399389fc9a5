use rand::Rng;

use crate::error::{PveError, Result};
use crate::mdp::{Policy, TabularMdp};
use crate::rng::stream_rng;

/// Index drawn from the discrete distribution `weights` (assumed to sum to 1).
pub(crate) fn sample_index<R: Rng + ?Sized>(rng: &mut R, weights: impl Iterator<Item = f64>) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        if w > 0.0 {
            last = i;
            acc += w;
            if u < acc {
                return i;
            }
        }
    }
    // rounding left a sliver of mass; fall back to the last supported index
    last
}

/// One step of `mdp` under `policy` from `state`: `(action, next_state)`.
pub fn step<R: Rng + ?Sized>(rng: &mut R, mdp: &TabularMdp, policy: &Policy, state: usize) -> (usize, usize) {
    let a = sample_index(rng, policy.probs().row(state).iter().copied());
    let next = sample_index(rng, mdp.transition(a).row(state).iter().copied());
    (a, next)
}

/// Seeded rollouts; each trajectory lists `horizon + 1` states starting at `start_state`.
pub fn sample_trajectories(
    mdp: &TabularMdp,
    policy: &Policy,
    n_traj: usize,
    horizon: usize,
    start_state: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    if horizon == 0 {
        return Err(PveError::InvalidArgument("horizon must be >= 1".into()));
    }
    if start_state >= mdp.n_states() {
        return Err(PveError::InvalidArgument(format!("start state {start_state} out of range")));
    }
    if policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions() {
        return Err(PveError::Shape("policy does not match MDP".into()));
    }
    let mut rng = stream_rng(seed, "trajectories", 0);
    Ok((0..n_traj)
        .map(|_| {
            let mut states = Vec::with_capacity(horizon + 1);
            let mut s = start_state;
            states.push(s);
            for _ in 0..horizon {
                s = step(&mut rng, mdp, policy, s).1;
                states.push(s);
            }
            states
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn deterministic_dynamics_give_identical_paths() {
        let mdp = crate::env::build_four_rooms(0.0, 0.9).unwrap();
        let pi = Policy::deterministic(&vec![1; 104], 4).unwrap();
        let trajs = sample_trajectories(&mdp, &pi, 20, 30, 0, 1).unwrap();
        assert!(trajs.iter().all(|t| t == &trajs[0]));
        assert_eq!(trajs[0].len(), 31);
    }

    #[test]
    fn empirical_transitions_match_rows() {
        let p = DMatrix::from_row_slice(3, 3, &[0.2, 0.5, 0.3, 0.6, 0.1, 0.3, 0.25, 0.25, 0.5]);
        let mdp = TabularMdp::new(DMatrix::zeros(3, 1), vec![p.clone()], 0.9).unwrap();
        let pi = Policy::uniform(3, 1);
        let trajs = sample_trajectories(&mdp, &pi, 1, 100_000, 0, 7).unwrap();
        let mut counts = DMatrix::<f64>::zeros(3, 3);
        for w in trajs[0].windows(2) {
            counts[(w[0], w[1])] += 1.0;
        }
        for s in 0..3 {
            let total = counts.row(s).sum();
            let tv: f64 = (0..3).map(|t| (counts[(s, t)] / total - p[(s, t)]).abs()).sum::<f64>() / 2.0;
            assert!(tv < 0.01, "row {s}: tv {tv}");
        }
    }

    #[test]
    fn zero_horizon_rejected() {
        let mdp = crate::env::build_four_rooms(0.2, 0.9).unwrap();
        assert!(sample_trajectories(&mdp, &Policy::uniform(104, 4), 1, 0, 0, 0).is_err());
    }
}
