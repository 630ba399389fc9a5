use pve_core::model::{init_params, loss_gradient, order_k_ve_loss, pve_loss, LossSpec};
use pve_core::policy_gen::{label_with_values, sample_random_function, sample_random_policy, PolicyMode};
use pve_core::rng::stream_rng;
use pve_core::{DatasetSemantics, ModelParams, PolicyValueDataset, Rank, TabularMdp};

const H: f64 = 1e-5;

fn instance(seed: u64, rank: Rank) -> (TabularMdp, ModelParams, PolicyValueDataset, PolicyValueDataset) {
    let mut rng = stream_rng(seed, "gradient-instance", 0);
    let env = init_params(4, 2, Rank::Full, 0.9, seed + 100).unwrap().realize().unwrap();
    let params = init_params(4, 2, rank, 0.9, seed).unwrap();
    let policies: Vec<_> = (0..6)
        .map(|i| {
            let mode = if i % 2 == 0 { PolicyMode::Deterministic } else { PolicyMode::Stochastic };
            sample_random_policy(&mut rng, 4, 2, mode)
        })
        .collect();
    let values = label_with_values(&env, policies.clone()).unwrap();
    let pairs = policies
        .into_iter()
        .map(|pi| (pi, sample_random_function(&mut rng, 4, -1.0, 1.0).unwrap()))
        .collect();
    let functions = PolicyValueDataset::new(pairs, DatasetSemantics::ArbitraryFunctions).unwrap();
    (env, params, values, functions)
}

fn max_relative_error(params: &ModelParams, analytic: &ModelParams, loss: impl Fn(&ModelParams) -> f64) -> f64 {
    let base = params.flat();
    let an = analytic.flat();
    let mut probe = params.clone();
    let mut worst = 0.0f64;
    for i in 0..base.len() {
        let mut x = base.clone();
        x[i] = base[i] + H;
        probe.set_flat(&x).unwrap();
        let up = loss(&probe);
        x[i] = base[i] - H;
        probe.set_flat(&x).unwrap();
        let down = loss(&probe);
        let fd = (up - down) / (2.0 * H);
        let err = (fd - an[i]).abs() / fd.abs().max(an[i].abs()).max(1e-6);
        worst = worst.max(err);
    }
    worst
}

fn check(rank: Rank) {
    for seed in 0..5 {
        let (env, params, values, functions) = instance(seed, rank);
        for k in 1..=3 {
            let (_, grad) = loss_gradient(&params, &env, &values, LossSpec::pve(k)).unwrap();
            let err = max_relative_error(&params, &grad, |p| pve_loss(p, &env, &values, k).unwrap());
            assert!(err < 1e-4, "pve seed {seed} k {k} rank {rank:?}: {err:e}");

            let (_, grad) = loss_gradient(&params, &env, &functions, LossSpec::order_k(k)).unwrap();
            let err = max_relative_error(&params, &grad, |p| order_k_ve_loss(p, &env, &functions, k).unwrap());
            assert!(err < 1e-4, "order-k seed {seed} k {k} rank {rank:?}: {err:e}");
        }
    }
}

#[test]
fn full_rank_gradients_match_finite_differences() {
    check(Rank::Full);
}

#[test]
fn low_rank_gradients_match_finite_differences() {
    check(Rank::Low(2));
}

#[test]
fn reported_loss_matches_operator_loss() {
    let (env, params, values, functions) = instance(9, Rank::Full);
    for k in 1..=3 {
        let (l, _) = loss_gradient(&params, &env, &values, LossSpec::pve(k)).unwrap();
        assert!((l - pve_loss(&params, &env, &values, k).unwrap()).abs() < 1e-12);
        let (l, _) = loss_gradient(&params, &env, &functions, LossSpec::order_k(k)).unwrap();
        assert!((l - order_k_ve_loss(&params, &env, &functions, k).unwrap()).abs() < 1e-12);
    }
}
