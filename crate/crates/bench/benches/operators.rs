use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use pve_core::env::build_four_rooms;
use pve_core::model::{init_params, LossSpec, Objective};
use pve_core::policy_gen::{build_dataset, DatasetKind, DatasetSpec};
use pve_core::{EvalMethod, Policy, Rank, StateFunction};

fn operators(c: &mut Criterion) {
    let env = build_four_rooms(0.2, 0.99).unwrap();
    let pi = Policy::uniform(env.n_states(), env.n_actions());
    let v = StateFunction::constant(env.n_states(), 1.0);

    c.bench_function("bellman_operator", |b| b.iter(|| env.bellman_operator(&pi, black_box(&v)).unwrap()));
    c.bench_function("k_step_bellman/10", |b| {
        b.iter(|| env.k_step_bellman(&pi, black_box(&v), 10).unwrap())
    });

    let mut group = c.benchmark_group("policy_evaluation");
    group.sample_size(20);
    for (name, method) in [("exact", EvalMethod::Exact), ("iterative", EvalMethod::Iterative)] {
        group.bench_function(name, |b| b.iter(|| env.policy_evaluation(black_box(&pi), method, 1e-10).unwrap()));
    }
    group.finish();
}

fn gradients(c: &mut Criterion) {
    let env = build_four_rooms(0.2, 0.99).unwrap();
    let functions = build_dataset(&env, &DatasetSpec::new(50, DatasetKind::RandomMixed, 0)).unwrap();
    let mut spec = DatasetSpec::new(50, DatasetKind::RandomMixed, 0);
    spec.value_labels = true;
    let values = build_dataset(&env, &spec).unwrap();
    let mut group = c.benchmark_group("loss_gradient");
    group.sample_size(20);
    for rank in [Rank::Low(10), Rank::Full] {
        let params = init_params(env.n_states(), env.n_actions(), rank, 0.99, 0).unwrap();
        let cases = [
            ("pve", LossSpec::pve(1), &values),
            ("order1", LossSpec::order_k(1), &functions),
            ("order10", LossSpec::order_k(10), &functions),
        ];
        for (name, spec, data) in cases {
            let objective = Objective::new(&env, data, spec).unwrap();
            let batch = objective.all_indices();
            let id = BenchmarkId::new(format!("{}/{name}", rank.label()), batch.len());
            group.bench_function(id, |b| {
                b.iter(|| objective.loss_and_gradient(black_box(&params), &batch).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, operators, gradients);
criterion_main!(benches);
