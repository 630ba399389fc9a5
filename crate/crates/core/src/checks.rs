//! Constructive value-equivalence fixtures and the randomized bound suites.

use crate::analysis::bounds::{
    muzero_bound_check, muzero_intermediate_check, muzero_loss_monte_carlo, muzero_terms,
    verify_pve_bound, verify_weighted_bound, BoundCase, BoundReport,
};
use crate::dataset::{DatasetSemantics, PolicyValueDataset};
use crate::env::{
    all_deterministic_policies, build_det_stoch_counterexample, build_false_ring, build_ring,
    build_superfluous_product, build_value_matched_false_ring, build_y0_model, uniform_kernel,
    value_gap, RingSpec,
};
use crate::error::Result;
use crate::mdp::{sup_norm, Policy, StateFunction, TabularMdp};
use crate::model::{init_params, order_k_ve_loss_of, pve_loss_of, Rank};
use crate::policy_gen::{label_with_values, sample_random_function, sample_random_policy, PolicyMode};
use crate::rng::stream_rng;

/// Direction of a threshold comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Below,
    Above,
}

impl Relation {
    pub fn symbol(&self) -> &'static str {
        match self {
            Relation::Below => "<",
            Relation::Above => ">",
        }
    }
}

/// One named scalar compared against a threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub value: f64,
    pub relation: Relation,
    pub threshold: f64,
    pub passed: bool,
}

impl CheckResult {
    pub fn below(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            relation: Relation::Below,
            threshold,
            passed: value < threshold,
        }
    }

    pub fn above(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            relation: Relation::Above,
            threshold,
            passed: value > threshold,
        }
    }
}

/// Settings for [`fixture_checks`].
#[derive(Debug, Clone, PartialEq)]
pub struct FixtureConfig {
    pub seed: u64,
    /// Random functions per ring check.
    pub samples: usize,
    pub ring_len: usize,
    pub discount: f64,
    /// Multiplier on the false-ring rewards; 1 is the correct construction.
    pub false_ring_scale: f64,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            samples: 100,
            ring_len: 6,
            discount: 0.9,
            false_ring_scale: 1.0,
        }
    }
}

fn scaled_false_ring(spec: &RingSpec, scale: f64) -> Result<TabularMdp> {
    let fr = build_false_ring(spec)?;
    TabularMdp::new(fr.reward() * scale, fr.transitions().to_vec(), fr.discount())
}

fn function_dataset(pairs: Vec<(Policy, StateFunction)>) -> Result<PolicyValueDataset> {
    PolicyValueDataset::new(pairs, DatasetSemantics::ArbitraryFunctions)
}

/// Run every fixture. Order of the results is fixed.
pub fn fixture_checks(config: &FixtureConfig) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    let n = config.ring_len;
    let gamma = config.discount;
    let mut rng = stream_rng(config.seed, "fixture-checks", 0);
    let one = Policy::uniform(n, 1);

    // ring and false ring agree on T^n for any v
    let g: Vec<f64> = (0..n).map(|_| rand::Rng::gen_range(&mut rng, -1.0..1.0)).collect();
    let spec = RingSpec::new(g, gamma)?;
    let ring = build_ring(&spec)?;
    let false_ring = scaled_false_ring(&spec, config.false_ring_scale)?;
    let mut worst = 0.0f64;
    for _ in 0..config.samples {
        let v = sample_random_function(&mut rng, n, -1.0, 1.0)?;
        let a = ring.k_step_bellman(&one, &v, n)?;
        let b = false_ring.k_step_bellman(&one, &v, n)?;
        worst = worst.max(sup_norm(&(a.values() - b.values())));
    }
    out.push(CheckResult::below("false_ring_n_step_error", worst, 1e-9));

    // value-matched false ring reproduces v_π
    let matched = build_value_matched_false_ring(&spec)?;
    let gap = value_gap(&ring, &matched, &one)?;
    out.push(CheckResult::below("value_matched_ring_value_gap", gap, 1e-9));

    // indicator rings separate order k from order n for constant f
    let mut min_gap = f64::INFINITY;
    let constant = StateFunction::constant(n, 1.0);
    for k in 1..n {
        let spec = RingSpec::indicator(n, k, gamma)?;
        let ring = build_ring(&spec)?;
        let fr = build_false_ring(&spec)?;
        let a = ring.k_step_bellman(&one, &constant, k)?;
        let b = fr.k_step_bellman(&one, &constant, k)?;
        min_gap = min_gap.min((a[0] - b[0]).abs());
    }
    out.push(CheckResult::above("indicator_ring_order_gap", min_gap, 1e-6));

    // the n-false-ring is order-n VE on all functions, but not order-k for k | n, k < n
    let mut pairs = vec![(one.clone(), constant.clone())];
    for _ in 0..config.samples {
        pairs.push((one.clone(), sample_random_function(&mut rng, n, -1.0, 1.0)?));
    }
    let functions = function_dataset(pairs)?;
    let mut worst_member = 0.0f64;
    let mut min_violation = f64::INFINITY;
    for k in (1..n).filter(|k| n.is_multiple_of(*k)) {
        let spec = RingSpec::indicator(n, k, gamma)?;
        let ring = build_ring(&spec)?;
        let fr = build_false_ring(&spec)?;
        worst_member = worst_member.max(order_k_ve_loss_of(&fr, &ring, &functions, n)?);
        min_violation = min_violation.min(order_k_ve_loss_of(&fr, &ring, &functions, k)?);
    }
    out.push(CheckResult::below("false_ring_full_order_loss", worst_member, 1e-12));
    out.push(CheckResult::above("false_ring_divisor_order_loss", min_violation, 1e-6));

    // order-k membership carries to multiples of k
    let k = 2;
    let short = RingSpec::new(spec.g[..k].to_vec(), gamma)?;
    let short_ring = build_ring(&short)?;
    let short_fr = build_false_ring(&short)?;
    let one_k = Policy::uniform(k, 1);
    let mut pairs = Vec::new();
    for _ in 0..config.samples {
        pairs.push((one_k.clone(), sample_random_function(&mut rng, k, -1.0, 1.0)?));
    }
    let short_fns = function_dataset(pairs)?;
    let inclusion = (1..=3)
        .map(|m| order_k_ve_loss_of(&short_fr, &short_ring, &short_fns, m * k))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0f64, f64::max);
    out.push(CheckResult::below("false_ring_multiple_order_loss", inclusion, 1e-10));

    // the y0 model is PVE for y-ignoring policies but not order-1 VE
    let base = init_params(4, 2, Rank::Full, gamma, config.seed)?.realize()?;
    let y_size = 3;
    let product = build_superfluous_product(&base, y_size, &uniform_kernel(y_size))?;
    let y0_model = build_y0_model(&product, 0)?;
    let mut lifted = Vec::new();
    for i in 0..50 {
        let mode = if i % 2 == 0 {
            PolicyMode::Deterministic
        } else {
            PolicyMode::Stochastic
        };
        lifted.push(product.lift_policy(&sample_random_policy(&mut rng, 4, 2, mode))?);
    }
    let labeled = label_with_values(&product.mdp, lifted.clone())?;
    let pve = pve_loss_of(&y0_model, &product.mdp, &labeled, 1)?;
    out.push(CheckResult::below("y0_model_pve_loss", pve, 1e-12));
    let indicator = StateFunction::from_vec(
        (0..product.mdp.n_states())
            .map(|s| if product.unflatten(s).y != 0 { 1.0 } else { 0.0 })
            .collect(),
    )?;
    let mut bellman_gap = 0.0f64;
    for pi in &lifted {
        let a = product.mdp.bellman_operator(pi, &indicator)?;
        let b = y0_model.bellman_operator(pi, &indicator)?;
        bellman_gap = bellman_gap.max(sup_norm(&(a.values() - b.values())));
    }
    out.push(CheckResult::above("y0_model_indicator_bellman_gap", bellman_gap, 1e-6));

    // PVE losses of order k and 2k vanish together
    let pve2 = pve_loss_of(&y0_model, &product.mdp, &labeled, 2)?;
    out.push(CheckResult::below("y0_model_order2_pve_loss", pve2, 1e-10));

    // agreement on deterministic policies does not extend to stochastic ones
    let (env, model) = build_det_stoch_counterexample()?;
    let det = all_deterministic_policies(3, 2);
    let mut det_gap = 0.0f64;
    for pi in &det {
        det_gap = det_gap.max(value_gap(&env, &model, pi)?);
    }
    out.push(CheckResult::below("det_stoch_deterministic_value_gap", det_gap, 1e-10));
    let uniform = Policy::uniform(3, 2);
    out.push(CheckResult::above(
        "det_stoch_uniform_value_gap",
        value_gap(&env, &model, &uniform)?,
        1e-8,
    ));
    let det_data = label_with_values(&env, det.clone())?;
    out.push(CheckResult::below(
        "det_stoch_deterministic_pve_loss",
        pve_loss_of(&model, &env, &det_data, 1)?,
        1e-12,
    ));
    let mut with_uniform = det;
    with_uniform.push(uniform);
    let all_data = label_with_values(&env, with_uniform)?;
    let loss1 = pve_loss_of(&model, &env, &all_data, 1)?;
    let loss2 = pve_loss_of(&model, &env, &all_data, 2)?;
    out.push(CheckResult::above("det_stoch_uniform_pve_loss", loss1, 1e-8));
    out.push(CheckResult::above("det_stoch_order2_pve_loss", loss2, 1e-8));

    Ok(out)
}

/// Names of the randomized bound suites.
pub const BOUND_SUITES: [&str; 4] = ["pve", "weighted", "muzero", "muzero-intermediate"];

/// One verified tuple of a bound suite.
#[derive(Debug, Clone)]
pub struct BoundRow {
    pub suite: &'static str,
    pub seed: u64,
    pub case: usize,
    pub report: BoundReport,
}

/// The random tuple used by case `case` of every suite under `seed`.
pub fn bound_case(seed: u64, case: usize) -> Result<BoundCase> {
    BoundCase::sample(&mut stream_rng(seed, "bound-case", case as u64))
}

/// Evaluate every suite on `count` random tuples. Rows are ordered by case,
/// then by suite.
pub fn bound_suites(seed: u64, count: usize, teleport_eps: f64) -> Result<Vec<BoundRow>> {
    let mut rows = Vec::with_capacity(count * BOUND_SUITES.len());
    for case in 0..count {
        let c = bound_case(seed, case)?;
        let reports = [
            verify_pve_bound(&c.env, &c.model, &c.policy, &c.v, c.k, c.n)?,
            verify_weighted_bound(&c.env, &c.model, &c.policy, &c.v, c.k, c.n, teleport_eps)?,
            muzero_bound_check(&c.env, &c.model, &c.policy, &c.v, c.n, c.k, teleport_eps)?,
            muzero_intermediate_check(&c.env, &c.model, &c.policy, &c.v, c.n, c.k, teleport_eps)?,
        ];
        for (suite, report) in BOUND_SUITES.iter().zip(reports) {
            rows.push(BoundRow {
                suite,
                seed,
                case,
                report,
            });
        }
    }
    Ok(rows)
}

/// Compare a Monte-Carlo estimate of the expected MuZero loss with its
/// analytic lower bound on the first `cases` tuples.
pub fn monte_carlo_checks(
    seed: u64,
    cases: usize,
    samples: usize,
    teleport_eps: f64,
) -> Result<Vec<CheckResult>> {
    let mut out = Vec::with_capacity(cases);
    for case in 0..cases {
        let c = bound_case(seed, case)?;
        let terms = muzero_terms(&c.env, &c.model, &c.policy, &c.v, c.n, c.k, teleport_eps)?;
        let mc = muzero_loss_monte_carlo(
            &c.env,
            &c.model,
            &c.policy,
            &c.v,
            c.n,
            c.k,
            teleport_eps,
            samples,
            seed ^ case as u64,
        )?;
        // estimate minus the lower bound, in standard errors
        let z = (mc.mean - terms.total()) / mc.std_error.max(1e-300);
        out.push(CheckResult::above(format!("muzero_monte_carlo_case{case}_z"), z, -3.0));
    }
    Ok(out)
}
