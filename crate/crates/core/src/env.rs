//! Environments and proof fixtures: Four Rooms, ring and false-ring MDPs,
//! superfluous-state products and the deterministic/stochastic counterexample.

use nalgebra::{DMatrix, DVector};

use crate::error::{PveError, Result};
use crate::mdp::{Policy, TabularMdp};

/// Interior of the Four Rooms grid; `w` marks a wall.
pub const FOUR_ROOMS_LAYOUT: [&str; 11] = [
    "     w     ",
    "     w     ",
    "           ",
    "     w     ",
    "     w     ",
    "w wwww     ",
    "     www ww",
    "     w     ",
    "     w     ",
    "           ",
    "     w     ",
];

/// Action order: up, right, down, left.
pub const MOVES: [(isize, isize); 4] = [(-1, 0), (0, 1), (1, 0), (0, -1)];

/// How the slip probability is spread over directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SlipMode {
    /// The random direction is uniform over all four moves, intended one included.
    #[default]
    Inclusive,
    /// The random direction is uniform over the three other moves.
    Exclusive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourRoomsConfig {
    pub slip: f64,
    pub discount: f64,
    pub slip_mode: SlipMode,
}

impl Default for FourRoomsConfig {
    fn default() -> Self {
        Self {
            slip: 0.2,
            discount: 0.99,
            slip_mode: SlipMode::Inclusive,
        }
    }
}

/// The Four Rooms gridworld together with its cell geometry.
#[derive(Debug, Clone)]
pub struct FourRooms {
    mdp: TabularMdp,
    cells: Vec<(usize, usize)>,
    index: Vec<Vec<Option<usize>>>,
}

impl FourRooms {
    pub fn new(config: FourRoomsConfig) -> Result<Self> {
        if !(0.0..=1.0).contains(&config.slip) {
            return Err(PveError::InvalidArgument(format!(
                "slip {} outside [0, 1]",
                config.slip
            )));
        }
        let rows = FOUR_ROOMS_LAYOUT.len();
        let cols = FOUR_ROOMS_LAYOUT[0].len();
        let mut cells = Vec::new();
        let mut index = vec![vec![None; cols]; rows];
        for (r, line) in FOUR_ROOMS_LAYOUT.iter().enumerate() {
            for (c, ch) in line.chars().enumerate() {
                if ch != 'w' {
                    index[r][c] = Some(cells.len());
                    cells.push((r, c));
                }
            }
        }
        let n = cells.len();
        let step = |s: usize, m: usize| -> usize {
            let (r, c) = cells[s];
            let (dr, dc) = MOVES[m];
            let (nr, nc) = (r as isize + dr, c as isize + dc);
            if nr < 0 || nc < 0 || nr >= rows as isize || nc >= cols as isize {
                return s;
            }
            index[nr as usize][nc as usize].unwrap_or(s)
        };
        let weights = |intended: usize, m: usize| -> f64 {
            let slip = config.slip;
            match config.slip_mode {
                SlipMode::Inclusive => {
                    let base = slip / 4.0;
                    if m == intended {
                        1.0 - slip + base
                    } else {
                        base
                    }
                }
                SlipMode::Exclusive => {
                    if m == intended {
                        1.0 - slip
                    } else {
                        slip / 3.0
                    }
                }
            }
        };
        let goal = index[0][cols - 1].expect("goal cell is open");
        let mut transition = vec![DMatrix::zeros(n, n); 4];
        for (a, p) in transition.iter_mut().enumerate() {
            for s in 0..n {
                for m in 0..4 {
                    let w = weights(a, m);
                    if w > 0.0 {
                        p[(s, step(s, m))] += w;
                    }
                }
            }
        }
        let reward = DMatrix::from_fn(n, 4, |s, a| transition[a][(s, goal)]);
        let mdp = TabularMdp::new(reward, transition, config.discount)?;
        Ok(Self { mdp, cells, index })
    }

    pub fn mdp(&self) -> &TabularMdp {
        &self.mdp
    }

    pub fn into_mdp(self) -> TabularMdp {
        self.mdp
    }

    pub fn n_states(&self) -> usize {
        self.cells.len()
    }

    /// `(row, col)` of a state within the 11×11 interior.
    pub fn cell(&self, state: usize) -> (usize, usize) {
        self.cells[state]
    }

    pub fn state_at(&self, row: usize, col: usize) -> Option<usize> {
        self.index.get(row)?.get(col).copied().flatten()
    }

    /// Upper-right cell; entering it pays reward 1.
    pub fn goal_state(&self) -> usize {
        self.state_at(0, 10).unwrap()
    }

    pub fn bottom_right_state(&self) -> usize {
        self.state_at(10, 10).unwrap()
    }

    pub fn bottom_left_state(&self) -> usize {
        self.state_at(10, 0).unwrap()
    }

    /// True if `to` equals `from` or is one of its four grid neighbours.
    pub fn is_grid_move(&self, from: usize, to: usize) -> bool {
        let (r0, c0) = self.cells[from];
        let (r1, c1) = self.cells[to];
        r0.abs_diff(r1) + c0.abs_diff(c1) <= 1
    }
}

/// Four Rooms with the inclusive slip reading.
pub fn build_four_rooms(slip: f64, discount: f64) -> Result<TabularMdp> {
    Ok(FourRooms::new(FourRoomsConfig {
        slip,
        discount,
        slip_mode: SlipMode::Inclusive,
    })?
    .into_mdp())
}

/// A single-action cycle `s_0 → s_1 → … → s_{n−1} → s_0` with reward `g[i]`
/// on leaving `s_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct RingSpec {
    pub g: Vec<f64>,
    pub discount: f64,
}

impl RingSpec {
    pub fn new(g: Vec<f64>, discount: f64) -> Result<Self> {
        if g.is_empty() {
            return Err(PveError::InvalidArgument("ring needs n >= 1".into()));
        }
        Ok(Self { g, discount })
    }

    /// Ring with `g(i) = 1` for the first `k` states and 0 elsewhere.
    pub fn indicator(n: usize, k: usize, discount: f64) -> Result<Self> {
        Self::new((0..n).map(|i| if i < k { 1.0 } else { 0.0 }).collect(), discount)
    }

    pub fn n(&self) -> usize {
        self.g.len()
    }

    /// Discounted `n`-step return from `s_i`.
    pub fn n_step_return(&self, i: usize) -> f64 {
        let n = self.n();
        let mut total = 0.0;
        let mut scale = 1.0;
        for t in 0..n {
            total += scale * self.g[(i + t) % n];
            scale *= self.discount;
        }
        total
    }

    /// `Σ_{t<n} γ^t`.
    pub fn horizon_mass(&self) -> f64 {
        (0..self.n()).map(|t| self.discount.powi(t as i32)).sum()
    }
}

fn self_loops(n: usize) -> Vec<DMatrix<f64>> {
    vec![DMatrix::identity(n, n)]
}

pub fn build_ring(spec: &RingSpec) -> Result<TabularMdp> {
    let n = spec.n();
    let mut p = DMatrix::zeros(n, n);
    for i in 0..n {
        p[(i, (i + 1) % n)] = 1.0;
    }
    TabularMdp::new(DMatrix::from_column_slice(n, 1, &spec.g), vec![p], spec.discount)
}

/// Self-loop MDP whose rewards reproduce the ring's `n`-step returns.
pub fn build_false_ring(spec: &RingSpec) -> Result<TabularMdp> {
    if !(spec.discount > 0.0 && spec.discount < 1.0) {
        return Err(PveError::InvalidArgument(format!(
            "false ring needs discount in (0, 1), got {}",
            spec.discount
        )));
    }
    let n = spec.n();
    let mass = spec.horizon_mass();
    let reward = DMatrix::from_fn(n, 1, |i, _| spec.n_step_return(i) / mass);
    TabularMdp::new(reward, self_loops(n), spec.discount)
}

/// Self-loop MDP with `r̃(s) = (1 − γ) v_π(s)`, so its values equal the ring's.
pub fn build_value_matched_false_ring(spec: &RingSpec) -> Result<TabularMdp> {
    let ring = build_ring(spec)?;
    let v = ring.evaluate(&Policy::uniform(spec.n(), 1))?;
    let reward = DMatrix::from_fn(spec.n(), 1, |i, _| (1.0 - spec.discount) * v[i]);
    TabularMdp::new(reward, self_loops(spec.n()), spec.discount)
}

/// A state of `𝒳 × 𝒴` and its flattened index `x · |𝒴| + y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FactoredState {
    pub x: usize,
    pub y: usize,
    pub index: usize,
}

/// An MDP over `𝒳 × 𝒴` where `y` has no influence on rewards or on `x`.
#[derive(Debug, Clone)]
pub struct ProductMdp {
    pub mdp: TabularMdp,
    pub x_size: usize,
    pub y_size: usize,
}

impl ProductMdp {
    pub fn flatten(&self, x: usize, y: usize) -> FactoredState {
        FactoredState {
            x,
            y,
            index: x * self.y_size + y,
        }
    }

    pub fn unflatten(&self, index: usize) -> FactoredState {
        FactoredState {
            x: index / self.y_size,
            y: index % self.y_size,
            index,
        }
    }

    /// The y-ignoring policy acting as `base` on the `x` component.
    pub fn lift_policy(&self, base: &Policy) -> Result<Policy> {
        if base.n_states() != self.x_size || base.n_actions() != self.mdp.n_actions() {
            return Err(PveError::Shape(format!(
                "base policy is {}x{}, expected {}x{}",
                base.n_states(),
                base.n_actions(),
                self.x_size,
                self.mdp.n_actions()
            )));
        }
        let n = self.x_size * self.y_size;
        let probs = DMatrix::from_fn(n, base.n_actions(), |s, a| base.prob(s / self.y_size, a));
        Policy::new(probs)
    }

    /// Lift a function of `x` to the product space.
    pub fn lift_function(&self, values: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.x_size * self.y_size, |s, _| values[s / self.y_size])
    }
}

/// Product of `base` with a superfluous component `y` whose successor follows
/// `y_dynamics` independently of state and action.
pub fn build_superfluous_product(
    base: &TabularMdp,
    y_size: usize,
    y_dynamics: &DMatrix<f64>,
) -> Result<ProductMdp> {
    if y_size < 2 {
        return Err(PveError::InvalidArgument(format!(
            "superfluous component needs at least 2 values, got {y_size}"
        )));
    }
    if y_dynamics.shape() != (y_size, y_size) {
        return Err(PveError::Shape(format!(
            "y kernel has shape {:?}, expected {y_size}x{y_size}",
            y_dynamics.shape()
        )));
    }
    let nx = base.n_states();
    let n = nx * y_size;
    let reward = DMatrix::from_fn(n, base.n_actions(), |s, a| base.reward()[(s / y_size, a)]);
    let transition = base
        .transitions()
        .iter()
        .map(|p| {
            DMatrix::from_fn(n, n, |s, t| {
                p[(s / y_size, t / y_size)] * y_dynamics[(s % y_size, t % y_size)]
            })
        })
        .collect();
    let mdp = TabularMdp::new(reward, transition, base.discount())?;
    Ok(ProductMdp {
        mdp,
        x_size: nx,
        y_size,
    })
}

/// Uniform kernel over `𝒴`.
pub fn uniform_kernel(y_size: usize) -> DMatrix<f64> {
    DMatrix::from_element(y_size, y_size, 1.0 / y_size as f64)
}

/// The model that keeps the environment's `x` dynamics and rewards but sends
/// `y` to `y0` deterministically.
pub fn build_y0_model(env: &ProductMdp, y0: usize) -> Result<TabularMdp> {
    let ny = env.y_size;
    if y0 >= ny {
        return Err(PveError::InvalidArgument(format!(
            "y0 = {y0} out of range for |Y| = {ny}"
        )));
    }
    let n = env.mdp.n_states();
    let transition = env
        .mdp
        .transitions()
        .iter()
        .map(|p| {
            DMatrix::from_fn(n, n, |s, t| {
                if t % ny != y0 {
                    return 0.0;
                }
                // x-marginal of the environment row
                let xt = t / ny;
                (0..ny).map(|y| p[(s, xt * ny + y)]).sum()
            })
        })
        .collect();
    TabularMdp::new(env.mdp.reward().clone(), transition, env.mdp.discount())
}

/// Action indices of the counterexample.
pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;

/// Discount used by the counterexample pair.
pub const COUNTEREXAMPLE_DISCOUNT: f64 = 0.9;

fn counterexample_pair(stay: f64) -> Result<(TabularMdp, TabularMdp)> {
    // states s1, s2, s3 = 0, 1, 2; L from s1 loops with reward 1, all else 0
    let left = DMatrix::from_row_slice(3, 3, &[1., 0., 0., 1., 0., 0., 0., 1., 0.]);
    let right_env = DMatrix::from_row_slice(3, 3, &[0., 1., 0., 0., 0., 1., 0., 0., 1.]);
    let mut right_model = right_env.clone();
    right_model[(1, 1)] = stay;
    right_model[(1, 2)] = 1.0 - stay;
    let reward = DMatrix::from_row_slice(3, 2, &[1., 0., 0., 0., 0., 0.]);
    let env = TabularMdp::new(
        reward.clone(),
        vec![left.clone(), right_env],
        COUNTEREXAMPLE_DISCOUNT,
    )?;
    let model = TabularMdp::new(reward, vec![left, right_model], COUNTEREXAMPLE_DISCOUNT)?;
    Ok((env, model))
}

/// All `|A|^|S|` deterministic policies, enumerated in lexicographic order.
pub fn all_deterministic_policies(n_states: usize, n_actions: usize) -> Vec<Policy> {
    let total = n_actions.pow(n_states as u32);
    (0..total)
        .map(|mut code| {
            let actions: Vec<usize> = (0..n_states)
                .map(|_| {
                    let a = code % n_actions;
                    code /= n_actions;
                    a
                })
                .collect();
            Policy::deterministic(&actions, n_actions).unwrap()
        })
        .collect()
}

/// Largest state-wise value gap between two MDPs under `policy`.
pub fn value_gap(env: &TabularMdp, model: &TabularMdp, policy: &Policy) -> Result<f64> {
    let v = env.evaluate(policy)?;
    let w = model.evaluate(policy)?;
    Ok((v.values() - w.values()).amax())
}

/// A 3-state, 2-action environment/model pair that agree on every
/// deterministic policy's values but not on the uniform policy's.
///
/// The pair differs only in action R from `s_2`: the environment moves to
/// `s_3`, the model stays in `s_2` with some probability. The split is chosen
/// from a few candidates and certified by exhaustive evaluation.
pub fn build_det_stoch_counterexample() -> Result<(TabularMdp, TabularMdp)> {
    for stay in [0.5, 0.25, 0.75, 1.0] {
        let (env, model) = counterexample_pair(stay)?;
        let mut det_ok = true;
        for pi in all_deterministic_policies(3, 2) {
            if value_gap(&env, &model, &pi)? >= 1e-10 {
                det_ok = false;
                break;
            }
        }
        let uniform_gap = value_gap(&env, &model, &Policy::uniform(3, 2))?;
        if det_ok && uniform_gap > 1e-8 {
            return Ok((env, model));
        }
    }
    Err(PveError::Internal(
        "no candidate counterexample passed certification".into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::StateFunction;
    use approx::assert_abs_diff_eq;

    #[test]
    fn four_rooms_shape() {
        let env = FourRooms::new(FourRoomsConfig::default()).unwrap();
        assert_eq!(env.mdp().n_states(), 104);
        assert_eq!(env.mdp().n_actions(), 4);
        assert_eq!(env.cell(env.goal_state()), (0, 10));
        assert_eq!(env.cell(env.bottom_right_state()), (10, 10));
    }

    #[test]
    fn four_rooms_deterministic_without_slip() {
        let mdp = build_four_rooms(0.0, 0.9).unwrap();
        for a in 0..4 {
            for s in 0..104 {
                let row = mdp.transition(a).row(s);
                assert_eq!(row.iter().filter(|&&p| p == 1.0).count(), 1);
            }
        }
    }

    #[test]
    fn four_rooms_intended_move_probability() {
        let env = FourRooms::new(FourRoomsConfig::default()).unwrap();
        // open cell with all four neighbours open
        let s = env.state_at(2, 2).unwrap();
        let right = env.state_at(2, 3).unwrap();
        assert_abs_diff_eq!(env.mdp().transition(1)[(s, right)], 0.85, epsilon = 1e-15);
        let exclusive = FourRooms::new(FourRoomsConfig {
            slip_mode: SlipMode::Exclusive,
            ..FourRoomsConfig::default()
        })
        .unwrap();
        assert_abs_diff_eq!(exclusive.mdp().transition(1)[(s, right)], 0.8, epsilon = 1e-15);
    }

    #[test]
    fn four_rooms_reward_is_goal_entry_probability() {
        let env = FourRooms::new(FourRoomsConfig::default()).unwrap();
        let goal = env.goal_state();
        let left_of_goal = env.state_at(0, 9).unwrap();
        // moving right from (0, 9) enters the goal with the intended probability
        assert_abs_diff_eq!(env.mdp().reward()[(left_of_goal, 1)], 0.85, epsilon = 1e-15);
        // far corner never reaches the goal in one step
        assert_eq!(env.mdp().reward()[(env.bottom_left_state(), 0)], 0.0);
        // staying at the goal by bumping into the wall also pays
        assert!(env.mdp().reward()[(goal, 0)] > 0.0);
    }

    #[test]
    fn four_rooms_moves_are_local() {
        let env = FourRooms::new(FourRoomsConfig::default()).unwrap();
        for a in 0..4 {
            let p = env.mdp().transition(a);
            for s in 0..104 {
                for t in 0..104 {
                    if p[(s, t)] > 0.0 {
                        assert!(env.is_grid_move(s, t));
                    }
                }
            }
        }
    }

    #[test]
    fn four_rooms_optimal_values_decrease_away_from_goal() {
        let env = FourRooms::new(FourRoomsConfig::default()).unwrap();
        let (v, pi) = env.mdp().policy_iteration().unwrap();
        let near = env.state_at(0, 9).unwrap();
        assert!(v[near] > v[env.bottom_left_state()]);
        let evaluated = env.mdp().evaluate(&pi).unwrap();
        assert!((evaluated.values() - v.values()).amax() < 1e-6);
        let greedy = env.mdp().greedy_policy(&v).unwrap();
        let v_greedy = env.mdp().evaluate(&greedy).unwrap();
        assert!((v_greedy.values() - v.values()).amax() < 1e-6);
        let (v_vi, _) = env.mdp().value_iteration(1e-10).unwrap();
        assert!((v_vi.values() - v.values()).amax() < 1e-6);
    }

    #[test]
    fn ring_returns_and_false_ring_rewards() {
        let spec = RingSpec::new(vec![1.0, 2.0, 3.0], 0.5).unwrap();
        assert_abs_diff_eq!(spec.n_step_return(0), 2.75, epsilon = 1e-15);
        let false_ring = build_false_ring(&spec).unwrap();
        assert_abs_diff_eq!(false_ring.reward()[(0, 0)], 11.0 / 7.0, epsilon = 1e-14);
        let pi = Policy::uniform(3, 1);
        let v_false = false_ring.evaluate(&pi).unwrap();
        let v_ring = build_ring(&spec).unwrap().evaluate(&pi).unwrap();
        assert_abs_diff_eq!(v_false[0], 22.0 / 7.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v_ring[0], 22.0 / 7.0, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_ring_is_its_own_false_ring() {
        let spec = RingSpec::new(vec![0.7], 0.5).unwrap();
        assert_eq!(build_ring(&spec).unwrap(), build_false_ring(&spec).unwrap());
    }

    #[test]
    fn indicator_ring_rewards_only_early_steps() {
        let spec = RingSpec::indicator(5, 2, 0.9).unwrap();
        let ring = build_ring(&spec).unwrap();
        let pi = Policy::uniform(5, 1);
        // reward collected on steps 3, 4, 5 from s1 is zero
        let three = ring.k_step_bellman(&pi, &StateFunction::zeros(5), 2).unwrap()[0];
        let five = ring.k_step_bellman(&pi, &StateFunction::zeros(5), 5).unwrap()[0];
        assert_abs_diff_eq!(three, five, epsilon = 1e-15);
        assert_abs_diff_eq!(three, 1.9, epsilon = 1e-15);
    }

    #[test]
    fn false_ring_rejects_zero_discount() {
        let spec = RingSpec::new(vec![1.0, 2.0], 0.0).unwrap();
        assert!(build_false_ring(&spec).is_err());
        assert!(RingSpec::new(vec![], 0.5).is_err());
    }

    #[test]
    fn product_flattening_round_trips() {
        let base = build_four_rooms(0.2, 0.9).unwrap();
        let prod = build_superfluous_product(&base, 3, &uniform_kernel(3)).unwrap();
        for s in 0..prod.mdp.n_states() {
            let f = prod.unflatten(s);
            assert_eq!(prod.flatten(f.x, f.y).index, s);
        }
        assert!(build_superfluous_product(&base, 1, &uniform_kernel(1)).is_err());
    }

    #[test]
    fn y0_models_differ_and_reject_out_of_range() {
        let base = build_ring(&RingSpec::new(vec![1.0, 0.0, 0.5], 0.8).unwrap()).unwrap();
        let prod = build_superfluous_product(&base, 2, &uniform_kernel(2)).unwrap();
        let m0 = build_y0_model(&prod, 0).unwrap();
        let m1 = build_y0_model(&prod, 1).unwrap();
        assert_ne!(m0.transitions(), m1.transitions());
        assert!(build_y0_model(&prod, 2).is_err());
    }

    #[test]
    fn counterexample_is_certified() {
        let (env, model) = build_det_stoch_counterexample().unwrap();
        assert_eq!(env.reward(), model.reward());
        assert_eq!(env.transition(LEFT), model.transition(LEFT));
        let diff = env.transition(RIGHT) - model.transition(RIGHT);
        let changed_rows: Vec<usize> = (0..3).filter(|&s| diff.row(s).amax() > 0.0).collect();
        assert_eq!(changed_rows, vec![1]);
        for pi in all_deterministic_policies(3, 2) {
            assert!(value_gap(&env, &model, &pi).unwrap() < 1e-10);
        }
        assert!(value_gap(&env, &model, &Policy::uniform(3, 2)).unwrap() > 1e-8);
    }

    #[test]
    fn enumerates_all_deterministic_policies() {
        let all = all_deterministic_policies(3, 2);
        assert_eq!(all.len(), 8);
        let mut seen: Vec<Vec<usize>> = all.iter().map(|p| p.actions().unwrap()).collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 8);
    }
}
