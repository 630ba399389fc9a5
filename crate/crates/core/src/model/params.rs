use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{PveError, Result};
use crate::mdp::TabularMdp;

/// Capacity of the transition model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rank {
    /// One unconstrained logit matrix per action.
    Full,
    /// `P_a = D_a K_a` with row-stochastic `D_a` (`|S| × r`) and `K_a` (`r × |S|`).
    Low(usize),
}

impl Rank {
    pub fn label(&self) -> String {
        match self {
            Rank::Full => "full".to_string(),
            Rank::Low(r) => r.to_string(),
        }
    }
}

/// Unconstrained parameters of a learnable tabular model.
///
/// Parameters live in a list of blocks: the reward matrix first, then per
/// action either one `|S| × |S|` logit matrix (full rank) or the two factor
/// logit matrices `D_a`, `K_a` (low rank). Gradients and optimizer moments use
/// the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    n_states: usize,
    n_actions: usize,
    rank: Rank,
    discount: f64,
    blocks: Vec<DMatrix<f64>>,
}

pub(crate) fn softmax_rows(logits: &DMatrix<f64>) -> DMatrix<f64> {
    let (rows, cols) = logits.shape();
    let mut out = DMatrix::zeros(rows, cols);
    let mut buf = vec![0.0; cols];
    for r in 0..rows {
        let mut max = f64::NEG_INFINITY;
        for c in 0..cols {
            max = max.max(logits[(r, c)]);
        }
        let mut total = 0.0;
        for (c, b) in buf.iter_mut().enumerate() {
            *b = (logits[(r, c)] - max).exp();
            total += *b;
        }
        for (c, b) in buf.iter().enumerate() {
            out[(r, c)] = b / total;
        }
    }
    out
}

/// Backward pass of a row softmax: `dz = p ∘ (dp − ⟨p, dp⟩)` per row.
pub(crate) fn softmax_rows_backward(p: &DMatrix<f64>, dp: &DMatrix<f64>) -> DMatrix<f64> {
    let (rows, cols) = p.shape();
    let mut out = DMatrix::zeros(rows, cols);
    for r in 0..rows {
        let mut inner = 0.0;
        for c in 0..cols {
            inner += p[(r, c)] * dp[(r, c)];
        }
        for c in 0..cols {
            out[(r, c)] = p[(r, c)] * (dp[(r, c)] - inner);
        }
    }
    out
}

impl ModelParams {
    /// Random initialization: rewards `U(−1, 1)`, every logit `U(−5, 5)`.
    pub fn init<R: Rng + ?Sized>(
        n_states: usize,
        n_actions: usize,
        rank: Rank,
        discount: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut params = Self::zeros(n_states, n_actions, rank, discount)?;
        let (reward, logits) = params.blocks.split_first_mut().unwrap();
        reward.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
        for block in logits {
            block.iter_mut().for_each(|x| *x = rng.gen_range(-5.0..5.0));
        }
        Ok(params)
    }

    /// All-zero parameters (uniform transitions, zero rewards).
    pub fn zeros(n_states: usize, n_actions: usize, rank: Rank, discount: f64) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(PveError::InvalidArgument("empty state or action space".into()));
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(PveError::InvalidArgument(format!("discount {discount} outside [0, 1)")));
        }
        let mut blocks = vec![DMatrix::zeros(n_states, n_actions)];
        match rank {
            Rank::Full => {
                for _ in 0..n_actions {
                    blocks.push(DMatrix::zeros(n_states, n_states));
                }
            }
            Rank::Low(r) => {
                if r == 0 || r > n_states {
                    return Err(PveError::InvalidArgument(format!(
                        "rank {r} outside [1, {n_states}]"
                    )));
                }
                for _ in 0..n_actions {
                    blocks.push(DMatrix::zeros(n_states, r));
                    blocks.push(DMatrix::zeros(r, n_states));
                }
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            rank,
            discount,
            blocks,
        })
    }

    /// Same shape as `self`, all zeros.
    pub fn zeros_like(&self) -> Self {
        Self {
            blocks: self
                .blocks
                .iter()
                .map(|b| DMatrix::zeros(b.nrows(), b.ncols()))
                .collect(),
            ..self.clone()
        }
    }

    /// Full-rank parameters whose realization has the given rewards and
    /// transitions, up to the precision of `log`. Zero probabilities map to a
    /// large negative logit.
    pub fn from_mdp(mdp: &TabularMdp) -> Self {
        let mut blocks = vec![mdp.reward().clone()];
        for p in mdp.transitions() {
            blocks.push(p.map(|x| if x > 0.0 { x.ln() } else { -60.0 }));
        }
        Self {
            n_states: mdp.n_states(),
            n_actions: mdp.n_actions(),
            rank: Rank::Full,
            discount: mdp.discount(),
            blocks,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn rank(&self) -> Rank {
        self.rank
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn reward(&self) -> &DMatrix<f64> {
        &self.blocks[0]
    }

    pub fn reward_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.blocks[0]
    }

    /// Logits of `P_a` (full rank only).
    pub fn logits(&self, a: usize) -> Option<&DMatrix<f64>> {
        match self.rank {
            Rank::Full => Some(&self.blocks[1 + a]),
            Rank::Low(_) => None,
        }
    }

    /// Logits of `(D_a, K_a)` (low rank only).
    pub fn factor_logits(&self, a: usize) -> Option<(&DMatrix<f64>, &DMatrix<f64>)> {
        match self.rank {
            Rank::Full => None,
            Rank::Low(_) => Some((&self.blocks[1 + 2 * a], &self.blocks[2 + 2 * a])),
        }
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [DMatrix<f64>] {
        &mut self.blocks
    }

    pub(crate) fn set_blocks(&mut self, blocks: Vec<DMatrix<f64>>) {
        debug_assert_eq!(blocks.len(), self.blocks.len());
        self.blocks = blocks;
    }

    pub fn n_params(&self) -> usize {
        self.blocks.iter().map(|b| b.len()).sum()
    }

    /// Every parameter, block by block in column-major order.
    pub fn flat(&self) -> Vec<f64> {
        self.blocks.iter().flat_map(|b| b.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.n_params() {
            return Err(PveError::Shape(format!(
                "{} values for {} parameters",
                values.len(),
                self.n_params()
            )));
        }
        let mut offset = 0;
        for b in &mut self.blocks {
            let n = b.len();
            b.as_mut_slice().copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    pub fn norm(&self) -> f64 {
        self.blocks.iter().map(|b| b.norm_squared()).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.iter().all(|b| b.iter().all(|x| x.is_finite()))
    }

    /// Row-stochastic factors `(D_a, K_a)` per action (low rank only).
    pub fn factors(&self) -> Option<Vec<(DMatrix<f64>, DMatrix<f64>)>> {
        match self.rank {
            Rank::Full => None,
            Rank::Low(_) => Some(
                (0..self.n_actions)
                    .map(|a| {
                        let (d, k) = self.factor_logits(a).unwrap();
                        (softmax_rows(d), softmax_rows(k))
                    })
                    .collect(),
            ),
        }
    }

    /// Per-action transition matrices of the realized model.
    pub fn transition_matrices(&self) -> Vec<DMatrix<f64>> {
        match self.rank {
            Rank::Full => (0..self.n_actions)
                .map(|a| softmax_rows(self.logits(a).unwrap()))
                .collect(),
            Rank::Low(_) => self
                .factors()
                .unwrap()
                .into_iter()
                .map(|(d, k)| d * k)
                .collect(),
        }
    }

    /// The tabular MDP these parameters describe.
    pub fn realize(&self) -> Result<TabularMdp> {
        TabularMdp::new(self.reward().clone(), self.transition_matrices(), self.discount)
    }
}

/// Random initialization from a seed.
pub fn init_params(
    n_states: usize,
    n_actions: usize,
    rank: Rank,
    discount: f64,
    seed: u64,
) -> Result<ModelParams> {
    let mut rng = crate::rng::stream_rng(seed, "model-init", 0);
    ModelParams::init(n_states, n_actions, rank, discount, &mut rng)
}

/// Realize parameters into a tabular MDP.
pub fn realize_model(params: &ModelParams) -> Result<TabularMdp> {
    params.realize()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn init_is_deterministic_and_in_range() {
        let a = init_params(10, 3, Rank::Full, 0.9, 4).unwrap();
        let b = init_params(10, 3, Rank::Full, 0.9, 4).unwrap();
        assert_eq!(a, b);
        assert!(a.reward().iter().all(|x| x.abs() < 1.0));
        for blk in &a.blocks()[1..] {
            assert!(blk.iter().all(|x| x.abs() < 5.0));
        }
        let c = init_params(10, 3, Rank::Full, 0.9, 5).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn low_rank_realization_has_bounded_rank() {
        let params = init_params(10, 2, Rank::Low(2), 0.9, 1).unwrap();
        for p in params.transition_matrices() {
            let sv = p.singular_values();
            let mut sorted: Vec<f64> = sv.iter().copied().collect();
            sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
            assert!(sorted[2..].iter().all(|&s| s < 1e-8), "{sorted:?}");
        }
        params.realize().unwrap();
    }

    #[test]
    fn invalid_rank_rejected() {
        assert!(init_params(4, 2, Rank::Low(0), 0.9, 0).is_err());
        assert!(init_params(4, 2, Rank::Low(5), 0.9, 0).is_err());
    }

    #[test]
    fn zero_logits_realize_uniform_rows() {
        let params = ModelParams::zeros(3, 2, Rank::Full, 0.9).unwrap();
        let mdp = params.realize().unwrap();
        for a in 0..2 {
            for x in mdp.transition(a).iter() {
                assert_abs_diff_eq!(*x, 1.0 / 3.0, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn saturated_logits() {
        let logits = DMatrix::from_row_slice(1, 2, &[10.0, -10.0]);
        let p = softmax_rows(&logits);
        assert_abs_diff_eq!(p[(0, 0)], 1.0, epsilon = 1e-4);
        assert_abs_diff_eq!(p[(0, 1)], 0.0, epsilon = 1e-4);
    }

    #[test]
    fn from_mdp_round_trips() {
        let mdp = crate::env::build_four_rooms(0.2, 0.9).unwrap();
        let back = ModelParams::from_mdp(&mdp).realize().unwrap();
        for a in 0..4 {
            assert!((back.transition(a) - mdp.transition(a)).amax() < 1e-14);
        }
        assert_eq!(back.reward(), mdp.reward());
    }

    #[test]
    fn flat_round_trip() {
        let mut p = init_params(3, 2, Rank::Low(2), 0.5, 9).unwrap();
        let flat = p.flat();
        assert_eq!(flat.len(), 3 * 2 + 2 * (3 * 2 + 2 * 3));
        let orig = p.clone();
        p.set_flat(&flat).unwrap();
        assert_eq!(p, orig);
    }
}
