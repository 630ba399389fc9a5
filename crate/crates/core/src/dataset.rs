//! Collections of `(policy, function)` pairs consumed by the losses.

use crate::error::{PveError, Result};
use crate::mdp::{Policy, StateFunction, TabularMdp};

/// What the functions in a dataset stand for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetSemantics {
    /// Arbitrary functions `v ∈ 𝕍`, used by order-k VE losses.
    ArbitraryFunctions,
    /// Exact value functions `v_π` of the paired policies.
    ExactValues,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyValueDataset {
    pairs: Vec<(Policy, StateFunction)>,
    semantics: DatasetSemantics,
}

impl PolicyValueDataset {
    pub fn new(pairs: Vec<(Policy, StateFunction)>, semantics: DatasetSemantics) -> Result<Self> {
        if let Some((p0, _)) = pairs.first() {
            let (ns, na) = (p0.n_states(), p0.n_actions());
            for (i, (p, v)) in pairs.iter().enumerate() {
                if p.n_states() != ns || p.n_actions() != na || v.len() != ns {
                    return Err(PveError::Shape(format!("pair {i} does not match pair 0")));
                }
            }
        }
        Ok(Self { pairs, semantics })
    }

    pub fn pairs(&self) -> &[(Policy, StateFunction)] {
        &self.pairs
    }

    pub fn into_pairs(self) -> Vec<(Policy, StateFunction)> {
        self.pairs
    }

    pub fn semantics(&self) -> DatasetSemantics {
        self.semantics
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn n_states(&self) -> Option<usize> {
        self.pairs.first().map(|(p, _)| p.n_states())
    }

    pub fn n_actions(&self) -> Option<usize> {
        self.pairs.first().map(|(p, _)| p.n_actions())
    }

    /// The first `n` pairs, keeping the semantics.
    pub fn head(&self, n: usize) -> Self {
        Self {
            pairs: self.pairs.iter().take(n).cloned().collect(),
            semantics: self.semantics,
        }
    }

    /// Check that every label is the exact value of its policy under `env`.
    pub fn validate_values(&self, env: &TabularMdp, tol: f64) -> Result<()> {
        if self.semantics != DatasetSemantics::ExactValues {
            return Err(PveError::InvalidArgument("dataset is not value-labeled".into()));
        }
        for (i, (pi, v)) in self.pairs.iter().enumerate() {
            let exact = env.evaluate(pi)?;
            let err = (exact.values() - v.values()).amax();
            if err > tol {
                return Err(PveError::InvalidArgument(format!(
                    "pair {i}: label differs from v_pi by {err:e}"
                )));
            }
        }
        Ok(())
    }
}
