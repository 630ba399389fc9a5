use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{PveError, Result};
use crate::mdp::TabularMdp;

/// A realized model flattened to one vector, with its origin.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelVector {
    pub entries: DVector<f64>,
    pub run_id: String,
    pub snapshot: usize,
}

/// Length of the vector form of an `n_states × n_actions` model.
pub fn vector_len(n_states: usize, n_actions: usize) -> usize {
    n_states * n_actions + n_actions * n_states * n_states
}

/// Rewards row-major, then transitions action-major and row-major.
pub fn vectorize_model(model: &TabularMdp) -> DVector<f64> {
    let (ns, na) = (model.n_states(), model.n_actions());
    let mut out = Vec::with_capacity(vector_len(ns, na));
    for s in 0..ns {
        for a in 0..na {
            out.push(model.reward()[(s, a)]);
        }
    }
    for p in model.transitions() {
        for s in 0..ns {
            for t in 0..ns {
                out.push(p[(s, t)]);
            }
        }
    }
    DVector::from_vec(out)
}

/// Inverse of [`vectorize_model`].
pub fn devectorize_model(
    entries: &[f64],
    n_states: usize,
    n_actions: usize,
    discount: f64,
) -> Result<TabularMdp> {
    if entries.len() != vector_len(n_states, n_actions) {
        return Err(PveError::Shape(format!(
            "{} entries for a {n_states}x{n_actions} model",
            entries.len()
        )));
    }
    let reward = DMatrix::from_row_slice(n_states, n_actions, &entries[..n_states * n_actions]);
    let mut offset = n_states * n_actions;
    let mut transition = Vec::with_capacity(n_actions);
    for _ in 0..n_actions {
        let block = &entries[offset..offset + n_states * n_states];
        transition.push(DMatrix::from_row_slice(n_states, n_states, block));
        offset += n_states * n_states;
    }
    TabularMdp::new(reward, transition, discount)
}

/// Principal-component projection of a set of vectors.
#[derive(Debug, Clone)]
pub struct Projection {
    /// One row per input vector.
    pub points: DMatrix<f64>,
    /// Variance captured by each component.
    pub variances: Vec<f64>,
    /// Unit principal directions as columns.
    pub loadings: DMatrix<f64>,
}

/// Center the vectors and project them on the top `dims` principal directions.
///
/// Uses the eigendecomposition of the `N × N` Gram matrix, which is cheap when
/// there are far fewer vectors than coordinates. Each direction's sign is
/// chosen so its largest-magnitude loading is positive.
pub fn pca_project(vectors: &[DVector<f64>], dims: usize) -> Result<Projection> {
    let n = vectors.len();
    if n < 2 {
        return Err(PveError::InvalidArgument("PCA needs at least 2 vectors".into()));
    }
    if n < dims {
        return Err(PveError::InvalidArgument(format!(
            "{n} vectors cannot span {dims} components"
        )));
    }
    let d = vectors[0].len();
    if vectors.iter().any(|v| v.len() != d) {
        return Err(PveError::Shape("vectors differ in length".into()));
    }
    let mut mean = DVector::zeros(d);
    for v in vectors {
        mean += v;
    }
    mean /= n as f64;
    let mut x = DMatrix::zeros(d, n);
    for (i, v) in vectors.iter().enumerate() {
        x.column_mut(i).copy_from(&(v - &mean));
    }
    let gram = x.tr_mul(&x);
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let scale = eig.eigenvalues.iter().fold(0.0f64, |m, &l| m.max(l.abs())).max(1e-300);
    let mut points = DMatrix::zeros(n, dims);
    let mut loadings = DMatrix::zeros(d, dims);
    let mut variances = Vec::with_capacity(dims);
    for (j, &idx) in order.iter().take(dims).enumerate() {
        let lambda = eig.eigenvalues[idx].max(0.0);
        variances.push(lambda / (n - 1) as f64);
        if lambda <= 1e-13 * scale {
            continue;
        }
        let sigma = lambda.sqrt();
        let u = eig.eigenvectors.column(idx);
        let mut dir = &x * u / sigma;
        let pivot = dir.iter().enumerate().fold((0, 0.0f64), |(bi, bv), (i, &v)| {
            if v.abs() > bv.abs() {
                (i, v)
            } else {
                (bi, bv)
            }
        });
        if pivot.1 < 0.0 {
            dir.neg_mut();
        }
        let proj = x.tr_mul(&dir);
        points.column_mut(j).copy_from(&proj);
        loadings.column_mut(j).copy_from(&dir);
    }
    Ok(Projection {
        points,
        variances,
        loadings,
    })
}

/// Largest pairwise Euclidean distance between rows.
pub fn diameter(points: &DMatrix<f64>) -> Result<f64> {
    if points.nrows() == 0 {
        return Err(PveError::InvalidArgument("diameter of an empty set".into()));
    }
    let mut best = 0.0f64;
    for i in 0..points.nrows() {
        for j in (i + 1)..points.nrows() {
            best = best.max((points.row(i) - points.row(j)).norm());
        }
    }
    Ok(best)
}

/// Largest pairwise Euclidean distance between vectors.
pub fn diameter_of(vectors: &[DVector<f64>]) -> Result<f64> {
    if vectors.is_empty() {
        return Err(PveError::InvalidArgument("diameter of an empty set".into()));
    }
    let mut best = 0.0f64;
    for i in 0..vectors.len() {
        for j in (i + 1)..vectors.len() {
            best = best.max((&vectors[i] - &vectors[j]).norm());
        }
    }
    Ok(best)
}
