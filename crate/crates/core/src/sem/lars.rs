//! Least angle regression with the lasso modification, run on centred
//! cross-products, and BIC model selection along the path.

use nalgebra::{DMatrix, DVector};

use super::{FinalGraph, Moments};
use crate::data::Dataset;
use crate::error::{check_len, Result};
use crate::graph::EdgeMask;

/// Breakpoints of a lasso path, starting from the all-zero model.
#[derive(Debug, Clone, PartialEq)]
pub struct LarsPath {
    pub coefs: Vec<DVector<f64>>,
    /// Predictors skipped because they were linearly dependent on the
    /// active set.
    pub dropped_dependent: Vec<usize>,
}

fn sub_gram(g: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |a, b| g[(idx[a], idx[b])])
}

/// Cholesky of the active Gram block, rejecting near-singular blocks.
fn stable_cholesky(
    g: &DMatrix<f64>,
    idx: &[usize],
) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let block = sub_gram(g, idx);
    let chol = block.clone().cholesky()?;
    let l = chol.l_dirty();
    let ok = (0..idx.len()).all(|k| {
        let pivot = l[(k, k)] * l[(k, k)];
        pivot > 1e-10 * block[(k, k)].max(f64::MIN_POSITIVE)
    });
    ok.then_some(chol)
}

/// Computes the lasso path for the regression with Gram matrix `gram`
/// (`X'X` of the predictors) and correlations `xty` (`X'y`).
pub fn lars_path(gram: &DMatrix<f64>, xty: &DVector<f64>) -> LarsPath {
    let p = xty.len();
    let mut beta = DVector::zeros(p);
    let mut coefs = vec![beta.clone()];
    let mut dropped_dependent = Vec::new();
    if p == 0 {
        return LarsPath {
            coefs,
            dropped_dependent,
        };
    }
    let max_diag = gram.diagonal().iter().cloned().fold(0.0, f64::max);
    let tol = 1e-12 * max_diag.max(xty.amax()).max(f64::MIN_POSITIVE);
    let mut active: Vec<usize> = Vec::new();
    let mut in_active = vec![false; p];
    let mut excluded = vec![false; p];
    let mut corr = xty.clone();
    let mut pending: Option<usize> = None;
    let mut first = true;

    for _ in 0..(8 * p + 8) {
        let entering = if first {
            first = false;
            (0..p)
                .filter(|&j| !in_active[j])
                .max_by(|&a, &b| corr[a].abs().total_cmp(&corr[b].abs()).then(b.cmp(&a)))
        } else {
            pending.take()
        };
        if let Some(j) = entering {
            if corr[j].abs() <= tol {
                break;
            }
            active.push(j);
            if stable_cholesky(gram, &active).is_some() {
                in_active[j] = true;
            } else {
                active.pop();
                excluded[j] = true;
                dropped_dependent.push(j);
            }
        }
        if active.is_empty() {
            // the strongest predictor was dependent: try the next one
            let next = (0..p)
                .filter(|&j| !in_active[j] && !excluded[j])
                .max_by(|&a, &b| corr[a].abs().total_cmp(&corr[b].abs()).then(b.cmp(&a)));
            match next {
                Some(j) if corr[j].abs() > tol => {
                    pending = Some(j);
                    continue;
                }
                _ => break,
            }
        }
        let c_max = active.iter().map(|&k| corr[k].abs()).fold(0.0, f64::max);
        if c_max <= tol {
            break;
        }
        let Some(chol) = stable_cholesky(gram, &active) else {
            break;
        };
        let signs = DVector::from_iterator(active.len(), active.iter().map(|&k| corr[k].signum()));
        let w = chol.solve(&signs);
        let norm = signs.dot(&w);
        if norm <= 0.0 {
            break;
        }
        let aa = 1.0 / norm.sqrt();
        let u = w * aa;
        let mut a = DVector::zeros(p);
        for (idx, &k) in active.iter().enumerate() {
            a += gram.column(k) * u[idx];
        }

        let full = c_max / aa;
        let eps = 1e-12 * full;
        let mut gamma = full;
        let mut enter = None;
        for j in 0..p {
            if in_active[j] || excluded[j] {
                continue;
            }
            for cand in [
                (c_max - corr[j]) / (aa - a[j]),
                (c_max + corr[j]) / (aa + a[j]),
            ] {
                if cand.is_finite() && cand > eps && cand < gamma {
                    gamma = cand;
                    enter = Some(j);
                }
            }
        }
        let mut drop = None;
        for (idx, &k) in active.iter().enumerate() {
            if u[idx] != 0.0 {
                let t = -beta[k] / u[idx];
                if t > eps && t < gamma {
                    gamma = t;
                    drop = Some(idx);
                    enter = None;
                }
            }
        }
        for (idx, &k) in active.iter().enumerate() {
            beta[k] += gamma * u[idx];
        }
        if let Some(idx) = drop {
            let k = active.remove(idx);
            in_active[k] = false;
            beta[k] = 0.0;
        }
        corr = xty - gram * &beta;
        coefs.push(beta.clone());
        match (drop, enter) {
            (Some(_), _) => {}
            (None, Some(j)) => pending = Some(j),
            (None, None) => break,
        }
    }
    LarsPath {
        coefs,
        dropped_dependent,
    }
}

/// Index of the path point with the smallest
/// `n log(RSS/n) + log(n) * df`; ties go to the earlier (sparser) point.
pub fn select_bic(
    path: &LarsPath,
    gram: &DMatrix<f64>,
    xty: &DVector<f64>,
    yty: f64,
    n: usize,
) -> usize {
    let nf = n as f64;
    let floor = (1e-14 * yty).max(f64::MIN_POSITIVE);
    let mut best = (0, f64::INFINITY);
    for (idx, beta) in path.coefs.iter().enumerate() {
        let rss = yty - 2.0 * beta.dot(xty) + beta.dot(&(gram * beta));
        let df = beta.iter().filter(|v| **v != 0.0).count() as f64;
        let bic = nf * (rss.max(floor) / nf).ln() + nf.ln() * df;
        if bic < best.1 {
            best = (idx, bic);
        }
    }
    best.0
}

/// Per-column LARS over the admissible parents of each node with BIC
/// selection. Expects standardized columns.
pub fn fit_lars(data: &Dataset, mask: &EdgeMask) -> Result<FinalGraph> {
    check_len(data.d(), mask.dim())?;
    Ok(fit_lars_with(&Moments::new(data), mask))
}

/// Absolute least-squares coefficients, used as adaptive lasso weights.
/// Rank-deficient blocks use the minimum-norm solution.
fn ols_magnitudes(gram: &DMatrix<f64>, xty: &DVector<f64>) -> DVector<f64> {
    let max_diag = gram.diagonal().iter().cloned().fold(0.0, f64::max);
    let beta = gram
        .clone()
        .cholesky()
        .map(|c| c.solve(xty))
        .filter(|b| b.iter().all(|v| v.is_finite()))
        .or_else(|| {
            gram.clone()
                .svd(true, true)
                .solve(xty, 1e-10 * max_diag)
                .ok()
        })
        .unwrap_or_else(|| DVector::zeros(xty.len()));
    beta.map(f64::abs)
}

/// Adaptive lasso: each predictor is rescaled by its least-squares
/// magnitude before the LARS path, so strong parents are barely shrunk.
pub fn fit_lars_with(moments: &Moments, mask: &EdgeMask) -> FinalGraph {
    let d = moments.d();
    let g = moments.centered();
    let mut weights = DMatrix::zeros(d, d);
    for j in 0..d {
        let preds = mask.allowed_parents(j);
        if preds.is_empty() {
            continue;
        }
        let gram = sub_gram(&g, &preds);
        let xty = DVector::from_iterator(preds.len(), preds.iter().map(|&i| g[(i, j)]));
        let scale = ols_magnitudes(&gram, &xty);
        let gram = DMatrix::from_fn(preds.len(), preds.len(), |a, b| {
            scale[a] * scale[b] * gram[(a, b)]
        });
        let xty = xty.component_mul(&scale);
        let path = lars_path(&gram, &xty);
        let best = select_bic(&path, &gram, &xty, g[(j, j)], moments.n());
        for (idx, &i) in preds.iter().enumerate() {
            weights[(i, j)] = path.coefs[best][idx] * scale[idx];
        }
    }
    FinalGraph::from_weights(weights)
}
