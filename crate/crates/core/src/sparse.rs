//! Sparse distributions over node orderings.
//!
//! Two operators map a score vector `theta` to a distribution with a small
//! support of orderings:
//!
//! * [`topk_sparsemax`]: the `k` best orderings from [`top_k`], weighted by the
//!   Euclidean projection of their scores (divided by `tau`) onto the simplex.
//! * [`SparseMapSolver`]: an active-set method whose marginal
//!   `sum_s alpha_s * rank(s)` is the Euclidean projection of `theta / tau`
//!   onto the permutahedron. The only combinatorial primitive it needs is
//!   sorting.
//!
//! Both come with [`backward_theta`], the exact gradient of
//! `sum_s alpha_s(theta) * loss_s` where the support is locally constant.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_len, Error, Result};
use crate::perm::{sort_oracle_warm, top_k, Permutation};

/// Weights below this are dropped from a support.
pub const PRUNE_THRESHOLD: f64 = 1e-12;
/// Default active-set iteration cap.
pub const DEFAULT_MAX_ITER: usize = 100;
/// Relative duality-gap tolerance of the active-set method.
pub const GAP_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorKind {
    #[serde(alias = "topk", alias = "sparsemax")]
    TopKSparsemax,
    #[serde(alias = "sparsemap")]
    SparseMap,
}

/// A probability distribution over a few orderings.
#[derive(Debug, Clone)]
pub struct SparseOrderDistribution {
    kind: OperatorKind,
    tau: f64,
    support: Vec<Permutation>,
    alpha: Vec<f64>,
    converged: bool,
    iterations: usize,
}

impl SparseOrderDistribution {
    /// Builds a distribution directly. Weights must be non-negative, sum to
    /// one within `1e-9`, and the support must be pairwise distinct.
    pub fn new(
        kind: OperatorKind,
        tau: f64,
        support: Vec<Permutation>,
        alpha: Vec<f64>,
    ) -> Result<Self> {
        check_len(support.len(), alpha.len())?;
        if support.is_empty() {
            return Err(Error::InvalidArgument("empty support".into()));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "tau must be > 0, got {tau}"
            )));
        }
        let d = support[0].len();
        if support.iter().any(|s| s.len() != d) {
            return Err(Error::InvalidArgument(
                "support orderings differ in length".into(),
            ));
        }
        if alpha.iter().any(|&a| a.is_nan() || a < 0.0) {
            return Err(Error::InvalidArgument("negative or NaN weight".into()));
        }
        let total: f64 = alpha.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("weights sum to {total}")));
        }
        let mut sorted: Vec<&Permutation> = support.iter().collect();
        sorted.sort();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument(
                "duplicate ordering in support".into(),
            ));
        }
        Ok(Self {
            kind,
            tau,
            support,
            alpha,
            converged: true,
            iterations: 0,
        })
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn support(&self) -> &[Permutation] {
        &self.support
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.support[0].len()
    }

    /// `false` when the active-set method hit its iteration cap.
    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// The highest-weight ordering (first one on ties).
    pub fn mode(&self) -> &Permutation {
        let mut best = 0;
        for (i, &a) in self.alpha.iter().enumerate() {
            if a > self.alpha[best] {
                best = i;
            }
        }
        &self.support[best]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Permutation, f64)> {
        self.support.iter().zip(self.alpha.iter().copied())
    }
}

/// Euclidean projection onto the probability simplex.
pub fn simplex_project(s: &[f64]) -> Vec<f64> {
    if s.is_empty() {
        return Vec::new();
    }
    let mut sorted = s.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut threshold = 0.0;
    for (i, &v) in sorted.iter().enumerate() {
        cumsum += v;
        let t = (cumsum - 1.0) / (i + 1) as f64;
        if v - t > 0.0 {
            threshold = t;
        } else {
            break;
        }
    }
    s.iter().map(|&v| (v - threshold).max(0.0)).collect()
}

/// Top-k sparsemax over orderings.
pub fn topk_sparsemax(theta: &[f64], k: usize, tau: f64) -> Result<SparseOrderDistribution> {
    check_tau(tau)?;
    let top = top_k(theta, k)?;
    let scaled: Vec<f64> = top.iter().map(|s| s.score / tau).collect();
    let alpha = simplex_project(&scaled);
    let (support, alpha): (Vec<_>, Vec<_>) = top
        .into_iter()
        .zip(alpha)
        .filter(|(_, a)| *a > PRUNE_THRESHOLD)
        .map(|(s, a)| (s.permutation, a))
        .unzip();
    Ok(SparseOrderDistribution {
        kind: OperatorKind::TopKSparsemax,
        tau,
        support,
        alpha,
        converged: true,
        iterations: 1,
    })
}

/// SparseMAP with a fresh solver; see [`SparseMapSolver`].
pub fn sparsemap(theta: &[f64], tau: f64, max_iter: usize) -> Result<SparseOrderDistribution> {
    SparseMapSolver::new(max_iter).solve(theta, tau)
}

/// Active-set SparseMAP solver over the permutahedron.
///
/// Keeps the last ordering returned by the sorting oracle and uses it as the
/// starting point of the next sort. This only affects speed: sorting is by
/// `(score, node index)`, a total order, so results are identical to a cold
/// start.
#[derive(Debug, Clone)]
pub struct SparseMapSolver {
    max_iter: usize,
    hint: Option<Permutation>,
}

impl SparseMapSolver {
    pub fn new(max_iter: usize) -> Self {
        Self {
            max_iter,
            hint: None,
        }
    }

    fn oracle(&mut self, direction: &[f64]) -> Permutation {
        let hint = self
            .hint
            .get_or_insert_with(|| Permutation::identity(direction.len()));
        sort_oracle_warm(direction, hint)
    }

    pub fn solve(&mut self, theta: &[f64], tau: f64) -> Result<SparseOrderDistribution> {
        check_tau(tau)?;
        check_finite(theta, "theta")?;
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        let d = theta.len();
        if d == 0 {
            return Err(Error::InvalidArgument("empty theta".into()));
        }
        let eta: Vec<f64> = theta.iter().map(|t| t / tau).collect();
        let scale = 1.0 + d as f64 + eta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tol = GAP_TOLERANCE * scale;

        let first = self.oracle(&eta);
        let mut active = vec![centered_ranks(&first)];
        let mut support = vec![first];
        let mut alpha = vec![1.0];
        let mut converged = false;
        let mut iterations = 0;

        while iterations < self.max_iter {
            iterations += 1;
            let beta = match restricted_solution(&active, &eta) {
                Some(b) => b,
                None => break,
            };
            if beta.iter().all(|&b| b >= -PRUNE_THRESHOLD) {
                alpha = beta.iter().map(|&b| b.max(0.0)).collect();
                let mu = combine(&active, &alpha);
                let direction: Vec<f64> = eta.iter().zip(&mu).map(|(e, m)| e - m).collect();
                let candidate = self.oracle(&direction);
                let cand_ranks = centered_ranks(&candidate);
                let gap: f64 = direction
                    .iter()
                    .zip(cand_ranks.iter().zip(&mu))
                    .map(|(g, (r, m))| g * (r - m))
                    .sum();
                if gap <= tol || support.contains(&candidate) {
                    converged = true;
                    break;
                }
                support.push(candidate);
                active.push(cand_ranks);
                alpha.push(0.0);
            } else {
                // Move toward beta until the first weight hits zero.
                let mut step = 1.0;
                let mut blocking = 0;
                for (i, (&a, &b)) in alpha.iter().zip(&beta).enumerate() {
                    if b < a && b < 0.0 {
                        let t = a / (a - b);
                        if t < step {
                            step = t;
                            blocking = i;
                        }
                    }
                }
                for (a, &b) in alpha.iter_mut().zip(&beta) {
                    *a += step * (b - *a);
                }
                alpha[blocking] = 0.0;
                let mut i = 0;
                while i < alpha.len() {
                    if alpha[i] <= PRUNE_THRESHOLD && alpha.len() > 1 {
                        alpha.remove(i);
                        support.remove(i);
                        active.remove(i);
                    } else {
                        i += 1;
                    }
                }
            }
        }

        let (support, alpha): (Vec<_>, Vec<_>) = support
            .into_iter()
            .zip(alpha)
            .filter(|(_, a)| *a > PRUNE_THRESHOLD)
            .unzip();
        let total: f64 = alpha.iter().sum();
        let alpha = alpha.into_iter().map(|a| a / total).collect();
        Ok(SparseOrderDistribution {
            kind: OperatorKind::SparseMap,
            tau,
            support,
            alpha,
            converged,
            iterations,
        })
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "tau must be > 0, got {tau}"
        )));
    }
    Ok(())
}

/// Rank vector minus its mean `(d + 1) / 2`, for better conditioning.
fn centered_ranks(p: &Permutation) -> Vec<f64> {
    let c = (p.len() as f64 + 1.0) / 2.0;
    p.ranks().into_iter().map(|r| r as f64 - c).collect()
}

fn combine(active: &[Vec<f64>], alpha: &[f64]) -> Vec<f64> {
    let d = active[0].len();
    let mut mu = vec![0.0; d];
    for (r, &a) in active.iter().zip(alpha) {
        for (m, v) in mu.iter_mut().zip(r) {
            *m += a * v;
        }
    }
    mu
}

/// Cholesky of the active-set Gram matrix plus `kappa * 11'`.
///
/// Centred vertices can be linearly dependent while affinely independent
/// (an ordering and its reverse are opposite vectors). The constant shift
/// restores definiteness and leaves every solution restricted to
/// `sum b = 1` unchanged.
fn gram_cholesky(active: &[Vec<f64>]) -> Option<Cholesky<f64, nalgebra::Dyn>> {
    let s = active.len();
    let kappa: f64 = active[0].iter().map(|v| v * v).sum::<f64>().max(1.0);
    let q = DMatrix::from_fn(s, s, |i, j| {
        kappa
            + active[i]
                .iter()
                .zip(&active[j])
                .map(|(a, b)| a * b)
                .sum::<f64>()
    });
    Cholesky::new(q)
}

/// Minimiser of `0.5 |M b|^2 - eta' M b` subject to `sum b = 1` over the
/// columns `M` in `active` (no sign constraint).
fn restricted_solution(active: &[Vec<f64>], eta: &[f64]) -> Option<Vec<f64>> {
    let s = active.len();
    let chol = gram_cholesky(active)?;
    let b = DVector::from_fn(s, |i, _| {
        active[i].iter().zip(eta).map(|(r, e)| r * e).sum()
    });
    let ones = DVector::from_element(s, 1.0);
    let zb = chol.solve(&b);
    let z1 = chol.solve(&ones);
    let denom = z1.sum();
    if denom.is_nan() || denom.abs() <= f64::EPSILON {
        return None;
    }
    let nu = (zb.sum() - 1.0) / denom;
    let beta = zb - z1 * nu;
    beta.iter()
        .all(|v| v.is_finite())
        .then(|| beta.iter().copied().collect())
}

/// Expected rank vector `sum_s alpha_s * rank(s)`.
pub fn marginal(dist: &SparseOrderDistribution) -> Vec<f64> {
    let d = dist.dim();
    let mut mu = vec![0.0; d];
    for (p, a) in dist.iter() {
        for (m, r) in mu.iter_mut().zip(p.ranks()) {
            *m += a * r as f64;
        }
    }
    mu
}

/// Gradient in `theta` of `sum_s alpha_s(theta) * losses[s]`, with `losses`
/// aligned to `dist.support()`.
pub fn backward_theta(dist: &SparseOrderDistribution, losses: &[f64]) -> Result<Vec<f64>> {
    check_len(dist.len(), losses.len())?;
    check_finite(losses, "losses")?;
    let d = dist.dim();
    let s = dist.len();
    let mut grad = vec![0.0; d];
    if s < 2 {
        return Ok(grad);
    }
    // Both operators reduce to `grad = (1/tau) * sum_s c_s * rank(s)` with
    // coefficients c summing to zero.
    let coeffs: Vec<f64> = match dist.kind {
        OperatorKind::TopKSparsemax => {
            let mean = losses.iter().sum::<f64>() / s as f64;
            losses.iter().map(|l| l - mean).collect()
        }
        OperatorKind::SparseMap => {
            let active: Vec<Vec<f64>> = dist.support.iter().map(centered_ranks).collect();
            let chol = gram_cholesky(&active).ok_or_else(|| {
                Error::Numeric("singular active-set Gram matrix in backward pass".into())
            })?;
            let l = DVector::from_column_slice(losses);
            let zl = chol.solve(&l);
            let z1 = chol.solve(&DVector::from_element(s, 1.0));
            let c = &zl - &z1 * (z1.dot(&l) / z1.sum());
            c.iter().copied().collect()
        }
    };
    let centre = (d as f64 + 1.0) / 2.0;
    for (p, c) in dist.support.iter().zip(coeffs) {
        for (g, r) in grad.iter_mut().zip(p.ranks()) {
            *g += c * (r as f64 - centre) / dist.tau;
        }
    }
    Ok(grad)
}
