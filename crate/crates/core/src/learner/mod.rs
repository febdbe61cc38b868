//! Training loops over sparse ordering distributions.
//!
//! * Joint: `theta` and one shared set of L0 edge parameters descend the
//!   expected loss together.
//! * Bilevel: every ordering in the support gets its own inner fit; the
//!   outer loop only sees the achieved losses.

mod bilevel;
mod joint;

pub use bilevel::{
    fit_bilevel, fit_bilevel_with, BilevelFit, InnerSolution, InnerSolver, L0Inner, LarsInner,
};
pub use joint::{fit_joint, JointFit};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::graph::{Adjacency, EdgeMask};
use crate::perm::{factorial, sort_oracle, Permutation};
use crate::seed::{self, stream};
use crate::sem::{
    finalize_l0, fit_l0_moments, fit_lars_with, EdgeParameters, EstimatorKind, FinalGraph,
    L0Config, LossKind, Moments,
};
use crate::sparse::{topk_sparsemax, OperatorKind, SparseMapSolver, SparseOrderDistribution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Joint,
    Bilevel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThetaInit {
    #[default]
    Zeros,
    Variances,
}

/// Hyperparameters of both regimes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerConfig {
    pub operator: OperatorKind,
    /// Support size `k` for top-k sparsemax; iteration cap for SparseMAP.
    pub k: usize,
    pub tau: f64,
    pub lambda: f64,
    pub l2_theta: f64,
    pub l2_phi: f64,
    pub lr_outer: f64,
    pub lr_inner: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub estimator: EstimatorKind,
    pub regime: Regime,
    pub theta_init: ThetaInit,
    pub seed: u64,
    pub loss: LossKind,
    pub standardize: bool,
    pub pi_init: f64,
    /// Early stopping window, in outer iterations.
    pub patience: usize,
    /// Relative improvement over one window below which training stops.
    pub tolerance: f64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            operator: OperatorKind::TopKSparsemax,
            k: 100,
            tau: 1.0,
            lambda: 0.01,
            l2_theta: 0.0005,
            l2_phi: 0.0005,
            lr_outer: 0.05,
            lr_inner: 0.01,
            max_outer: 5000,
            max_inner: 1000,
            estimator: EstimatorKind::LinearL0,
            regime: Regime::Joint,
            theta_init: ThetaInit::Zeros,
            seed: 0,
            loss: LossKind::GaussianEv,
            standardize: true,
            pi_init: 0.1,
            patience: 100,
            tolerance: 1e-5,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "{name} must be > 0, got {v}"
        )))
    }
}

fn non_negative(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "{name} must be >= 0, got {v}"
        )))
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        positive("tau", self.tau)?;
        positive("lr_outer", self.lr_outer)?;
        positive("lr_inner", self.lr_inner)?;
        non_negative("lambda", self.lambda)?;
        non_negative("l2_theta", self.l2_theta)?;
        non_negative("l2_phi", self.l2_phi)?;
        non_negative("tolerance", self.tolerance)?;
        if self.k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.pi_init) {
            return Err(Error::InvalidArgument(format!(
                "pi_init must lie in [0, 1], got {}",
                self.pi_init
            )));
        }
        if self.regime == Regime::Joint && self.estimator != EstimatorKind::LinearL0 {
            return Err(Error::InvalidArgument(
                "the joint regime needs a differentiable estimator (linear L0)".into(),
            ));
        }
        Ok(())
    }

    /// Inner L0 settings derived from this configuration.
    pub fn l0(&self, seed: u64) -> L0Config {
        L0Config {
            lambda: self.lambda,
            lr: self.lr_inner,
            epochs: self.max_inner,
            seed,
            loss: self.loss,
            l2: self.l2_phi,
            pi_init: self.pi_init,
            early_stop: true,
        }
    }
}

/// Initial score vector: zeros, or the unbiased variances of the raw data.
pub fn init_theta(data: &Dataset, mode: ThetaInit) -> Vec<f64> {
    match mode {
        ThetaInit::Zeros => vec![0.0; data.d()],
        ThetaInit::Variances => data.column_variances(),
    }
}

/// Produces the sparse ordering distribution for `theta`. `k` is capped at
/// `d!` for top-k sparsemax.
pub(crate) fn distribution(
    theta: &[f64],
    config: &LearnerConfig,
    solver: &mut SparseMapSolver,
) -> Result<SparseOrderDistribution> {
    match config.operator {
        OperatorKind::TopKSparsemax => {
            let k = factorial(theta.len()).map_or(config.k, |f| config.k.min(f));
            topk_sparsemax(theta, k, config.tau)
        }
        OperatorKind::SparseMap => solver.solve(theta, config.tau),
    }
}

pub(crate) fn theta_hash(theta: &[f64]) -> u64 {
    seed::hash_words(theta.iter().map(|v| v.to_bits()))
}

pub(crate) fn prepared(data: &Dataset, config: &LearnerConfig) -> Dataset {
    if config.standardize {
        data.standardized()
    } else {
        data.clone()
    }
}

/// One outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    /// Outer objective (expected loss under the ordering distribution, with
    /// the L0 penalty in the joint regime).
    pub loss: f64,
    pub support_size: usize,
    pub mode: Vec<usize>,
    pub theta_hash: u64,
    /// Every graph evaluated in this iteration passed a topological sort.
    pub acyclic: bool,
    pub mode_edges: usize,
    /// Inner fits that failed and were left out of the gradient.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub failed_inner: usize,
}

fn is_zero(v: &usize) -> bool {
    *v == 0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    /// Relative improvement fell below the tolerance over one window.
    Converged,
    /// The ordering gradient vanished (single-ordering support).
    Stationary,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub records: Vec<TraceRecord>,
    pub stop: StopReason,
}

impl TrainTrace {
    /// Combined hash of all records, for determinism checks.
    pub fn digest(&self) -> u64 {
        seed::hash_words(self.records.iter().flat_map(|r| {
            [
                r.iteration as u64,
                r.loss.to_bits(),
                r.support_size as u64,
                r.theta_hash,
                r.acyclic as u64,
                r.mode_edges as u64,
            ]
            .into_iter()
            .chain(r.mode.iter().map(|&m| m as u64))
        }))
    }

    pub fn all_acyclic(&self) -> bool {
        self.records.iter().all(|r| r.acyclic)
    }
}

/// Refits the estimator on the complete DAG of the mode ordering
/// `sort(theta)`. L0 fits run for `max_inner` epochs from `warm`, when
/// given.
pub fn extract_final(
    theta: &[f64],
    warm: Option<&EdgeParameters>,
    data: &Dataset,
    config: &LearnerConfig,
) -> Result<FinalGraph> {
    if theta.len() != data.d() {
        return Err(Error::DimensionMismatch {
            expected: data.d(),
            found: theta.len(),
        });
    }
    let mask = EdgeMask::new(sort_oracle(theta));
    let moments = Moments::new(&prepared(data, config));
    match config.estimator {
        EstimatorKind::Lars => Ok(fit_lars_with(&moments, &mask)),
        EstimatorKind::LinearL0 => {
            let l0 = config.l0(seed::derive_seed(config.seed, stream::JOINT, 1));
            let fit = fit_l0_moments(&moments, &mask, &l0, warm)?;
            finalize_l0(&fit.params, &mask)
        }
    }
}

/// Outcome of [`fit`].
#[derive(Debug, Clone)]
pub struct FitResult {
    pub theta: Vec<f64>,
    pub mode: Permutation,
    pub graph: FinalGraph,
    pub trace: TrainTrace,
}

/// Trains in the configured regime and extracts the mode graph.
pub fn fit(data: &Dataset, config: &LearnerConfig) -> Result<FitResult> {
    config.validate()?;
    let (theta, warm, trace) = match config.regime {
        Regime::Joint => {
            let f = fit_joint(data, config)?;
            (f.theta, Some(f.params), f.trace)
        }
        Regime::Bilevel => {
            let f = fit_bilevel(data, config)?;
            let mode = sort_oracle(&f.theta);
            let warm = f.params_for(&mode).cloned();
            (f.theta, warm, f.trace)
        }
    };
    let graph = extract_final(&theta, warm.as_ref(), data, config)?;
    Ok(FitResult {
        mode: sort_oracle(&theta),
        theta,
        graph,
        trace,
    })
}

/// Drops edges with `|w| < thresh`, then removes the weakest remaining edge
/// while a directed cycle exists.
pub fn postprocess_threshold(weights: &DMatrix<f64>, thresh: f64) -> Result<FinalGraph> {
    if thresh.is_nan() || thresh < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "threshold must be >= 0, got {thresh}"
        )));
    }
    let d = weights.nrows();
    if weights.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: weights.ncols(),
        });
    }
    let mut w = DMatrix::from_fn(d, d, |i, j| {
        let v = weights[(i, j)];
        if i != j && v.abs() >= thresh {
            v
        } else {
            0.0
        }
    });
    let mut edges: Vec<(usize, usize)> = (0..d)
        .flat_map(|i| (0..d).map(move |j| (i, j)))
        .filter(|&(i, j)| w[(i, j)] != 0.0)
        .collect();
    // weakest first; ties broken by position for determinism
    edges.sort_by(|&a, &b| w[a].abs().total_cmp(&w[b].abs()).then(a.cmp(&b)));
    let mut adj = Adjacency::from_fn(d, |i, j| w[(i, j)] != 0.0);
    let mut next = 0;
    while !adj.is_acyclic() {
        let (i, j) = edges[next];
        next += 1;
        adj.set(i, j, false);
        w[(i, j)] = 0.0;
    }
    Ok(FinalGraph {
        adjacency: adj,
        weights: w,
    })
}
