use std::collections::HashMap;

use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::graph::EdgeMask;
use crate::perm::Permutation;
use crate::seed::{derive_seed, hash_words, stream};
use crate::sem::{
    finalize_l0, fit_l0_moments, fit_lars_with, loss_and_weight_gradient, EdgeParameters,
    EstimatorKind, FinalGraph, L0Config, LossKind, Moments, Plateau,
};
use crate::sparse::{backward_theta, SparseMapSolver, SparseOrderDistribution};

use super::{
    distribution, init_theta, prepared, theta_hash, LearnerConfig, Regime, StopReason, TraceRecord,
    TrainTrace,
};

/// Result of fitting the edges of one ordering.
#[derive(Debug, Clone)]
pub struct InnerSolution {
    pub graph: FinalGraph,
    /// Achieved inner objective.
    pub loss: f64,
    /// Trained L0 parameters, when the estimator has any.
    pub params: Option<EdgeParameters>,
}

/// Fits edges for a fixed ordering. The outer loop consumes only the
/// returned loss and parameters; no derivative of the inner solution is
/// ever requested.
pub trait InnerSolver: Sync {
    fn solve(&self, sigma: &Permutation) -> Result<InnerSolution>;
}

/// LARS with BIC; the loss is the configured loss of the selected weights.
pub struct LarsInner<'a> {
    pub moments: &'a Moments,
    pub loss: LossKind,
}

impl InnerSolver for LarsInner<'_> {
    fn solve(&self, sigma: &Permutation) -> Result<InnerSolution> {
        let mask = EdgeMask::new(sigma.clone());
        let graph = fit_lars_with(self.moments, &mask);
        let (loss, _) = loss_and_weight_gradient(self.moments, &graph.weights, &mask, self.loss);
        Ok(InnerSolution {
            graph,
            loss,
            params: None,
        })
    }
}

/// Gated L0 fit from scratch. Each ordering draws gates from its own
/// stream, derived from the root seed and the ordering itself.
pub struct L0Inner<'a> {
    pub moments: &'a Moments,
    pub config: L0Config,
}

impl InnerSolver for L0Inner<'_> {
    fn solve(&self, sigma: &Permutation) -> Result<InnerSolution> {
        let mask = EdgeMask::new(sigma.clone());
        let key = hash_words(sigma.order().iter().map(|&v| v as u64));
        let config = L0Config {
            seed: derive_seed(self.config.seed, stream::ORDERING, key),
            ..self.config.clone()
        };
        let fit = fit_l0_moments(self.moments, &mask, &config, None)?;
        let loss = *fit
            .objective
            .last()
            .ok_or_else(|| Error::InvalidArgument("inner fit needs at least one epoch".into()))?;
        let graph = finalize_l0(&fit.params, &mask)?;
        Ok(InnerSolution {
            graph,
            loss,
            params: Some(fit.params),
        })
    }
}

#[derive(Debug, Clone)]
pub struct BilevelFit {
    pub theta: Vec<f64>,
    /// Every ordering solved during training, with its inner solution.
    pub solutions: HashMap<Permutation, InnerSolution>,
    pub trace: TrainTrace,
}

impl BilevelFit {
    pub fn graph(&self, sigma: &Permutation) -> Option<&FinalGraph> {
        self.solutions.get(sigma).map(|s| &s.graph)
    }

    pub fn params_for(&self, sigma: &Permutation) -> Option<&EdgeParameters> {
        self.solutions.get(sigma).and_then(|s| s.params.as_ref())
    }
}

/// Bilevel training with the estimator named in `config`.
pub fn fit_bilevel(data: &Dataset, config: &LearnerConfig) -> Result<BilevelFit> {
    config.validate()?;
    if config.regime != Regime::Bilevel {
        return Err(Error::InvalidArgument(
            "fit_bilevel needs the bilevel regime".into(),
        ));
    }
    let moments = Moments::new(&prepared(data, config));
    let theta = init_theta(data, config.theta_init);
    match config.estimator {
        EstimatorKind::Lars => {
            let inner = LarsInner {
                moments: &moments,
                loss: config.loss,
            };
            fit_bilevel_with(theta, &inner, config)
        }
        EstimatorKind::LinearL0 => {
            let inner = L0Inner {
                moments: &moments,
                config: config.l0(config.seed),
            };
            fit_bilevel_with(theta, &inner, config)
        }
    }
}

/// Bilevel training from `theta` with any inner solver.
///
/// Inner solutions are cached by ordering and reused unchanged whenever an
/// ordering reappears. Orderings new to the cache are solved in parallel.
/// A failed inner fit gets loss `+inf` and is left out of the gradient.
pub fn fit_bilevel_with(
    mut theta: Vec<f64>,
    inner: &dyn InnerSolver,
    config: &LearnerConfig,
) -> Result<BilevelFit> {
    let mut cache: HashMap<Permutation, Option<InnerSolution>> = HashMap::new();
    let mut solver = SparseMapSolver::new(config.k);
    let mut plateau = Plateau::default();
    let mut records = Vec::new();
    let mut stop = StopReason::MaxIterations;

    for iteration in 0..config.max_outer {
        let dist = distribution(&theta, config, &mut solver)?;
        let fresh: Vec<&Permutation> = dist
            .support()
            .iter()
            .filter(|s| !cache.contains_key(*s))
            .collect();
        let solved: Vec<(Permutation, Option<InnerSolution>)> = fresh
            .par_iter()
            .map(|&s| (s.clone(), inner.solve(s).ok()))
            .collect();
        cache.extend(solved);

        let mut kept = Vec::new();
        let mut kept_alpha = Vec::new();
        let mut losses = Vec::new();
        let mut objective = 0.0;
        let mut acyclic = true;
        let mut mode_edges = 0;
        let mut failed = 0;
        for (sigma, a) in dist.iter() {
            match &cache[sigma] {
                Some(sol) => {
                    acyclic &= sol.graph.adjacency.is_acyclic();
                    if sigma == dist.mode() {
                        mode_edges = sol.graph.adjacency.edge_count();
                    }
                    kept.push(sigma.clone());
                    kept_alpha.push(a);
                    losses.push(sol.loss);
                    objective += a * sol.loss;
                }
                None => {
                    failed += 1;
                    objective = f64::INFINITY;
                }
            }
        }
        if kept.is_empty() {
            return Err(Error::Numeric(format!(
                "every inner fit failed at iteration {iteration}"
            )));
        }
        records.push(TraceRecord {
            iteration,
            loss: objective,
            support_size: dist.len(),
            mode: dist.mode().order().to_vec(),
            theta_hash: theta_hash(&theta),
            acyclic,
            mode_edges,
            failed_inner: failed,
        });

        let grad = if failed == 0 {
            backward_theta(&dist, &losses)?
        } else {
            let total: f64 = kept_alpha.iter().sum();
            let alpha = kept_alpha.iter().map(|a| a / total).collect();
            let restricted = SparseOrderDistribution::new(dist.kind(), dist.tau(), kept, alpha)?;
            backward_theta(&restricted, &losses)?
        };
        if grad.iter().all(|&g| g == 0.0) {
            stop = StopReason::Stationary;
            break;
        }
        if objective.is_finite() && plateau.push(objective, config.patience, config.tolerance) {
            stop = StopReason::Converged;
            break;
        }
        for (t, g) in theta.iter_mut().zip(grad) {
            *t -= config.lr_outer * (g + config.l2_theta * *t);
        }
    }
    let solutions = cache
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k, v)))
        .collect();
    Ok(BilevelFit {
        theta,
        solutions,
        trace: TrainTrace { records, stop },
    })
}
