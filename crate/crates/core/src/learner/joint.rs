use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::graph::EdgeMask;
use crate::seed::{derive_seed, stream};
use crate::sem::{
    apply_step, finalize_l0, gate_gradient, loss_and_weight_gradient, EdgeParameters, GateSampler,
    Moments, Plateau,
};
use crate::sparse::{backward_theta, SparseMapSolver};

use super::{
    distribution, init_theta, prepared, theta_hash, LearnerConfig, Regime, StopReason, TraceRecord,
    TrainTrace,
};

#[derive(Debug, Clone)]
pub struct JointFit {
    pub theta: Vec<f64>,
    pub params: EdgeParameters,
    pub trace: TrainTrace,
}

/// Joint descent on `E_{sigma ~ alpha(theta)}[loss(Phi, sigma)] + lambda *
/// sum(pi)` with one edge parameter set shared by all orderings.
///
/// Each iteration draws one gate sample, used for every ordering in the
/// support. Edge gradients are averaged with the ordering weights; `theta`
/// moves along the sparse-operator gradient of the per-ordering losses.
/// The recorded loss uses the expected weights `w_hat * pi`, which makes it
/// free of sampling noise.
pub fn fit_joint(data: &Dataset, config: &LearnerConfig) -> Result<JointFit> {
    config.validate()?;
    if config.regime != Regime::Joint {
        return Err(Error::InvalidArgument(
            "fit_joint needs the joint regime".into(),
        ));
    }
    let x = prepared(data, config);
    let moments = Moments::new(&x);
    let d = data.d();
    let mut theta = init_theta(data, config.theta_init);
    let mut params = EdgeParameters::l0_init_full(d, config.pi_init);
    let mut sampler = GateSampler::new(derive_seed(config.seed, stream::JOINT, 0), d);
    let mut solver = SparseMapSolver::new(config.k);
    let mut plateau = Plateau::default();
    let mut records = Vec::new();
    let mut stop = StopReason::MaxIterations;

    for iteration in 0..config.max_outer {
        let dist = distribution(&theta, config, &mut solver)?;
        let z = sampler.sample(&params.pi);
        let expected_w = params.w_hat.component_mul(&params.pi);
        let mut losses = Vec::with_capacity(dist.len());
        let mut grad_w = nalgebra::DMatrix::zeros(d, d);
        let mut grad_pi = nalgebra::DMatrix::zeros(d, d);
        let mut expected_loss = 0.0;
        let mut acyclic = true;
        let mut mode_edges = 0;
        for (sigma, a) in dist.iter() {
            let mask = EdgeMask::new(sigma.clone());
            let g = gate_gradient(&moments, &params, &z, &mask, config.loss);
            losses.push(g.loss);
            grad_w += g.w_hat * a;
            grad_pi += g.pi * a;
            expected_loss +=
                a * loss_and_weight_gradient(&moments, &expected_w, &mask, config.loss).0;
            let graph = finalize_l0(&params, &mask)?;
            acyclic &= graph.adjacency.is_acyclic();
            if sigma == dist.mode() {
                mode_edges = graph.adjacency.edge_count();
            }
        }
        let penalty: f64 = config.lambda * params.pi.sum();
        let objective = expected_loss + penalty;
        if !objective.is_finite() || losses.iter().any(|l| !l.is_finite()) {
            return Err(Error::Numeric(format!(
                "loss diverged at iteration {iteration}"
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
            failed_inner: 0,
        });
        if plateau.push(objective, config.patience, config.tolerance) {
            stop = StopReason::Converged;
            break;
        }

        let g_theta = backward_theta(&dist, &losses)?;
        for (t, g) in theta.iter_mut().zip(g_theta) {
            *t -= config.lr_outer * (g + config.l2_theta * *t);
        }
        apply_step(
            &mut params,
            &grad_w,
            &grad_pi,
            |i, j| i != j,
            config.lambda,
            config.l2_phi,
            config.lr_inner,
        );
        if theta
            .iter()
            .chain(params.w_hat.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::Numeric(format!(
                "parameters diverged at iteration {iteration}"
            )));
        }
    }
    Ok(JointFit {
        theta,
        params,
        trace: TrainTrace { records, stop },
    })
}
