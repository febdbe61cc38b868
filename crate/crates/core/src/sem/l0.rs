//! L0-gated linear estimator trained with a one-sample straight-through
//! gradient.
//!
//! Every admissible edge `(i, j)` has a weight `w_hat[i, j]` and a gate
//! probability `pi[i, j]`. A forward pass samples `z ~ Bernoulli(pi)` and
//! uses `w = w_hat * z`; the backward pass treats the sampled gate as the
//! identity in `pi`, so `d/d pi = w_hat * dl/dw` and `d/d w_hat = z * dl/dw`.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;

use super::{EdgeParameters, EstimatorKind, FinalGraph, LossKind, Moments};
use crate::data::Dataset;
use crate::error::{check_len, Error, Result};
use crate::graph::{Adjacency, EdgeMask};
use crate::seed::{self, Rng};

/// Window used for early stopping, in epochs.
pub const STOP_WINDOW: usize = 100;
/// Relative improvement below which a window counts as converged.
pub const STOP_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct L0Config {
    /// L0 strength, the coefficient on `sum(pi)`.
    pub lambda: f64,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    pub loss: LossKind,
    /// Squared-norm penalty on `w_hat`.
    pub l2: f64,
    /// Gate probability for edges that start untrained.
    pub pi_init: f64,
    /// Stop once the objective improves by less than [`STOP_TOLERANCE`]
    /// (relative) over [`STOP_WINDOW`] epochs.
    pub early_stop: bool,
}

impl Default for L0Config {
    fn default() -> Self {
        Self {
            lambda: 0.01,
            lr: 0.01,
            epochs: 1000,
            seed: 0,
            loss: LossKind::GaussianEv,
            l2: 0.0005,
            pi_init: 0.1,
            early_stop: true,
        }
    }
}

impl L0Config {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be > 0, got {}",
                self.lr
            )));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "l2 must be >= 0, got {}",
                self.l2
            )));
        }
        if !(0.0..=1.0).contains(&self.pi_init) {
            return Err(Error::InvalidArgument(format!(
                "pi_init must lie in [0, 1], got {}",
                self.pi_init
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct L0Fit {
    pub params: EdgeParameters,
    /// Objective at the expected weights `w_hat * pi` after every epoch.
    pub objective: Vec<f64>,
}

impl EdgeParameters {
    /// Untrained L0 parameters: zero weights, gates at `pi_init` on the
    /// admissible edges of `mask` and zero elsewhere.
    pub fn l0_init(mask: &EdgeMask, pi_init: f64) -> Self {
        let d = mask.dim();
        Self {
            w_hat: DMatrix::zeros(d, d),
            pi: DMatrix::from_fn(d, d, |i, j| if mask.allowed(i, j) { pi_init } else { 0.0 }),
            kind: EstimatorKind::LinearL0,
        }
    }

    /// Untrained L0 parameters over every off-diagonal entry, for sharing
    /// across orderings.
    pub fn l0_init_full(d: usize, pi_init: f64) -> Self {
        Self {
            w_hat: DMatrix::zeros(d, d),
            pi: DMatrix::from_fn(d, d, |i, j| if i != j { pi_init } else { 0.0 }),
            kind: EstimatorKind::LinearL0,
        }
    }
}

/// One straight-through evaluation.
pub(crate) struct GateGradient {
    /// Loss at the sampled weights.
    pub loss: f64,
    pub w_hat: DMatrix<f64>,
    pub pi: DMatrix<f64>,
}

/// Per-column gate streams derived from one root seed, so every column
/// draws the same gates regardless of evaluation order.
pub(crate) struct GateSampler {
    streams: Vec<Rng>,
}

impl GateSampler {
    pub fn new(root: u64, d: usize) -> Self {
        Self {
            streams: (0..d)
                .map(|j| seed::rng(root, seed::stream::GATES, j as u64))
                .collect(),
        }
    }

    /// Draws every off-diagonal gate; masks are applied by the consumer.
    pub fn sample(&mut self, pi: &DMatrix<f64>) -> DMatrix<f64> {
        let d = pi.nrows();
        let mut z = DMatrix::zeros(d, d);
        for (j, rng) in self.streams.iter_mut().enumerate() {
            for i in 0..d {
                if i != j {
                    let u: f64 = rng.random();
                    z[(i, j)] = if u < pi[(i, j)] { 1.0 } else { 0.0 };
                }
            }
        }
        z
    }
}

fn masked_column(m: &DMatrix<f64>, mask: &EdgeMask, j: usize) -> DVector<f64> {
    DVector::from_fn(
        m.nrows(),
        |i, _| if mask.allowed(i, j) { m[(i, j)] } else { 0.0 },
    )
}

/// Total loss and `dl/dw` at weights `w` restricted to `mask`.
pub(crate) fn loss_and_weight_gradient(
    moments: &Moments,
    w: &DMatrix<f64>,
    mask: &EdgeMask,
    kind: LossKind,
) -> (f64, DMatrix<f64>) {
    let d = moments.d();
    let g = moments.xtx();
    let cols: Vec<DVector<f64>> = (0..d).map(|j| masked_column(w, mask, j)).collect();
    let rss: Vec<f64> = cols
        .iter()
        .enumerate()
        .map(|(j, c)| moments.rss(j, c))
        .collect();
    let scale = moments.scale();
    let loss = kind.evaluate(&rss, scale, moments.n());
    let f = kind.rss_derivative(rss.iter().sum(), scale, d, moments.n());
    let mut grad = DMatrix::zeros(d, d);
    for (j, c) in cols.iter().enumerate() {
        let gj = g * c - g.column(j);
        for i in 0..d {
            if mask.allowed(i, j) {
                grad[(i, j)] = 2.0 * f * gj[i];
            }
        }
    }
    let value = if loss.perfect_fit && kind == LossKind::GaussianEv {
        // finite stand-in so averaged objectives stay usable
        let floor = super::PERFECT_FIT_RATIO * scale.max(f64::MIN_POSITIVE);
        0.5 * d as f64 * floor.ln()
    } else {
        loss.value
    };
    (value, grad)
}

/// Straight-through gradients of the data loss (no penalties) for one gate
/// sample `z`.
pub(crate) fn gate_gradient(
    moments: &Moments,
    params: &EdgeParameters,
    z: &DMatrix<f64>,
    mask: &EdgeMask,
    kind: LossKind,
) -> GateGradient {
    let w = params.w_hat.component_mul(z);
    let (loss, dw) = loss_and_weight_gradient(moments, &w, mask, kind);
    GateGradient {
        loss,
        w_hat: dw.component_mul(z),
        pi: dw.component_mul(&params.w_hat),
    }
}

/// Applies one descent step with the L0 and l2 penalties added. Entries
/// outside `allowed` stay untouched.
pub(crate) fn apply_step(
    params: &mut EdgeParameters,
    grad_w: &DMatrix<f64>,
    grad_pi: &DMatrix<f64>,
    allowed: impl Fn(usize, usize) -> bool,
    lambda: f64,
    l2: f64,
    lr: f64,
) {
    let d = params.w_hat.nrows();
    for j in 0..d {
        for i in 0..d {
            if !allowed(i, j) {
                continue;
            }
            let w = params.w_hat[(i, j)];
            params.w_hat[(i, j)] = w - lr * (grad_w[(i, j)] + l2 * w);
            let p = params.pi[(i, j)] - lr * (grad_pi[(i, j)] + lambda);
            params.pi[(i, j)] = p.clamp(0.0, 1.0);
        }
    }
}

/// Objective at the expected weights `w_hat * pi`, plus the penalties.
pub(crate) fn expected_objective(
    moments: &Moments,
    params: &EdgeParameters,
    mask: &EdgeMask,
    kind: LossKind,
    lambda: f64,
) -> f64 {
    let w = params.w_hat.component_mul(&params.pi);
    let (loss, _) = loss_and_weight_gradient(moments, &w, mask, kind);
    let gates: f64 = (0..mask.dim())
        .flat_map(|j| (0..mask.dim()).map(move |i| (i, j)))
        .filter(|&(i, j)| mask.allowed(i, j))
        .map(|(i, j)| params.pi[(i, j)])
        .sum();
    loss + lambda * gates
}

/// Tracks a windowed relative-improvement criterion.
#[derive(Debug, Clone, Default)]
pub(crate) struct Plateau {
    history: Vec<f64>,
}

impl Plateau {
    /// Records a value and reports whether the last window improved by less
    /// than `tol` relative to the value one window earlier.
    pub fn push(&mut self, value: f64, window: usize, tol: f64) -> bool {
        self.history.push(value);
        let n = self.history.len();
        if n <= window {
            return false;
        }
        let old = self.history[n - 1 - window];
        let new = self.history[n - 1];
        old - new < tol * old.abs().max(1e-12)
    }
}

/// Fits the gated linear model on the admissible edges of `mask`.
///
/// `init` warm-starts from earlier parameters; otherwise weights start at
/// zero and gates at `config.pi_init`.
pub fn fit_l0(
    data: &Dataset,
    mask: &EdgeMask,
    config: &L0Config,
    init: Option<&EdgeParameters>,
) -> Result<L0Fit> {
    config.validate()?;
    check_len(data.d(), mask.dim())?;
    let moments = Moments::new(data);
    fit_l0_moments(&moments, mask, config, init)
}

pub(crate) fn fit_l0_moments(
    moments: &Moments,
    mask: &EdgeMask,
    config: &L0Config,
    init: Option<&EdgeParameters>,
) -> Result<L0Fit> {
    let d = moments.d();
    let mut params = match init {
        Some(p) => {
            check_len(d, p.w_hat.nrows())?;
            check_len(d, p.pi.nrows())?;
            let mut p = p.clone();
            p.kind = EstimatorKind::LinearL0;
            p
        }
        None => EdgeParameters::l0_init(mask, config.pi_init),
    };
    // entries outside the mask are exactly zero after any fit
    for j in 0..d {
        for i in 0..d {
            if !mask.allowed(i, j) {
                params.w_hat[(i, j)] = 0.0;
                params.pi[(i, j)] = 0.0;
            }
        }
    }
    let mut sampler = GateSampler::new(config.seed, d);
    let mut objective = Vec::with_capacity(config.epochs);
    let mut plateau = Plateau::default();
    for epoch in 0..config.epochs {
        let z = sampler.sample(&params.pi);
        let g = gate_gradient(moments, &params, &z, mask, config.loss);
        if !g.loss.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss at epoch {epoch}")));
        }
        apply_step(
            &mut params,
            &g.w_hat,
            &g.pi,
            |i, j| mask.allowed(i, j),
            config.lambda,
            config.l2,
            config.lr,
        );
        if params.w_hat.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("weights diverged at epoch {epoch}")));
        }
        let obj = expected_objective(moments, &params, mask, config.loss, config.lambda);
        objective.push(obj);
        if config.early_stop && plateau.push(obj, STOP_WINDOW, STOP_TOLERANCE) {
            break;
        }
    }
    Ok(L0Fit { params, objective })
}

/// Thresholds gates at one half: an edge survives iff it is admissible and
/// `pi > 1/2` (a gate at exactly one half is off).
pub fn finalize_l0(params: &EdgeParameters, mask: &EdgeMask) -> Result<FinalGraph> {
    if params.kind != EstimatorKind::LinearL0 {
        return Err(Error::InvalidArgument(
            "finalize_l0 needs L0 parameters".into(),
        ));
    }
    let d = mask.dim();
    check_len(d, params.pi.nrows())?;
    check_len(d, params.w_hat.nrows())?;
    let adjacency = Adjacency::from_fn(d, |i, j| mask.allowed(i, j) && params.pi[(i, j)] > 0.5);
    let weights = DMatrix::from_fn(d, d, |i, j| {
        if adjacency.get(i, j) {
            params.w_hat[(i, j)]
        } else {
            0.0
        }
    });
    Ok(FinalGraph { adjacency, weights })
}
