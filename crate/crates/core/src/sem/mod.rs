//! Masked linear structural equations and their estimators.
//!
//! Column `j` of a weight matrix holds the coefficients predicting node `j`
//! from the other nodes; an [`EdgeMask`] zeroes every coefficient that would
//! point backwards in the ordering, so any fitted graph is acyclic.

mod l0;
mod lars;

pub(crate) use l0::{
    apply_step, fit_l0_moments, gate_gradient, loss_and_weight_gradient, GateSampler, Plateau,
};
pub use l0::{finalize_l0, fit_l0, L0Config, L0Fit};
pub use lars::{fit_lars, fit_lars_with, lars_path, select_bic, LarsPath};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{check_len, Error, Result};
use crate::graph::{Adjacency, EdgeMask};

/// Relative residual level below which a fit counts as perfect.
pub const PERFECT_FIT_RATIO: f64 = 1e-24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    #[serde(alias = "l0", alias = "linear")]
    LinearL0,
    Lars,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    /// `(d/2) * log(sum_j |x_j - x_hat_j|^2)`, the equal-variance Gaussian
    /// negative log-likelihood up to constants.
    #[default]
    GaussianEv,
    /// `sum_j |x_j - x_hat_j|^2 / n`.
    Mse,
}

/// A loss value; `perfect_fit` marks an all-zero residual, where the
/// log-likelihood is `-inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Loss {
    pub value: f64,
    pub perfect_fit: bool,
}

impl LossKind {
    /// Loss from the per-column residual sums of squares.
    pub fn evaluate(self, rss: &[f64], scale: f64, n: usize) -> Loss {
        let total: f64 = rss.iter().sum();
        let perfect_fit = total <= PERFECT_FIT_RATIO * scale.max(f64::MIN_POSITIVE);
        let value = match self {
            LossKind::GaussianEv if perfect_fit => f64::NEG_INFINITY,
            LossKind::GaussianEv => 0.5 * rss.len() as f64 * total.ln(),
            LossKind::Mse => total / n as f64,
        };
        Loss { value, perfect_fit }
    }

    /// `d loss / d rss_j`, identical for every column. The total is floored
    /// so a perfect fit still yields a finite gradient.
    pub fn rss_derivative(self, total_rss: f64, scale: f64, d: usize, n: usize) -> f64 {
        match self {
            LossKind::GaussianEv => {
                let floor = PERFECT_FIT_RATIO * scale.max(f64::MIN_POSITIVE);
                0.5 * d as f64 / total_rss.max(floor)
            }
            LossKind::Mse => 1.0 / n as f64,
        }
    }
}

/// Fitted parameters of a masked linear model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeParameters {
    pub w_hat: DMatrix<f64>,
    /// Gate probabilities in `[0, 1]`; all ones for estimators without gates.
    pub pi: DMatrix<f64>,
    pub kind: EstimatorKind,
}

/// An acyclic weighted graph.
#[derive(Debug, Clone, PartialEq)]
pub struct FinalGraph {
    pub adjacency: Adjacency,
    pub weights: DMatrix<f64>,
}

impl FinalGraph {
    pub fn empty(d: usize) -> Self {
        Self {
            adjacency: Adjacency::empty(d),
            weights: DMatrix::zeros(d, d),
        }
    }

    /// Builds from weights; nonzero entries become edges.
    pub fn from_weights(weights: DMatrix<f64>) -> Self {
        let d = weights.nrows();
        let adjacency = Adjacency::from_fn(d, |i, j| weights[(i, j)] != 0.0);
        Self { adjacency, weights }
    }
}

/// Cross-products of the data, enough to evaluate any linear fit.
#[derive(Debug, Clone)]
pub struct Moments {
    n: usize,
    /// Raw `X' X`.
    xtx: DMatrix<f64>,
    means: Vec<f64>,
}

impl Moments {
    pub fn new(data: &Dataset) -> Self {
        let x = data.x();
        Self {
            n: data.n(),
            xtx: x.transpose() * x,
            means: data.column_means(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.xtx.nrows()
    }

    pub fn xtx(&self) -> &DMatrix<f64> {
        &self.xtx
    }

    /// `sum_j x_j' x_j`, the residual sum of the empty model.
    pub fn scale(&self) -> f64 {
        self.xtx.diagonal().sum()
    }

    /// Centred cross-products `X' X - n m m'`.
    pub fn centered(&self) -> DMatrix<f64> {
        let n = self.n as f64;
        DMatrix::from_fn(self.d(), self.d(), |i, j| {
            self.xtx[(i, j)] - n * self.means[i] * self.means[j]
        })
    }

    /// `|x_j - X w|^2` for a weight column `w`.
    pub fn rss(&self, j: usize, w: &DVector<f64>) -> f64 {
        let g = self.xtx.column(j);
        let gw = &self.xtx * w;
        (self.xtx[(j, j)] - 2.0 * w.dot(&g) + w.dot(&gw)).max(0.0)
    }
}

fn check_shapes(data: &Dataset, w: &DMatrix<f64>, mask: &EdgeMask) -> Result<()> {
    check_len(data.d(), w.nrows())?;
    check_len(data.d(), w.ncols())?;
    check_len(data.d(), mask.dim())
}

/// `X (w_j * mask_j)`.
pub fn predict(
    data: &Dataset,
    w: &DMatrix<f64>,
    mask: &EdgeMask,
    j: usize,
) -> Result<DVector<f64>> {
    check_shapes(data, w, mask)?;
    if j >= data.d() {
        return Err(Error::InvalidArgument(format!("column {j} out of range")));
    }
    let masked = DVector::from_fn(
        data.d(),
        |i, _| {
            if mask.allowed(i, j) {
                w[(i, j)]
            } else {
                0.0
            }
        },
    );
    Ok(data.x() * masked)
}

fn residual_sums(data: &Dataset, w: &DMatrix<f64>, mask: &EdgeMask) -> Result<Vec<f64>> {
    (0..data.d())
        .map(|j| {
            let pred = predict(data, w, mask, j)?;
            Ok((data.x().column(j) - pred).norm_squared())
        })
        .collect()
}

/// Equal-variance Gaussian loss `(d/2) log sum_j |x_j - X(w_j * mask_j)|^2`.
///
/// The log-determinant term of the likelihood vanishes because the mask is
/// a DAG.
pub fn loss_ev_gaussian(data: &Dataset, w: &DMatrix<f64>, mask: &EdgeMask) -> Result<Loss> {
    loss(data, w, mask, LossKind::GaussianEv)
}

pub fn loss(data: &Dataset, w: &DMatrix<f64>, mask: &EdgeMask, kind: LossKind) -> Result<Loss> {
    let rss = residual_sums(data, w, mask)?;
    let scale = data.x().norm_squared();
    Ok(kind.evaluate(&rss, scale, data.n()))
}
