//! Observational datasets.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::Adjacency;

/// An `n x d` observation matrix with node names and an optional
/// ground-truth DAG.
#[derive(Debug, Clone)]
pub struct Dataset {
    x: DMatrix<f64>,
    names: Vec<String>,
    truth: Option<Adjacency>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>) -> Result<Self> {
        let names = (0..x.ncols()).map(|j| format!("x{j}")).collect();
        Self::with_names(x, names)
    }

    pub fn with_names(x: DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        if x.nrows() < 1 {
            return Err(Error::InvalidArgument(
                "dataset needs at least one row".into(),
            ));
        }
        if x.ncols() < 2 {
            return Err(Error::InvalidArgument(
                "dataset needs at least two variables".into(),
            ));
        }
        if names.len() != x.ncols() {
            return Err(Error::DimensionMismatch {
                expected: x.ncols(),
                found: names.len(),
            });
        }
        if let Some(v) = x.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("data contains {v}")));
        }
        Ok(Self {
            x,
            names,
            truth: None,
        })
    }

    /// Attaches a ground-truth graph, which must be acyclic.
    pub fn with_truth(mut self, truth: Adjacency) -> Result<Self> {
        if truth.dim() != self.d() {
            return Err(Error::DimensionMismatch {
                expected: self.d(),
                found: truth.dim(),
            });
        }
        if !truth.is_acyclic() {
            return Err(Error::Cyclic);
        }
        self.truth = Some(truth);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn truth(&self) -> Option<&Adjacency> {
        self.truth.as_ref()
    }

    pub fn column_means(&self) -> Vec<f64> {
        self.x.column_iter().map(|c| c.mean()).collect()
    }

    /// Unbiased per-column sample variance (zero when `n = 1`).
    pub fn column_variances(&self) -> Vec<f64> {
        let n = self.n();
        if n < 2 {
            return vec![0.0; self.d()];
        }
        self.x
            .column_iter()
            .map(|c| {
                let m = c.mean();
                c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64
            })
            .collect()
    }

    /// Zero mean and unit variance per column. Constant columns are only
    /// centred.
    pub fn standardized(&self) -> Self {
        let means = self.column_means();
        let vars = self.column_variances();
        let mut x = self.x.clone();
        for (j, mut col) in x.column_iter_mut().enumerate() {
            let sd = vars[j].sqrt();
            let scale = if sd > 0.0 { 1.0 / sd } else { 1.0 };
            for v in col.iter_mut() {
                *v = (*v - means[j]) * scale;
            }
        }
        Self {
            x,
            names: self.names.clone(),
            truth: self.truth.clone(),
        }
    }
}
