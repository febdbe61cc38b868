use daguerro::datagen::{GraphFamily, GraphSpec, NoiseKind, SemSpec, WeightRange};
use daguerro::learner::{LearnerConfig, StopReason};
use daguerro::metrics;
use daguerro::{Adjacency, Dataset};
use serde::{Deserialize, Serialize};

use crate::run::{Method, Outcome};

pub const RESULT_SCHEMA: &str = "daguerro.result/v1";
pub const META_SCHEMA: &str = "daguerro.meta/v1";

fn default_w_low() -> f64 {
    0.5
}

fn default_w_high() -> f64 {
    2.0
}

fn default_noise_scale() -> f64 {
    1.0
}

/// Flat description of a synthetic problem, shared by `generate` and grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub family: GraphFamily,
    pub d: usize,
    pub edges: usize,
    #[serde(default = "default_sem")]
    pub sem: NoiseKind,
    pub n: usize,
    #[serde(default = "default_w_low")]
    pub w_low: f64,
    #[serde(default = "default_w_high")]
    pub w_high: f64,
    #[serde(default = "default_noise_scale")]
    pub noise_scale: f64,
}

fn default_sem() -> NoiseKind {
    NoiseKind::GaussEv
}

impl SyntheticSpec {
    /// Graph and SEM specs for one seed.
    pub fn specs(&self, seed: u64) -> (GraphSpec, SemSpec) {
        (
            GraphSpec {
                family: self.family,
                d: self.d,
                expected_edges: self.edges,
                seed,
            },
            SemSpec {
                noise: self.sem,
                weights: WeightRange {
                    low: self.w_low,
                    high: self.w_high,
                },
                noise_scale: self.noise_scale,
                n: self.n,
                seed,
            },
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub shd: Option<usize>,
    pub sid: Option<usize>,
    pub f1: Option<f64>,
    pub edge_count: usize,
}

impl Metrics {
    pub fn compute(est: &Adjacency, truth: Option<&Adjacency>) -> daguerro::Result<Self> {
        let edge_count = est.edge_count();
        match truth {
            Some(t) => Ok(Self {
                shd: Some(metrics::shd(est, t)?),
                sid: Some(metrics::sid(est, t)?),
                f1: Some(metrics::f1(est, t)?),
                edge_count,
            }),
            None => Ok(Self {
                shd: None,
                sid: None,
                f1: None,
                edge_count,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub iterations: usize,
    pub stop: StopReason,
    pub final_loss: Option<f64>,
    /// Hex digest over every trace record.
    pub digest: String,
    pub all_acyclic: bool,
}

/// Contents of `result.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub schema: String,
    pub method: Method,
    pub seed: u64,
    /// Learner settings; present for the `daguerro` method.
    pub config: Option<LearnerConfig>,
    pub data: serde_json::Value,
    pub metrics: Metrics,
    pub wall_seconds: f64,
    pub nodes: Vec<String>,
    pub adjacency: Vec<(usize, usize)>,
    pub mode: Option<Vec<usize>>,
    pub trace: Option<TraceSummary>,
}

impl ExperimentRecord {
    pub fn new(
        method: Method,
        config: &LearnerConfig,
        data_source: serde_json::Value,
        data: &Dataset,
        outcome: &Outcome,
        wall_seconds: f64,
    ) -> Self {
        let trace = outcome.trace.as_ref().map(|t| TraceSummary {
            iterations: t.records.len(),
            stop: t.stop,
            final_loss: t.records.last().map(|r| r.loss).filter(|l| l.is_finite()),
            digest: format!("{:016x}", t.digest()),
            all_acyclic: t.all_acyclic(),
        });
        Self {
            schema: RESULT_SCHEMA.to_string(),
            method,
            seed: config.seed,
            config: (method == Method::Daguerro).then(|| config.clone()),
            data: data_source,
            metrics: outcome.metrics,
            wall_seconds,
            nodes: data.names().to_vec(),
            adjacency: outcome.graph.adjacency.edges(),
            mode: outcome.mode.as_ref().map(|m| m.order().to_vec()),
            trace,
        }
    }
}
