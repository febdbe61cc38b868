use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use daguerro::datagen::{self, random_ordering_lars, sortnregress};
use daguerro::learner::{self, LearnerConfig, TrainTrace};
use daguerro::sem::{fit_lars, FinalGraph};
use daguerro::{Dataset, EdgeMask, Error, Permutation};
use serde::{Deserialize, Serialize};

use crate::record::Metrics;
use crate::{io_failure, CliResult, Failure};

/// Header row of names followed by one row of values.
fn row_csv(names: &[String], values: &[f64]) -> String {
    let row: Vec<String> = values.iter().map(|v| v.to_string()).collect();
    format!("{}\n{}\n", names.join(","), row.join(","))
}

/// How a graph is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Learned ordering, per the learner configuration.
    Daguerro,
    /// A uniformly random ordering, then LARS.
    #[serde(alias = "random")]
    RandomOrdering,
    /// The generating ordering, then LARS.
    #[serde(alias = "true")]
    TrueOrdering,
    /// Ordering by increasing marginal variance, then LARS.
    Sortnregress,
}

/// A produced graph with whatever training state the method has.
pub struct Outcome {
    pub graph: FinalGraph,
    pub theta: Option<Vec<f64>>,
    pub mode: Option<Permutation>,
    pub trace: Option<TrainTrace>,
    pub metrics: Metrics,
}

/// Produces a graph with `method` and scores it against the data's truth.
/// `true_order` falls back to a topological order of the truth.
pub fn run(
    method: Method,
    config: &LearnerConfig,
    data: &Dataset,
    true_order: Option<&Permutation>,
    seed: u64,
) -> CliResult<Outcome> {
    let (graph, theta, mode, trace) = match method {
        Method::Daguerro => {
            let fit = learner::fit(data, config)?;
            (fit.graph, Some(fit.theta), Some(fit.mode), Some(fit.trace))
        }
        Method::RandomOrdering => (random_ordering_lars(data, seed)?, None, None, None),
        Method::Sortnregress => (sortnregress(data)?, None, None, None),
        Method::TrueOrdering => {
            let order = match true_order {
                Some(o) => o.clone(),
                None => data
                    .truth()
                    .and_then(|t| t.topological_order())
                    .ok_or_else(|| {
                        Failure::config("true_ordering needs data with a known graph")
                    })?,
            };
            let graph = fit_lars(&data.standardized(), &EdgeMask::new(order.clone()))?;
            (graph, None, Some(order), None)
        }
    };
    let metrics = Metrics::compute(&graph.adjacency, data.truth()).map_err(Failure::from)?;
    Ok(Outcome {
        graph,
        theta,
        mode,
        trace,
        metrics,
    })
}

impl Outcome {
    /// Writes adjacency.edgelist, weights.csv and, for learned orderings,
    /// theta.csv and trace.jsonl.
    pub fn write_files(&self, dir: &Path, data: &Dataset) -> CliResult<()> {
        datagen::write_edgelist(dir.join("adjacency.edgelist"), &self.graph.adjacency)?;
        datagen::write_matrix_csv(dir.join("weights.csv"), data.names(), &self.graph.weights)?;
        if let Some(theta) = &self.theta {
            let path = dir.join("theta.csv");
            fs::write(&path, row_csv(data.names(), theta)).map_err(|e| io_failure(&path, e))?;
        }
        if let Some(trace) = &self.trace {
            let path = dir.join("trace.jsonl");
            let mut out = String::new();
            for r in &trace.records {
                let line = serde_json::to_string(r)
                    .map_err(|e| Failure::from(Error::Numeric(e.to_string())))?;
                writeln!(out, "{line}").expect("writing to a String");
            }
            fs::write(&path, out).map_err(|e| io_failure(&path, e))?;
        }
        Ok(())
    }
}
