//! Grid runs over configurations and seeds.
//!
//! Grid file:
//!
//! ```json
//! {
//!   "seeds": [0, 1, 2],
//!   "data": {"family": "sf", "d": 10, "edges": 20, "sem": "gauss-ev", "n": 1000},
//!   "configs": [
//!     {"name": "spmax-k10", "method": "daguerro",
//!      "learner": {"k": 10, "estimator": "lars", "regime": "bilevel"}},
//!     {"name": "random", "method": "random_ordering"}
//!   ]
//! }
//! ```
//!
//! `data` is either a synthetic problem, generated afresh for every seed,
//! or `{"path": "dir-or-csv"}` shared by all seeds (relative to the grid
//! file). Each run writes to `runs/<name>/seed-<seed>/`; `runs.csv` has one
//! row per run and `aggregate.csv` one row per configuration.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use daguerro::datagen;
use daguerro::learner::LearnerConfig;
use daguerro::{Dataset, Permutation};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::record::{ExperimentRecord, Metrics, SyntheticSpec};
use crate::run::{self, Method};
use crate::{io_failure, load_data, write_json, CliResult, Failure};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DataSource {
    Path { path: PathBuf },
    Synthetic(SyntheticSpec),
}

fn default_method() -> Method {
    Method::Daguerro
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub name: String,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default)]
    pub learner: LearnerConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub seeds: Vec<u64>,
    pub data: DataSource,
    pub configs: Vec<GridConfig>,
}

impl Grid {
    fn validate(&self) -> CliResult<()> {
        if self.seeds.is_empty() || self.configs.is_empty() {
            return Err(Failure::config(
                "grid needs at least one seed and one config",
            ));
        }
        let mut names = std::collections::HashSet::new();
        for c in &self.configs {
            let valid = !c.name.is_empty()
                && c.name
                    .chars()
                    .all(|ch| ch.is_ascii_alphanumeric() || "-_.".contains(ch));
            if !valid {
                return Err(Failure::config(format!(
                    "config name {:?} must be non-empty and use only [A-Za-z0-9_.-]",
                    c.name
                )));
            }
            if !names.insert(&c.name) {
                return Err(Failure::config(format!(
                    "duplicate config name {:?}",
                    c.name
                )));
            }
            if c.method == Method::Daguerro {
                c.learner
                    .validate()
                    .map_err(|e| Failure::config(format!("config {:?}: {e}", c.name)))?;
            }
        }
        if let DataSource::Synthetic(s) = &self.data {
            let (g, sem) = s.specs(0);
            g.validate()?;
            sem.validate()?;
        }
        Ok(())
    }
}

/// Data for one seed, with the generating order when known.
struct Problem {
    data: Dataset,
    order: Option<Permutation>,
}

/// Outcome of one (config, seed) run.
struct Row {
    config: usize,
    seed: u64,
    result: Result<Metrics, String>,
}

pub fn cmd_sweep(grid_path: &Path, out: &Path) -> CliResult<()> {
    let text = fs::read_to_string(grid_path).map_err(|e| io_failure(grid_path, e))?;
    let grid: Grid = serde_json::from_str(&text)
        .map_err(|e| Failure::config(format!("{}: {e}", grid_path.display())))?;
    grid.validate()?;
    fs::create_dir_all(out).map_err(|e| io_failure(out, e))?;

    let problems: Vec<Problem> = match &grid.data {
        DataSource::Path { path } => {
            let base = grid_path.parent().unwrap_or(Path::new(""));
            let (data, _) = load_data(&base.join(path), None)?;
            vec![Problem { data, order: None }]
        }
        DataSource::Synthetic(spec) => grid
            .seeds
            .par_iter()
            .map(|&seed| {
                let (g, sem) = spec.specs(seed);
                let sim = datagen::simulate(&g, &sem)?;
                Ok(Problem {
                    data: sim.dataset,
                    order: Some(sim.order),
                })
            })
            .collect::<CliResult<_>>()?,
    };
    let problem_for = |seed_idx: usize| &problems[seed_idx.min(problems.len() - 1)];

    let jobs: Vec<(usize, usize)> = (0..grid.configs.len())
        .flat_map(|c| (0..grid.seeds.len()).map(move |s| (c, s)))
        .collect();
    let rows: Vec<Row> = jobs
        .par_iter()
        .map(|&(c, s)| {
            let seed = grid.seeds[s];
            let result = run_one(&grid, c, seed, problem_for(s), out).map_err(|f| f.message);
            Row {
                config: c,
                seed,
                result,
            }
        })
        .collect();

    write_runs(&out.join("runs.csv"), &grid, &rows)?;
    write_aggregate(&out.join("aggregate.csv"), &grid, &rows)?;
    let failed = rows.iter().filter(|r| r.result.is_err()).count();
    println!(
        "{} runs, {} failed; aggregate written to {}",
        rows.len(),
        failed,
        out.join("aggregate.csv").display()
    );
    Ok(())
}

fn run_one(grid: &Grid, c: usize, seed: u64, problem: &Problem, out: &Path) -> CliResult<Metrics> {
    let gc = &grid.configs[c];
    let config = LearnerConfig {
        seed,
        ..gc.learner.clone()
    };
    let start = Instant::now();
    let outcome = run::run(
        gc.method,
        &config,
        &problem.data,
        problem.order.as_ref(),
        seed,
    )?;
    let wall_seconds = start.elapsed().as_secs_f64();

    let dir = out.join("runs").join(&gc.name).join(format!("seed-{seed}"));
    fs::create_dir_all(&dir).map_err(|e| io_failure(&dir, e))?;
    let source = serde_json::to_value(&grid.data).map_err(|e| Failure::config(e.to_string()))?;
    let record = ExperimentRecord::new(
        gc.method,
        &config,
        source,
        &problem.data,
        &outcome,
        wall_seconds,
    );
    outcome.write_files(&dir, &problem.data)?;
    write_json(&dir.join("result.json"), &record)?;
    Ok(outcome.metrics)
}

fn csv_failure(path: &Path, e: csv::Error) -> Failure {
    Failure::data(format!("{}: {e}", path.display()))
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn write_runs(path: &Path, grid: &Grid, rows: &[Row]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_failure(path, e))?;
    let header = [
        "config", "method", "seed", "status", "shd", "sid", "f1", "edges", "error",
    ];
    w.write_record(header).map_err(|e| csv_failure(path, e))?;
    for row in rows {
        let gc = &grid.configs[row.config];
        let method = serde_json::to_value(gc.method).expect("method serializes");
        let method = method.as_str().unwrap_or_default().to_string();
        let fields = match &row.result {
            Ok(m) => [
                gc.name.clone(),
                method,
                row.seed.to_string(),
                "ok".into(),
                opt(m.shd),
                opt(m.sid),
                opt(m.f1),
                m.edge_count.to_string(),
                String::new(),
            ],
            Err(e) => [
                gc.name.clone(),
                method,
                row.seed.to_string(),
                "failed".into(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                e.clone(),
            ],
        };
        w.write_record(&fields).map_err(|e| csv_failure(path, e))?;
    }
    w.flush().map_err(|e| io_failure(path, e))
}

/// Mean and sample standard deviation; the deviation of one value is 0.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Some((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some((mean, var.sqrt()))
}

fn write_aggregate(path: &Path, grid: &Grid, rows: &[Row]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_failure(path, e))?;
    let mut header = vec![
        "config".to_string(),
        "method".into(),
        "runs".into(),
        "failed".into(),
    ];
    for m in ["shd", "sid", "f1", "edges"] {
        header.push(format!("{m}_mean"));
        header.push(format!("{m}_std"));
    }
    w.write_record(&header).map_err(|e| csv_failure(path, e))?;
    for (c, gc) in grid.configs.iter().enumerate() {
        let ok: Vec<&Metrics> = rows
            .iter()
            .filter(|r| r.config == c)
            .filter_map(|r| r.result.as_ref().ok())
            .collect();
        let total = rows.iter().filter(|r| r.config == c).count();
        let method = serde_json::to_value(gc.method).expect("method serializes");
        let mut fields = vec![
            gc.name.clone(),
            method.as_str().unwrap_or_default().to_string(),
            total.to_string(),
            (total - ok.len()).to_string(),
        ];
        let columns: [Vec<f64>; 4] = [
            ok.iter().filter_map(|m| m.shd.map(|v| v as f64)).collect(),
            ok.iter().filter_map(|m| m.sid.map(|v| v as f64)).collect(),
            ok.iter().filter_map(|m| m.f1).collect(),
            ok.iter().map(|m| m.edge_count as f64).collect(),
        ];
        for values in &columns {
            match mean_std(values) {
                Some((mean, std)) => {
                    fields.push(mean.to_string());
                    fields.push(std.to_string());
                }
                None => fields.extend([String::new(), String::new()]),
            }
        }
        w.write_record(&fields).map_err(|e| csv_failure(path, e))?;
    }
    w.flush().map_err(|e| io_failure(path, e))
}
