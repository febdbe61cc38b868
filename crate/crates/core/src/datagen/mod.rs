//! Synthetic linear SEMs and the variance-sorting baseline.

mod io;

pub use io::{
    load_csv, load_edgelist, load_weighted_edgelist, write_csv, write_edgelist, write_matrix_csv,
    write_weighted_edgelist, WeightedEdges,
};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Gumbel, Normal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::graph::{Adjacency, EdgeMask};
use crate::perm::{sort_oracle, Permutation};
use crate::seed::{self, stream, Rng};
use crate::sem::{fit_lars, FinalGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphFamily {
    #[serde(alias = "erdos-renyi")]
    Er,
    #[serde(alias = "scale-free")]
    Sf,
    #[serde(alias = "bipartite")]
    Bp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSpec {
    pub family: GraphFamily,
    pub d: usize,
    pub expected_edges: usize,
    pub seed: u64,
}

impl GraphSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(Error::InvalidArgument(format!(
                "need d >= 2, got {}",
                self.d
            )));
        }
        let max = self.max_edges();
        if self.expected_edges > max {
            return Err(Error::InvalidArgument(format!(
                "{} expected edges exceed the {max} possible for this family at d = {}",
                self.expected_edges, self.d
            )));
        }
        Ok(())
    }

    fn max_edges(&self) -> usize {
        match self.family {
            GraphFamily::Bp => (self.d / 2) * (self.d - self.d / 2),
            _ => self.d * (self.d - 1) / 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    #[serde(alias = "gauss", alias = "gaussian")]
    GaussEv,
    #[serde(alias = "gumbel")]
    GumbelEv,
    Uniform,
}

/// Weights are drawn uniformly from `[-high, -low] U [low, high]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightRange {
    pub low: f64,
    pub high: f64,
}

impl Default for WeightRange {
    fn default() -> Self {
        Self {
            low: 0.5,
            high: 2.0,
        }
    }
}

impl WeightRange {
    pub fn validate(&self) -> Result<()> {
        if !(self.low > 0.0 && self.low <= self.high && self.high.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "weight range needs 0 < low <= high, got [{}, {}]",
                self.low, self.high
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemSpec {
    pub noise: NoiseKind,
    pub weights: WeightRange,
    pub noise_scale: f64,
    pub n: usize,
    pub seed: u64,
}

impl SemSpec {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise scale must be >= 0, got {}",
                self.noise_scale
            )));
        }
        if self.n == 0 {
            return Err(Error::InvalidArgument("need n >= 1".into()));
        }
        Ok(())
    }
}

fn random_permutation(d: usize, rng: &mut Rng) -> Permutation {
    let mut order: Vec<usize> = (0..d).collect();
    order.shuffle(rng);
    Permutation::new(order).expect("shuffled indices form a permutation")
}

/// Samples a DAG and one of its topological orders.
pub fn sample_dag(spec: &GraphSpec) -> Result<(Adjacency, Permutation)> {
    spec.validate()?;
    let d = spec.d;
    let mut rng = seed::rng(spec.seed, stream::GRAPH, 0);
    let e = spec.expected_edges as f64;
    match spec.family {
        GraphFamily::Er => {
            let p = e / (d * (d - 1) / 2) as f64;
            let mut g = Adjacency::empty(d);
            for i in 0..d {
                for j in (i + 1)..d {
                    if rng.random::<f64>() < p {
                        g.set(i, j, true);
                    }
                }
            }
            let relabel = random_permutation(d, &mut rng);
            Ok((g.relabel(&relabel), relabel))
        }
        GraphFamily::Sf => {
            let m = (e / d as f64).round() as usize;
            let mut g = Adjacency::empty(d);
            let mut degree = vec![0usize; d];
            for t in 1..d {
                let mut pool: Vec<usize> = (0..t).collect();
                for _ in 0..m.min(t) {
                    let total: usize = pool.iter().map(|&v| degree[v] + 1).sum();
                    let mut pick = rng.random_range(0..total);
                    let idx = pool
                        .iter()
                        .position(|&v| {
                            let w = degree[v] + 1;
                            if pick < w {
                                true
                            } else {
                                pick -= w;
                                false
                            }
                        })
                        .expect("pick is below the total weight");
                    let src = pool.swap_remove(idx);
                    g.set(src, t, true);
                    degree[src] += 1;
                    degree[t] += 1;
                }
            }
            let relabel = random_permutation(d, &mut rng);
            Ok((g.relabel(&relabel), relabel))
        }
        GraphFamily::Bp => {
            let split = random_permutation(d, &mut rng);
            let half = d / 2;
            let (a, b) = split.order().split_at(half);
            let p = if a.is_empty() || b.is_empty() {
                0.0
            } else {
                e / (a.len() * b.len()) as f64
            };
            let order = random_permutation(d, &mut rng);
            let pos = order.positions();
            let mut g = Adjacency::empty(d);
            for &u in a {
                for &v in b {
                    if rng.random::<f64>() < p {
                        if pos[u] < pos[v] {
                            g.set(u, v, true);
                        } else {
                            g.set(v, u, true);
                        }
                    }
                }
            }
            Ok((g, order))
        }
    }
}

/// Draws a weight for every edge of `graph`.
pub fn sample_weights(graph: &Adjacency, range: &WeightRange, seed: u64) -> Result<DMatrix<f64>> {
    range.validate()?;
    let d = graph.dim();
    let mut rng = seed::rng(seed, stream::WEIGHTS, 0);
    let mut w = DMatrix::zeros(d, d);
    for (i, j) in graph.edges() {
        let mag = rng.random_range(range.low..=range.high);
        w[(i, j)] = if rng.random::<bool>() { mag } else { -mag };
    }
    Ok(w)
}

/// Simulates `x_j = X w_j + eps_j` in topological order, with `w_j` the
/// `j`-th column of `weights` restricted to `graph`. The returned dataset
/// carries `graph` as its truth.
pub fn sample_data(graph: &Adjacency, weights: &DMatrix<f64>, sem: &SemSpec) -> Result<Dataset> {
    sem.validate()?;
    let d = graph.dim();
    if weights.nrows() != d || weights.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: weights.nrows(),
        });
    }
    let order = graph.topological_order().ok_or(Error::Cyclic)?;
    let n = sem.n;
    let mut x = DMatrix::zeros(n, d);
    for &j in order.order() {
        let mut rng = seed::rng(sem.seed, stream::NOISE, j as u64);
        let mut col: Vec<f64> = (0..n)
            .map(|_| sem.noise_scale * draw_noise(sem.noise, &mut rng))
            .collect();
        for i in graph.parents(j) {
            let w = weights[(i, j)];
            for (r, v) in col.iter_mut().enumerate() {
                *v += w * x[(r, i)];
            }
        }
        x.set_column(j, &nalgebra::DVector::from_vec(col));
    }
    Dataset::new(x)?.with_truth(graph.clone())
}

fn draw_noise(kind: NoiseKind, rng: &mut Rng) -> f64 {
    match kind {
        NoiseKind::GaussEv => Normal::new(0.0, 1.0).expect("unit normal").sample(rng),
        NoiseKind::GumbelEv => Gumbel::new(0.0, 1.0).expect("unit gumbel").sample(rng),
        NoiseKind::Uniform => rng.random_range(-1.0..1.0),
    }
}

/// A sampled graph, its weights and observations.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub dataset: Dataset,
    pub weights: DMatrix<f64>,
    pub order: Permutation,
}

/// Graph, weights and data from one pair of specs. Weights share the SEM
/// seed.
pub fn simulate(graph: &GraphSpec, sem: &SemSpec) -> Result<Simulation> {
    let (adj, order) = sample_dag(graph)?;
    let weights = sample_weights(&adj, &sem.weights, sem.seed)?;
    let dataset = sample_data(&adj, &weights, sem)?;
    Ok(Simulation {
        dataset,
        weights,
        order,
    })
}

/// Orders nodes by increasing raw marginal variance, then selects parents
/// among predecessors by LARS with BIC on standardized data.
pub fn sortnregress(data: &Dataset) -> Result<FinalGraph> {
    let order = sort_oracle(&data.column_variances());
    fit_lars(&data.standardized(), &EdgeMask::new(order))
}

/// A uniformly random ordering followed by the same LARS selection.
pub fn random_ordering_lars(data: &Dataset, seed: u64) -> Result<FinalGraph> {
    let mut rng = seed::rng(seed, stream::BASELINE, 0);
    let order = random_permutation(data.d(), &mut rng);
    fit_lars(&data.standardized(), &EdgeMask::new(order))
}
