//! Acceptance suite: one PASS/FAIL line per criterion at its pinned
//! tolerance. Criterion 8 needs user-supplied data in `DAGUERRO_SACHS_DIR`
//! (`X.csv` and `truth.edgelist`) and is skipped without it. Failures are
//! reported without failing the run unless `DAGUERRO_ACCEPTANCE_STRICT=1`.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use daguerro::datagen::{
    load_csv, load_edgelist, random_ordering_lars, sample_data, simulate, sortnregress,
    GraphFamily, GraphSpec, NoiseKind, SemSpec, WeightRange,
};
use daguerro::learner::{fit, LearnerConfig, Regime, ThetaInit};
use daguerro::metrics::{complete_dag_shd, segment_crossings, shd, sid, stable_interval};
use daguerro::perm::{enumerate_all, factorial, sort_oracle, top_k, transpose, Permutation};
use daguerro::sem::{fit_lars, EstimatorKind};
use daguerro::sparse::{
    backward_theta, marginal, simplex_project, sparsemap, topk_sparsemax, OperatorKind,
};
use daguerro::{Adjacency, EdgeMask};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

struct Outcome {
    pass: Option<bool>,
    detail: String,
}

impl Outcome {
    fn check(pass: bool, detail: String) -> Self {
        Self {
            pass: Some(pass),
            detail,
        }
    }

    fn skip(detail: &str) -> Self {
        Self {
            pass: None,
            detail: detail.to_string(),
        }
    }
}

fn rng(tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0xACCE_97A0 ^ tag)
}

fn min_gap(theta: &[f64]) -> f64 {
    let mut v = theta.to_vec();
    v.sort_by(f64::total_cmp);
    v.windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min)
}

fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn c1_top_k_exactness() -> Outcome {
    let start = Instant::now();
    let mut mismatches = 0;
    let mut calls = 0;
    let mut r = rng(1);
    for d in 2..=7 {
        for _ in 0..100 {
            let theta: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
            let mut all: Vec<f64> = enumerate_all(&theta)
                .unwrap()
                .iter()
                .map(|s| s.score)
                .collect();
            all.sort_by(|a, b| b.total_cmp(a));
            for k in 1..=60.min(factorial(d).unwrap()) {
                let mut got: Vec<f64> = top_k(&theta, k).unwrap().iter().map(|s| s.score).collect();
                got.sort_by(|a, b| b.total_cmp(a));
                calls += 1;
                if got != all[..k] {
                    mismatches += 1;
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome::check(
        mismatches == 0 && secs < 60.0,
        format!("{calls} top-k calls, {mismatches} mismatches, {secs:.1}s (limit 60s)"),
    )
}

/// Projection of `y` onto the permutahedron of `[1..d]` by sorting and
/// pool-adjacent-violators.
fn permutahedron_projection(y: &[f64]) -> Vec<f64> {
    let d = y.len();
    let mut idx: Vec<usize> = (0..d).collect();
    idx.sort_by(|&a, &b| y[b].total_cmp(&y[a]));
    let target: Vec<f64> = idx
        .iter()
        .enumerate()
        .map(|(k, &i)| y[i] - (d - k) as f64)
        .collect();
    let mut blocks: Vec<(f64, usize)> = Vec::new();
    for &t in &target {
        blocks.push((t, 1));
        while blocks.len() > 1 {
            let (s2, c2) = blocks[blocks.len() - 1];
            let (s1, c1) = blocks[blocks.len() - 2];
            if s1 / c1 as f64 >= s2 / c2 as f64 {
                break;
            }
            blocks.pop();
            *blocks.last_mut().unwrap() = (s1 + s2, c1 + c2);
        }
    }
    let fitted: Vec<f64> = blocks
        .iter()
        .flat_map(|&(s, c)| std::iter::repeat_n(s / c as f64, c))
        .collect();
    let mut out = vec![0.0; d];
    for (k, &i) in idx.iter().enumerate() {
        out[i] = y[i] - fitted[k];
    }
    out
}

fn c2_sparsemap_projection() -> Outcome {
    let start = Instant::now();
    let mut r = rng(2);
    let mut worst = 0.0f64;
    let mut unconverged = 0;
    for _ in 0..200 {
        let d = r.random_range(2..=10);
        let theta: Vec<f64> = (0..d).map(|_| r.random_range(-5.0..5.0)).collect();
        let tau = 10f64.powf(r.random_range(-1.0..1.0));
        let dist = sparsemap(&theta, tau, 100).unwrap();
        if !dist.converged() {
            unconverged += 1;
        }
        let scaled: Vec<f64> = theta.iter().map(|t| t / tau).collect();
        worst = worst.max(linf(&marginal(&dist), &permutahedron_projection(&scaled)));
    }
    Outcome::check(
        worst <= 1e-6,
        format!(
            "200 instances, max L-inf {worst:.2e} (tol 1e-6), {unconverged} unconverged, {:.2}s",
            start.elapsed().as_secs_f64()
        ),
    )
}

fn c3_topk_equals_full_sparsemax() -> Outcome {
    let mut r = rng(3);
    let mut worst = 0.0f64;
    let mut count = 0;
    for d in 2..=6 {
        for _ in 0..40 {
            let theta: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
            let tau = 10f64.powf(r.random_range(-1.0..1.0));
            let all = enumerate_all(&theta).unwrap();
            let full = simplex_project(&all.iter().map(|s| s.score / tau).collect::<Vec<_>>());
            let dist = topk_sparsemax(&theta, factorial(d).unwrap(), tau).unwrap();
            for (s, &a) in all.iter().zip(&full) {
                let ours = dist
                    .iter()
                    .find(|(p, _)| **p == s.permutation)
                    .map_or(0.0, |(_, a)| a);
                worst = worst.max((ours - a).abs());
            }
            count += 1;
        }
    }
    Outcome::check(
        worst <= 1e-10,
        format!("{count} instances, max |alpha diff| {worst:.2e} (tol 1e-10)"),
    )
}

/// Deterministic pseudo-random loss of an ordering.
fn loss_of(p: &Permutation, salt: u64) -> f64 {
    let h = daguerro::seed::hash_words(p.order().iter().map(|&v| v as u64).chain([salt]));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Worst relative error of the analytic gradient over 100 tie-free
/// instances with a support of at least two orderings. Tie-free: entries
/// of theta at least 1e-3 apart and the same support under every
/// coordinate perturbation of size 1e-3 and of the difference step.
fn gradient_check(kind: OperatorKind, tag: u64) -> (f64, usize) {
    let mut r = rng(tag);
    let mut worst = 0.0f64;
    let mut rejected = 0;
    let mut checked = 0;
    while checked < 100 {
        let d = r.random_range(3..=8);
        let (theta, k): (Vec<f64>, usize) = match kind {
            OperatorKind::TopKSparsemax => (
                (0..d).map(|_| r.random_range(-0.5..0.5)).collect(),
                r.random_range(2..=50usize).min(factorial(d).unwrap()),
            ),
            OperatorKind::SparseMap => (
                (0..d)
                    .map(|_| r.random_range(-1.0..1.0) * d as f64)
                    .collect(),
                100,
            ),
        };
        let op = |t: &[f64]| match kind {
            OperatorKind::TopKSparsemax => topk_sparsemax(t, k, 1.0).unwrap(),
            OperatorKind::SparseMap => sparsemap(t, 1.0, k).unwrap(),
        };
        let dist = op(&theta);
        let same_support = |delta: f64| {
            (0..d).all(|i| {
                [delta, -delta].iter().all(|&e| {
                    let mut t = theta.clone();
                    t[i] += e;
                    let mut a = op(&t).support().to_vec();
                    let mut b = dist.support().to_vec();
                    a.sort();
                    b.sort();
                    a == b
                })
            })
        };
        let h = 1e-5;
        if min_gap(&theta) < 1e-3 || dist.len() < 2 || !same_support(1e-3) || !same_support(h) {
            rejected += 1;
            continue;
        }
        let salt = checked as u64;
        let losses: Vec<f64> = dist.support().iter().map(|p| loss_of(p, salt)).collect();
        let g = backward_theta(&dist, &losses).unwrap();
        let f = |t: &[f64]| op(t).iter().map(|(p, a)| a * loss_of(p, salt)).sum::<f64>();
        let fd: Vec<f64> = (0..d)
            .map(|i| {
                let (mut up, mut down) = (theta.clone(), theta.clone());
                up[i] += h;
                down[i] -= h;
                (f(&up) - f(&down)) / (2.0 * h)
            })
            .collect();
        let diff = g
            .iter()
            .zip(&fd)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let norm = fd.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        worst = worst.max(diff / norm);
        checked += 1;
    }
    (worst, rejected)
}

fn c4_gradient_check() -> Outcome {
    let (top, rt) = gradient_check(OperatorKind::TopKSparsemax, 41);
    let (map, rm) = gradient_check(OperatorKind::SparseMap, 42);
    Outcome::check(
        top < 1e-4 && map < 1e-4,
        format!(
            "max rel err top-k {top:.2e}, sparsemap {map:.2e} (tol 1e-4); 100 instances each, \
             {rt}/{rm} draws rejected as near ties or single support"
        ),
    )
}

fn all_permutations(d: usize) -> Vec<Permutation> {
    enumerate_all(&vec![0.0; d])
        .unwrap()
        .into_iter()
        .map(|s| s.permutation)
        .collect()
}

fn c5_sensitivity() -> Outcome {
    // (a) exhaustive over ordering pairs for d <= 6, rank vectors as scores.
    let mut a_fail = 0;
    let mut a_pairs = 0usize;
    for d in 1..=6 {
        let perms = all_permutations(d);
        let ranks: Vec<Vec<f64>> = perms
            .iter()
            .map(|p| p.ranks().into_iter().map(|r| r as f64).collect())
            .collect();
        for (p, ra) in perms.iter().zip(&ranks) {
            for (q, rb) in perms.iter().zip(&ranks) {
                let c = segment_crossings(ra, rb).unwrap();
                if c.ties || c.count != complete_dag_shd(p, q).unwrap() {
                    a_fail += 1;
                }
                a_pairs += 1;
            }
        }
    }
    let mut r = rng(5);
    for _ in 0..1000 {
        let a: Vec<f64> = (0..20).map(|_| r.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..20).map(|_| r.random_range(-1.0..1.0)).collect();
        let c = segment_crossings(&a, &b).unwrap();
        let s = complete_dag_shd(&sort_oracle(&a), &sort_oracle(&b)).unwrap();
        if c.ties || c.count != s {
            a_fail += 1;
        }
        a_pairs += 1;
    }

    // (b) flip formula for every ordering and position pair, d <= 8.
    let mut b_fail = 0;
    let mut b_cases = 0usize;
    for d in 2..=8 {
        for p in all_permutations(d) {
            for i in 0..d {
                for j in (i + 1)..d {
                    let q = transpose(&p, i + 1, j + 1).unwrap();
                    if complete_dag_shd(&p, &q).unwrap() != 2 * (j - i) - 1 {
                        b_fail += 1;
                    }
                    b_cases += 1;
                }
            }
        }
    }

    // (c) interval endpoints.
    let mut c_fail = 0;
    let mut c_cases = 0;
    let (lo, hi) = stable_interval(&[0.1, 0.2, 0.3], 1).unwrap();
    if (lo + 0.1).abs() > 1e-12 || (hi - 0.1).abs() > 1e-12 {
        c_fail += 1;
    }
    for _ in 0..200 {
        let d = r.random_range(2..=9);
        let theta: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
        if min_gap(&theta) < 1e-4 {
            continue;
        }
        let base = sort_oracle(&theta);
        for i in 0..d {
            let (lo, hi) = stable_interval(&theta, i).unwrap();
            let rank = base.ranks()[i];
            let ends_ok = (rank == 1) == lo.is_infinite() && (rank == d) == hi.is_infinite();
            let moved = |e: f64| {
                let mut t = theta.clone();
                t[i] += e;
                sort_oracle(&t) != base
            };
            let mut ok = ends_ok;
            for e in [0.0, 0.999 * lo.max(-1e3), 0.999 * hi.min(1e3)] {
                ok &= !moved(e);
            }
            if lo.is_finite() {
                ok &= moved(lo - 1e-6);
            }
            if hi.is_finite() {
                ok &= moved(hi + 1e-6);
            }
            c_cases += 1;
            if !ok {
                c_fail += 1;
            }
        }
    }
    let ties_rejected = stable_interval(&[0.2, 0.2, 0.5], 0).is_err();
    Outcome::check(
        a_fail == 0 && b_fail == 0 && c_fail == 0 && ties_rejected,
        format!(
            "(a) {a_pairs} pairs, {a_fail} mismatches; (b) {b_cases} flips, {b_fail} mismatches; \
             (c) {c_cases} intervals, {c_fail} violations, ties rejected: {ties_rejected}"
        ),
    )
}

fn random_config(r: &mut ChaCha8Rng, d: usize) -> LearnerConfig {
    let regime = if r.random_bool(0.5) {
        Regime::Joint
    } else {
        Regime::Bilevel
    };
    let estimator = match regime {
        Regime::Joint => EstimatorKind::LinearL0,
        Regime::Bilevel if r.random_bool(0.5) => EstimatorKind::Lars,
        Regime::Bilevel => EstimatorKind::LinearL0,
    };
    let operator = if r.random_bool(0.5) {
        OperatorKind::TopKSparsemax
    } else {
        OperatorKind::SparseMap
    };
    LearnerConfig {
        operator,
        k: r.random_range(1..=12).min(factorial(d).unwrap()),
        tau: 10f64.powf(r.random_range(-2.0..1.0)),
        lambda: 10f64.powf(r.random_range(-4.0..0.0)),
        lr_outer: 10f64.powf(r.random_range(-3.0..0.0)),
        lr_inner: 10f64.powf(r.random_range(-3.0..-1.0)),
        max_outer: r.random_range(5..=40),
        max_inner: r.random_range(5..=40),
        estimator,
        regime,
        theta_init: if r.random_bool(0.5) {
            ThetaInit::Zeros
        } else {
            ThetaInit::Variances
        },
        seed: r.random(),
        standardize: r.random_bool(0.8),
        ..LearnerConfig::default()
    }
}

fn c6_validity() -> Outcome {
    let start = Instant::now();
    let mut r = rng(6);
    let jobs: Vec<(u64, LearnerConfig, GraphSpec, SemSpec)> = (0..1000)
        .map(|i| {
            let d = r.random_range(2..=6);
            let family = [GraphFamily::Er, GraphFamily::Sf, GraphFamily::Bp][i % 3];
            let max = match family {
                GraphFamily::Bp => (d / 2) * (d - d / 2),
                _ => d * (d - 1) / 2,
            };
            let graph = GraphSpec {
                family,
                d,
                expected_edges: r.random_range(0..=max),
                seed: i as u64,
            };
            let sem = SemSpec {
                noise: [NoiseKind::GaussEv, NoiseKind::GumbelEv, NoiseKind::Uniform][i % 3],
                weights: WeightRange::default(),
                noise_scale: 1.0,
                n: r.random_range(50..=300),
                seed: i as u64,
            };
            (i as u64, random_config(&mut r, d), graph, sem)
        })
        .collect();
    let results: Vec<Result<(usize, usize), String>> = jobs
        .par_iter()
        .map(|(_, config, graph, sem)| {
            let data = simulate(graph, sem).map_err(|e| e.to_string())?.dataset;
            let result = fit(&data, config).map_err(|e| e.to_string())?;
            let bad_iterations = result
                .trace
                .records
                .iter()
                .filter(|rec| !rec.acyclic)
                .count();
            let bad_final = usize::from(!result.graph.adjacency.is_acyclic());
            Ok((result.trace.records.len(), bad_iterations + bad_final))
        })
        .collect();
    let errors: Vec<&String> = results.iter().filter_map(|r| r.as_ref().err()).collect();
    let iterations: usize = results
        .iter()
        .filter_map(|r| r.as_ref().ok())
        .map(|r| r.0)
        .sum();
    let violations: usize = results
        .iter()
        .filter_map(|r| r.as_ref().ok())
        .map(|r| r.1)
        .sum();
    let mut detail = format!(
        "1000 fits, {iterations} recorded iterations, {violations} cyclic graphs, {} failed fits, {:.1}s",
        errors.len(),
        start.elapsed().as_secs_f64()
    );
    if let Some(e) = errors.first() {
        detail.push_str(&format!(" (first error: {e})"));
    }
    Outcome::check(violations == 0 && errors.is_empty(), detail)
}

fn c7_ordering_quality() -> Outcome {
    let start = Instant::now();
    let rows: Vec<(f64, f64, f64, f64)> = (0..10u64)
        .into_par_iter()
        .map(|seed| {
            let graph = GraphSpec {
                family: GraphFamily::Sf,
                d: 10,
                expected_edges: 20,
                seed,
            };
            let sem = SemSpec {
                noise: NoiseKind::GaussEv,
                weights: WeightRange {
                    low: 0.5,
                    high: 2.0,
                },
                noise_scale: 1.0,
                n: 1000,
                seed,
            };
            let sim = simulate(&graph, &sem).unwrap();
            let data = &sim.dataset;
            let truth = data.truth().unwrap();
            let base = LearnerConfig {
                operator: OperatorKind::TopKSparsemax,
                k: 10,
                estimator: EstimatorKind::Lars,
                regime: Regime::Bilevel,
                seed,
                ..LearnerConfig::default()
            };
            let learned = |init| {
                let config = LearnerConfig {
                    theta_init: init,
                    ..base.clone()
                };
                shd(&fit(data, &config).unwrap().graph.adjacency, truth).unwrap() as f64
            };
            let random =
                shd(&random_ordering_lars(data, seed).unwrap().adjacency, truth).unwrap() as f64;
            let mask = EdgeMask::new(sim.order.clone());
            let true_order = shd(
                &fit_lars(&data.standardized(), &mask).unwrap().adjacency,
                truth,
            )
            .unwrap() as f64;
            (
                learned(ThetaInit::Variances),
                learned(ThetaInit::Zeros),
                random,
                true_order,
            )
        })
        .collect();
    let secs = start.elapsed().as_secs_f64();
    let col =
        |f: fn(&(f64, f64, f64, f64)) -> f64| median(&mut rows.iter().map(f).collect::<Vec<_>>());
    let (ours, zeros, random, truth) = (col(|r| r.0), col(|r| r.1), col(|r| r.2), col(|r| r.3));
    let pass = ours < random && ours <= 2.0 * truth && secs < 600.0;
    Outcome::check(
        pass,
        format!(
            "median SHD: bilevel sparsemax K=10 LARS (variance init) {ours}, random ordering {random}, \
             true ordering {truth} (need < {random} and <= {}); zero init {zeros}; {secs:.1}s",
            2.0 * truth
        ),
    )
}

fn c8_sachs() -> Outcome {
    let Some(dir) = std::env::var_os("DAGUERRO_SACHS_DIR").map(PathBuf::from) else {
        return Outcome::skip(
            "set DAGUERRO_SACHS_DIR to a directory with X.csv and truth.edgelist",
        );
    };
    let data = match load_csv(dir.join("X.csv")) {
        Ok(d) => d,
        Err(e) => return Outcome::check(false, format!("cannot load data: {e}")),
    };
    let truth = match load_edgelist(dir.join("truth.edgelist"), Some(data.names())) {
        Ok(t) => t,
        Err(e) => return Outcome::check(false, format!("cannot load truth: {e}")),
    };
    let shape_ok = data.d() == 11 && data.n() == 853 && truth.edge_count() == 17;
    let runs: Vec<(f64, f64)> = (0..10u64)
        .into_par_iter()
        .map(|seed| {
            let config = LearnerConfig {
                operator: OperatorKind::TopKSparsemax,
                estimator: EstimatorKind::LinearL0,
                regime: Regime::Bilevel,
                seed,
                ..LearnerConfig::default()
            };
            let g = fit(&data, &config).unwrap().graph.adjacency;
            (shd(&g, &truth).unwrap() as f64, g.edge_count() as f64)
        })
        .collect();
    let mean_shd = runs.iter().map(|r| r.0).sum::<f64>() / 10.0;
    let mean_edges = runs.iter().map(|r| r.1).sum::<f64>() / 10.0;
    Outcome::check(
        shape_ok && (11.0..=18.0).contains(&mean_shd) && (5.0..=12.0).contains(&mean_edges),
        format!(
            "d={}, n={}, truth {} edges; mean SHD {mean_shd} (need [11, 18]), mean edges {mean_edges} \
             (need [5, 12])",
            data.d(),
            data.n(),
            truth.edge_count()
        ),
    )
}

fn random_dag(r: &mut ChaCha8Rng, d: usize, p: f64) -> Adjacency {
    let mut order: Vec<usize> = (0..d).collect();
    order.shuffle(r);
    let mut g = Adjacency::empty(d);
    for a in 0..d {
        for b in (a + 1)..d {
            if r.random_bool(p) {
                g.set(order[a], order[b], true);
            }
        }
    }
    g
}

/// Interventional mismatch count from closed-form linear-Gaussian algebra.
///
/// For each pair (i, j), the true law of `x_j` under `do(x_i = a)` is
/// Gaussian with mean `t * a` and variance `v`, read off the mutilated SEM.
/// Adjusting for the estimated parents `Z` of `i` gives mean `b * a` and
/// variance `Var(x_j | x_i, Z) + g' Cov(Z) g`, with `(b, g)` the population
/// regression of `x_j` on `(x_i, Z)`. When `j` is an estimated parent of
/// `i`, the estimate is the observational marginal of `x_j`.
fn interventional_oracle(
    truth: &Adjacency,
    weights: &DMatrix<f64>,
    noise: &[f64],
    est: &Adjacency,
) -> usize {
    let d = truth.dim();
    let id = DMatrix::<f64>::identity(d, d);
    let covariance = |b: &DMatrix<f64>, noise: &[f64]| {
        let inv = (&id - b).try_inverse().unwrap();
        let dn = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(noise));
        inv.transpose() * dn * &inv
    };
    let sigma = covariance(weights, noise);
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-7 * (1.0 + a.abs().max(b.abs()));
    let mut count = 0;
    for i in 0..d {
        let mut mutilated = weights.clone();
        mutilated.column_mut(i).fill(0.0);
        let mut cut_noise = noise.to_vec();
        cut_noise[i] = 0.0;
        let sigma_do = covariance(&mutilated, &cut_noise);
        // Effect of x_i = 1 under the mutilated model.
        let effect = (&id - &mutilated).try_inverse().unwrap();
        let z: Vec<usize> = est.parents(i);
        for j in 0..d {
            if j == i {
                continue;
            }
            let (true_mean, true_var) = (effect[(i, j)], sigma_do[(j, j)]);
            let (est_mean, est_var) = if z.contains(&j) {
                (0.0, sigma[(j, j)])
            } else {
                let preds: Vec<usize> = std::iter::once(i).chain(z.iter().copied()).collect();
                let m = preds.len();
                let sxx = DMatrix::from_fn(m, m, |a, b| sigma[(preds[a], preds[b])]);
                let sxy = nalgebra::DVector::from_fn(m, |a, _| sigma[(preds[a], j)]);
                let coef = sxx.clone().try_inverse().unwrap() * &sxy;
                let resid = sigma[(j, j)] - sxy.dot(&coef);
                let gz = coef.rows(1, m - 1).into_owned();
                let szz = sxx.view((1, 1), (m - 1, m - 1)).into_owned();
                (coef[0], resid + (gz.transpose() * szz * &gz)[(0, 0)])
            };
            if !close(true_mean, est_mean) || !close(true_var, est_var) {
                count += 1;
            }
        }
    }
    count
}

fn c9_sid_oracle() -> Outcome {
    let mut r = rng(9);
    let mut mismatches = 0;
    let mut total_sid = 0;
    for case in 0..100 {
        let d = r.random_range(2..=8);
        let density = r.random_range(0.1..0.8);
        let truth = random_dag(&mut r, d, density);
        let est = if case % 3 == 0 {
            // Perturb the truth: drop, add or reverse a few edges.
            let mut g = truth.clone();
            for _ in 0..r.random_range(1..=3) {
                let (a, b) = (r.random_range(0..d), r.random_range(0..d));
                if a == b {
                    continue;
                }
                let before = g.get(a, b);
                g.set(a, b, !before);
                g.set(b, a, false);
                if !g.is_acyclic() {
                    g.set(a, b, before);
                }
            }
            g
        } else {
            let density = r.random_range(0.1..0.8);
            random_dag(&mut r, d, density)
        };
        let weights = DMatrix::from_fn(d, d, |a, b| {
            if truth.get(a, b) {
                let w: f64 = r.random_range(0.3..1.5);
                if r.random_bool(0.5) {
                    w
                } else {
                    -w
                }
            } else {
                0.0
            }
        });
        let noise: Vec<f64> = (0..d).map(|_| r.random_range(0.5..1.5)).collect();
        let ours = sid(&est, &truth).unwrap();
        total_sid += ours;
        if ours != interventional_oracle(&truth, &weights, &noise, &est) {
            mismatches += 1;
        }
    }
    Outcome::check(
        mismatches == 0,
        format!("100 DAG pairs (total SID {total_sid}), {mismatches} disagreements with the closed-form oracle"),
    )
}

fn c10_sortnregress() -> Outcome {
    let d = 6;
    let chain = Adjacency::from_edges(d, (0..d - 1).map(|i| (i, i + 1))).unwrap();
    let mut exact = 0;
    let mut shds = Vec::new();
    for seed in 0..10u64 {
        let mut r = rng(100 + seed);
        let weights = DMatrix::from_fn(d, d, |a, b| {
            if chain.get(a, b) {
                if r.random_bool(0.5) {
                    2.0
                } else {
                    -2.0
                }
            } else {
                0.0
            }
        });
        let sem = SemSpec {
            noise: NoiseKind::GaussEv,
            weights: WeightRange::default(),
            noise_scale: 1.0,
            n: 1000,
            seed,
        };
        let data = sample_data(&chain, &weights, &sem).unwrap();
        let s = shd(&sortnregress(&data).unwrap().adjacency, &chain).unwrap();
        if s == 0 {
            exact += 1;
        }
        shds.push(s);
    }
    Outcome::check(
        exact == 10,
        format!("exact recovery on {exact}/10 seeds (SHD {shds:?})"),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("top-k oracle exactness", c1_top_k_exactness),
        (
            "SparseMAP equals permutahedron projection",
            c2_sparsemap_projection,
        ),
        (
            "top-k sparsemax equals full sparsemax",
            c3_topk_equals_full_sparsemax,
        ),
        ("gradient check", c4_gradient_check),
        ("sensitivity identities", c5_sensitivity),
        ("validity of every evaluated graph", c6_validity),
        ("ordering quality", c7_ordering_quality),
        ("Sachs soft reproduction", c8_sachs),
        ("SID oracle agreement", c9_sid_oracle),
        ("sortnregress sanity", c10_sortnregress),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let elapsed: Duration = start.elapsed();
        let status = match outcome.pass {
            Some(true) => "PASS",
            Some(false) => {
                failed += 1;
                "FAIL"
            }
            None => "SKIP",
        };
        println!(
            "{status} {:>2} {name}: {} [{:.1}s]",
            i + 1,
            outcome.detail,
            elapsed.as_secs_f64()
        );
    }
    if failed == 0 {
        return ExitCode::SUCCESS;
    }
    println!("{failed} criteria failed");
    let strict = std::env::var("DAGUERRO_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
