//! Graph comparison metrics and ordering sensitivity diagnostics.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_len, Error, Result};
use crate::graph::Adjacency;
use crate::perm::{sort_oracle, Permutation};

fn check_dims(a: &Adjacency, b: &Adjacency) -> Result<()> {
    check_len(b.dim(), a.dim())
}

/// Structural Hamming distance: unordered pairs whose edge pattern differs.
/// A reversed edge counts once.
pub fn shd(est: &Adjacency, truth: &Adjacency) -> Result<usize> {
    check_dims(est, truth)?;
    let d = est.dim();
    let mut count = 0;
    for i in 0..d {
        for j in (i + 1)..d {
            if (est.get(i, j), est.get(j, i)) != (truth.get(i, j), truth.get(j, i)) {
                count += 1;
            }
        }
    }
    Ok(count)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision, recall and F1 over directed edges. Two empty graphs score
/// 1.0 everywhere; otherwise an empty side scores 0.
pub fn edge_scores(est: &Adjacency, truth: &Adjacency) -> Result<EdgeScores> {
    check_dims(est, truth)?;
    let n_est = est.edge_count();
    let n_true = truth.edge_count();
    if n_est == 0 && n_true == 0 {
        return Ok(EdgeScores {
            precision: 1.0,
            recall: 1.0,
            f1: 1.0,
        });
    }
    let tp = est
        .edges()
        .into_iter()
        .filter(|&(i, j)| truth.get(i, j))
        .count() as f64;
    let precision = if n_est == 0 { 0.0 } else { tp / n_est as f64 };
    let recall = if n_true == 0 { 0.0 } else { tp / n_true as f64 };
    let f1 = if tp == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(EdgeScores {
        precision,
        recall,
        f1,
    })
}

pub fn f1(est: &Adjacency, truth: &Adjacency) -> Result<f64> {
    Ok(edge_scores(est, truth)?.f1)
}

/// Whether `x` and `y` are d-separated by `z` (a membership mask), using
/// reachability along active trails.
pub fn d_separated(g: &Adjacency, x: usize, y: usize, z: &[bool]) -> bool {
    let d = g.dim();
    // nodes with a descendant in z (or in z themselves) unblock colliders
    let mut opens_collider = z.to_vec();
    let mut stack: Vec<usize> = (0..d).filter(|&v| z[v]).collect();
    while let Some(v) = stack.pop() {
        for p in g.parents(v) {
            if !opens_collider[p] {
                opens_collider[p] = true;
                stack.push(p);
            }
        }
    }
    // (node, arrived from a child) pairs
    let mut seen = vec![[false; 2]; d];
    let mut queue = VecDeque::from([(x, true)]);
    while let Some((v, up)) = queue.pop_front() {
        if seen[v][up as usize] {
            continue;
        }
        seen[v][up as usize] = true;
        if v == y && !z[v] {
            return false;
        }
        if up {
            if !z[v] {
                queue.extend(g.parents(v).into_iter().map(|p| (p, true)));
                queue.extend(g.children(v).into_iter().map(|c| (c, false)));
            }
        } else {
            if !z[v] {
                queue.extend(g.children(v).into_iter().map(|c| (c, false)));
            }
            if opens_collider[v] {
                queue.extend(g.parents(v).into_iter().map(|p| (p, true)));
            }
        }
    }
    true
}

/// Structural intervention distance: ordered pairs `(i, j)` for which
/// adjusting for the parents of `i` in `est` does not give the interventional
/// distribution of `j` under `do(i)` in `truth`.
///
/// When `j` is a parent of `i` in `est`, the estimate is "no effect", wrong
/// exactly when `j` descends from `i` in `truth`. Otherwise the parent set
/// must satisfy the generalized adjustment criterion in `truth`: it avoids
/// every descendant of a node on a causal path from `i` to `j`, and it
/// d-separates `i` and `j` once the first edge of every causal path is cut.
pub fn sid(est: &Adjacency, truth: &Adjacency) -> Result<usize> {
    check_dims(est, truth)?;
    if !est.is_acyclic() || !truth.is_acyclic() {
        return Err(Error::Cyclic);
    }
    let d = truth.dim();
    let de = truth.descendants();
    let mut count = 0;
    for i in 0..d {
        let parents = est.parents(i);
        let mut z = vec![false; d];
        for &p in &parents {
            z[p] = true;
        }
        for j in 0..d {
            if j == i {
                continue;
            }
            if z[j] {
                if de[i][j] {
                    count += 1;
                }
                continue;
            }
            // nodes after i on some directed path from i to j
            let causal: Vec<usize> = (0..d)
                .filter(|&w| de[i][w] && (w == j || de[w][j]))
                .collect();
            let forbidden = causal
                .iter()
                .any(|&w| z[w] || parents.iter().any(|&p| de[w][p]));
            if forbidden {
                count += 1;
                continue;
            }
            let mut backdoor = truth.clone();
            for &w in &causal {
                if backdoor.get(i, w) {
                    backdoor.set(i, w, false);
                }
            }
            if !d_separated(&backdoor, i, j, &z) {
                count += 1;
            }
        }
    }
    Ok(count)
}

/// SHD between the complete DAGs of two orderings, which is the number of
/// node pairs the orderings rank differently (Kendall tau distance).
pub fn complete_dag_shd(a: &Permutation, b: &Permutation) -> Result<usize> {
    check_len(a.len(), b.len())?;
    let (pa, pb) = (a.positions(), b.positions());
    let d = a.len();
    let mut count = 0;
    for i in 0..d {
        for j in (i + 1)..d {
            if (pa[i] < pa[j]) != (pb[i] < pb[j]) {
                count += 1;
            }
        }
    }
    Ok(count)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Crossings {
    pub count: usize,
    /// Either endpoint has tied coordinates, so `count` may understate the
    /// number of ordering changes along the segment.
    pub ties: bool,
}

fn has_ties(theta: &[f64]) -> bool {
    let mut v = theta.to_vec();
    v.sort_by(f64::total_cmp);
    v.windows(2).any(|w| w[0] == w[1])
}

/// Number of hyperplanes `theta_i = theta_j` strictly crossed by the segment
/// from `a` to `b`.
pub fn segment_crossings(a: &[f64], b: &[f64]) -> Result<Crossings> {
    check_len(a.len(), b.len())?;
    check_finite(a, "theta")?;
    check_finite(b, "theta")?;
    let d = a.len();
    let mut count = 0;
    for i in 0..d {
        for j in (i + 1)..d {
            if (a[i] - a[j]) * (b[i] - b[j]) < 0.0 {
                count += 1;
            }
        }
    }
    Ok(Crossings {
        count,
        ties: has_ties(a) || has_ties(b),
    })
}

/// Open interval of perturbations `eps` for which `theta + eps * e_i` keeps
/// the same sorted ordering: the gaps to the sorted neighbours of node `i`,
/// unbounded on the side with no neighbour.
pub fn stable_interval(theta: &[f64], i: usize) -> Result<(f64, f64)> {
    check_finite(theta, "theta")?;
    if i >= theta.len() {
        return Err(Error::InvalidArgument(format!("node {i} out of range")));
    }
    if has_ties(theta) {
        return Err(Error::Ties);
    }
    let order = sort_oracle(theta);
    let pos = order.positions()[i];
    let o = order.order();
    let lower = if pos == 0 {
        f64::NEG_INFINITY
    } else {
        theta[o[pos - 1]] - theta[i]
    };
    let upper = if pos + 1 == o.len() {
        f64::INFINITY
    } else {
        theta[o[pos + 1]] - theta[i]
    };
    Ok((lower, upper))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(d: usize, e: &[(usize, usize)]) -> Adjacency {
        Adjacency::from_edges(d, e.iter().copied()).unwrap()
    }

    #[test]
    fn shd_examples() {
        let truth = g(3, &[(1, 0), (1, 2)]);
        assert_eq!(shd(&truth, &truth).unwrap(), 0);
        assert_eq!(shd(&Adjacency::empty(3), &truth).unwrap(), 2);
        assert_eq!(shd(&g(3, &[(0, 1)]), &truth).unwrap(), 2);
    }

    #[test]
    fn f1_examples() {
        let truth = g(3, &[(0, 1), (1, 2)]);
        assert_eq!(f1(&truth, &truth).unwrap(), 1.0);
        assert_eq!(f1(&Adjacency::empty(3), &truth).unwrap(), 0.0);
        let s = edge_scores(&g(3, &[(0, 1), (2, 0)]), &truth).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (0.5, 0.5, 0.5));
        assert_eq!(f1(&Adjacency::empty(3), &Adjacency::empty(3)).unwrap(), 1.0);
    }

    #[test]
    fn sid_of_identical_graphs_is_zero() {
        let truth = g(4, &[(0, 1), (1, 2), (0, 3), (3, 2)]);
        assert_eq!(sid(&truth, &truth).unwrap(), 0);
    }

    #[test]
    fn sid_empty_estimate() {
        // without adjustment, do(i) on a non-ancestor of a correlated j is
        // estimated by the observational conditional, which is wrong
        let chain = g(3, &[(0, 1), (1, 2)]);
        assert_eq!(sid(&Adjacency::empty(3), &chain).unwrap(), 3);
        let fork = g(3, &[(0, 1), (0, 2)]);
        assert_eq!(sid(&Adjacency::empty(3), &fork).unwrap(), 4);
    }

    #[test]
    fn sid_rejects_cycles() {
        let cyc = g(2, &[(0, 1), (1, 0)]);
        assert!(matches!(
            sid(&cyc, &Adjacency::empty(2)),
            Err(Error::Cyclic)
        ));
    }

    #[test]
    fn d_separation_basics() {
        let collider = g(3, &[(0, 2), (1, 2)]);
        assert!(d_separated(&collider, 0, 1, &[false; 3]));
        assert!(!d_separated(&collider, 0, 1, &[false, false, true]));
        let chain = g(3, &[(0, 1), (1, 2)]);
        assert!(!d_separated(&chain, 0, 2, &[false; 3]));
        assert!(d_separated(&chain, 0, 2, &[false, true, false]));
    }

    #[test]
    fn complete_dag_shd_examples() {
        let id = Permutation::identity(5);
        let flip = Permutation::new(vec![3, 1, 2, 0, 4]).unwrap();
        assert_eq!(complete_dag_shd(&id, &flip).unwrap(), 5);
        let adj = Permutation::new(vec![1, 0, 2, 3, 4]).unwrap();
        assert_eq!(complete_dag_shd(&id, &adj).unwrap(), 1);
        let p = Permutation::identity(3);
        assert_eq!(complete_dag_shd(&p, &p.reversed()).unwrap(), 3);
    }

    #[test]
    fn crossings_examples() {
        let c = segment_crossings(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap();
        assert_eq!(
            c,
            Crossings {
                count: 3,
                ties: false
            }
        );
        let c = segment_crossings(&[1.0, 1.0], &[1.0, 1.0]).unwrap();
        assert_eq!(c.count, 0);
        assert!(c.ties);
    }

    #[test]
    fn stable_interval_examples() {
        let theta = [0.1, 0.2, 0.3];
        let (lo, hi) = stable_interval(&theta, 1).unwrap();
        assert!((lo + 0.1).abs() < 1e-12 && (hi - 0.1).abs() < 1e-12);
        let (lo, hi) = stable_interval(&theta, 0).unwrap();
        assert_eq!(lo, f64::NEG_INFINITY);
        assert!((hi - 0.1).abs() < 1e-12);
        assert!(matches!(stable_interval(&[1.0, 1.0], 0), Err(Error::Ties)));
    }
}
