//! Node orderings and the linear ordering score.
//!
//! A [`Permutation`] stores `order[position] = node` with 0-based nodes and
//! positions. Ranks are 1-based: `ranks()[node] = position + 1`, so the rank
//! vector of the identity is `[1, 2, ..., d]`.
//!
//! The score of an ordering under a node-score vector `theta` is
//! `sum_i theta[i] * rank[i]`. It is maximised by sorting `theta` in
//! increasing order, and [`top_k`] enumerates the best `k` orderings by
//! best-first search over adjacent transpositions.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_len, Error, Result};

/// Largest `d` for which [`enumerate_all`] will materialise `d!` orderings.
pub const MAX_ENUMERATE: usize = 9;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Permutation {
    order: Vec<usize>,
}

impl Permutation {
    /// Builds a permutation from `order[position] = node`.
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let d = order.len();
        let mut seen = vec![false; d];
        for &node in &order {
            if node >= d || seen[node] {
                return Err(Error::InvalidArgument(format!(
                    "{order:?} is not a permutation of 0..{d}"
                )));
            }
            seen[node] = true;
        }
        Ok(Self { order })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            order: (0..d).collect(),
        }
    }

    /// Builds a permutation from 1-based ranks (`ranks[node] = position + 1`).
    pub fn from_ranks(ranks: &[usize]) -> Result<Self> {
        let d = ranks.len();
        let mut order = vec![usize::MAX; d];
        for (node, &r) in ranks.iter().enumerate() {
            if r == 0 || r > d || order[r - 1] != usize::MAX {
                return Err(Error::InvalidArgument(format!(
                    "{ranks:?} is not a rank vector over 1..={d}"
                )));
            }
            order[r - 1] = node;
        }
        Ok(Self { order })
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// `order()[position] = node`.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// 1-based rank of every node.
    pub fn ranks(&self) -> Vec<usize> {
        let mut ranks = vec![0; self.order.len()];
        for (pos, &node) in self.order.iter().enumerate() {
            ranks[node] = pos + 1;
        }
        ranks
    }

    /// 0-based position of every node.
    pub fn positions(&self) -> Vec<usize> {
        let mut pos = vec![0; self.order.len()];
        for (p, &node) in self.order.iter().enumerate() {
            pos[node] = p;
        }
        pos
    }

    /// Group inverse: the permutation whose order is this one's positions.
    pub fn inverse(&self) -> Self {
        Self {
            order: self.positions(),
        }
    }

    /// The same nodes in the opposite order.
    pub fn reversed(&self) -> Self {
        Self {
            order: self.order.iter().rev().copied().collect(),
        }
    }

    /// Whether `a` comes strictly before `b`.
    pub fn precedes(&self, a: usize, b: usize) -> bool {
        let pos = self.positions();
        pos[a] < pos[b]
    }
}

impl TryFrom<Vec<usize>> for Permutation {
    type Error = Error;

    fn try_from(order: Vec<usize>) -> Result<Self> {
        Self::new(order)
    }
}

impl From<Permutation> for Vec<usize> {
    fn from(p: Permutation) -> Self {
        p.order
    }
}

/// A permutation with its score under some `theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPermutation {
    pub permutation: Permutation,
    pub score: f64,
}

/// `sum_i theta[i] * rank[i]`.
pub fn score(theta: &[f64], sigma: &Permutation) -> Result<f64> {
    check_len(theta.len(), sigma.len())?;
    Ok(score_unchecked(theta, sigma.order()))
}

// Sums in position order; the same permutation always yields the same bits.
fn score_unchecked(theta: &[f64], order: &[usize]) -> f64 {
    order
        .iter()
        .enumerate()
        .map(|(pos, &node)| theta[node] * (pos + 1) as f64)
        .sum()
}

fn by_score_then_index(theta: &[f64], a: usize, b: usize) -> Ordering {
    theta[a].total_cmp(&theta[b]).then(a.cmp(&b))
}

/// 1-best ordering: nodes sorted by increasing score, ties by node index.
pub fn sort_oracle(theta: &[f64]) -> Permutation {
    let mut order: Vec<usize> = (0..theta.len()).collect();
    order.sort_by(|&a, &b| by_score_then_index(theta, a, b));
    Permutation { order }
}

/// Same result as [`sort_oracle`], computed by insertion sort starting from
/// `hint`. Runs in `O(d + inversions)`, so it is cheap when `theta` moved
/// little since `hint` was produced. `hint` is overwritten with the result.
pub fn sort_oracle_warm(theta: &[f64], hint: &mut Permutation) -> Permutation {
    if hint.len() != theta.len() {
        *hint = sort_oracle(theta);
        return hint.clone();
    }
    let order = &mut hint.order;
    for i in 1..order.len() {
        let mut j = i;
        while j > 0 && by_score_then_index(theta, order[j - 1], order[j]) == Ordering::Greater {
            order.swap(j - 1, j);
            j -= 1;
        }
    }
    hint.clone()
}

/// Swaps the nodes at 1-based positions `j` and `j + 1`.
pub fn adjacent_transpose(sigma: &Permutation, j: usize) -> Result<Permutation> {
    let d = sigma.len();
    if j == 0 || j >= d {
        return Err(Error::InvalidArgument(format!(
            "adjacent transposition index {j} outside 1..={}",
            d.saturating_sub(1)
        )));
    }
    let mut order = sigma.order.clone();
    order.swap(j - 1, j);
    Ok(Permutation { order })
}

/// Swaps the nodes at 1-based positions `i < j`.
pub fn transpose(sigma: &Permutation, i: usize, j: usize) -> Result<Permutation> {
    let d = sigma.len();
    if i == 0 || i >= j || j > d {
        return Err(Error::InvalidArgument(format!(
            "transposition ({i} {j}) invalid for d = {d}"
        )));
    }
    let mut order = sigma.order.clone();
    order.swap(i - 1, j - 1);
    Ok(Permutation { order })
}

/// `d!`, or `None` on overflow.
pub fn factorial(d: usize) -> Option<usize> {
    (1..=d).try_fold(1usize, |acc, x| acc.checked_mul(x))
}

struct Candidate {
    score: f64,
    order: Vec<usize>,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    // Max-heap: higher score first, then lexicographically smaller order.
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then_with(|| other.order.cmp(&self.order))
    }
}

/// Output of [`top_k_with_stats`].
#[derive(Debug, Clone)]
pub struct TopK {
    pub items: Vec<ScoredPermutation>,
    /// Largest number of pending (not yet emitted) candidates seen.
    pub max_frontier: usize,
}

/// The `k` highest-scoring orderings in non-increasing score order.
pub fn top_k(theta: &[f64], k: usize) -> Result<Vec<ScoredPermutation>> {
    top_k_with_stats(theta, k).map(|t| t.items)
}

pub fn top_k_with_stats(theta: &[f64], k: usize) -> Result<TopK> {
    check_finite(theta, "theta")?;
    let d = theta.len();
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if let Some(available) = factorial(d) {
        if k > available {
            return Err(Error::InsufficientPermutations {
                requested: k,
                available,
            });
        }
    }

    let first = sort_oracle(theta).order;
    let mut seen: HashSet<Vec<usize>> = HashSet::with_capacity(k * d.max(1));
    let mut frontier = BinaryHeap::with_capacity(k * d.max(1));
    seen.insert(first.clone());
    frontier.push(Candidate {
        score: score_unchecked(theta, &first),
        order: first,
    });

    let mut items = Vec::with_capacity(k);
    let mut max_frontier = frontier.len();
    while items.len() < k {
        // Cannot be empty: every permutation is reachable by adjacent
        // transpositions and k <= d!.
        let best = frontier
            .pop()
            .expect("frontier exhausted before k permutations");
        if items.len() + 1 < k {
            for j in 0..d.saturating_sub(1) {
                let mut order = best.order.clone();
                order.swap(j, j + 1);
                if seen.contains(&order) {
                    continue;
                }
                seen.insert(order.clone());
                frontier.push(Candidate {
                    score: score_unchecked(theta, &order),
                    order,
                });
            }
            max_frontier = max_frontier.max(frontier.len());
        }
        items.push(ScoredPermutation {
            permutation: Permutation { order: best.order },
            score: best.score,
        });
    }
    Ok(TopK {
        items,
        max_frontier,
    })
}

/// Every ordering of `theta.len()` nodes with its score, in lexicographic
/// order of `order`. Test oracle for [`top_k`].
pub fn enumerate_all(theta: &[f64]) -> Result<Vec<ScoredPermutation>> {
    let d = theta.len();
    if d > MAX_ENUMERATE {
        return Err(Error::TooLarge {
            d,
            max: MAX_ENUMERATE,
        });
    }
    Ok((0..d)
        .permutations(d)
        .map(|order| ScoredPermutation {
            score: score_unchecked(theta, &order),
            permutation: Permutation { order },
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn perm(order: &[usize]) -> Permutation {
        Permutation::new(order.to_vec()).unwrap()
    }

    #[test]
    fn rejects_non_bijections() {
        assert!(Permutation::new(vec![0, 0, 1]).is_err());
        assert!(Permutation::new(vec![0, 3, 1]).is_err());
        assert!(Permutation::from_ranks(&[0, 1]).is_err());
        assert!(Permutation::from_ranks(&[2, 2]).is_err());
    }

    #[test]
    fn ranks_are_one_based_and_round_trip() {
        let p = perm(&[1, 2, 0]);
        assert_eq!(p.ranks(), vec![3, 1, 2]);
        assert_eq!(Permutation::from_ranks(&p.ranks()).unwrap(), p);
        assert_eq!(p.inverse().inverse(), p);
    }

    #[test]
    fn score_examples() {
        let theta = [0.3, 0.1, 0.2];
        let best = Permutation::from_ranks(&[3, 1, 2]).unwrap();
        assert!((score(&theta, &best).unwrap() - 1.4).abs() < 1e-12);
        // Brute force: the rank assignment [3,1,2] is the maximiser.
        let all = enumerate_all(&theta).unwrap();
        let max = all.iter().map(|s| s.score).fold(f64::MIN, f64::max);
        assert!((max - 1.4).abs() < 1e-12);

        assert_eq!(score(&[0.0; 3], &perm(&[2, 0, 1])).unwrap(), 0.0);
        assert_eq!(score(&[1.0, 2.0], &Permutation::identity(2)).unwrap(), 5.0);
        assert_eq!(score(&[1.0, 2.0], &perm(&[1, 0])).unwrap(), 4.0);
        assert!(matches!(
            score(&[1.0, 2.0], &Permutation::identity(3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn score_equals_permuted_theta_against_identity() {
        let theta = [0.7, -1.2, 0.4, 2.0];
        let sigma = perm(&[2, 0, 3, 1]);
        let permuted: Vec<f64> = sigma.order().iter().map(|&n| theta[n]).collect();
        let id = Permutation::identity(4);
        assert_eq!(
            score(&theta, &sigma).unwrap(),
            score(&permuted, &id).unwrap()
        );
    }

    #[test]
    fn sort_oracle_examples() {
        let s = sort_oracle(&[0.3, 0.1, 0.2]);
        assert_eq!(s.order(), &[1, 2, 0]);
        assert_eq!(s.ranks(), vec![3, 1, 2]);
        assert_eq!(sort_oracle(&[0.0; 3]), Permutation::identity(3));
        assert_eq!(sort_oracle(&[-1.0, 5.0]).ranks(), vec![1, 2]);
    }

    #[test]
    fn warm_sort_matches_cold_sort() {
        let mut hint = perm(&[3, 2, 1, 0, 4]);
        let theta = [0.5, 0.5, -2.0, 1.0, 0.0];
        assert_eq!(sort_oracle_warm(&theta, &mut hint), sort_oracle(&theta));
        assert_eq!(hint, sort_oracle(&theta));
        let mut short = Permutation::identity(2);
        assert_eq!(sort_oracle_warm(&theta, &mut short), sort_oracle(&theta));
    }

    #[test]
    fn adjacent_transpose_examples() {
        // order (2,3,1) in 1-based node labels is [1,2,0] here
        let p = perm(&[1, 2, 0]);
        let q = adjacent_transpose(&p, 1).unwrap();
        assert_eq!(q.order(), &[2, 1, 0]);
        assert_eq!(adjacent_transpose(&q, 1).unwrap(), p);
        assert!(adjacent_transpose(&p, 0).is_err());
        assert!(adjacent_transpose(&p, 3).is_err());

        let theta = [0.3, 0.1, 0.2];
        let best = sort_oracle(&theta);
        let flipped = adjacent_transpose(&best, 1).unwrap();
        assert!((score(&theta, &best).unwrap() - 1.4).abs() < 1e-12);
        assert!((score(&theta, &flipped).unwrap() - 1.3).abs() < 1e-12);
    }

    #[test]
    fn top_k_examples() {
        let theta = [0.3, 0.1, 0.2];
        let top = top_k(&theta, 3).unwrap();
        let scores: Vec<f64> = top.iter().map(|s| s.score).collect();
        for (s, e) in scores.iter().zip([1.4, 1.3, 1.3]) {
            assert!((s - e).abs() < 1e-12);
        }
        let all = top_k(&[0.0; 3], 6).unwrap();
        let distinct: HashSet<_> = all.iter().map(|s| s.permutation.clone()).collect();
        assert_eq!(distinct.len(), 6);
        assert!(all.iter().all(|s| s.score == 0.0));

        let theta = [0.9, -0.3, 0.2, 0.25];
        let one = top_k(&theta, 1).unwrap();
        assert_eq!(one[0].permutation, sort_oracle(&theta));
    }

    #[test]
    fn top_k_rejects_bad_k() {
        assert!(matches!(
            top_k(&[0.1, 0.2, 0.3], 7),
            Err(Error::InsufficientPermutations {
                requested: 7,
                available: 6
            })
        ));
        assert!(top_k(&[0.1], 0).is_err());
        assert!(top_k(&[f64::NAN, 0.0], 1).is_err());
    }

    #[test]
    fn top_k_tie_break_is_lexicographic() {
        let top = top_k(&[0.0; 3], 3).unwrap();
        let orders: Vec<&[usize]> = top.iter().map(|s| s.permutation.order()).collect();
        assert_eq!(orders, vec![&[0, 1, 2][..], &[0, 2, 1], &[1, 0, 2]]);
    }

    #[test]
    fn enumerate_all_examples() {
        assert_eq!(enumerate_all(&[0.1, 0.2, 0.3]).unwrap().len(), 6);
        let one = enumerate_all(&[2.5]).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].score, 2.5);
        assert!(matches!(
            enumerate_all(&[0.0; 10]),
            Err(Error::TooLarge { d: 10, .. })
        ));
        let mut all: Vec<f64> = enumerate_all(&[0.3, 0.1, 0.2])
            .unwrap()
            .iter()
            .map(|s| s.score)
            .collect();
        all.sort_by(|a, b| b.total_cmp(a));
        let top: Vec<f64> = top_k(&[0.3, 0.1, 0.2], 3)
            .unwrap()
            .iter()
            .map(|s| s.score)
            .collect();
        assert_eq!(&all[..3], &top[..]);
    }

    #[test]
    fn transpose_general() {
        let p = Permutation::identity(5);
        assert_eq!(transpose(&p, 2, 4).unwrap().order(), &[0, 3, 2, 1, 4]);
        assert!(transpose(&p, 3, 3).is_err());
        assert!(transpose(&p, 1, 6).is_err());
    }

    #[test]
    fn serde_round_trip_validates() {
        let p = perm(&[2, 0, 1]);
        let v: Vec<usize> = p.clone().into();
        assert_eq!(Permutation::try_from(v).unwrap(), p);
        assert!(Permutation::try_from(vec![1, 1]).is_err());
    }
}
