//! Directed graphs on `d` nodes and ordering-induced edge masks.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perm::Permutation;

/// Binary adjacency matrix, `get(i, j)` iff edge `i -> j`. Diagonal is
/// always zero.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Adjacency {
    d: usize,
    bits: Vec<bool>,
}

impl Adjacency {
    pub fn empty(d: usize) -> Self {
        Self {
            d,
            bits: vec![false; d * d],
        }
    }

    pub fn from_edges(d: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut a = Self::empty(d);
        for (i, j) in edges {
            if i >= d || j >= d {
                return Err(Error::InvalidArgument(format!(
                    "edge ({i}, {j}) out of range for d = {d}"
                )));
            }
            if i == j {
                return Err(Error::InvalidArgument(format!("self loop on node {i}")));
            }
            a.set(i, j, true);
        }
        Ok(a)
    }

    /// Builds from a dense predicate; the diagonal is ignored.
    pub fn from_fn(d: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut a = Self::empty(d);
        for i in 0..d {
            for j in 0..d {
                if i != j && f(i, j) {
                    a.set(i, j, true);
                }
            }
        }
        a
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.d + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        debug_assert!(i != j || !value, "self loops are not allowed");
        self.bits[i * self.d + j] = value;
    }

    pub fn edge_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Edges in row-major order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.d {
            for j in 0..self.d {
                if self.get(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn parents(&self, j: usize) -> Vec<usize> {
        (0..self.d).filter(|&i| self.get(i, j)).collect()
    }

    pub fn children(&self, i: usize) -> Vec<usize> {
        (0..self.d).filter(|&j| self.get(i, j)).collect()
    }

    /// Kahn's algorithm; `None` when a cycle exists. Ties go to the smallest
    /// node index.
    pub fn topological_order(&self) -> Option<Permutation> {
        let d = self.d;
        let mut indegree: Vec<usize> = (0..d).map(|j| self.parents(j).len()).collect();
        let mut queue: VecDeque<usize> = (0..d).filter(|&j| indegree[j] == 0).collect();
        let mut order = Vec::with_capacity(d);
        while let Some(i) = queue.pop_front() {
            order.push(i);
            for (j, deg) in indegree.iter_mut().enumerate() {
                if self.get(i, j) {
                    *deg -= 1;
                    if *deg == 0 {
                        queue.push_back(j);
                    }
                }
            }
        }
        (order.len() == d).then(|| Permutation::new(order).expect("Kahn output is a permutation"))
    }

    pub fn is_acyclic(&self) -> bool {
        self.topological_order().is_some()
    }

    /// Strict descendants of every node (transitive closure).
    pub fn descendants(&self) -> Vec<Vec<bool>> {
        let d = self.d;
        let mut reach = vec![vec![false; d]; d];
        for (s, row) in reach.iter_mut().enumerate() {
            let mut stack = self.children(s);
            while let Some(v) = stack.pop() {
                if !row[v] {
                    row[v] = true;
                    stack.extend(self.children(v));
                }
            }
        }
        reach
    }

    /// Relabels nodes: node `i` becomes `perm.order()[i]`.
    pub fn relabel(&self, perm: &Permutation) -> Self {
        let map = perm.order();
        let mut out = Self::empty(self.d);
        for (i, j) in self.edges() {
            out.set(map[i], map[j], true);
        }
        out
    }
}

/// Complete DAG induced by an ordering: edge `i -> j` allowed iff `i` comes
/// before `j`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EdgeMask {
    sigma: Permutation,
    positions: Vec<usize>,
}

impl EdgeMask {
    pub fn new(sigma: Permutation) -> Self {
        let positions = sigma.positions();
        Self { sigma, positions }
    }

    pub fn ordering(&self) -> &Permutation {
        &self.sigma
    }

    pub fn dim(&self) -> usize {
        self.positions.len()
    }

    pub fn allowed(&self, i: usize, j: usize) -> bool {
        self.positions[i] < self.positions[j]
    }

    /// Predecessors of `j` in the ordering, in node order.
    pub fn allowed_parents(&self, j: usize) -> Vec<usize> {
        (0..self.dim()).filter(|&i| self.allowed(i, j)).collect()
    }

    pub fn to_adjacency(&self) -> Adjacency {
        Adjacency::from_fn(self.dim(), |i, j| self.allowed(i, j))
    }
}
