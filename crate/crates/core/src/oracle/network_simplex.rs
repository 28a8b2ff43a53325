//! Primal network simplex for the uncapacitated transportation problem.
//!
//! Sources `0..m`, sinks `m..m+n`, and an artificial root `m+n`. Every node starts
//! attached to the root by an artificial arc; the artificial arcs into sinks carry a
//! cost large enough that they leave the basis whenever a real arc can replace them.
//! Trees are kept strongly feasible, which together with strictly improving entering
//! arcs rules out cycling.

use std::collections::VecDeque;

use ndarray::Array2;

use crate::error::{OtError, Result};

#[derive(Debug, Clone)]
pub(crate) struct SimplexOutput {
    /// Flow on arc `(i, j)`.
    pub flow: Array2<f64>,
    /// `u_i` for sources and `v_j` for sinks with `u_i + v_j ≤ C_ij`.
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub min_reduced_cost: f64,
    pub pivots: usize,
    pub artificial_flow: f64,
}

struct Network {
    m: usize,
    n: usize,
    source: Vec<usize>,
    target: Vec<usize>,
    cost: Vec<f64>,
    flow: Vec<f64>,
    /// Arc indices forming the current spanning tree.
    tree: Vec<usize>,
    in_tree: Vec<bool>,
    parent: Vec<usize>,
    pred: Vec<usize>,
    /// `true` when `pred[u]` points from `u` to its parent.
    up: Vec<bool>,
    depth: Vec<usize>,
    pi: Vec<f64>,
    adjacency: Vec<Vec<usize>>,
}

impl Network {
    fn new(a: &[f64], b: &[f64], cost: &Array2<f64>) -> Self {
        let (m, n) = (a.len(), b.len());
        let nodes = m + n + 1;
        let root = m + n;
        let real = m * n;
        let max_cost = cost.iter().fold(0.0f64, |x, &c| x.max(c));
        let big = (max_cost + 1.0) * nodes as f64;

        let mut source = Vec::with_capacity(real + m + n);
        let mut target = Vec::with_capacity(real + m + n);
        let mut costs = Vec::with_capacity(real + m + n);
        for i in 0..m {
            for j in 0..n {
                source.push(i);
                target.push(m + j);
                costs.push(cost[[i, j]]);
            }
        }
        let mut flow = vec![0.0; real];
        let mut tree = Vec::with_capacity(nodes - 1);
        for (i, &s) in a.iter().enumerate() {
            tree.push(source.len());
            // Zero-flow tree arcs must point away from the root, and any arc out of the
            // root is penalized so it cannot inject mass.
            if s > 0.0 {
                source.push(i);
                target.push(root);
                costs.push(0.0);
            } else {
                source.push(root);
                target.push(i);
                costs.push(big);
            }
            flow.push(s);
        }
        for (j, &d) in b.iter().enumerate() {
            tree.push(source.len());
            source.push(root);
            target.push(m + j);
            costs.push(big);
            flow.push(d);
        }
        let arcs = source.len();
        let mut in_tree = vec![false; arcs];
        for &e in &tree {
            in_tree[e] = true;
        }
        let mut net = Self {
            m,
            n,
            source,
            target,
            cost: costs,
            flow,
            tree,
            in_tree,
            parent: vec![root; nodes],
            pred: vec![usize::MAX; nodes],
            up: vec![false; nodes],
            depth: vec![0; nodes],
            pi: vec![0.0; nodes],
            adjacency: vec![Vec::new(); nodes],
        };
        net.rebuild();
        net
    }

    fn root(&self) -> usize {
        self.m + self.n
    }

    /// Recomputes parents, depths, and potentials from the tree arc list.
    fn rebuild(&mut self) {
        for adj in &mut self.adjacency {
            adj.clear();
        }
        for &e in &self.tree {
            self.adjacency[self.source[e]].push(e);
            self.adjacency[self.target[e]].push(e);
        }
        let root = self.root();
        let mut seen = vec![false; self.pi.len()];
        let mut queue = VecDeque::from([root]);
        seen[root] = true;
        self.pi[root] = 0.0;
        self.depth[root] = 0;
        while let Some(u) = queue.pop_front() {
            for k in 0..self.adjacency[u].len() {
                let e = self.adjacency[u][k];
                let (s, t) = (self.source[e], self.target[e]);
                let (child, up) = if s == u { (t, false) } else { (s, true) };
                if seen[child] {
                    continue;
                }
                seen[child] = true;
                self.parent[child] = u;
                self.pred[child] = e;
                self.up[child] = up;
                self.depth[child] = self.depth[u] + 1;
                // Tree arcs have zero reduced cost `c + π_s − π_t`.
                self.pi[child] = if up {
                    self.pi[u] - self.cost[e]
                } else {
                    self.pi[u] + self.cost[e]
                };
                queue.push_back(child);
            }
        }
    }

    fn reduced_cost(&self, e: usize) -> f64 {
        self.cost[e] + self.pi[self.source[e]] - self.pi[self.target[e]]
    }

    /// Block-search pricing over real arcs; `None` when no arc improves.
    fn entering(&self, next: &mut usize, block: usize, tolerance: f64) -> Option<usize> {
        let real = self.m * self.n;
        let mut best = None;
        let mut best_value = -tolerance;
        let mut scanned = 0;
        let mut in_block = 0;
        let mut e = *next;
        while scanned < real {
            if !self.in_tree[e] {
                let rc = self.reduced_cost(e);
                if rc < best_value {
                    best_value = rc;
                    best = Some(e);
                }
            }
            e += 1;
            if e == real {
                e = 0;
            }
            scanned += 1;
            in_block += 1;
            if in_block == block {
                if best.is_some() {
                    break;
                }
                in_block = 0;
            }
        }
        *next = e;
        best
    }

    /// Pushes flow around the cycle closed by `entering` and swaps the blocking arc out.
    fn pivot(&mut self, entering: usize) {
        let (s, t) = (self.source[entering], self.target[entering]);
        let (mut x, mut y) = (s, t);
        while x != y {
            if self.depth[x] >= self.depth[y] {
                x = self.parent[x];
            } else {
                y = self.parent[y];
            }
        }
        let join = x;

        // Flow runs join → s (down the s side), across the entering arc, then t → join.
        let mut theta = f64::INFINITY;
        let mut leaving = entering;
        let mut u = s;
        while u != join {
            if self.up[u] && self.flow[self.pred[u]] < theta {
                theta = self.flow[self.pred[u]];
                leaving = self.pred[u];
            }
            u = self.parent[u];
        }
        let mut u = t;
        while u != join {
            if !self.up[u] && self.flow[self.pred[u]] <= theta {
                theta = self.flow[self.pred[u]];
                leaving = self.pred[u];
            }
            u = self.parent[u];
        }

        debug_assert!(theta.is_finite(), "the transportation network has no directed cycles");
        if theta > 0.0 {
            self.flow[entering] += theta;
            let mut u = s;
            while u != join {
                let e = self.pred[u];
                self.flow[e] = if self.up[u] { self.flow[e] - theta } else { self.flow[e] + theta };
                u = self.parent[u];
            }
            let mut u = t;
            while u != join {
                let e = self.pred[u];
                self.flow[e] = if self.up[u] { self.flow[e] + theta } else { self.flow[e] - theta };
                u = self.parent[u];
            }
        }
        self.flow[leaving] = 0.0;

        if leaving != entering {
            let slot = self
                .tree
                .iter()
                .position(|&e| e == leaving)
                .expect("leaving arc is in the tree");
            self.tree[slot] = entering;
            self.in_tree[leaving] = false;
            self.in_tree[entering] = true;
            self.rebuild();
        }
    }
}

pub(crate) fn solve(a: &[f64], b: &[f64], cost: &Array2<f64>) -> Result<SimplexOutput> {
    let (m, n) = (a.len(), b.len());
    let mut net = Network::new(a, b, cost);
    let real = m * n;
    let max_cost = cost.iter().fold(0.0f64, |x, &c| x.max(c));
    let tolerance = 1e-12 * max_cost.max(1.0);
    let block = ((real as f64).sqrt().ceil() as usize).max(10).min(real);
    let cap = (real + m + n).saturating_mul(50).max(100_000);

    let mut next = 0;
    let mut pivots = 0;
    while let Some(e) = net.entering(&mut next, block, tolerance) {
        if pivots >= cap {
            return Err(OtError::Oracle(format!(
                "network simplex did not finish within {cap} pivots"
            )));
        }
        net.pivot(e);
        pivots += 1;
    }

    let artificial_flow = net.flow[real..].iter().fold(0.0, |x: f64, &f| x.max(f));
    let min_reduced_cost = (0..real).map(|e| net.reduced_cost(e)).fold(f64::INFINITY, f64::min);
    let flow = Array2::from_shape_vec((m, n), net.flow[..real].to_vec()).expect("m·n arcs");
    Ok(SimplexOutput {
        flow,
        u: net.pi[..m].iter().map(|p| -p).collect(),
        v: net.pi[m..m + n].to_vec(),
        min_reduced_cost,
        pivots,
        artificial_flow,
    })
}
