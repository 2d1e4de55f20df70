//! Euclidean minimum spanning trees with tree-path queries.

use crate::util::sq_dist;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeEdge {
    pub a: usize,
    pub b: usize,
    pub length: f64,
}

/// Minimum spanning tree of the complete Euclidean graph on a point set.
#[derive(Debug, Clone)]
pub struct SpanningTree {
    n: usize,
    edges: Vec<TreeEdge>,
    adjacency: Vec<Vec<(usize, f64)>>,
}

/// Prim's algorithm on the dense graph, O(N^2).
pub fn euclidean_mst(points: &[Vec<f64>]) -> SpanningTree {
    let n = points.len();
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    if n > 0 {
        let mut in_tree = vec![false; n];
        let mut best = vec![f64::INFINITY; n];
        let mut parent = vec![usize::MAX; n];
        best[0] = 0.0;
        for _ in 0..n {
            let mut u = usize::MAX;
            for v in 0..n {
                if !in_tree[v] && (u == usize::MAX || best[v] < best[u]) {
                    u = v;
                }
            }
            in_tree[u] = true;
            if parent[u] != usize::MAX {
                edges.push(TreeEdge { a: parent[u], b: u, length: best[u].sqrt() });
            }
            for v in 0..n {
                if !in_tree[v] {
                    let d = sq_dist(&points[u], &points[v]);
                    if d < best[v] {
                        best[v] = d;
                        parent[v] = u;
                    }
                }
            }
        }
    }
    let mut adjacency = vec![Vec::new(); n];
    for e in &edges {
        adjacency[e.a].push((e.b, e.length));
        adjacency[e.b].push((e.a, e.length));
    }
    SpanningTree { n, edges, adjacency }
}

impl SpanningTree {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn edges(&self) -> &[TreeEdge] {
        &self.edges
    }

    pub fn total_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.length).sum()
    }

    /// Edge lengths along the unique tree path from `from` to `to`.
    pub fn path_edges(&self, from: usize, to: usize) -> Vec<f64> {
        let mut prev = vec![(usize::MAX, 0.0); self.n];
        let mut stack = vec![from];
        prev[from] = (from, 0.0);
        while let Some(u) = stack.pop() {
            if u == to {
                break;
            }
            for &(v, w) in &self.adjacency[u] {
                if prev[v].0 == usize::MAX {
                    prev[v] = (u, w);
                    stack.push(v);
                }
            }
        }
        let mut out = Vec::new();
        let mut cur = to;
        while cur != from {
            let (p, w) = prev[cur];
            out.push(w);
            cur = p;
        }
        out.reverse();
        out
    }

    /// All-pairs sums of path edge lengths strictly exceeding `threshold`,
    /// as a row-major `n x n` table.  One tree traversal per source.
    pub fn excess_path_lengths(&self, threshold: f64) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        let mut stack = Vec::with_capacity(n);
        let mut seen = vec![usize::MAX; n];
        let mut row = vec![0.0; n];
        for src in 0..n {
            row[src] = 0.0;
            stack.push(src);
            seen[src] = src;
            while let Some(u) = stack.pop() {
                let base = row[u];
                for &(v, w) in &self.adjacency[u] {
                    if seen[v] != src {
                        seen[v] = src;
                        row[v] = base + if w > threshold { w } else { 0.0 };
                        stack.push(v);
                    }
                }
            }
            for dst in src..n {
                out[src * n + dst] = row[dst];
                out[dst * n + src] = row[dst];
            }
        }
        out
    }
}
