//! Kernel functions and per-batch kernel contexts.
//!
//! `MstRbf` is `exp(-d^2 / (2 w^2))` where `d` sums the edges longer than
//! `w` on the path between two points through the minimum Euclidean
//! spanning tree of the current batch.  Points outside the batch (support
//! points of carried centers) hang off the tree as a leaf attached to their
//! nearest batch point.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mst::{euclidean_mst, SpanningTree};
use crate::util::{dot, sq_dist};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum KernelSpec {
    Linear,
    Rbf { omega: f64 },
    MstRbf { omega: f64 },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Linear => Ok(()),
            KernelSpec::Rbf { omega } | KernelSpec::MstRbf { omega } => {
                if omega > 0.0 && omega.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Parameter(format!("kernel omega must be finite and > 0, got {omega}")))
                }
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            KernelSpec::Linear => "linear",
            KernelSpec::Rbf { .. } => "rbf",
            KernelSpec::MstRbf { .. } => "mst_rbf",
        }
    }
}

/// Spanning tree of one batch plus the all-pairs excess path lengths.
#[derive(Debug, Clone)]
pub struct TreeContext {
    tree: SpanningTree,
    points: Vec<Vec<f64>>,
    omega: f64,
    excess: Vec<f64>,
}

impl TreeContext {
    pub fn new(points: &[Vec<f64>], omega: f64) -> Self {
        let tree = euclidean_mst(points);
        let excess = tree.excess_path_lengths(omega);
        TreeContext { tree, points: points.to_vec(), omega, excess }
    }

    pub fn tree(&self) -> &SpanningTree {
        &self.tree
    }

    fn between(&self, a: usize, b: usize) -> f64 {
        self.excess[a * self.points.len() + b]
    }

    /// Where an arbitrary point sits relative to the tree.
    pub fn locate(&self, p: &[f64]) -> Anchor {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, q) in self.points.iter().enumerate() {
            let d = sq_dist(p, q);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        if best_d == 0.0 {
            return Anchor::Node(best);
        }
        let edge = best_d.sqrt();
        Anchor::Leaf { node: best, excess: if edge > self.omega { edge } else { 0.0 } }
    }

    fn anchored_distance(&self, a: Anchor, b: Anchor) -> f64 {
        let (na, ea) = a.parts();
        let (nb, eb) = b.parts();
        ea + eb + self.between(na, nb)
    }
}

/// Position of a point on a batch tree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Anchor {
    Node(usize),
    Leaf { node: usize, excess: f64 },
}

impl Anchor {
    fn parts(self) -> (usize, f64) {
        match self {
            Anchor::Node(i) => (i, 0.0),
            Anchor::Leaf { node, excess } => (node, excess),
        }
    }
}

/// Evaluates a kernel between two points; `MstRbf` needs the batch tree.
pub fn kernel_eval(spec: &KernelSpec, x: &[f64], y: &[f64], tree: Option<&TreeContext>) -> Result<f64> {
    match *spec {
        KernelSpec::Linear => Ok(dot(x, y)),
        KernelSpec::Rbf { omega } => Ok((-sq_dist(x, y) / (2.0 * omega * omega)).exp()),
        KernelSpec::MstRbf { omega } => {
            let tree = tree.ok_or(Error::MissingTreeContext("mst_rbf"))?;
            if x == y {
                return Ok(1.0);
            }
            let d = tree.anchored_distance(tree.locate(x), tree.locate(y));
            Ok((-d * d / (2.0 * omega * omega)).exp())
        }
    }
}

/// A point prepared for repeated kernel evaluation in one batch context.
#[derive(Debug, Clone)]
pub struct Site {
    pub point: Vec<f64>,
    anchor: Option<Anchor>,
}

/// Kernel bound to one batch; owns the tree for `MstRbf`.
#[derive(Debug, Clone)]
pub struct KernelContext {
    spec: KernelSpec,
    tree: Option<TreeContext>,
}

impl KernelContext {
    pub fn new(spec: KernelSpec, batch_points: &[Vec<f64>]) -> Result<Self> {
        spec.validate()?;
        let tree = match spec {
            KernelSpec::MstRbf { omega } => Some(TreeContext::new(batch_points, omega)),
            _ => None,
        };
        Ok(KernelContext { spec, tree })
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn tree(&self) -> Option<&TreeContext> {
        self.tree.as_ref()
    }

    /// Site for batch point `i`.
    pub fn batch_site(&self, i: usize, point: &[f64]) -> Site {
        Site { point: point.to_vec(), anchor: self.tree.as_ref().map(|_| Anchor::Node(i)) }
    }

    /// Site for a point that may lie outside the batch.
    pub fn site(&self, point: &[f64]) -> Site {
        Site { point: point.to_vec(), anchor: self.tree.as_ref().map(|t| t.locate(point)) }
    }

    pub fn eval(&self, a: &Site, b: &Site) -> f64 {
        match self.spec {
            KernelSpec::Linear => dot(&a.point, &b.point),
            KernelSpec::Rbf { omega } => (-sq_dist(&a.point, &b.point) / (2.0 * omega * omega)).exp(),
            KernelSpec::MstRbf { omega } => {
                if a.point == b.point {
                    return 1.0;
                }
                let tree = self.tree.as_ref().expect("tree built for mst_rbf");
                let d = tree.anchored_distance(
                    a.anchor.expect("anchored site"),
                    b.anchor.expect("anchored site"),
                );
                (-d * d / (2.0 * omega * omega)).exp()
            }
        }
    }

    /// Symmetric Gram matrix over sites, each pair evaluated once.
    pub fn gram(&self, sites: &[Site]) -> nalgebra::DMatrix<f64> {
        let n = sites.len();
        let mut w = nalgebra::DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let k = self.eval(&sites[i], &sites[j]);
                w[(i, j)] = k;
                w[(j, i)] = k;
            }
        }
        w
    }
}
