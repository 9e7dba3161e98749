//! Inter-satellite link visibility under occultation by a spherical body.

use std::io::Write;

use nalgebra::Vector3;

use crate::constellation::PositionSet;

/// Undirected link topology at one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct VisibilityGraph {
    n: usize,
    adjacency: Vec<bool>,
    pub t: f64,
}

impl VisibilityGraph {
    pub fn empty(n: usize, t: f64) -> Self {
        Self {
            n,
            adjacency: vec![false; n * n],
            t,
        }
    }

    pub fn complete(n: usize, t: f64) -> Self {
        let mut g = Self::empty(n, t);
        for i in 0..n {
            for j in (i + 1)..n {
                g.add_edge(i, j);
            }
        }
        g
    }

    /// Builds a graph from an edge list; self-loops are ignored.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut g = Self::empty(n, 0.0);
        for &(i, j) in edges {
            g.add_edge(i, j);
        }
        g
    }

    pub fn add_edge(&mut self, i: usize, j: usize) {
        if i != j {
            self.adjacency[i * self.n + j] = true;
            self.adjacency[j * self.n + i] = true;
        }
    }

    pub fn remove_edge(&mut self, i: usize, j: usize) {
        self.adjacency[i * self.n + j] = false;
        self.adjacency[j * self.n + i] = false;
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[i * self.n + j]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i * self.n..(i + 1) * self.n]
            .iter()
            .filter(|&&b| b)
            .count()
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&j| self.has_edge(i, j))
    }

    /// Edges as `(i, j)` with `i < j`, row-major.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                if self.has_edge(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().filter(|&&b| b).count() / 2
    }

    pub fn transpose(&self) -> Self {
        let mut adjacency = vec![false; self.n * self.n];
        for i in 0..self.n {
            for j in 0..self.n {
                adjacency[j * self.n + i] = self.adjacency[i * self.n + j];
            }
        }
        Self {
            n: self.n,
            adjacency,
            t: self.t,
        }
    }

    /// Debug dump: one `t,i,j` row per edge.
    pub fn write_edges_csv<W: Write>(&self, mut out: W, header: bool) -> std::io::Result<()> {
        if header {
            writeln!(out, "t,i,j")?;
        }
        for (i, j) in self.edges() {
            writeln!(out, "{},{},{}", self.t, i, j)?;
        }
        Ok(())
    }
}

/// True iff the segment `[p1, p2]` stays at or outside `radius` from the origin.
pub fn line_of_sight(p1: &Vector3<f64>, p2: &Vector3<f64>, radius: f64) -> bool {
    let d = p2 - p1;
    let len2 = d.norm_squared();
    if len2 == 0.0 {
        return true;
    }
    let s = (-p1.dot(&d) / len2).clamp(0.0, 1.0);
    (p1 + d * s).norm() >= radius
}

pub fn build_visibility_graph(positions: &PositionSet, radius: f64) -> VisibilityGraph {
    let n = positions.len();
    let mut g = VisibilityGraph::empty(n, positions.t);
    for i in 0..n {
        for j in (i + 1)..n {
            if line_of_sight(&positions.positions[i], &positions.positions[j], radius) {
                g.add_edge(i, j);
            }
        }
    }
    g
}
