//! k-clique listing and per-epoch clique schedules.
//!
//! Listing follows the Chiba–Nishizeki scheme: vertices are visited in
//! non-increasing degree order; for each vertex `v` the (k-1)-cliques of the
//! subgraph induced by `v`'s surviving neighbours are listed recursively, then
//! `v` is deleted so no clique is reported twice.

use std::io::Write;

use crate::linkgraph::VisibilityGraph;

/// A fully connected vertex set, sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Clique(Vec<usize>);

impl Clique {
    /// Sorts and deduplicates; validity against a graph is checked separately.
    pub fn new(mut vertices: Vec<usize>) -> Self {
        vertices.sort_unstable();
        vertices.dedup();
        Self(vertices)
    }

    pub fn vertices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, s: usize) -> bool {
        self.0.binary_search(&s).is_ok()
    }

    pub fn is_clique_of(&self, graph: &VisibilityGraph) -> bool {
        self.0.iter().enumerate().all(|(a, &i)| {
            self.0[a + 1..].iter().all(|&j| i != j && graph.has_edge(i, j))
        })
    }
}

/// Lists every k-clique of `graph` exactly once, sorted lexicographically.
pub fn list_k_cliques(graph: &VisibilityGraph, k: usize) -> Vec<Clique> {
    let n = graph.n();
    if k == 0 || k > n {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&v| (std::cmp::Reverse(graph.degree(v)), v));

    let mut alive = vec![true; n];
    let mut out = Vec::new();
    let mut stack = Vec::with_capacity(k);
    for &v in &order {
        let candidates: Vec<usize> = graph.neighbors(v).filter(|&u| alive[u]).collect();
        stack.push(v);
        extend_cliques(graph, &candidates, k - 1, &mut stack, &mut out);
        stack.pop();
        alive[v] = false;
    }
    for c in &mut out {
        c.0.sort_unstable();
    }
    out.sort_unstable();
    out
}

// Appends to `out` every clique made of `stack` plus `remaining` mutually
// adjacent vertices drawn from `candidates`.
fn extend_cliques(
    graph: &VisibilityGraph,
    candidates: &[usize],
    remaining: usize,
    stack: &mut Vec<usize>,
    out: &mut Vec<Clique>,
) {
    if remaining == 0 {
        out.push(Clique(stack.clone()));
        return;
    }
    if candidates.len() < remaining {
        return;
    }
    for (idx, &u) in candidates.iter().enumerate() {
        // Later candidates only, so each subset is produced once.
        let next: Vec<usize> = candidates[idx + 1..]
            .iter()
            .copied()
            .filter(|&w| graph.has_edge(u, w))
            .collect();
        if next.len() + 1 < remaining {
            continue;
        }
        stack.push(u);
        extend_cliques(graph, &next, remaining - 1, stack, out);
        stack.pop();
    }
}

pub fn cliques_containing(cliques: &[Clique], s: usize) -> usize {
    cliques.iter().filter(|c| c.contains(s)).count()
}

/// Per-satellite clique participation counts for `n` satellites.
pub fn participation_counts(cliques: &[Clique], n: usize) -> Vec<usize> {
    let mut counts = vec![0; n];
    for c in cliques {
        for &v in c.vertices() {
            if v < n {
                counts[v] += 1;
            }
        }
    }
    counts
}

pub fn remove_satellite(cliques: &[Clique], s: usize) -> Vec<Clique> {
    cliques.iter().filter(|c| !c.contains(s)).cloned().collect()
}

/// Clique lists for a strictly increasing sequence of epochs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CliqueSchedule {
    epochs: Vec<(f64, Vec<Clique>)>,
}

impl CliqueSchedule {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends an epoch; `t` must be later than the last epoch.
    pub fn push(&mut self, t: f64, cliques: Vec<Clique>) -> crate::Result<()> {
        if let Some((last, _)) = self.epochs.last() {
            if t <= *last {
                return Err(crate::Error::Contract(format!(
                    "schedule epochs must increase: {t} after {last}"
                )));
            }
        }
        self.epochs.push((t, cliques));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn epochs(&self) -> &[(f64, Vec<Clique>)] {
        &self.epochs
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.epochs.iter().map(|(t, _)| *t)
    }

    pub fn total_cliques(&self) -> usize {
        self.epochs.iter().map(|(_, c)| c.len()).sum()
    }

    /// CSV rows `t,v0,v1,...` (one per clique).
    pub fn write_csv<W: Write>(&self, mut out: W, k: usize) -> std::io::Result<()> {
        let cols: Vec<String> = (0..k).map(|i| format!("v{i}")).collect();
        writeln!(out, "t,{}", cols.join(","))?;
        for (t, cliques) in &self.epochs {
            for c in cliques {
                let vs: Vec<String> = c.vertices().iter().map(|v| v.to_string()).collect();
                writeln!(out, "{t},{}", vs.join(","))?;
            }
        }
        Ok(())
    }
}
