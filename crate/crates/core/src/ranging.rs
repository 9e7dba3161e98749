//! Two-way inter-satellite range synthesis with Gaussian noise and
//! satellite bias faults.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::constellation::PositionSet;
use crate::error::{Error, Result};
use crate::linkgraph::VisibilityGraph;

/// Faulty satellites, all sharing one bias magnitude (m).
#[derive(Debug, Clone, PartialEq)]
pub struct FaultConfig {
    fault_set: Vec<usize>,
    pub magnitude: f64,
}

impl FaultConfig {
    pub fn new(mut fault_set: Vec<usize>, magnitude: f64) -> Result<Self> {
        if !(magnitude >= 0.0 && magnitude.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "fault magnitude must be finite and non-negative, got {magnitude}"
            )));
        }
        fault_set.sort_unstable();
        fault_set.dedup();
        Ok(Self {
            fault_set,
            magnitude,
        })
    }

    pub fn none() -> Self {
        Self {
            fault_set: Vec::new(),
            magnitude: 0.0,
        }
    }

    pub fn fault_set(&self) -> &[usize] {
        &self.fault_set
    }

    pub fn is_faulty(&self, s: usize) -> bool {
        self.fault_set.binary_search(&s).is_ok()
    }

    /// Per-satellite bias `f_k`.
    pub fn bias(&self, s: usize) -> f64 {
        if self.is_faulty(s) {
            self.magnitude
        } else {
            0.0
        }
    }
}

/// Symmetric measured ranges (m); only visible pairs carry a value.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeMatrix {
    n: usize,
    r: Vec<f64>,
    measured: Vec<bool>,
    pub t: f64,
}

impl RangeMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Range between `i` and `j`, `Some(0.0)` on the diagonal, `None` if unobserved.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        if i == j {
            Some(0.0)
        } else if self.measured[i * self.n + j] {
            Some(self.r[i * self.n + j])
        } else {
            None
        }
    }

    pub fn is_measured(&self, i: usize, j: usize) -> bool {
        i == j || self.measured[i * self.n + j]
    }

    /// Builds a fully observed matrix from exact pairwise values (test and tooling helper).
    pub fn from_fn(n: usize, t: f64, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut r = vec![0.0; n * n];
        let mut measured = vec![false; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let v = f(i, j);
                r[i * n + j] = v;
                r[j * n + i] = v;
                measured[i * n + j] = true;
                measured[j * n + i] = true;
            }
        }
        Self { n, r, measured, t }
    }

    /// Debug dump: `t,i,j,range_m` per measured pair `i < j`.
    pub fn write_csv<W: Write>(&self, mut out: W, header: bool) -> std::io::Result<()> {
        if header {
            writeln!(out, "t,i,j,range_m")?;
        }
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                if let Some(r) = self.get(i, j) {
                    writeln!(out, "{},{},{},{}", self.t, i, j, r)?;
                }
            }
        }
        Ok(())
    }
}

/// Number of unordered satellite pairs, i.e. noise variates per epoch.
pub fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Draws one `N(0, σ_w²)` value per pair `i < j` in row-major order,
/// whether or not the pair is visible, so a pair's noise does not depend on
/// the topology.
pub fn draw_pair_noise<R: Rng + ?Sized>(n: usize, sigma_w: f64, rng: &mut R) -> Vec<f64> {
    (0..pair_count(n))
        .map(|_| sigma_w * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Applies pre-drawn pair noise and fault biases to the true geometry.
pub fn ranges_from_noise(
    positions: &PositionSet,
    graph: &VisibilityGraph,
    faults: &FaultConfig,
    pair_noise: &[f64],
) -> Result<RangeMatrix> {
    let n = positions.len();
    if graph.n() != n {
        return Err(Error::Contract(format!(
            "graph has {} vertices but {} positions were given",
            graph.n(),
            n
        )));
    }
    if pair_noise.len() != pair_count(n) {
        return Err(Error::Contract(format!(
            "expected {} pair noise values, got {}",
            pair_count(n),
            pair_noise.len()
        )));
    }
    if let Some(&bad) = faults.fault_set().iter().find(|&&s| s >= n) {
        return Err(Error::InvalidInput(format!("fault satellite {bad} out of range")));
    }
    let mut r = vec![0.0; n * n];
    let mut measured = vec![false; n * n];
    let mut pair = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            if graph.has_edge(i, j) {
                let v = (positions.distance(i, j) + pair_noise[pair]) + (faults.bias(i) + faults.bias(j));
                r[i * n + j] = v;
                r[j * n + i] = v;
                measured[i * n + j] = true;
                measured[j * n + i] = true;
            }
            pair += 1;
        }
    }
    Ok(RangeMatrix {
        n,
        r,
        measured,
        t: positions.t,
    })
}

/// Synthesizes one epoch of two-way range measurements on the visible links.
pub fn measure_ranges<R: Rng + ?Sized>(
    positions: &PositionSet,
    graph: &VisibilityGraph,
    faults: &FaultConfig,
    sigma_w: f64,
    rng: &mut R,
) -> Result<RangeMatrix> {
    if !(sigma_w >= 0.0 && sigma_w.is_finite()) {
        return Err(Error::InvalidInput(format!("sigma_w must be non-negative, got {sigma_w}")));
    }
    let noise = draw_pair_noise(positions.len(), sigma_w, rng);
    ranges_from_noise(positions, graph, faults, &noise)
}
