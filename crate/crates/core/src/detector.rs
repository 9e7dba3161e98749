//! Greedy multi-round fault detection by subgraph voting.
//!
//! Each round flags every remaining clique whose `γ_test` exceeds the
//! threshold, gives one vote to the vertex with the largest `|u4|` entry, and
//! removes the top-voted satellite unless too few votes were cast or no
//! satellite holds a large enough share. Ranges are measured once per epoch,
//! so a clique's statistic never changes between rounds and is computed once.

use std::sync::Arc;

use crate::calibration::{extract_features, predict_threshold, MlpPredictor};
use crate::cliques::Clique;
use crate::edm::{analyze, build_edm, fault_vertex_index, geometric_center, MIN_STATISTIC_SIZE};
use crate::error::{Error, Result};
use crate::ranging::RangeMatrix;

#[derive(Debug, Clone)]
pub enum ThresholdRule {
    /// One `γ̄_test` for every subgraph.
    Fixed(f64),
    /// Per-subgraph threshold from the learned predictor.
    Predicted(Arc<MlpPredictor>),
}

impl ThresholdRule {
    pub fn predictor(&self) -> Option<&MlpPredictor> {
        match self {
            ThresholdRule::Fixed(_) => None,
            ThresholdRule::Predicted(m) => Some(m),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DetectorParams {
    pub k: usize,
    /// Detection window length in epochs.
    pub di: usize,
    pub delta_nf: usize,
    pub delta_rf: f64,
    pub threshold: ThresholdRule,
}

impl DetectorParams {
    pub fn new(k: usize, di: usize, delta_nf: usize, delta_rf: f64, threshold: ThresholdRule) -> Result<Self> {
        if k < MIN_STATISTIC_SIZE {
            return Err(Error::InvalidInput(format!("clique size must be at least {MIN_STATISTIC_SIZE}, got {k}")));
        }
        if di == 0 || delta_nf == 0 {
            return Err(Error::InvalidInput("di and delta_nf must be at least 1".into()));
        }
        if !(delta_rf > 0.0 && delta_rf < 1.0) {
            return Err(Error::InvalidInput(format!("delta_rf must be in (0, 1), got {delta_rf}")));
        }
        if let ThresholdRule::Fixed(v) = threshold {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("threshold must be finite and non-negative, got {v}")));
            }
        }
        Ok(Self {
            k,
            di,
            delta_nf,
            delta_rf,
            threshold,
        })
    }

    /// `k = 6`, `δ_nf = 10`, `δ_rf = 0.2`.
    pub fn with_defaults(di: usize, threshold: ThresholdRule) -> Result<Self> {
        Self::new(6, di, 10, 0.2, threshold)
    }
}

/// Per-satellite vote counts `N_f` of one round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoteState {
    counts: Vec<usize>,
    total: usize,
}

impl VoteState {
    pub fn zeros(n: usize) -> Self {
        Self {
            counts: vec![0; n],
            total: 0,
        }
    }

    pub fn from_counts(counts: Vec<usize>) -> Self {
        let total = counts.iter().sum();
        Self { counts, total }
    }

    pub fn add_vote(&mut self, s: usize) {
        self.counts[s] += 1;
        self.total += 1;
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn total(&self) -> usize {
        self.total
    }

    /// `R_f = N_f / ΣN_f`; `None` when no votes were cast.
    pub fn ratios(&self) -> Option<Vec<f64>> {
        (self.total > 0).then(|| {
            self.counts
                .iter()
                .map(|&c| c as f64 / self.total as f64)
                .collect()
        })
    }

    /// Most-voted satellite, lowest id on ties.
    pub fn leader(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (s, &c) in self.counts.iter().enumerate() {
            if best.map_or(true, |b| c > self.counts[b]) {
                best = Some(s);
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminationReason {
    TooFewVotes,
    NoDominantSatellite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Terminate(TerminationReason),
    Remove(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectionOutcome {
    /// Removed satellites in removal order.
    pub fault_list: Vec<usize>,
    pub rounds: usize,
    pub snapshots: Vec<VoteState>,
}

/// Statistic and attribution of one clique at one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct SubgraphEvidence {
    pub clique: Clique,
    pub gamma: f64,
    /// Satellite id at the largest `|u4|` entry.
    pub suspect: usize,
    pub predicted_threshold: Option<f64>,
}

impl SubgraphEvidence {
    /// Strict comparison: a statistic equal to the threshold is not flagged.
    pub fn is_flagged(&self, rule: &ThresholdRule) -> Result<bool> {
        match rule {
            ThresholdRule::Fixed(v) => Ok(self.gamma > *v),
            ThresholdRule::Predicted(_) => self
                .predicted_threshold
                .map(|v| self.gamma > v)
                .ok_or_else(|| Error::Contract("evidence was built without a predictor".into())),
        }
    }
}

/// Analyzes every clique of one epoch. With a predictor, also stores the
/// predicted threshold from the measured subgraph's features.
pub fn build_evidence(
    cliques: &[Clique],
    ranges: &RangeMatrix,
    predictor: Option<&MlpPredictor>,
) -> Result<Vec<SubgraphEvidence>> {
    cliques
        .iter()
        .map(|c| {
            let analysis = analyze(&geometric_center(&build_edm(ranges, c)?))?;
            let predicted_threshold = match predictor {
                Some(m) => Some(predict_threshold(m, &extract_features(&analysis)?)?),
                None => None,
            };
            Ok(SubgraphEvidence {
                clique: c.clone(),
                gamma: analysis.gamma_test,
                suspect: c.vertices()[fault_vertex_index(&analysis)],
                predicted_threshold,
            })
        })
        .collect()
}

fn window_evidence(
    clique_lists: &[Vec<Clique>],
    ranges: &[RangeMatrix],
    params: &DetectorParams,
) -> Result<Vec<Vec<SubgraphEvidence>>> {
    if clique_lists.len() != ranges.len() {
        return Err(Error::Contract(format!(
            "{} clique lists but {} range matrices",
            clique_lists.len(),
            ranges.len()
        )));
    }
    if let Some(c) = clique_lists.iter().flatten().find(|c| c.len() != params.k) {
        return Err(Error::Contract(format!("clique {:?} is not of size {}", c.vertices(), params.k)));
    }
    clique_lists
        .iter()
        .zip(ranges)
        .map(|(cl, r)| build_evidence(cl, r, params.threshold.predictor()))
        .collect()
}

/// Votes over evidence whose cliques avoid every satellite in `removed`.
pub fn tally_votes(
    evidence: &[Vec<SubgraphEvidence>],
    removed: &[usize],
    n: usize,
    rule: &ThresholdRule,
) -> Result<VoteState> {
    let mut votes = VoteState::zeros(n);
    for e in evidence.iter().flatten() {
        if removed.iter().any(|&s| e.clique.contains(s)) {
            continue;
        }
        if e.is_flagged(rule)? {
            votes.add_vote(e.suspect);
        }
    }
    Ok(votes)
}

/// Termination tests on a round's votes: fewer than `δ_nf` votes, then a
/// largest share below `δ_rf`; otherwise remove the leader.
pub fn verdict(votes: &VoteState, delta_nf: usize, delta_rf: f64) -> Verdict {
    if votes.total() < delta_nf {
        return Verdict::Terminate(TerminationReason::TooFewVotes);
    }
    let leader = votes.leader().expect("votes were cast");
    let share = votes.counts()[leader] as f64 / votes.total() as f64;
    if share < delta_rf {
        Verdict::Terminate(TerminationReason::NoDominantSatellite)
    } else {
        Verdict::Remove(leader)
    }
}

fn satellite_count(ranges: &[RangeMatrix]) -> usize {
    ranges.first().map_or(0, RangeMatrix::n)
}

/// One round over the full clique lists of a window.
pub fn detection_round(
    clique_lists: &[Vec<Clique>],
    ranges: &[RangeMatrix],
    params: &DetectorParams,
) -> Result<(VoteState, Verdict)> {
    let evidence = window_evidence(clique_lists, ranges, params)?;
    let votes = tally_votes(&evidence, &[], satellite_count(ranges), &params.threshold)?;
    let v = verdict(&votes, params.delta_nf, params.delta_rf);
    Ok((votes, v))
}

/// Greedy removal loop on precomputed evidence.
pub fn detect_from_evidence(
    evidence: &[Vec<SubgraphEvidence>],
    n: usize,
    params: &DetectorParams,
) -> Result<DetectionOutcome> {
    let mut fault_list = Vec::new();
    let mut snapshots = Vec::new();
    loop {
        let votes = tally_votes(evidence, &fault_list, n, &params.threshold)?;
        let v = verdict(&votes, params.delta_nf, params.delta_rf);
        snapshots.push(votes);
        match v {
            Verdict::Terminate(_) => break,
            Verdict::Remove(s) => fault_list.push(s),
        }
    }
    Ok(DetectionOutcome {
        rounds: snapshots.len(),
        fault_list,
        snapshots,
    })
}

/// Runs detection over a window of exactly `params.di` epochs, reusing each
/// epoch's range matrix in every round.
pub fn detect_faults(
    clique_lists: &[Vec<Clique>],
    ranges: &[RangeMatrix],
    params: &DetectorParams,
) -> Result<DetectionOutcome> {
    if clique_lists.len() != params.di {
        return Err(Error::Contract(format!(
            "window has {} epochs, expected {}",
            clique_lists.len(),
            params.di
        )));
    }
    let evidence = window_evidence(clique_lists, ranges, params)?;
    detect_from_evidence(&evidence, satellite_count(ranges), params)
}
