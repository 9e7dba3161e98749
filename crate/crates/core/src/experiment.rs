//! Seeded Monte-Carlo detection campaigns and confusion metrics.
//!
//! Trial `i` draws its start epoch and fault permutation from
//! `(seed, TRIAL, i)` and the noise of its `j`-th epoch from
//! `(seed, NOISE, i, j)`. Nothing depends on the grid cell, so every cell
//! sees the same geometries, fault sets and noise, and a fault set of size
//! `f` is the first `f` entries of the trial's permutation.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constellation::ConstellationConfig;
use crate::detector::{build_evidence, detect_faults, detect_from_evidence, DetectorParams, ThresholdRule};
use crate::error::{Error, Result};
use crate::ranging::{draw_pair_noise, ranges_from_noise, FaultConfig, RangeMatrix};
use crate::scenario::{scenes_from, EpochScene};
use crate::seeding;

/// Spacing of consecutive detection epochs (s).
pub const DETECTION_STEP_S: f64 = 60.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fn_: u64,
    pub fp: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fn_ + self.fp + self.tn
    }

    /// Scores one trial: listed satellites are positives.
    pub fn classify(n: usize, fault_set: &[usize], fault_list: &[usize]) -> Self {
        let mut c = Self::default();
        for s in 0..n {
            match (fault_set.contains(&s), fault_list.contains(&s)) {
                (true, true) => c.tp += 1,
                (true, false) => c.fn_ += 1,
                (false, true) => c.fp += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    pub fn add(&mut self, other: &Self) {
        self.tp += other.tp;
        self.fn_ += other.fn_;
        self.fp += other.fp;
        self.tn += other.tn;
    }
}

/// Rates from a confusion table; `NaN` where a denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSet {
    pub tpr: f64,
    pub fpr: f64,
    pub ppv: f64,
    pub f1: f64,
    pub p4: f64,
}

impl MetricSet {
    pub fn is_defined(&self) -> bool {
        [self.tpr, self.fpr, self.ppv, self.f1, self.p4]
            .iter()
            .all(|v| !v.is_nan())
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        f64::NAN
    } else {
        num as f64 / den as f64
    }
}

pub fn compute_metrics(c: &ConfusionCounts) -> MetricSet {
    let (tp, fn_, fp, tn) = (c.tp as f64, c.fn_ as f64, c.fp as f64, c.tn as f64);
    let tpr = ratio(c.tp, c.tp + c.fn_);
    let ppv = ratio(c.tp, c.tp + c.fp);
    // 2·PPV·TPR/(PPV+TPR) written over counts, so TP = 0 gives 0 rather than 0/0
    let f1 = if c.tp + c.fp == 0 || c.tp + c.fn_ == 0 {
        f64::NAN
    } else {
        2.0 * tp / (2.0 * tp + fp + fn_)
    };
    let p4_den = 4.0 * tp * tn + (tp + tn) * (fp + fn_);
    let p4 = if p4_den == 0.0 { f64::NAN } else { 4.0 * tp * tn / p4_den };
    MetricSet {
        tpr,
        fpr: ratio(c.fp, c.fp + c.tn),
        ppv,
        f1,
        p4,
    }
}

/// Draws shared by every grid cell of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialDraw {
    pub trial_id: u64,
    pub t0: f64,
    permutation: Vec<usize>,
}

impl TrialDraw {
    pub fn new(master_seed: u64, trial_id: u64, n: usize, period: f64) -> Self {
        let mut rng = seeding::stream(master_seed, seeding::DOMAIN_TRIAL, &[trial_id]);
        let t0 = rng.random_range(0.0..period);
        let mut permutation: Vec<usize> = (0..n).collect();
        permutation.shuffle(&mut rng);
        Self {
            trial_id,
            t0,
            permutation,
        }
    }

    /// `faults` distinct satellites, sorted.
    pub fn fault_set(&self, faults: usize) -> Vec<usize> {
        let mut s = self.permutation[..faults.min(self.permutation.len())].to_vec();
        s.sort_unstable();
        s
    }

    /// Noise of detection epoch `epoch`, one value per satellite pair.
    pub fn epoch_noise(&self, master_seed: u64, epoch: usize, n: usize, sigma_w: f64) -> Vec<f64> {
        let mut rng = seeding::stream(master_seed, seeding::DOMAIN_NOISE, &[self.trial_id, epoch as u64]);
        draw_pair_noise(n, sigma_w, &mut rng)
    }
}

#[derive(Debug, Clone)]
pub struct TrialSpec {
    pub trial_id: u64,
    pub t0: f64,
    pub fault_set: Vec<usize>,
    pub params: DetectorParams,
    pub sigma_w: f64,
    pub magnitude: f64,
    /// Spacing of detection epochs (s).
    pub step_s: f64,
}

impl TrialSpec {
    pub fn draw(
        config: &ConstellationConfig,
        master_seed: u64,
        trial_id: u64,
        faults: usize,
        magnitude: f64,
        sigma_w: f64,
        params: DetectorParams,
    ) -> Result<Self> {
        if faults > config.len() {
            return Err(Error::InvalidInput(format!(
                "{faults} faults requested for {} satellites",
                config.len()
            )));
        }
        let draw = TrialDraw::new(master_seed, trial_id, config.len(), config.period());
        Ok(Self {
            trial_id,
            t0: draw.t0,
            fault_set: draw.fault_set(faults),
            params,
            sigma_w,
            magnitude,
            step_s: DETECTION_STEP_S,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub fault_set: Vec<usize>,
    pub fault_list: Vec<usize>,
    pub counts: ConfusionCounts,
}

fn window_ranges(
    scenes: &[EpochScene],
    noise: &[Vec<f64>],
    faults: &FaultConfig,
) -> Result<Vec<RangeMatrix>> {
    scenes
        .iter()
        .zip(noise)
        .map(|(s, w)| ranges_from_noise(&s.positions, &s.graph, faults, w))
        .collect()
}

/// Runs one trial over epochs `t0, t0 + step, ...` (`params.di` of them).
pub fn run_trial(spec: &TrialSpec, config: &ConstellationConfig, master_seed: u64) -> Result<TrialResult> {
    let n = config.len();
    let di = spec.params.di;
    let draw = TrialDraw::new(master_seed, spec.trial_id, n, config.period());
    let scenes = scenes_from(config, spec.t0, spec.step_s, di, spec.params.k)?;
    let noise: Vec<_> = (0..di)
        .map(|j| draw.epoch_noise(master_seed, j, n, spec.sigma_w))
        .collect();
    let faults = FaultConfig::new(spec.fault_set.clone(), spec.magnitude)?;
    let ranges = window_ranges(&scenes, &noise, &faults)?;
    let cliques: Vec<_> = scenes.iter().map(|s| s.cliques.clone()).collect();
    let outcome = detect_faults(&cliques, &ranges, &spec.params)?;
    Ok(TrialResult {
        counts: ConfusionCounts::classify(n, &spec.fault_set, &outcome.fault_list),
        fault_set: spec.fault_set.clone(),
        fault_list: outcome.fault_list,
    })
}

#[derive(Debug, Clone)]
pub struct LabeledThreshold {
    pub label: String,
    pub rule: ThresholdRule,
}

impl LabeledThreshold {
    pub fn fixed(label: impl Into<String>, value: f64) -> Self {
        Self {
            label: label.into(),
            rule: ThresholdRule::Fixed(value),
        }
    }

    /// The fixed value, `NaN` in predicted mode.
    pub fn value(&self) -> f64 {
        match self.rule {
            ThresholdRule::Fixed(v) => v,
            ThresholdRule::Predicted(_) => f64::NAN,
        }
    }
}

/// Parameter grid; every combination is one results row.
#[derive(Debug, Clone)]
pub struct CampaignGrid {
    pub fault_counts: Vec<usize>,
    pub magnitudes: Vec<f64>,
    pub thresholds: Vec<LabeledThreshold>,
    pub detection_lengths: Vec<usize>,
    pub sigma_w: f64,
    pub k: usize,
    pub delta_nf: usize,
    pub delta_rf: f64,
    pub step_s: f64,
}

impl CampaignGrid {
    /// `k = 6`, `δ_nf = 10`, `δ_rf = 0.2`, `σ_w = 1 m`, 60 s epochs.
    pub fn new(
        fault_counts: Vec<usize>,
        magnitudes: Vec<f64>,
        thresholds: Vec<LabeledThreshold>,
        detection_lengths: Vec<usize>,
    ) -> Self {
        Self {
            fault_counts,
            magnitudes,
            thresholds,
            detection_lengths,
            sigma_w: 1.0,
            k: 6,
            delta_nf: 10,
            delta_rf: 0.2,
            step_s: DETECTION_STEP_S,
        }
    }

    pub fn cell_count(&self) -> usize {
        self.fault_counts.len() * self.magnitudes.len() * self.thresholds.len() * self.detection_lengths.len()
    }

    fn params(&self, threshold: &LabeledThreshold, dl: usize) -> Result<DetectorParams> {
        DetectorParams::new(self.k, dl, self.delta_nf, self.delta_rf, threshold.rule.clone())
    }

    fn predictor(&self) -> Option<&crate::calibration::MlpPredictor> {
        self.thresholds.iter().find_map(|t| t.rule.predictor())
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.cell_count() == 0 {
            return Err(Error::InvalidInput("campaign grid is empty".into()));
        }
        if !(self.step_s > 0.0 && self.step_s.is_finite()) {
            return Err(Error::InvalidInput(format!("step must be positive, got {}", self.step_s)));
        }
        if !(self.sigma_w >= 0.0 && self.sigma_w.is_finite()) {
            return Err(Error::InvalidInput(format!("sigma_w must be non-negative, got {}", self.sigma_w)));
        }
        if let Some(&f) = self.fault_counts.iter().find(|&&f| f > n) {
            return Err(Error::InvalidInput(format!("{f} faults requested for {n} satellites")));
        }
        let predictors: Vec<_> = self.thresholds.iter().filter_map(|t| t.rule.predictor()).collect();
        if predictors.windows(2).any(|w| !std::ptr::eq(w[0], w[1]) && w[0] != w[1]) {
            return Err(Error::InvalidInput("a campaign supports a single threshold predictor".into()));
        }
        for t in &self.thresholds {
            for &dl in &self.detection_lengths {
                self.params(t, dl)?;
            }
        }
        Ok(())
    }
}

/// One results-table row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub faults: usize,
    pub magnitude_m: f64,
    pub threshold_label: String,
    pub threshold_value: f64,
    pub dl: usize,
    pub trials: usize,
    pub tp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub fp: u64,
    pub tn: u64,
    pub tpr: f64,
    pub fpr: f64,
    pub ppv: f64,
    pub f1: f64,
    pub p4: f64,
}

impl ResultRow {
    pub fn counts(&self) -> ConfusionCounts {
        ConfusionCounts {
            tp: self.tp,
            fn_: self.fn_,
            fp: self.fp,
            tn: self.tn,
        }
    }
}

/// Counts of every cell for one trial, in row order.
fn trial_cells(
    config: &ConstellationConfig,
    grid: &CampaignGrid,
    master_seed: u64,
    trial_id: u64,
) -> Result<Vec<ConfusionCounts>> {
    let n = config.len();
    let max_dl = *grid.detection_lengths.iter().max().expect("validated");
    let draw = TrialDraw::new(master_seed, trial_id, n, config.period());
    let scenes = scenes_from(config, draw.t0, grid.step_s, max_dl, grid.k)?;
    let noise: Vec<_> = (0..max_dl)
        .map(|j| draw.epoch_noise(master_seed, j, n, grid.sigma_w))
        .collect();
    let predictor = grid.predictor();

    let mut cells = Vec::with_capacity(grid.cell_count());
    for &f in &grid.fault_counts {
        let fault_set = draw.fault_set(f);
        for &m in &grid.magnitudes {
            let faults = FaultConfig::new(fault_set.clone(), m)?;
            let ranges = window_ranges(&scenes, &noise, &faults)?;
            let evidence = scenes
                .iter()
                .zip(&ranges)
                .map(|(s, r)| build_evidence(&s.cliques, r, predictor))
                .collect::<Result<Vec<_>>>()?;
            for t in &grid.thresholds {
                for &dl in &grid.detection_lengths {
                    let params = grid.params(t, dl)?;
                    let outcome = detect_from_evidence(&evidence[..dl], n, &params)?;
                    cells.push(ConfusionCounts::classify(n, &fault_set, &outcome.fault_list));
                }
            }
        }
    }
    Ok(cells)
}

/// Runs `n_trials` trials for every grid cell. Trials run in parallel; counts
/// are integer sums, so the table does not depend on thread count.
pub fn run_campaign(
    config: &ConstellationConfig,
    grid: &CampaignGrid,
    n_trials: usize,
    master_seed: u64,
) -> Result<Vec<ResultRow>> {
    grid.validate(config.len())?;
    let per_trial: Vec<Vec<ConfusionCounts>> = (0..n_trials as u64)
        .into_par_iter()
        .map(|i| trial_cells(config, grid, master_seed, i))
        .collect::<Result<_>>()?;
    let mut totals = vec![ConfusionCounts::default(); grid.cell_count()];
    for trial in &per_trial {
        for (acc, c) in totals.iter_mut().zip(trial) {
            acc.add(c);
        }
    }

    let mut rows = Vec::with_capacity(totals.len());
    let mut cell = totals.iter();
    for &f in &grid.fault_counts {
        for &m in &grid.magnitudes {
            for t in &grid.thresholds {
                for &dl in &grid.detection_lengths {
                    let c = cell.next().expect("one total per cell");
                    let metrics = compute_metrics(c);
                    rows.push(ResultRow {
                        faults: f,
                        magnitude_m: m,
                        threshold_label: t.label.clone(),
                        threshold_value: t.value(),
                        dl,
                        trials: n_trials,
                        tp: c.tp,
                        fn_: c.fn_,
                        fp: c.fp,
                        tn: c.tn,
                        tpr: metrics.tpr,
                        fpr: metrics.fpr,
                        ppv: metrics.ppv,
                        f1: metrics.f1,
                        p4: metrics.p4,
                    });
                }
            }
        }
    }
    Ok(rows)
}

pub fn write_results_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Schema(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results_csv<R: std::io::Read>(input: R) -> Result<Vec<ResultRow>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(|e| Error::Schema(e.to_string())))
        .collect()
}
