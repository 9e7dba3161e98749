//! Detection thresholds: percentiles of sampled fault-free statistics,
//! gamma-distribution fits, and a learned per-subgraph threshold predictor.

mod dataset;
mod features;
mod mlp;

pub use dataset::{build_training_set, MIN_NOISE_DRAWS, geometry_percentile, TrainingSample, TARGET_PERCENTILE};
pub use features::{extract_features, PredictorFeatures, FEATURE_DIM};
pub use mlp::{predict_threshold, train_predictor, Gradients, MlpPredictor, TrainingConfig, LAYER_DIMS};

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constellation::ConstellationConfig;
use crate::edm::{analyze, build_edm, geometric_center};
use crate::error::{Error, Result};
use crate::ranging::{measure_ranges, FaultConfig};
use crate::scenario::{scene_at, DETECTION_CLIQUE_SIZE};
use crate::seeding;

/// Where a statistic sample came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleProvenance {
    pub constellation: String,
    pub sigma_w_m: f64,
    pub step_s: f64,
    pub duration_s: f64,
}

/// Fault-free test statistics, sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct StatisticSample {
    values: Vec<f64>,
    pub provenance: Option<SampleProvenance>,
}

impl StatisticSample {
    pub fn from_values(mut values: Vec<f64>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidInput(format!("statistic {bad} is not a finite non-negative value")));
        }
        values.sort_by(f64::total_cmp);
        Ok(Self {
            values,
            provenance: None,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn percentile(&self, p: f64) -> Result<f64> {
        percentile(self, p)
    }
}

/// Samples `γ` over every 6-clique at epochs `0, step, ...` strictly before
/// `duration` (a window of exactly one step yields one epoch).
///
/// Epoch `j` draws its noise from `(seed, CALIBRATION, j)`, so results do not
/// depend on thread count.
pub fn sample_statistics(
    config: &ConstellationConfig,
    sigma_w: f64,
    step: f64,
    duration: f64,
    seed: u64,
) -> Result<StatisticSample> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidInput(format!("step must be positive, got {step}")));
    }
    if !(duration >= step && duration.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "duration {duration} must be at least one step ({step})"
        )));
    }
    let epochs = epoch_count(step, duration);
    let per_epoch: Vec<Vec<f64>> = (0..epochs)
        .into_par_iter()
        .map(|j| {
            let t = step * j as f64;
            let scene = scene_at(config, t, DETECTION_CLIQUE_SIZE)?;
            let mut rng = seeding::stream(seed, seeding::DOMAIN_CALIBRATION, &[j as u64]);
            let ranges = measure_ranges(
                &scene.positions,
                &scene.graph,
                &FaultConfig::none(),
                sigma_w,
                &mut rng,
            )?;
            scene
                .cliques
                .iter()
                .map(|c| Ok(analyze(&geometric_center(&build_edm(&ranges, c)?))?.gamma_test))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let values: Vec<f64> = per_epoch.into_iter().flatten().collect();
    if values.is_empty() {
        return Err(Error::EmptySample(format!(
            "no {DETECTION_CLIQUE_SIZE}-cliques in {epochs} epochs of {}",
            config.name
        )));
    }
    let mut sample = StatisticSample::from_values(values)?;
    sample.provenance = Some(SampleProvenance {
        constellation: config.name.clone(),
        sigma_w_m: sigma_w,
        step_s: step,
        duration_s: duration,
    });
    Ok(sample)
}

pub(crate) fn epoch_count(step: f64, duration: f64) -> usize {
    // tolerate duration being a float multiple of step
    let ratio = duration / step;
    let whole = ratio.round();
    if (ratio - whole).abs() < 1e-9 {
        whole as usize
    } else {
        ratio.ceil() as usize
    }
}

/// Linear-interpolation percentile (`p` in percent) of the sorted sample.
pub fn percentile(sample: &StatisticSample, p: f64) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::EmptySample("percentile of an empty sample".into()));
    }
    if !(p > 0.0 && p < 100.0) {
        return Err(Error::InvalidInput(format!("percentile must be in (0, 100), got {p}")));
    }
    Ok(percentile_sorted(&sample.values, p))
}

pub(crate) fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = rank - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaFit {
    pub shape: f64,
    pub scale: f64,
}

impl GammaFit {
    pub fn mean(&self) -> f64 {
        self.shape * self.scale
    }

    pub fn variance(&self) -> f64 {
        self.shape * self.scale * self.scale
    }
}

/// Method-of-moments gamma fit: `k = mean² / var`, `θ = var / mean`.
pub fn fit_gamma(sample: &StatisticSample) -> Result<GammaFit> {
    let n = sample.len();
    if n < 10 {
        return Err(Error::InvalidInput(format!("gamma fit needs at least 10 values, got {n}")));
    }
    let mean = sample.values.iter().sum::<f64>() / n as f64;
    let var = sample.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if !(var > 0.0) || !(mean > 0.0) {
        return Err(Error::DegenerateFit(format!("mean {mean}, variance {var}")));
    }
    Ok(GammaFit {
        shape: mean * mean / var,
        scale: var / mean,
    })
}

/// On-disk threshold record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRecord {
    pub constellation: String,
    pub sigma_w_m: f64,
    pub percentile: f64,
    pub value: f64,
    pub n_samples: usize,
}

impl ThresholdRecord {
    pub fn write_all(records: &[ThresholdRecord], path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(records)?)?;
        Ok(())
    }

    pub fn read_all(path: impl AsRef<Path>) -> Result<Vec<ThresholdRecord>> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
