//! Monte-Carlo experiment configuration file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

/// One detection threshold of the campaign grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ThresholdEntry {
    /// Percentile (in percent) of the calibrated fault-free statistic.
    Percentile { percentile: f64 },
    /// Explicit value.
    Value { label: String, value: f64 },
    /// Trained predictor model file.
    Model { label: String, model: PathBuf },
}

fn default_timestep() -> f64 {
    60.0
}

fn default_k() -> usize {
    6
}

fn default_delta_nf() -> usize {
    10
}

fn default_delta_rf() -> f64 {
    0.2
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Built-in name (`elfo`, `mars_walker`) or constellation file path.
    pub constellation: String,
    pub sigma_w_m: f64,
    pub fault_counts: Vec<usize>,
    pub magnitudes_m: Vec<f64>,
    pub thresholds: Vec<ThresholdEntry>,
    pub dl: Vec<usize>,
    pub n_trials: usize,
    pub seed: u64,
    #[serde(default = "default_timestep")]
    pub timestep_s: f64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_delta_nf")]
    pub delta_nf: usize,
    #[serde(default = "default_delta_rf")]
    pub delta_rf: f64,
}

impl Default for ExperimentConfig {
    /// The full ELFO grid: 3 fault counts, 5 magnitudes, 3 percentiles, 4 lengths.
    fn default() -> Self {
        Self {
            constellation: "elfo".into(),
            sigma_w_m: 1.0,
            fault_counts: vec![1, 2, 3],
            magnitudes_m: vec![5.0, 8.0, 10.0, 15.0, 20.0],
            thresholds: [95.0, 99.0, 99.9]
                .into_iter()
                .map(|percentile| ThresholdEntry::Percentile { percentile })
                .collect(),
            dl: vec![1, 2, 3, 5],
            n_trials: 500,
            seed: 0,
            timestep_s: default_timestep(),
            output_dir: default_output_dir(),
            k: default_k(),
            delta_nf: default_delta_nf(),
            delta_rf: default_delta_rf(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, String> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| format!("invalid experiment config: {e}"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.fault_counts.is_empty() || self.magnitudes_m.is_empty() || self.thresholds.is_empty() || self.dl.is_empty() {
            return Err("fault_counts, magnitudes_m, thresholds and dl must be non-empty".into());
        }
        if self.n_trials == 0 {
            return Err("n_trials must be at least 1".into());
        }
        for t in &self.thresholds {
            if let ThresholdEntry::Model { model, .. } = t {
                if !model.exists() {
                    return Err(format!("model file {} does not exist", model.display()));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_values() {
        let mut cfg = ExperimentConfig::default();
        cfg.thresholds.push(ThresholdEntry::Value {
            label: "custom".into(),
            value: 4.57e-7,
        });
        cfg.magnitudes_m.push(1.0 / 3.0);
        let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn defaults_fill_optional_fields() {
        let text = r#"{"constellation":"elfo","sigma_w_m":1,"fault_counts":[1],"magnitudes_m":[20],
            "thresholds":[{"percentile":99}],"dl":[1],"n_trials":10,"seed":3}"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(cfg.timestep_s, 60.0);
        assert_eq!((cfg.k, cfg.delta_nf, cfg.delta_rf), (6, 10, 0.2));
    }

    #[test]
    fn empty_lists_rejected() {
        let mut cfg = ExperimentConfig::default();
        cfg.dl.clear();
        assert!(ExperimentConfig::from_json(&cfg.to_json()).is_err());
    }

    #[test]
    fn missing_model_rejected() {
        let mut cfg = ExperimentConfig::default();
        cfg.thresholds = vec![ThresholdEntry::Model {
            label: "nn".into(),
            model: "/nonexistent/model.json".into(),
        }];
        assert!(cfg.validate().is_err());
    }
}
