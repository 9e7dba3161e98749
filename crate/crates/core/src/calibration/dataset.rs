use nalgebra::{DMatrix, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::features::{extract_features, PredictorFeatures};
use super::percentile_sorted;
use crate::constellation::ConstellationConfig;
use crate::edm::{analyze, geometric_center, Edm};
use crate::error::{Error, Result};
use crate::scenario::{scene_at, DETECTION_CLIQUE_SIZE};
use crate::seeding;

/// Percentile (in percent) the predictor learns.
pub const TARGET_PERCENTILE: f64 = 99.7;

/// Smallest noise sample that resolves the target percentile.
pub const MIN_NOISE_DRAWS: usize = 300;

// Resample the epoch at most this often when a draw lands on a clique-free epoch.
const MAX_EPOCH_REDRAWS: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub features: PredictorFeatures,
    pub target: f64,
}

fn gamma_of_ranges(ranges: &DMatrix<f64>) -> Result<f64> {
    Ok(analyze(&geometric_center(&Edm::from_ranges(ranges)?))?.gamma_test)
}

/// Empirical `TARGET_PERCENTILE` of fault-free `γ_test` for one fixed
/// subgraph geometry over `n_noise` independent noise draws.
pub fn geometry_percentile<R: Rng + ?Sized>(
    points: &[Vector3<f64>],
    sigma_w: f64,
    n_noise: usize,
    rng: &mut R,
) -> Result<f64> {
    if n_noise < MIN_NOISE_DRAWS {
        return Err(Error::InvalidInput(format!(
            "n_noise must be at least {MIN_NOISE_DRAWS}, got {n_noise}"
        )));
    }
    let n = points.len();
    let truth = DMatrix::from_fn(n, n, |i, j| (points[i] - points[j]).norm());
    let mut gammas = Vec::with_capacity(n_noise);
    let mut noisy = truth.clone();
    for _ in 0..n_noise {
        for i in 0..n {
            for j in (i + 1)..n {
                let r = truth[(i, j)] + sigma_w * rng.sample::<f64, _>(StandardNormal);
                noisy[(i, j)] = r;
                noisy[(j, i)] = r;
            }
        }
        gammas.push(gamma_of_ranges(&noisy)?);
    }
    gammas.sort_by(f64::total_cmp);
    Ok(percentile_sorted(&gammas, TARGET_PERCENTILE))
}

/// Draws subgraph geometries at uniform epochs in one orbital period and a
/// uniform clique of that epoch, labels each with its noise-resimulated
/// percentile, and takes features from the noiseless analysis.
///
/// Geometry `g` uses the stream `(seed, GEOMETRY, g)` for everything, so the
/// set is independent of thread count.
pub fn build_training_set(
    config: &ConstellationConfig,
    sigma_w: f64,
    n_geometries: usize,
    n_noise: usize,
    seed: u64,
) -> Result<Vec<TrainingSample>> {
    if n_noise < MIN_NOISE_DRAWS {
        return Err(Error::InvalidInput(format!(
            "n_noise must be at least {MIN_NOISE_DRAWS}, got {n_noise}"
        )));
    }
    let period = config.period();
    (0..n_geometries)
        .into_par_iter()
        .map(|g| {
            let mut rng = seeding::stream(seed, seeding::DOMAIN_GEOMETRY, &[g as u64]);
            let mut picked = None;
            for _ in 0..MAX_EPOCH_REDRAWS {
                let t = rng.random_range(0.0..period);
                let scene = scene_at(config, t, DETECTION_CLIQUE_SIZE)?;
                if !scene.cliques.is_empty() {
                    let c = rng.random_range(0..scene.cliques.len());
                    let points: Vec<_> = scene.cliques[c]
                        .vertices()
                        .iter()
                        .map(|&s| scene.positions.positions[s])
                        .collect();
                    picked = Some(points);
                    break;
                }
            }
            let points = picked.ok_or_else(|| {
                Error::EmptySample(format!("no {DETECTION_CLIQUE_SIZE}-cliques found in {}", config.name))
            })?;
            let features = extract_features(&analyze(&geometric_center(&Edm::from_points(&points)))?)?;
            let target = geometry_percentile(&points, sigma_w, n_noise, &mut rng)?;
            Ok(TrainingSample { features, target })
        })
        .collect()
}
