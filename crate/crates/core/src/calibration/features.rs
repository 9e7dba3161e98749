use crate::edm::{canonicalize_sign, GcedmAnalysis};
use crate::error::{Error, Result};
use crate::scenario::DETECTION_CLIQUE_SIZE;

/// `3 (n + 1)` for 6-vertex subgraphs.
pub const FEATURE_DIM: usize = 3 * (DETECTION_CLIQUE_SIZE + 1);

/// `[λ1, λ2, λ3, u1ᵀ, u2ᵀ, u3ᵀ]` with sign-canonicalized vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorFeatures(Vec<f64>);

impl PredictorFeatures {
    pub fn from_vec(values: Vec<f64>) -> Result<Self> {
        if values.len() != FEATURE_DIM {
            return Err(Error::Contract(format!(
                "feature vector must have {FEATURE_DIM} entries, got {}",
                values.len()
            )));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.0[..3]
    }

    /// `u_{index+1}` block, `index < 3`.
    pub fn vector_block(&self, index: usize) -> &[f64] {
        let n = DETECTION_CLIQUE_SIZE;
        &self.0[3 + index * n..3 + (index + 1) * n]
    }
}

pub fn extract_features(analysis: &GcedmAnalysis) -> Result<PredictorFeatures> {
    let n = analysis.n();
    if n != DETECTION_CLIQUE_SIZE {
        return Err(Error::Contract(format!(
            "features are defined for {DETECTION_CLIQUE_SIZE}-vertex subgraphs, got {n}"
        )));
    }
    let mut z = Vec::with_capacity(FEATURE_DIM);
    z.extend_from_slice(&analysis.singular_values[..3]);
    for c in 0..3 {
        let mut u = analysis.left_vector(c);
        canonicalize_sign(&mut u);
        z.extend(u);
    }
    Ok(PredictorFeatures(z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edm::{analyze, geometric_center, Edm};
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_analysis(seed: u64) -> (Vec<Vector3<f64>>, GcedmAnalysis) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<_> = (0..6)
            .map(|_| Vector3::new(rng.random(), rng.random(), rng.random()) * 1000.0)
            .collect();
        let a = analyze(&geometric_center(&Edm::from_points(&pts))).unwrap();
        (pts, a)
    }

    #[test]
    fn dimension_is_21() {
        let (_, a) = random_analysis(1);
        let f = extract_features(&a).unwrap();
        assert_eq!(f.as_slice().len(), 21);
        assert_eq!(FEATURE_DIM, 21);
    }

    #[test]
    fn zero_matrix_gives_zero_features() {
        let a = analyze(&geometric_center(&Edm::from_points(&[Vector3::zeros(); 6]))).unwrap();
        let f = extract_features(&a).unwrap();
        assert_eq!(f.singular_values(), &[0.0, 0.0, 0.0]);
        // identity eigenvectors are already canonical; entries stay finite
        assert!(f.as_slice().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn wrong_size_is_rejected() {
        let pts = vec![Vector3::new(1.0, 2.0, 3.0); 7];
        let a = analyze(&geometric_center(&Edm::from_points(&pts))).unwrap();
        assert!(extract_features(&a).is_err());
    }

    #[test]
    fn sign_flips_do_not_change_features() {
        let (_, a) = random_analysis(2);
        let mut flipped = a.clone();
        for c in [0, 2] {
            let col = -flipped.left_vectors.column(c);
            flipped.left_vectors.set_column(c, &col);
        }
        assert_eq!(extract_features(&a).unwrap(), extract_features(&flipped).unwrap());
    }

    #[test]
    fn relabeling_permutes_vector_blocks() {
        let (pts, a) = random_analysis(3);
        let perm = [3, 0, 5, 1, 4, 2];
        let permuted: Vec<_> = perm.iter().map(|&i| pts[i]).collect();
        let b = analyze(&geometric_center(&Edm::from_points(&permuted))).unwrap();
        let fa = extract_features(&a).unwrap();
        let fb = extract_features(&b).unwrap();
        for (x, y) in fa.singular_values().iter().zip(fb.singular_values()) {
            assert!((x - y).abs() <= 1e-9 * fa.singular_values()[0]);
        }
        for block in 0..3 {
            let ua = fa.vector_block(block);
            let ub = fb.vector_block(block);
            for i in 0..6 {
                assert!((ub[i] - ua[perm[i]]).abs() < 1e-8, "block {block}");
            }
        }
    }
}
