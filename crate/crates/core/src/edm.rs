//! Euclidean distance matrices, geometric centering and the singular-value
//! fault statistic.
//!
//! For exact ranges between points in R³ the geometric-centered EDM
//! `G = -½ J D J`, `J = I - (1/n) 11ᵀ`, is a Gram matrix of rank at most 3.
//! A bias on the ranges touching one vertex lifts the 4th and 5th singular
//! values, so `γ = (λ4 + λ5) / λ1` measures how far the observed ranges are
//! from being embeddable in 3D, and the 4th left singular vector concentrates
//! on the offending vertex.

use nalgebra::{DMatrix, Vector3};

use crate::cliques::Clique;
use crate::error::{Error, Result};
use crate::ranging::RangeMatrix;

/// Smallest subgraph on which the statistic is defined.
pub const MIN_STATISTIC_SIZE: usize = 5;

/// Default relative threshold for numerical rank of noiseless matrices.
pub const NOISELESS_RANK_TOL: f64 = 1e-10;

/// Matrix of squared ranges (m²) with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct Edm(DMatrix<f64>);

impl Edm {
    /// Squares a symmetric matrix of ranges.
    pub fn from_ranges(ranges: &DMatrix<f64>) -> Result<Self> {
        check_square_symmetric(ranges, "range matrix")?;
        let mut d = ranges.map(|r| r * r);
        d.fill_diagonal(0.0);
        Ok(Self(d))
    }

    pub fn from_points(points: &[Vector3<f64>]) -> Self {
        let n = points.len();
        Self(DMatrix::from_fn(n, n, |i, j| (points[i] - points[j]).norm_squared()))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// Geometric-centered EDM `-½ J D J`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gcedm(DMatrix<f64>);

impl Gcedm {
    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// Largest absolute row sum relative to the largest absolute entry.
    pub fn relative_row_sum_error(&self) -> f64 {
        let scale = self.0.amax();
        if scale == 0.0 {
            return 0.0;
        }
        self.0
            .row_iter()
            .map(|row| row.sum().abs())
            .fold(0.0, f64::max)
            / scale
    }
}

/// Descending singular values and matching left singular vectors of a GCEDM.
#[derive(Debug, Clone, PartialEq)]
pub struct GcedmAnalysis {
    pub singular_values: Vec<f64>,
    /// Column `i` is `u_{i+1}`.
    pub left_vectors: DMatrix<f64>,
    pub gamma_test: f64,
}

impl GcedmAnalysis {
    pub fn n(&self) -> usize {
        self.singular_values.len()
    }

    /// `u_{index+1}` as a vector.
    pub fn left_vector(&self, index: usize) -> Vec<f64> {
        self.left_vectors.column(index).iter().copied().collect()
    }
}

/// Extracts the clique's sub-matrix of measured ranges and squares it.
pub fn build_edm(ranges: &RangeMatrix, clique: &Clique) -> Result<Edm> {
    let vs = clique.vertices();
    let k = vs.len();
    let mut d = DMatrix::zeros(k, k);
    for a in 0..k {
        for b in (a + 1)..k {
            let r = ranges.get(vs[a], vs[b]).ok_or_else(|| {
                Error::Contract(format!(
                    "no range between {} and {} at t={}; clique list is stale",
                    vs[a], vs[b], ranges.t
                ))
            })?;
            d[(a, b)] = r * r;
            d[(b, a)] = r * r;
        }
    }
    Ok(Edm(d))
}

pub fn geometric_center(edm: &Edm) -> Gcedm {
    let d = &edm.0;
    let n = d.nrows();
    if n == 0 {
        return Gcedm(DMatrix::zeros(0, 0));
    }
    let inv_n = 1.0 / n as f64;
    // J D J: subtract row and column means, add back the grand mean.
    let row_means: Vec<f64> = (0..n).map(|i| d.row(i).sum() * inv_n).collect();
    let col_means: Vec<f64> = (0..n).map(|j| d.column(j).sum() * inv_n).collect();
    let grand = row_means.iter().sum::<f64>() * inv_n;
    let mut g = DMatrix::from_fn(n, n, |i, j| {
        -0.5 * (d[(i, j)] - row_means[i] - col_means[j] + grand)
    });
    // symmetrize away rounding differences between the two mean vectors
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (g[(i, j)] + g[(j, i)]);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    Gcedm(g)
}

/// Full (symmetric) SVD with descending singular values and `γ = (λ4 + λ5) / λ1`
/// (`0` when `λ1 = 0`).
pub fn analyze(gcedm: &Gcedm) -> Result<GcedmAnalysis> {
    let n = gcedm.n();
    if n < MIN_STATISTIC_SIZE {
        return Err(Error::Contract(format!(
            "test statistic needs at least {MIN_STATISTIC_SIZE} vertices, got {n}"
        )));
    }
    let (singular_values, left_vectors) = symmetric_svd(gcedm.matrix())?;
    let gamma_test = gamma_statistic(&singular_values);
    Ok(GcedmAnalysis {
        singular_values,
        left_vectors,
        gamma_test,
    })
}

/// `(λ4 + λ5) / λ1` from descending singular values.
pub fn gamma_statistic(singular_values: &[f64]) -> f64 {
    let l1 = singular_values[0];
    if l1 == 0.0 {
        0.0
    } else {
        (singular_values[3] + singular_values[4]) / l1
    }
}

/// SVD of a symmetric matrix via cyclic Jacobi eigendecomposition.
///
/// For symmetric `M = Q Λ Qᵀ` the singular values are `|Λ|` and the left
/// singular vectors are the columns of `Q`. Values come back sorted
/// descending; ties keep the lower eigen-index first. Jacobi keeps the
/// absolute error of every value near `ε‖M‖`, which the statistic needs since
/// `λ4, λ5` sit six or seven orders of magnitude below `λ1`.
pub fn symmetric_svd(m: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::InvalidInput("matrix must be square".into()));
    }
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::Numeric("matrix has non-finite entries".into()));
    }
    let (eigenvalues, q) = jacobi_eigen(m)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eigenvalues[b].abs().total_cmp(&eigenvalues[a].abs()));
    let values = order.iter().map(|&i| eigenvalues[i].abs()).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| q[r * n + order[c]]);
    Ok((values, vectors))
}

const JACOBI_MAX_SWEEPS: usize = 64;

// Cyclic Jacobi on a row-major copy. Returns eigenvalues and the row-major
// eigenvector matrix (column j pairs with eigenvalue j).
fn jacobi_eigen(m: &DMatrix<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = m.nrows();
    let mut a: Vec<f64> = (0..n * n).map(|k| m[(k / n, k % n)]).collect();
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        q[i * n + i] = 1.0;
    }
    let frob = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    if frob == 0.0 {
        return Ok((vec![0.0; n], q));
    }
    let floor = 1e-18 * frob;

    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for r in (p + 1)..n {
                let apr = a[p * n + r];
                if apr.abs() <= floor {
                    continue;
                }
                rotated = true;
                let app = a[p * n + p];
                let arr = a[r * n + r];
                let theta = (arr - app) / (2.0 * apr);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akr = a[k * n + r];
                    a[k * n + p] = c * akp - s * akr;
                    a[k * n + r] = s * akp + c * akr;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let ark = a[r * n + k];
                    a[p * n + k] = c * apk - s * ark;
                    a[r * n + k] = s * apk + c * ark;
                }
                a[p * n + r] = 0.0;
                a[r * n + p] = 0.0;
                for k in 0..n {
                    let qkp = q[k * n + p];
                    let qkr = q[k * n + r];
                    q[k * n + p] = c * qkp - s * qkr;
                    q[k * n + r] = s * qkp + c * qkr;
                }
            }
        }
        if !rotated {
            return Ok(((0..n).map(|i| a[i * n + i]).collect(), q));
        }
    }
    Err(Error::Numeric("Jacobi eigensolver did not converge".into()))
}

/// Local index of the vertex with the largest `|u4|` entry (lowest index on ties).
pub fn fault_vertex_index(analysis: &GcedmAnalysis) -> usize {
    argmax_abs(analysis.left_vectors.column(3).iter().copied())
}

pub(crate) fn argmax_abs(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_abs = f64::NEG_INFINITY;
    for (i, v) in values.enumerate() {
        if v.abs() > best_abs {
            best = i;
            best_abs = v.abs();
        }
    }
    best
}

/// Count of singular values above `rel_tol · λ1`.
pub fn numerical_rank(singular_values: &[f64], rel_tol: f64) -> usize {
    match singular_values.first() {
        Some(&l1) if l1 > 0.0 => singular_values.iter().filter(|&&s| s > rel_tol * l1).count(),
        _ => 0,
    }
}

/// Flips `v` so its largest-magnitude entry (lowest index on ties) is positive.
/// The zero vector is left unchanged.
pub fn canonicalize_sign(v: &mut [f64]) {
    if v.is_empty() {
        return;
    }
    let pivot = argmax_abs(v.iter().copied());
    if v[pivot] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn check_square_symmetric(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::InvalidInput(format!("{what} must be square")));
    }
    for i in 0..m.nrows() {
        for j in (i + 1)..m.nrows() {
            if m[(i, j)] != m[(j, i)] {
                return Err(Error::InvalidInput(format!("{what} must be symmetric")));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_points(rng: &mut impl Rng, n: usize, scale: f64) -> Vec<Vector3<f64>> {
        (0..n)
            .map(|_| {
                Vector3::new(
                    rng.random_range(0.0..scale),
                    rng.random_range(0.0..scale),
                    rng.random_range(0.0..scale),
                )
            })
            .collect()
    }

    fn ranges_of(points: &[Vector3<f64>]) -> DMatrix<f64> {
        let n = points.len();
        DMatrix::from_fn(n, n, |i, j| (points[i] - points[j]).norm())
    }

    fn noisy_ranges(points: &[Vector3<f64>], sigma: f64, bias: &[f64], rng: &mut impl Rng) -> DMatrix<f64> {
        let n = points.len();
        let mut r = ranges_of(points);
        for i in 0..n {
            for j in (i + 1)..n {
                let w: f64 = rng.sample(StandardNormal);
                let v = r[(i, j)] + sigma * w + bias[i] + bias[j];
                r[(i, j)] = v;
                r[(j, i)] = v;
            }
        }
        r
    }

    fn analysis_of(r: &DMatrix<f64>) -> GcedmAnalysis {
        analyze(&geometric_center(&Edm::from_ranges(r).unwrap())).unwrap()
    }

    #[test]
    fn unit_square_edm() {
        let pts = [
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(1.0, 1.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
        ];
        let ranges = RangeMatrix::from_fn(4, 0.0, |i, j| (pts[i] - pts[j]).norm());
        let edm = build_edm(&ranges, &Clique::new(vec![0, 1, 2, 3])).unwrap();
        let expect = DMatrix::from_row_slice(
            4,
            4,
            &[0., 1., 2., 1., 1., 0., 1., 2., 2., 1., 0., 1., 1., 2., 1., 0.],
        );
        assert!((edm.matrix() - expect).amax() < 1e-12);
    }

    #[test]
    fn single_point_edm() {
        let ranges = RangeMatrix::from_fn(3, 0.0, |_, _| 5.0);
        let edm = build_edm(&ranges, &Clique::new(vec![1])).unwrap();
        assert_eq!(edm.matrix(), &DMatrix::zeros(1, 1));
    }

    #[test]
    fn missing_edge_is_a_contract_violation() {
        let cfg = crate::constellation::ConstellationConfig::elfo();
        let pos = crate::constellation::propagate(&cfg, 0.0).unwrap();
        let g = crate::linkgraph::build_visibility_graph(&pos, cfg.body.radius);
        let r = crate::ranging::ranges_from_noise(&pos, &g, &crate::ranging::FaultConfig::none(), &[0.0; 66]).unwrap();
        let (i, j) = (0..12)
            .flat_map(|i| (0..12).map(move |j| (i, j)))
            .find(|&(i, j)| i != j && !g.has_edge(i, j))
            .unwrap();
        assert!(matches!(build_edm(&r, &Clique::new(vec![i, j])), Err(Error::Contract(_))));
    }

    #[test]
    fn zero_edm_centers_to_zero() {
        let g = geometric_center(&Edm(DMatrix::zeros(6, 6)));
        assert_eq!(g.matrix(), &DMatrix::zeros(6, 6));
        let a = analyze(&g).unwrap();
        assert_eq!(a.gamma_test, 0.0);
    }

    #[test]
    fn exact_cube_points_have_rank_three() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts = random_points(&mut rng, 6, 1.0);
        let a = analysis_of(&ranges_of(&pts));
        assert_eq!(numerical_rank(&a.singular_values, NOISELESS_RANK_TOL), 3);
        assert!(a.gamma_test <= 1e-10);
    }

    #[test]
    fn collinear_points_have_rank_one() {
        let pts: Vec<_> = (0..6).map(|k| Vector3::new(k as f64 * 1.3, 2.0 * k as f64, 0.5)).collect();
        let g = geometric_center(&Edm::from_points(&pts));
        let (s, _) = symmetric_svd(g.matrix()).unwrap();
        assert_eq!(numerical_rank(&s, NOISELESS_RANK_TOL), 1);
    }

    #[test]
    fn too_small_for_statistic() {
        let g = geometric_center(&Edm(DMatrix::zeros(4, 4)));
        assert!(matches!(analyze(&g), Err(Error::Contract(_))));
    }

    #[test]
    fn rank_examples() {
        assert_eq!(numerical_rank(&[5.0, 4.0, 3.0, 5e-14], 1e-10), 3);
        assert_eq!(numerical_rank(&[0.0, 0.0], 1e-10), 0);
        assert_eq!(numerical_rank(&[], 1e-10), 0);
    }

    #[test]
    fn faulted_gcedm_rank_matches_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts = random_points(&mut rng, 12, 1.0);
        let mut bias = vec![0.0; 12];
        bias[2] = 0.3;
        bias[7] = 0.5;
        let a = analysis_of(&noisy_ranges(&pts, 0.0, &bias, &mut rng));
        assert_eq!(numerical_rank(&a.singular_values, NOISELESS_RANK_TOL), 7);
    }

    #[test]
    fn fault_index_and_ties() {
        let mk = |u4: &[f64]| {
            let mut u = DMatrix::zeros(6, 6);
            for (i, v) in u4.iter().enumerate() {
                u[(i, 3)] = *v;
            }
            GcedmAnalysis {
                singular_values: vec![1.0; 6],
                left_vectors: u,
                gamma_test: 0.0,
            }
        };
        assert_eq!(fault_vertex_index(&mk(&[0.9, 0.1, 0.1, 0.1, 0.1, 0.1])), 0);
        assert_eq!(fault_vertex_index(&mk(&[-0.5, 0.5, 0.1, 0.1, 0.1, 0.1])), 0);
        assert_eq!(fault_vertex_index(&mk(&[0.1, 0.2, -0.8, 0.1, 0.1, 0.1])), 2);
    }

    #[test]
    fn noise_raises_gamma_and_fault_raises_it_further() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts = random_points(&mut rng, 6, 1000.0);
        let sigma = 1e-6 * 1000.0;
        let mut seed_rng = ChaCha8Rng::seed_from_u64(6);
        let noisy = analysis_of(&noisy_ranges(&pts, sigma, &[0.0; 6], &mut seed_rng));
        let mut bias = [0.0; 6];
        bias[1] = 1e-3 * 1000.0;
        let mut seed_rng = ChaCha8Rng::seed_from_u64(6);
        let faulty = analysis_of(&noisy_ranges(&pts, sigma, &bias, &mut seed_rng));
        assert!(noisy.gamma_test > 0.0);
        assert!(faulty.gamma_test > noisy.gamma_test);
    }

    #[test]
    fn canonical_sign() {
        let mut v = vec![0.1, -0.9, 0.3];
        canonicalize_sign(&mut v);
        assert_eq!(v, vec![-0.1, 0.9, -0.3]);
        let mut z = vec![0.0; 3];
        canonicalize_sign(&mut z);
        assert_eq!(z, vec![0.0; 3]);
        let mut tie = vec![-0.5, 0.5];
        canonicalize_sign(&mut tie);
        assert_eq!(tie, vec![0.5, -0.5]);
    }

    proptest! {
        #[test]
        fn symmetric_svd_matches_reference_eigensolver(seed in any::<u64>(), n in 1usize..10) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts = random_points(&mut rng, n, 1000.0);
            let r = noisy_ranges(&pts, 1.0, &vec![0.0; n], &mut rng);
            let g = geometric_center(&Edm::from_ranges(&r).unwrap());
            let (values, u) = symmetric_svd(g.matrix()).unwrap();
            let reference = g.matrix().clone().symmetric_eigen();
            let mut expect: Vec<f64> = reference.eigenvalues.iter().map(|x| x.abs()).collect();
            expect.sort_by(|a, b| b.total_cmp(a));
            let scale = expect[0].max(1e-300);
            for (x, y) in values.iter().zip(&expect) {
                prop_assert!((x - y).abs() <= 1e-12 * scale, "{values:?} vs {expect:?}");
            }
            // U is orthogonal and U diag(±λ) Uᵀ reproduces G
            let utu = u.transpose() * &u;
            prop_assert!((utu - DMatrix::identity(n, n)).amax() < 1e-12);
            let signed = DMatrix::from_fn(n, n, |i, j| {
                if i == j {
                    let col = u.column(i);
                    (col.transpose() * g.matrix() * col)[(0, 0)]
                } else {
                    0.0
                }
            });
            let rebuilt = &u * signed * u.transpose();
            prop_assert!((rebuilt - g.matrix()).amax() <= 1e-12 * scale);
        }
    }

    proptest! {
        #[test]
        fn gcedm_rows_sum_to_zero_and_vectors_are_unit(seed in any::<u64>(), n in 5usize..12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts = random_points(&mut rng, n, 5000.0);
            let r = noisy_ranges(&pts, 1.0, &vec![0.0; n], &mut rng);
            let g = geometric_center(&Edm::from_ranges(&r).unwrap());
            prop_assert!(g.relative_row_sum_error() < 1e-9);
            let a = analyze(&g).unwrap();
            for w in a.singular_values.windows(2) {
                prop_assert!(w[0] >= w[1]);
            }
            for c in 0..n {
                prop_assert!((a.left_vectors.column(c).norm() - 1.0).abs() < 1e-9);
            }
            prop_assert!(a.gamma_test >= 0.0);
        }

        #[test]
        fn permutation_invariance(seed in any::<u64>(), shift in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts = random_points(&mut rng, 6, 1000.0);
            let mut bias = [0.0; 6];
            bias[0] = 5.0;
            let r = noisy_ranges(&pts, 0.5, &bias, &mut rng);
            let perm: Vec<usize> = (0..6).map(|i| (i + shift) % 6).collect();
            let rp = DMatrix::from_fn(6, 6, |i, j| r[(perm[i], perm[j])]);
            let a = analysis_of(&r);
            let b = analysis_of(&rp);
            // γ is already normalized by λ1, and SVD error is relative to λ1
            prop_assert!((a.gamma_test - b.gamma_test).abs() <= 1e-12, "{} vs {}", a.gamma_test, b.gamma_test);
            // u4 entries permute with the labels (up to global sign)
            let u = a.left_vector(3);
            let v = b.left_vector(3);
            let sign = if (0..6).map(|i| u[perm[i]] * v[i]).sum::<f64>() >= 0.0 { 1.0 } else { -1.0 };
            for i in 0..6 {
                prop_assert!((u[perm[i]] - sign * v[i]).abs() < 1e-6, "{:?} {:?}", a.singular_values, b.singular_values);
            }
        }

        #[test]
        fn scale_covariance(seed in any::<u64>(), c in 0.01f64..100.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts = random_points(&mut rng, 6, 1000.0);
            let r = noisy_ranges(&pts, 1.0, &[0.0; 6], &mut rng);
            let a = analysis_of(&r);
            let b = analysis_of(&(&r * c));
            for (x, y) in a.singular_values.iter().zip(&b.singular_values) {
                prop_assert!((y - c * c * x).abs() <= 1e-12 * c * c * a.singular_values[0], "{} {} {}", x, y, c);
            }
            // γ is already normalized by λ1, and SVD error is relative to λ1
            prop_assert!((a.gamma_test - b.gamma_test).abs() <= 1e-12, "{} vs {}", a.gamma_test, b.gamma_test);
        }
    }
}
