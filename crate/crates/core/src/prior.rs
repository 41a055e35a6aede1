//! PCA pose prior over flattened normalized poses, and its use as the
//! initialization of the pose network's final layer.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::augmentation::{augment_pose, sample_params, AugmentConfig};
use crate::error::{Error, Result};
use crate::geometry::{normalize_joints, CropCube, Pose3D};

/// Convergence threshold of the symmetric eigensolver.
const EIGEN_TOLERANCE: f64 = 1e-12;
/// Pose samples drawn for the robust prior at full scale.
pub const ROBUST_PRIOR_SAMPLES: usize = 1_000_000;
/// Pose samples drawn for the robust prior at desk scale.
pub const DESK_ROBUST_PRIOR_SAMPLES: usize = 100_000;

/// Mean pose plus the top-k principal directions (rows, orthonormal, by
/// descending eigenvalue). The largest-magnitude entry of every component
/// is positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaPrior {
    pub mean: Vec<f64>,
    /// Row-major `k x dim`.
    pub components: Vec<f64>,
    pub eigenvalues: Vec<f64>,
}

/// Streaming mean/covariance (Welford).
#[derive(Debug, Clone)]
pub struct CovarianceAccumulator {
    n: usize,
    mean: Vec<f64>,
    comoment: Vec<f64>,
    delta: Vec<f64>,
}

impl CovarianceAccumulator {
    pub fn new(dim: usize) -> Self {
        Self { n: 0, mean: vec![0.0; dim], comoment: vec![0.0; dim * dim], delta: vec![0.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn push(&mut self, x: &[f64]) -> Result<()> {
        let d = self.dim();
        if x.len() != d {
            return Err(Error::Shape(format!("pose vector of length {}, expected {d}", x.len())));
        }
        self.n += 1;
        let inv = 1.0 / self.n as f64;
        for i in 0..d {
            self.delta[i] = x[i] - self.mean[i];
            self.mean[i] += self.delta[i] * inv;
        }
        for i in 0..d {
            let after = x[i] - self.mean[i];
            let row = &mut self.comoment[i * d..(i + 1) * d];
            for (c, &dj) in row.iter_mut().zip(&self.delta) {
                *c += after * dj;
            }
        }
        Ok(())
    }

    /// Sample (`N - 1`) covariance.
    pub fn covariance(&self) -> Vec<f64> {
        let denom = (self.n.max(2) - 1) as f64;
        let d = self.dim();
        // Symmetrize the accumulated co-moment.
        let mut c = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                c[i * d + j] = 0.5 * (self.comoment[i * d + j] + self.comoment[j * d + i]) / denom;
            }
        }
        c
    }

    pub fn into_prior(self, k: usize) -> Result<PcaPrior> {
        check_k(self.n, self.dim(), k)?;
        let cov = self.covariance();
        PcaPrior::from_covariance(self.mean, &cov, k)
    }
}

fn check_k(n: usize, dim: usize, k: usize) -> Result<()> {
    if k == 0 || k > dim {
        return Err(Error::Dimension(format!("prior dimension {k} must be in 1..={dim}")));
    }
    if n <= k {
        return Err(Error::InsufficientData(format!("{n} poses cannot support a {k}-dimensional prior")));
    }
    Ok(())
}

/// Fits the prior to `poses` (each of length 3J, normalized units).
pub fn fit_pca(poses: &[Vec<f64>], k: usize) -> Result<PcaPrior> {
    let dim = poses.first().map(Vec::len).unwrap_or(0);
    check_k(poses.len(), dim, k)?;
    if let Some(bad) = poses.iter().find(|p| p.len() != dim) {
        return Err(Error::Shape(format!("pose vector of length {}, expected {dim}", bad.len())));
    }
    let n = poses.len() as f64;
    let mut mean = vec![0.0; dim];
    for p in poses {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut cov = vec![0.0; dim * dim];
    let mut centered = vec![0.0; dim];
    for p in poses {
        for ((c, v), m) in centered.iter_mut().zip(p).zip(&mean) {
            *c = v - m;
        }
        for i in 0..dim {
            for j in i..dim {
                cov[i * dim + j] += centered[i] * centered[j];
            }
        }
    }
    for i in 0..dim {
        for j in i..dim {
            let v = cov[i * dim + j] / (n - 1.0);
            cov[i * dim + j] = v;
            cov[j * dim + i] = v;
        }
    }
    PcaPrior::from_covariance(mean, &cov, k)
}

/// Fits the prior to `n_samples` poses drawn by augmenting randomly chosen
/// base poses in 3D (pivot: each pose's reference joint). Each pose is
/// normalized against its paired cube.
pub fn fit_robust_prior(
    base: &[(Pose3D, CropCube)],
    cfg: &AugmentConfig,
    n_samples: usize,
    k: usize,
    rng: &mut dyn RngCore,
) -> Result<PcaPrior> {
    let Some((first, _)) = base.first() else {
        return Err(Error::InsufficientData("no base poses for the prior".into()));
    };
    let mut acc = CovarianceAccumulator::new(3 * first.num_joints());
    for _ in 0..n_samples {
        let (pose, cube) = &base[rng.random_range(0..base.len())];
        let params = sample_params(cfg, rng);
        let augmented = augment_pose(pose, &params, pose.reference());
        acc.push(&normalize_joints(&augmented, cube))?;
    }
    acc.into_prior(k)
}

impl PcaPrior {
    fn from_covariance(mean: Vec<f64>, cov: &[f64], k: usize) -> Result<Self> {
        let dim = mean.len();
        let m = DMatrix::from_row_slice(dim, dim, cov);
        let eig = SymmetricEigen::try_new(m, EIGEN_TOLERANCE, 0)
            .ok_or_else(|| Error::Training("eigendecomposition did not converge".into()))?;
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        let mut components = Vec::with_capacity(k * dim);
        let mut eigenvalues = Vec::with_capacity(k);
        for &idx in order.iter().take(k) {
            let col = eig.eigenvectors.column(idx);
            let mut pivot = 0;
            for i in 1..dim {
                if col[i].abs() > col[pivot].abs() {
                    pivot = i;
                }
            }
            let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
            components.extend(col.iter().map(|v| v * sign));
            eigenvalues.push(eig.eigenvalues[idx].max(0.0));
        }
        Ok(Self { mean, components, eigenvalues })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn k(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn component(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.components[i * d..(i + 1) * d]
    }

    /// Coefficients `components · (pose - mean)`.
    pub fn embed(&self, pose: &[f64]) -> Result<Vec<f64>> {
        if pose.len() != self.dim() {
            return Err(Error::Shape(format!("pose length {}, prior dimension {}", pose.len(), self.dim())));
        }
        Ok((0..self.k())
            .map(|i| self.component(i).iter().zip(pose).zip(&self.mean).map(|((c, p), m)| c * (p - m)).sum())
            .collect())
    }

    /// Pose `mean + componentsᵀ · coefficients`.
    pub fn reconstruct(&self, coefficients: &[f64]) -> Result<Vec<f64>> {
        if coefficients.len() != self.k() {
            return Err(Error::Shape(format!("{} coefficients, prior has {}", coefficients.len(), self.k())));
        }
        let mut out = self.mean.clone();
        for (i, &a) in coefficients.iter().enumerate() {
            for (o, c) in out.iter_mut().zip(self.component(i)) {
                *o += a * c;
            }
        }
        Ok(out)
    }

    /// Mean squared distance between poses and their projections onto the prior's affine span.
    pub fn reconstruction_error(&self, poses: &[Vec<f64>]) -> Result<f64> {
        let mut total = 0.0;
        for p in poses {
            let r = self.reconstruct(&self.embed(p)?)?;
            total += r.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        Ok(total / poses.len().max(1) as f64)
    }

    /// Final-layer parameters: weights `componentsᵀ` (row-major `3J x k`) and bias `mean`.
    pub fn init_output_layer(&self) -> (Vec<f64>, Vec<f64>) {
        let (d, k) = (self.dim(), self.k());
        let mut w = vec![0.0; d * k];
        for i in 0..k {
            for (j, &c) in self.component(i).iter().enumerate() {
                w[j * k + i] = c;
            }
        }
        (w, self.mean.clone())
    }

    /// Keeps only the leading `k` components.
    pub fn truncated(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.k() {
            return Err(Error::Dimension(format!("cannot truncate a {}-dim prior to {k}", self.k())));
        }
        Ok(Self {
            mean: self.mean.clone(),
            components: self.components[..k * self.dim()].to_vec(),
            eigenvalues: self.eigenvalues[..k].to_vec(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian_poses(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Anisotropic so eigenvalues are well separated.
        (0..n)
            .map(|_| {
                (0..dim)
                    .map(|j| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        z * (1.0 + j as f64) * 0.1 + 0.01 * j as f64
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn exact_subspace_is_reconstructed() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let dim = 15;
        let base: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
        let u: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() - 0.5).collect();
        let v: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() - 0.5).collect();
        let poses: Vec<Vec<f64>> = (0..50)
            .map(|_| {
                let (a, b): (f64, f64) = (rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0);
                (0..dim).map(|j| base[j] + a * u[j] + b * v[j]).collect()
            })
            .collect();
        let prior = fit_pca(&poses, 2).unwrap();
        assert!(prior.reconstruction_error(&poses).unwrap() <= 1e-18);
        for p in &poses {
            let r = prior.reconstruct(&prior.embed(p).unwrap()).unwrap();
            assert!(r.iter().zip(p).all(|(a, b)| (a - b).abs() <= 1e-9));
        }
    }

    #[test]
    fn data_requirements() {
        let poses = gaussian_poses(5, 6, 1);
        assert!(matches!(fit_pca(&poses, 5), Err(Error::InsufficientData(_))));
        assert!(matches!(fit_pca(&poses, 7), Err(Error::Dimension(_))));
        assert!(matches!(fit_pca(&poses, 0), Err(Error::Dimension(_))));
    }

    #[test]
    fn embed_and_reconstruct_identities() {
        let prior = fit_pca(&gaussian_poses(200, 15, 3), 6).unwrap();
        assert!(prior.embed(&prior.mean).unwrap().iter().all(|&c| c.abs() < 1e-12));
        for i in 0..prior.k() {
            let p: Vec<f64> = prior.mean.iter().zip(prior.component(i)).map(|(m, c)| m + c).collect();
            let e = prior.embed(&p).unwrap();
            for (j, &c) in e.iter().enumerate() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((c - expect).abs() < 1e-10);
            }
        }
        assert_eq!(prior.reconstruct(&vec![0.0; 6]).unwrap(), prior.mean);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let c: Vec<f64> = (0..6).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
            let back = prior.embed(&prior.reconstruct(&c).unwrap()).unwrap();
            assert!(back.iter().zip(&c).all(|(a, b)| (a - b).abs() <= 1e-10));
        }
        assert!(prior.embed(&[0.0; 3]).is_err());
        assert!(prior.reconstruct(&[0.0; 3]).is_err());
    }

    #[test]
    fn orthonormal_sorted_and_signed() {
        let prior = fit_pca(&gaussian_poses(300, 12, 4), 12).unwrap();
        for i in 0..12 {
            for j in 0..12 {
                let dot: f64 = prior.component(i).iter().zip(prior.component(j)).map(|(a, b)| a * b).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() <= 1e-10);
            }
            let c = prior.component(i);
            let big = c.iter().cloned().fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
            assert!(big > 0.0);
        }
        assert!(prior.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        assert!(prior.eigenvalues.iter().all(|&e| e >= 0.0));
    }

    #[test]
    fn variance_captured_within_trace() {
        let poses = gaussian_poses(200, 10, 8);
        let full = fit_pca(&poses, 10).unwrap();
        let mut acc = CovarianceAccumulator::new(10);
        poses.iter().for_each(|p| acc.push(p).unwrap());
        let cov = acc.covariance();
        let trace: f64 = (0..10).map(|i| cov[i * 10 + i]).sum();
        assert!((full.eigenvalues.iter().sum::<f64>() - trace).abs() <= 1e-10 * trace);
        let part = fit_pca(&poses, 4).unwrap();
        assert!(part.eigenvalues.iter().sum::<f64>() < trace);
    }

    #[test]
    fn streaming_matches_two_pass() {
        let poses = gaussian_poses(400, 9, 11);
        let a = fit_pca(&poses, 5).unwrap();
        let mut acc = CovarianceAccumulator::new(9);
        poses.iter().for_each(|p| acc.push(p).unwrap());
        let b = acc.into_prior(5).unwrap();
        for (x, y) in a.components.iter().zip(&b.components) {
            assert!((x - y).abs() < 1e-9);
        }
        for (x, y) in a.mean.iter().zip(&b.mean) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn output_layer_layout() {
        let prior = fit_pca(&gaussian_poses(100, 6, 12), 3).unwrap();
        let (w, b) = prior.init_output_layer();
        assert_eq!(b, prior.mean);
        // Row j of the 6x3 weight matrix holds entry j of each component.
        for i in 0..3 {
            for j in 0..6 {
                assert_eq!(w[j * 3 + i], prior.component(i)[j]);
            }
        }
    }

    #[test]
    fn permutation_and_translation_invariance() {
        let poses = gaussian_poses(120, 8, 21);
        let a = fit_pca(&poses, 4).unwrap();
        let mut rev = poses.clone();
        rev.reverse();
        let b = fit_pca(&rev, 4).unwrap();
        let shifted: Vec<Vec<f64>> = poses.iter().map(|p| p.iter().enumerate().map(|(j, v)| v + 3.0 - j as f64).collect()).collect();
        let c = fit_pca(&shifted, 4).unwrap();
        for ((x, y), z) in a.components.iter().zip(&b.components).zip(&c.components) {
            assert!((x - y).abs() <= 1e-9);
            assert!((x - z).abs() <= 1e-9);
        }
        for (j, (m, s)) in a.mean.iter().zip(&c.mean).enumerate() {
            assert!((s - m - (3.0 - j as f64)).abs() <= 1e-9);
        }
    }
}
