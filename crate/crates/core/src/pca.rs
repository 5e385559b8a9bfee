//! Correlation-matrix PCA.
//!
//! The sample covariance is standardized to a correlation matrix and
//! decomposed; for a symmetric positive semidefinite matrix the singular
//! value decomposition coincides with the eigendecomposition, which is what
//! [`fit_pca`] computes. Zero-variance feature columns are masked out before
//! standardization and the mask is applied again at projection time.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigen, Matrix, SymmetricEigen};
use crate::mapreduce;

/// Variance below this marks a feature column as constant.
pub const DEGENERATE_EPS: f64 = 1e-12;
pub const SYMMETRY_TOL: f64 = 1e-9;
pub const DEFAULT_VARIANCE_TARGET: f64 = 0.95;
pub const DEFAULT_MAX_COMPONENTS: usize = 32;

/// `sigma_i = sqrt(cov_ii)`, `corr_ij = cov_ij / (sigma_i sigma_j)`.
pub fn correlation_from_covariance(cov: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let d = cov.rows();
    if cov.cols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: cov.cols(),
        });
    }
    if let Some(i) = (0..d).find(|&i| !(cov[(i, i)] > DEGENERATE_EPS)) {
        return Err(Error::DegenerateFeature(i));
    }
    let sigma: Vec<f64> = (0..d).map(|i| cov[(i, i)].sqrt()).collect();
    let mut corr = Matrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            corr[(i, j)] = if i == j {
                1.0
            } else {
                cov[(i, j)] / (sigma[i] * sigma[j])
            };
        }
    }
    Ok((sigma, corr))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaBasis {
    /// `d x k`, orthonormal columns.
    pub basis: Matrix,
    /// All `d` singular values, nonincreasing.
    pub singular_values: Vec<f64>,
    pub k: usize,
}

/// Smallest `k` whose leading singular values reach `variance_target` of
/// the total, capped at `max_k`. Each basis column is sign-normalized so its
/// largest-magnitude entry is positive.
pub fn fit_pca(corr: &Matrix, variance_target: f64, max_k: usize) -> Result<PcaBasis> {
    if !(variance_target > 0.0 && variance_target <= 1.0) {
        return Err(Error::InvalidVarianceTarget(variance_target));
    }
    let (order, eig) = sorted_eigen(corr)?;
    let singular_values: Vec<f64> = order.iter().map(|&i| eig.values[i].abs()).collect();
    let total: f64 = singular_values.iter().sum();
    let d = corr.rows();
    let mut k = d;
    let mut running = 0.0;
    for (i, s) in singular_values.iter().enumerate() {
        running += s;
        if running >= variance_target * total * (1.0 - 1e-12) {
            k = i + 1;
            break;
        }
    }
    let k = k.min(max_k.max(1)).min(d);
    Ok(assemble_basis(&order, &eig, singular_values, k))
}

/// As [`fit_pca`] but keeps exactly `k` components.
pub fn fit_pca_k(corr: &Matrix, k: usize) -> Result<PcaBasis> {
    let d = corr.rows();
    if k == 0 || k > d {
        return Err(Error::DimensionMismatch { expected: d, found: k });
    }
    let (order, eig) = sorted_eigen(corr)?;
    let singular_values = order.iter().map(|&i| eig.values[i].abs()).collect();
    Ok(assemble_basis(&order, &eig, singular_values, k))
}

/// Eigendecomposition plus the index order of decreasing `|lambda|`.
fn sorted_eigen(corr: &Matrix) -> Result<(Vec<usize>, SymmetricEigen)> {
    let asym = corr.max_asymmetry();
    if !(asym <= SYMMETRY_TOL) {
        return Err(Error::NonSymmetric(asym));
    }
    let eig = symmetric_eigen(corr);
    let mut order: Vec<usize> = (0..corr.rows()).collect();
    order.sort_by(|&a, &b| eig.values[b].abs().total_cmp(&eig.values[a].abs()));
    Ok((order, eig))
}

fn assemble_basis(order: &[usize], eig: &SymmetricEigen, singular_values: Vec<f64>, k: usize) -> PcaBasis {
    let d = order.len();
    let mut basis = Matrix::zeros(d, k);
    for (col, &src) in order.iter().take(k).enumerate() {
        let v = eig.vectors.column(src);
        let mut pivot = 0;
        for (i, x) in v.iter().enumerate() {
            if x.abs() > v[pivot].abs() {
                pivot = i;
            }
        }
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for (i, x) in v.iter().enumerate() {
            basis[(i, col)] = sign * x;
        }
    }
    PcaBasis {
        basis,
        singular_values,
        k,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcaConfig {
    pub variance_target: f64,
    pub max_components: usize,
    /// Map-reduce partitions for the covariance pass.
    pub partitions: usize,
    pub workers: usize,
}

impl Default for PcaConfig {
    fn default() -> Self {
        PcaConfig {
            variance_target: DEFAULT_VARIANCE_TARGET,
            max_components: DEFAULT_MAX_COMPONENTS,
            partitions: 1,
            workers: 1,
        }
    }
}

/// Fitted population model, immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    /// Content hash; ensembles record it to detect a mismatched model.
    pub id: String,
    /// Full-width feature mean.
    pub mu: Vec<f64>,
    /// Full-width feature std; zero on masked columns.
    pub sigma: Vec<f64>,
    /// `true` for columns kept in the correlation matrix.
    pub mask: Vec<bool>,
    pub corr: Matrix,
    pub basis: Matrix,
    pub singular_values: Vec<f64>,
    pub k: usize,
    pub variance_target: f64,
}

impl PcaModel {
    pub fn fit<R: AsRef<[f64]> + Clone + Sync>(rows: &[R], cfg: &PcaConfig) -> Result<PcaModel> {
        let (cov, stats) = mapreduce::covariance(rows, cfg.partitions, cfg.workers)?;
        let n = stats.n as f64;
        let d = cov.rows();
        let mu: Vec<f64> = stats.sum.iter().map(|s| s / n).collect();
        let mask: Vec<bool> = (0..d).map(|i| cov[(i, i)] > DEGENERATE_EPS).collect();
        let kept: Vec<usize> = (0..d).filter(|&i| mask[i]).collect();
        if kept.is_empty() {
            return Err(Error::DegenerateFeature(0));
        }
        let mut reduced = Matrix::zeros(kept.len(), kept.len());
        for (a, &i) in kept.iter().enumerate() {
            for (b, &j) in kept.iter().enumerate() {
                reduced[(a, b)] = cov[(i, j)];
            }
        }
        let (kept_sigma, corr) = correlation_from_covariance(&reduced)?;
        let mut sigma = vec![0.0; d];
        for (a, &i) in kept.iter().enumerate() {
            sigma[i] = kept_sigma[a];
        }
        let fit = fit_pca(&corr, cfg.variance_target, cfg.max_components)?;
        let mut model = PcaModel {
            id: String::new(),
            mu,
            sigma,
            mask,
            corr,
            basis: fit.basis,
            singular_values: fit.singular_values,
            k: fit.k,
            variance_target: cfg.variance_target,
        };
        model.id = model.content_id();
        Ok(model)
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// SHA-256 over the serialized model with an empty id.
    pub fn content_id(&self) -> String {
        let mut copy = self.clone();
        copy.id.clear();
        let bytes = serde_json::to_vec(&copy).expect("model serializes");
        hex::encode(&Sha256::digest(&bytes)[..16])
    }

    /// Masked z-score of `x`.
    pub fn standardize(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok((0..x.len())
            .filter(|&i| self.mask[i])
            .map(|i| (x[i] - self.mu[i]) / self.sigma[i])
            .collect())
    }

    /// `z = standardize(x)^T basis`, length `k`.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        let std = self.standardize(x)?;
        let mut z = vec![0.0; self.k];
        for (i, s) in std.iter().enumerate() {
            for (c, zc) in z.iter_mut().enumerate() {
                *zc += s * self.basis[(i, c)];
            }
        }
        Ok(z)
    }

    /// Fraction of total singular mass captured by the first `k` components.
    pub fn explained_ratio(&self, k: usize) -> f64 {
        let total: f64 = self.singular_values.iter().sum();
        self.singular_values.iter().take(k).sum::<f64>() / total
    }
}
