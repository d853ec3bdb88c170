//! Orthogonal rotations that move centered data into "standard position"
//! before a sub-sphere is fitted: the PCA eigenbasis, optionally followed
//! by an orthomax-family rotation of the PCA loadings.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{Result, SrcaError};
use crate::linalg::{covariance, max_abs, sym_eigen_desc};

const ORTHO_TOL: f64 = 1e-10;

/// How the rotation matrix is built.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RotationMethod {
    /// No rotation; the data are assumed to be axis-aligned already.
    Identity,
    Pca,
    Varimax,
    Quartimax,
    Equamax,
    Parsimax,
    Orthomax { gamma: f64 },
}

impl RotationMethod {
    /// Orthomax weight for a `rows x factors` loadings matrix, or `None`
    /// for methods outside the orthomax family.
    pub fn gamma(&self, rows: usize, factors: usize) -> Option<f64> {
        let (p, m) = (rows as f64, factors as f64);
        match *self {
            RotationMethod::Identity | RotationMethod::Pca => None,
            RotationMethod::Quartimax => Some(0.0),
            RotationMethod::Varimax => Some(1.0),
            RotationMethod::Equamax => Some(m / 2.0),
            RotationMethod::Parsimax => {
                if rows + factors <= 2 {
                    Some(0.0)
                } else {
                    Some(p * (m - 1.0) / (p + m - 2.0))
                }
            }
            RotationMethod::Orthomax { gamma } => Some(gamma),
        }
    }
}

impl fmt::Display for RotationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RotationMethod::Identity => write!(f, "identity"),
            RotationMethod::Pca => write!(f, "pca"),
            RotationMethod::Varimax => write!(f, "varimax"),
            RotationMethod::Quartimax => write!(f, "quartimax"),
            RotationMethod::Equamax => write!(f, "equamax"),
            RotationMethod::Parsimax => write!(f, "parsimax"),
            RotationMethod::Orthomax { gamma } => write!(f, "orthomax:{gamma}"),
        }
    }
}

impl FromStr for RotationMethod {
    type Err = SrcaError;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        Ok(match lower.as_str() {
            "identity" | "none" => RotationMethod::Identity,
            "pca" => RotationMethod::Pca,
            "varimax" => RotationMethod::Varimax,
            "quartimax" => RotationMethod::Quartimax,
            "equamax" => RotationMethod::Equamax,
            "parsimax" => RotationMethod::Parsimax,
            other => {
                let gamma = other
                    .strip_prefix("orthomax:")
                    .or_else(|| other.strip_prefix("orthomax="))
                    .and_then(|g| g.parse::<f64>().ok())
                    .filter(|g| g.is_finite() && *g >= 0.0)
                    .ok_or_else(|| {
                        SrcaError::InvalidArgument(format!(
                            "unknown rotation {s:?}; expected identity, pca, varimax, quartimax, equamax, parsimax or orthomax:<gamma>"
                        ))
                    })?;
                RotationMethod::Orthomax { gamma }
            }
        })
    }
}

/// A square matrix with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalMatrix(DMatrix<f64>);

impl OrthogonalMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if !values.is_square() {
            return Err(SrcaError::Dimension(format!(
                "rotation must be square, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        let d = values.nrows();
        let gram = values.transpose() * &values - DMatrix::<f64>::identity(d, d);
        let err = max_abs(&gram);
        if !(err <= ORTHO_TOL) {
            return Err(SrcaError::Numerical(format!(
                "matrix is not orthogonal (max |R'R - I| = {err:e})"
            )));
        }
        Ok(Self(values))
    }

    pub fn identity(d: usize) -> Self {
        Self(DMatrix::identity(d, d))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// Entries in row-major order.
    pub fn to_row_major(&self) -> Vec<f64> {
        self.0.transpose().as_slice().to_vec()
    }

    pub fn from_row_major(d: usize, values: &[f64]) -> Result<Self> {
        if values.len() != d * d {
            return Err(SrcaError::Dimension(format!(
                "expected {} rotation entries, got {}",
                d * d,
                values.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(d, d, values))
    }
}

/// PCA rotation of already-centered data: eigenvectors of the sample
/// covariance (divisor `n - 1`) in descending eigenvalue order.
pub fn pca_rotation(x: &DataMatrix) -> Result<OrthogonalMatrix> {
    pca_eigen(x).map(|(_, r)| r)
}

/// Eigenvalues (descending) and eigenvectors of the sample covariance.
pub fn pca_eigen(x: &DataMatrix) -> Result<(DVector<f64>, OrthogonalMatrix)> {
    if x.rows() < 2 {
        return Err(SrcaError::InvalidArgument(
            "PCA rotation needs at least two rows".into(),
        ));
    }
    let cov = covariance(x.values(), &x.column_means(), x.rows() as f64 - 1.0);
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(SrcaError::Numerical("covariance is not finite".into()));
    }
    let (vals, vecs) = sym_eigen_desc(&cov);
    Ok((vals, OrthogonalMatrix::new(vecs)?))
}

/// Outcome of an orthomax iteration.
#[derive(Debug, Clone)]
pub struct OrthomaxResult {
    pub rotation: OrthogonalMatrix,
    pub criterion: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// The orthomax objective of `L`: sum over columns of
/// `sum_i l_ij^4 - (gamma / p) (sum_i l_ij^2)^2`.
pub fn orthomax_criterion(loadings: &DMatrix<f64>, gamma: f64) -> f64 {
    let p = loadings.nrows() as f64;
    loadings
        .column_iter()
        .map(|c| {
            let s2: f64 = c.iter().map(|v| v * v).sum();
            let s4: f64 = c.iter().map(|v| v.powi(4)).sum();
            s4 - gamma / p * s2 * s2
        })
        .sum()
}

/// Finds an `m x m` orthogonal `T` maximizing the orthomax criterion of
/// `L T` by the polar-decomposition fixed-point iteration. The identity
/// start can be a stationary point, so a few seeded random starts are run
/// as well and the best iterate over all of them is returned.
pub fn orthomax_rotation(
    loadings: &DMatrix<f64>,
    gamma: f64,
    max_iter: usize,
    tol: f64,
) -> Result<OrthomaxResult> {
    let (p, m) = loadings.shape();
    if m > p {
        return Err(SrcaError::Dimension(format!(
            "loadings have {m} factors but only {p} rows"
        )));
    }
    if loadings.iter().any(|v| !v.is_finite()) || !gamma.is_finite() {
        return Err(SrcaError::InvalidArgument("non-finite loadings or gamma".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(ORTHOMAX_SEED);
    let mut best: Option<OrthomaxResult> = None;
    for k in 0..=ORTHOMAX_STARTS {
        let t0 = if k == 0 {
            DMatrix::identity(m, m)
        } else {
            DMatrix::from_fn(m, m, |_, _| rng.sample::<f64, _>(StandardNormal)).qr().q()
        };
        let run = orthomax_from(loadings, gamma, t0, max_iter, tol)?;
        if best.as_ref().is_none_or(|b| run.criterion > b.criterion + 1e-12 * (1.0 + b.criterion.abs())) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one start"))
}

const ORTHOMAX_STARTS: usize = 4;
const ORTHOMAX_SEED: u64 = 0x6f72_7468_6f6d_6178;

fn orthomax_from(
    loadings: &DMatrix<f64>,
    gamma: f64,
    mut t: DMatrix<f64>,
    max_iter: usize,
    tol: f64,
) -> Result<OrthomaxResult> {
    let (p, m) = loadings.shape();
    let mut best_t = t.clone();
    let mut best = orthomax_criterion(&(loadings * &t), gamma);
    let mut prev = best;
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=max_iter {
        iterations = it;
        let rotated = loadings * &t;
        let col_ss: Vec<f64> = rotated
            .column_iter()
            .map(|c| c.iter().map(|v| v * v).sum())
            .collect();
        let b = DMatrix::from_fn(p, m, |i, j| {
            let v = rotated[(i, j)];
            v * v * v - gamma / p as f64 * v * col_ss[j]
        });
        let g = loadings.transpose() * b;
        let svd = g.svd(true, true);
        let (Some(u), Some(vt)) = (svd.u, svd.v_t) else {
            return Err(SrcaError::Numerical("SVD failed in orthomax".into()));
        };
        let step = max_abs(&(&u * &vt - &t));
        t = u * vt;
        let crit = orthomax_criterion(&(loadings * &t), gamma);
        if crit > best {
            best = crit;
            best_t = t.clone();
        }
        if (crit - prev).abs() <= tol * (1.0 + prev.abs()) && step <= tol.sqrt() {
            converged = true;
            break;
        }
        prev = crit;
    }
    Ok(OrthomaxResult {
        rotation: OrthogonalMatrix::new(reorthonormalize(best_t))?,
        criterion: best,
        iterations,
        converged,
    })
}

fn reorthonormalize(t: DMatrix<f64>) -> DMatrix<f64> {
    let svd = t.clone().svd(true, true);
    match (svd.u, svd.v_t) {
        (Some(u), Some(vt)) => u * vt,
        _ => t,
    }
}

pub const ORTHOMAX_MAX_ITER: usize = 500;
pub const ORTHOMAX_TOL: f64 = 1e-10;

/// Builds the `d x d` rotation for centered data. Orthomax methods rotate
/// the full set of PCA loadings `V diag(sqrt(lambda))` and return `V T`.
pub fn get_rotation(x_centered: &DataMatrix, method: RotationMethod) -> Result<OrthogonalMatrix> {
    let d = x_centered.cols();
    if method == RotationMethod::Identity {
        return Ok(OrthogonalMatrix::identity(d));
    }
    let (vals, v) = pca_eigen(x_centered)?;
    let Some(gamma) = method.gamma(d, d) else {
        return Ok(v);
    };
    let sqrt_l = DMatrix::from_diagonal(&vals.map(|l| l.max(0.0).sqrt()));
    let loadings = v.matrix() * sqrt_l;
    let res = orthomax_rotation(&loadings, gamma, ORTHOMAX_MAX_ITER, ORTHOMAX_TOL)?;
    if !res.converged {
        log::warn!(
            "{method} rotation did not converge in {} iterations; using best iterate",
            res.iterations
        );
    }
    OrthogonalMatrix::new(v.matrix() * res.rotation.matrix())
}

/// Row-wise `X R`.
pub fn apply_rotation(x: &DataMatrix, r: &OrthogonalMatrix) -> Result<DataMatrix> {
    check(x, r)?;
    Ok(x.replace_values(x.values() * r.matrix()))
}

/// Row-wise `X R^T`, the inverse of [`apply_rotation`].
pub fn invert_rotation(x: &DataMatrix, r: &OrthogonalMatrix) -> Result<DataMatrix> {
    check(x, r)?;
    Ok(x.replace_values(x.values() * r.matrix().transpose()))
}

fn check(x: &DataMatrix, r: &OrthogonalMatrix) -> Result<()> {
    if x.cols() != r.dim() {
        return Err(SrcaError::Dimension(format!(
            "data has {} columns, rotation is {}x{}",
            x.cols(),
            r.dim(),
            r.dim()
        )));
    }
    Ok(())
}
