//! Weighted point-to-sphere distances, the geometric loss, its gradient,
//! the closed-form radius and the projection onto a coordinate sub-sphere.
//!
//! Index sets are stored 0-based; [`IndexSet::one_based`] gives the
//! conventional 1-based form used in files and on the command line.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::data::DataMatrix;
use crate::error::{Result, SrcaError};
use crate::linalg::{covariance, sym_eigen_desc, sym_sqrt};

/// Below this in-plane norm a point sits on the cone axis of the loss.
pub const EPS_SINGULAR: f64 = 1e-12;

/// Strictly increasing set of coordinate indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IndexSet {
    members: Vec<usize>,
    dim: usize,
}

impl IndexSet {
    /// `members` are 0-based.
    pub fn new(members: Vec<usize>, dim: usize) -> Result<Self> {
        if members.is_empty() {
            return Err(SrcaError::InvalidArgument("index set is empty".into()));
        }
        if members.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SrcaError::InvalidArgument(format!(
                "index set {members:?} is not strictly increasing"
            )));
        }
        if let Some(&last) = members.last() {
            if last >= dim {
                return Err(SrcaError::InvalidArgument(format!(
                    "index {} out of range for dimension {dim}",
                    last + 1
                )));
            }
        }
        Ok(Self { members, dim })
    }

    pub fn from_one_based(members: &[usize], dim: usize) -> Result<Self> {
        if members.contains(&0) {
            return Err(SrcaError::InvalidArgument("1-based index 0".into()));
        }
        let mut m: Vec<usize> = members.iter().map(|&j| j - 1).collect();
        m.sort_unstable();
        Self::new(m, dim)
    }

    pub fn all(dim: usize) -> Self {
        Self { members: (0..dim).collect(), dim }
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.members.iter().map(|j| j + 1).collect()
    }

    pub fn complement(&self) -> Vec<usize> {
        (0..self.dim).filter(|j| !self.contains(*j)).collect()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.members.binary_search(&j).is_ok()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// 0/1 indicator of the members.
    pub fn mask(&self) -> Vec<f64> {
        (0..self.dim).map(|j| if self.contains(j) { 1.0 } else { 0.0 }).collect()
    }
}

impl fmt::Display for IndexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: Vec<String> = self.one_based().iter().map(|j| j.to_string()).collect();
        write!(f, "{{{}}}", s.join(","))
    }
}

/// Symmetric positive-definite weight with its cached square root.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    values: DMatrix<f64>,
    sqrt: DMatrix<f64>,
    identity: bool,
    diagonal: bool,
}

impl WeightMatrix {
    pub fn identity(d: usize) -> Self {
        Self {
            values: DMatrix::identity(d, d),
            sqrt: DMatrix::identity(d, d),
            identity: true,
            diagonal: true,
        }
    }

    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if !values.is_square() {
            return Err(SrcaError::Dimension("weight matrix must be square".into()));
        }
        let d = values.nrows();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SrcaError::InvalidArgument("weight matrix is not finite".into()));
        }
        if (&values - values.transpose()).abs().max() > 1e-12 {
            return Err(SrcaError::InvalidArgument("weight matrix is not symmetric".into()));
        }
        let sqrt = sym_sqrt(&values).ok_or_else(|| {
            SrcaError::InvalidArgument("weight matrix is not positive definite".into())
        })?;
        if (&sqrt * &sqrt - &values).abs().max() > 1e-9 * (1.0 + values.abs().max()) {
            return Err(SrcaError::Numerical("inaccurate weight square root".into()));
        }
        let diagonal = (0..d).all(|i| (0..d).all(|j| i == j || values[(i, j)] == 0.0));
        let identity = diagonal && (0..d).all(|i| values[(i, i)] == 1.0);
        let sqrt = if diagonal {
            DMatrix::from_diagonal(&values.diagonal().map(f64::sqrt))
        } else {
            sqrt
        };
        Ok(Self { values, sqrt, identity, diagonal })
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn sqrt_factor(&self) -> &DMatrix<f64> {
        &self.sqrt
    }

    pub fn is_identity(&self) -> bool {
        self.identity
    }

    pub fn is_diagonal(&self) -> bool {
        self.diagonal
    }
}

/// Center and radius of a sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereParams {
    pub center: DVector<f64>,
    pub radius: f64,
}

impl SphereParams {
    pub fn new(center: DVector<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(SrcaError::InvalidArgument(format!("radius must be positive, got {radius}")));
        }
        if center.iter().any(|v| !v.is_finite()) {
            return Err(SrcaError::InvalidArgument("center is not finite".into()));
        }
        Ok(Self { center, radius })
    }
}

fn check_dims(d: usize, c: usize, idx: &IndexSet, w: Option<&WeightMatrix>) -> Result<()> {
    if c != d || idx.dim() != d || w.is_some_and(|w| w.dim() != d) {
        return Err(SrcaError::Dimension(format!(
            "data dimension {d}, center {c}, index set {}, weight {}",
            idx.dim(),
            w.map_or(d, |w| w.dim())
        )));
    }
    Ok(())
}

/// In-plane and out-of-plane weighted norms of `x - c`.
fn split_norms(u: &DVector<f64>, idx: &IndexSet) -> (f64, f64) {
    let mut inside = 0.0;
    let mut outside = 0.0;
    for (j, v) in u.iter().enumerate() {
        if idx.contains(j) {
            inside += v * v;
        } else {
            outside += v * v;
        }
    }
    (inside.sqrt(), outside)
}

/// `(x-c)' W (x-c) + r^2 - 2 r |I sqrt(W) (x-c)|`, evaluated as
/// `out^2 + (in - r)^2` so it is never negative.
pub fn point_to_sphere_sq_distance(
    x: &DVector<f64>,
    params: &SphereParams,
    idx: &IndexSet,
    w: &WeightMatrix,
) -> Result<f64> {
    check_dims(x.len(), params.center.len(), idx, Some(w))?;
    let u = w.sqrt_factor() * (x - &params.center);
    let (inside, out_sq) = split_norms(&u, idx);
    Ok(out_sq + (inside - params.radius).powi(2))
}

/// Sum of squared point-to-sphere distances over the rows of `x`.
pub fn loss(x: &DataMatrix, params: &SphereParams, idx: &IndexSet, w: &WeightMatrix) -> Result<f64> {
    check_dims(x.cols(), params.center.len(), idx, Some(w))?;
    let ev = Evaluator::new(x.values(), w, idx.mask());
    Ok(ev.eval(&params.center, Radius::Fixed(params.radius), None, 0.0, false).loss)
}

/// Gradient of [`loss`] in the center and in the radius.
pub fn loss_gradient(
    x: &DataMatrix,
    params: &SphereParams,
    idx: &IndexSet,
    w: &WeightMatrix,
) -> Result<(DVector<f64>, f64)> {
    check_dims(x.cols(), params.center.len(), idx, Some(w))?;
    let ev = Evaluator::new(x.values(), w, idx.mask());
    let out = ev.eval(&params.center, Radius::Fixed(params.radius), None, 0.0, true);
    let grad_r = 2.0 * x.rows() as f64 * params.radius - 2.0 * out.sum_inside;
    Ok((out.grad_c, grad_r))
}

/// Mean in-plane weighted norm: the minimizer of the loss in `r` for a
/// fixed center. Returns 0 when every point coincides with the center in
/// the plane.
pub fn optimal_radius(x: &DataMatrix, center: &DVector<f64>, idx: &IndexSet, w: &WeightMatrix) -> Result<f64> {
    check_dims(x.cols(), center.len(), idx, Some(w))?;
    if x.rows() == 0 {
        return Err(SrcaError::Empty("no rows".into()));
    }
    let ev = Evaluator::new(x.values(), w, idx.mask());
    let r = ev.eval(center, Radius::Optimal, None, 0.0, false).radius;
    if r == 0.0 {
        log::warn!("all points coincide with the center in {idx}; radius is 0");
    }
    Ok(r)
}

/// Result of a projection, with the rows whose in-plane offset was too
/// small to define a direction.
#[derive(Debug, Clone)]
pub struct Projection {
    pub data: DataMatrix,
    pub fallback_rows: Vec<bool>,
}

/// Projects every row onto the sphere: coordinates in `idx` move radially
/// to distance `r` from the center, the rest are set to the center.
pub fn project_to_sphere(x: &DataMatrix, params: &SphereParams, idx: &IndexSet) -> Result<DataMatrix> {
    project_to_lk_sphere(x, params, idx, 2).map(|p| p.data)
}

/// Projection onto an `l_k` sphere. Only `k = 2` is supported.
pub fn project_to_lk_sphere(
    x: &DataMatrix,
    params: &SphereParams,
    idx: &IndexSet,
    k: u32,
) -> Result<Projection> {
    if k != 2 {
        return Err(SrcaError::InvalidArgument(format!(
            "only l2 spheres are supported, got l{k}"
        )));
    }
    check_dims(x.cols(), params.center.len(), idx, None)?;
    let c = &params.center;
    let mut out = x.values().clone();
    let mut fallback = vec![false; x.rows()];
    for i in 0..x.rows() {
        let norm = idx
            .members()
            .iter()
            .map(|&j| (out[(i, j)] - c[j]).powi(2))
            .sum::<f64>()
            .sqrt();
        for j in 0..x.cols() {
            if !idx.contains(j) {
                out[(i, j)] = c[j];
            }
        }
        if norm < EPS_SINGULAR {
            fallback[i] = true;
            for (k, &j) in idx.members().iter().enumerate() {
                out[(i, j)] = c[j] + if k == 0 { params.radius } else { 0.0 };
            }
        } else {
            for &j in idx.members() {
                out[(i, j)] = c[j] + params.radius * (out[(i, j)] - c[j]) / norm;
            }
        }
    }
    Ok(Projection { data: x.replace_values(out), fallback_rows: fallback })
}

/// Affine hyperplane inside the coordinate subspace of an index set: the
/// limit of the sub-spheres as the radius grows without bound.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatParams {
    pub offset: DVector<f64>,
    /// Unit normal, zero outside the index set.
    pub normal: DVector<f64>,
}

/// Best flat for an index set under the identity weight, with its loss.
pub fn fit_flat(x: &DataMatrix, idx: &IndexSet) -> Result<(FlatParams, f64)> {
    check_dims(x.cols(), x.cols(), idx, None)?;
    let n = x.rows();
    if n == 0 {
        return Err(SrcaError::Empty("no rows".into()));
    }
    let mean = x.column_means();
    let cov = covariance(x.values(), &mean, n as f64);
    let sub = DMatrix::from_fn(idx.len(), idx.len(), |a, b| cov[(idx.members()[a], idx.members()[b])]);
    let (vals, vecs) = sym_eigen_desc(&sub);
    let k = idx.len() - 1;
    let mut normal = DVector::zeros(x.cols());
    for (a, &j) in idx.members().iter().enumerate() {
        normal[j] = vecs[(a, k)];
    }
    let outside: f64 = idx.complement().iter().map(|&j| cov[(j, j)]).sum();
    let loss = n as f64 * (vals[k].max(0.0) + outside);
    Ok((FlatParams { offset: mean, normal }, loss))
}

/// Orthogonal projection onto a flat; coordinates outside the index set
/// are set to the offset.
pub fn project_to_flat(x: &DataMatrix, flat: &FlatParams, idx: &IndexSet) -> Result<DataMatrix> {
    check_dims(x.cols(), flat.offset.len(), idx, None)?;
    let mut out = x.values().clone();
    for i in 0..x.rows() {
        let dot: f64 = idx
            .members()
            .iter()
            .map(|&j| (out[(i, j)] - flat.offset[j]) * flat.normal[j])
            .sum();
        for j in 0..x.cols() {
            if idx.contains(j) {
                out[(i, j)] -= dot * flat.normal[j];
            } else {
                out[(i, j)] = flat.offset[j];
            }
        }
    }
    Ok(x.replace_values(out))
}

/// Sum of squared distances to a flat (identity weight).
pub fn flat_loss(x: &DataMatrix, flat: &FlatParams, idx: &IndexSet) -> Result<f64> {
    let p = project_to_flat(x, flat, idx)?;
    Ok((x.values() - p.values()).norm_squared())
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Radius {
    Fixed(f64),
    /// Profile out the radius with its closed form.
    Optimal,
    /// Closed form clamped to `[lo, hi]`.
    Clamped(f64, f64),
}

pub(crate) struct EvalOut {
    pub loss: f64,
    pub penalty: f64,
    pub radius: f64,
    pub sum_inside: f64,
    pub grad_c: DVector<f64>,
    pub grad_v: DVector<f64>,
}

/// Loss and gradients for one dataset under a fixed weight. The in-plane
/// selection is a vector `v` in `[0,1]^d`; a 0/1 mask gives the exact
/// sub-sphere loss, fractional entries give the relaxed loss.
pub(crate) struct Evaluator<'a> {
    x: &'a DMatrix<f64>,
    /// Rows of `x sqrt(W)`; `None` when `W = I`.
    y: Option<DMatrix<f64>>,
    sqrt_w: Option<DMatrix<f64>>,
    mask: Vec<f64>,
}

impl<'a> Evaluator<'a> {
    pub fn new(x: &'a DMatrix<f64>, w: &WeightMatrix, mask: Vec<f64>) -> Self {
        if w.is_identity() {
            Self { x, y: None, sqrt_w: None, mask }
        } else {
            let s = w.sqrt_factor().clone();
            Self { x, y: Some(x * &s), sqrt_w: Some(s), mask }
        }
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    /// Evaluates the loss at center `c`. `v` overrides the stored mask.
    /// `lambda` adds `lambda * sum_ij v_j |x_ij - c_j|`.
    pub fn eval(&self, c: &DVector<f64>, radius: Radius, v: Option<&[f64]>, lambda: f64, grad: bool) -> EvalOut {
        let (n, d) = (self.n(), self.d());
        let v = v.unwrap_or(&self.mask);
        let v2: Vec<f64> = v.iter().map(|a| a * a).collect();
        let (ys, wc) = match (&self.y, &self.sqrt_w) {
            (Some(y), Some(s)) => (y, s * c),
            _ => (self.x, c.clone()),
        };

        let mut w = vec![0.0; d];
        let mut inside = vec![0.0; n];
        let mut sum_in = 0.0;
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..d {
                let wj = ys[(i, j)] - wc[j];
                s += v2[j] * wj * wj;
            }
            inside[i] = s.sqrt();
            sum_in += inside[i];
        }
        let mean_in = if n == 0 { 0.0 } else { sum_in / n as f64 };
        let r = match radius {
            Radius::Fixed(r) => r,
            Radius::Optimal => mean_in,
            Radius::Clamped(lo, hi) => mean_in.clamp(lo, hi),
        };

        let mut loss = 0.0;
        let mut penalty = 0.0;
        let mut gw = DVector::zeros(d);
        let mut gc_pen = DVector::zeros(d);
        let mut gv = DVector::zeros(d);
        for i in 0..n {
            let mut out_sq = 0.0;
            for j in 0..d {
                w[j] = ys[(i, j)] - wc[j];
                out_sq += (1.0 - v2[j]) * w[j] * w[j];
            }
            let ins = inside[i];
            loss += out_sq + (ins - r) * (ins - r);
            let singular = ins < EPS_SINGULAR;
            if grad {
                for j in 0..d {
                    // d rho / d w_j; the radial term is dropped on the cone axis
                    let mut g = 2.0 * w[j];
                    if !singular {
                        g -= 2.0 * r * v2[j] * w[j] / ins;
                        gv[j] -= 2.0 * r * v[j] * w[j] * w[j] / ins;
                    }
                    gw[j] += g;
                }
            }
            if lambda != 0.0 {
                for j in 0..d {
                    let u = self.x[(i, j)] - c[j];
                    penalty += v[j] * u.abs();
                    if grad {
                        let sign = if u > 0.0 { 1.0 } else if u < 0.0 { -1.0 } else { 0.0 };
                        gc_pen[j] -= lambda * v[j] * sign;
                        gv[j] += lambda * u.abs();
                    }
                }
            }
        }
        // w = y - sqrt(W) c, so d/dc = -sqrt(W) d/dw
        let mut grad_c = match &self.sqrt_w {
            Some(s) => -(s * gw),
            None => -gw,
        };
        grad_c += gc_pen;
        EvalOut { loss, penalty: lambda * penalty, radius: r, sum_inside: sum_in, grad_c, grad_v: gv }
    }
}
