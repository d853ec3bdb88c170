//! Comparison methods: PCA reduction and the two-step SPCA (PCA subspace,
//! then an algebraic sphere fit inside it).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{Result, SrcaError};
use crate::linalg::sym_eigen_desc;
use crate::rotation::pca_eigen;

/// Mean and the leading principal directions.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: DVector<f64>,
    /// `d x d'` with orthonormal columns.
    pub basis: DMatrix<f64>,
    /// Sample-covariance eigenvalues, all `d` of them, descending.
    pub eigenvalues: DVector<f64>,
}

impl PcaModel {
    /// `x_bar + V V' (x - x_bar)` for every row.
    pub fn transform(&self, x: &DataMatrix) -> Result<DataMatrix> {
        let z = self.scores(x)?;
        Ok(x.replace_values(lift(&self.mean, &self.basis, &z)))
    }

    /// Coordinates in the retained basis.
    pub fn scores(&self, x: &DataMatrix) -> Result<DMatrix<f64>> {
        check_cols(x, self.mean.len())?;
        Ok(center(x.values(), &self.mean) * &self.basis)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&BaselineDoc {
            kind: "pca".into(),
            mean: self.mean.as_slice().to_vec(),
            basis: rows_of(&self.basis),
            center: None,
            radius: None,
        })?)
    }
}

/// PCA fit and reduction of the training rows. The basis is taken from
/// the same eigen-decomposition as the PCA rotation.
pub fn pca_fit_reduce(x: &DataMatrix, d_prime: usize) -> Result<(PcaModel, DataMatrix)> {
    let d = x.cols();
    if d_prime == 0 || d_prime >= d {
        return Err(SrcaError::InvalidArgument(format!(
            "PCA needs 1 <= d' < d, got d'={d_prime}, d={d}"
        )));
    }
    let (vals, vecs) = pca_eigen(x)?;
    let model = PcaModel {
        mean: x.column_means(),
        basis: vecs.matrix().columns(0, d_prime).into_owned(),
        eigenvalues: vals,
    };
    let reduced = model.transform(x)?;
    Ok((model, reduced))
}

/// PCA subspace of dimension `d' + 1` plus a sphere inside it.
#[derive(Debug, Clone, PartialEq)]
pub struct SpcaModel {
    pub mean: DVector<f64>,
    /// `d x (d'+1)` with orthonormal columns.
    pub basis: DMatrix<f64>,
    /// Sphere center in subspace coordinates.
    pub center: DVector<f64>,
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SpcaOptions {
    /// Polish the algebraic fit by Levenberg-Marquardt on the geometric loss.
    pub geometric_refine: bool,
}

impl SpcaModel {
    /// Project to the subspace, then radially to the sphere, then back.
    pub fn transform(&self, x: &DataMatrix) -> Result<DataMatrix> {
        check_cols(x, self.mean.len())?;
        let z = center(x.values(), &self.mean) * &self.basis;
        let k = z.ncols();
        let mut p = z.clone();
        for i in 0..z.nrows() {
            let u = z.row(i).transpose() - &self.center;
            let norm = u.norm();
            for j in 0..k {
                p[(i, j)] = self.center[j]
                    + if norm < crate::geometry::EPS_SINGULAR {
                        if j == 0 { self.radius } else { 0.0 }
                    } else {
                        self.radius * u[j] / norm
                    };
            }
        }
        Ok(x.replace_values(lift(&self.mean, &self.basis, &p)))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&BaselineDoc {
            kind: "spca".into(),
            mean: self.mean.as_slice().to_vec(),
            basis: rows_of(&self.basis),
            center: Some(self.center.as_slice().to_vec()),
            radius: Some(self.radius),
        })?)
    }
}

pub fn spca_fit(x: &DataMatrix, d_prime: usize) -> Result<SpcaModel> {
    spca_fit_with(x, d_prime, SpcaOptions::default())
}

pub fn spca_fit_with(x: &DataMatrix, d_prime: usize, opts: SpcaOptions) -> Result<SpcaModel> {
    let d = x.cols();
    if d_prime == 0 || d_prime + 1 > d {
        return Err(SrcaError::InvalidArgument(format!(
            "SPCA needs 1 <= d' and d'+1 <= d, got d'={d_prime}, d={d}"
        )));
    }
    let (_, vecs) = pca_eigen(x)?;
    let mean = x.column_means();
    let basis = vecs.matrix().columns(0, d_prime + 1).into_owned();
    let z = DataMatrix::new(center(x.values(), &mean) * &basis)?;
    let mut c = spca_algebraic_center(&z)?;
    let mut r = spca_algebraic_radius(&z, &c)?;
    if opts.geometric_refine {
        (c, r) = levenberg_marquardt(z.values(), c, r);
    }
    Ok(SpcaModel { mean, basis, center: c, radius: r })
}

pub fn spca_transform(model: &SpcaModel, x: &DataMatrix) -> Result<DataMatrix> {
    model.transform(x)
}

/// Minimizer of the algebraic loss `sum (|y - c|^2 - r^2)^2` in `c`:
/// `c = 1/2 S^-1 sum (|y_i|^2 - mean |y|^2)(y_i - y_bar)`.
pub fn spca_algebraic_center(y: &DataMatrix) -> Result<DVector<f64>> {
    let ybar = y.column_means();
    let yc = center(y.values(), &ybar);
    let scatter = yc.transpose() * &yc;
    let (vals, _) = sym_eigen_desc(&scatter);
    let top = vals[0].abs();
    if !(vals[vals.len() - 1] > 1e-12 * top.max(f64::MIN_POSITIVE)) {
        return Err(SrcaError::Singular(
            "points do not affinely span the subspace; scatter matrix is singular".into(),
        ));
    }
    let sq: Vec<f64> = (0..y.rows()).map(|i| y.values().row(i).norm_squared()).collect();
    let msq = sq.iter().sum::<f64>() / y.rows() as f64;
    let mut rhs = DVector::zeros(y.cols());
    for i in 0..y.rows() {
        rhs += yc.row(i).transpose() * (sq[i] - msq);
    }
    let chol = scatter
        .cholesky()
        .ok_or_else(|| SrcaError::Singular("scatter matrix is not positive definite".into()))?;
    Ok(chol.solve(&rhs) * 0.5)
}

/// Root-mean-square distance to the center.
pub fn spca_algebraic_radius(y: &DataMatrix, c: &DVector<f64>) -> Result<f64> {
    if y.rows() == 0 {
        return Err(SrcaError::Empty("no rows".into()));
    }
    let ms = (0..y.rows())
        .map(|i| (y.values().row(i).transpose() - c).norm_squared())
        .sum::<f64>()
        / y.rows() as f64;
    if !(ms > 0.0) {
        return Err(SrcaError::Singular("all points coincide with the center".into()));
    }
    Ok(ms.sqrt())
}

/// Levenberg-Marquardt on residuals `|y_i - c| - r`.
fn levenberg_marquardt(y: &DMatrix<f64>, c0: DVector<f64>, r0: f64) -> (DVector<f64>, f64) {
    let k = y.ncols();
    let n = y.nrows();
    let pack = |c: &DVector<f64>, r: f64| {
        let mut p = DVector::zeros(k + 1);
        p.rows_mut(0, k).copy_from(c);
        p[k] = r;
        p
    };
    let cost = |p: &DVector<f64>| {
        (0..n)
            .map(|i| ((y.row(i).transpose() - p.rows(0, k)).norm() - p[k]).powi(2))
            .sum::<f64>()
    };
    let mut p = pack(&c0, r0);
    let mut f = cost(&p);
    let mut mu = 1e-3;
    for _ in 0..200 {
        let mut jtj = DMatrix::zeros(k + 1, k + 1);
        let mut jte = DVector::zeros(k + 1);
        for i in 0..n {
            let u = y.row(i).transpose() - p.rows(0, k);
            let dist = u.norm();
            let mut row = DVector::zeros(k + 1);
            if dist > crate::geometry::EPS_SINGULAR {
                row.rows_mut(0, k).copy_from(&(-&u / dist));
            }
            row[k] = -1.0;
            let e = dist - p[k];
            jtj += &row * row.transpose();
            jte += &row * e;
        }
        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for j in 0..=k {
                a[(j, j)] += mu * jtj[(j, j)].max(1e-12);
            }
            let Some(step) = a.cholesky().map(|ch| ch.solve(&(-&jte))) else {
                mu *= 10.0;
                continue;
            };
            let trial = &p + &step;
            let ft = cost(&trial);
            if ft < f && trial[k] > 0.0 {
                let rel = (f - ft) / f.max(f64::MIN_POSITIVE);
                p = trial;
                f = ft;
                mu = (mu / 10.0).max(1e-12);
                improved = rel > 1e-15;
                break;
            }
            mu *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (p.rows(0, k).into_owned(), p[k])
}

#[derive(Serialize, Deserialize)]
struct BaselineDoc {
    kind: String,
    mean: Vec<f64>,
    basis: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    center: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    radius: Option<f64>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn center(x: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut v = x.clone();
    for mut row in v.row_iter_mut() {
        row -= mean.transpose();
    }
    v
}

fn lift(mean: &DVector<f64>, basis: &DMatrix<f64>, z: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = z * basis.transpose();
    for mut row in out.row_iter_mut() {
        row += mean.transpose();
    }
    out
}

fn check_cols(x: &DataMatrix, d: usize) -> Result<()> {
    if x.cols() != d {
        return Err(SrcaError::Dimension(format!("model has {d} columns, data has {}", x.cols())));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn mse(a: &DataMatrix, b: &DataMatrix) -> f64 {
        (a.values() - b.values()).norm_squared() / a.rows() as f64
    }

    fn random(seed: u64, n: usize, d: usize) -> DataMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DataMatrix::new(DMatrix::from_fn(n, d, |_, j| (j + 1) as f64 * rng.sample::<f64, _>(StandardNormal))).unwrap()
    }

    /// Cardano's trigonometric root of `r^3 + p r + q = 0`, k = 0 branch.
    fn cardano_trig(p: f64, q: f64) -> f64 {
        2.0 * (-p / 3.0).sqrt()
            * ((1.0 / 3.0) * ((3.0 * q / (2.0 * p)) * (-3.0 / p).sqrt()).acos()).cos()
    }

    #[test]
    fn pca_exact_plane_is_fixed() {
        let rows: Vec<Vec<f64>> = (0..10)
            .map(|k| {
                let a = k as f64;
                let b = (k * k % 7) as f64;
                vec![a, b, a - 2.0 * b + 1.0]
            })
            .collect();
        let x = DataMatrix::from_rows(&rows).unwrap();
        let (_, y) = pca_fit_reduce(&x, 2).unwrap();
        assert!((x.values() - y.values()).abs().max() < 1e-9);
        assert!(mse(&x, &y) < 1e-18);
    }

    #[test]
    fn pca_mse_is_discarded_eigenvalues() {
        let x = random(1, 40, 4);
        let n = x.rows() as f64;
        for dp in 1..4 {
            let (m, y) = pca_fit_reduce(&x, dp).unwrap();
            let discarded: f64 = m.eigenvalues.iter().skip(dp).sum();
            assert!((mse(&x, &y) - discarded * (n - 1.0) / n).abs() < 1e-8);
            let g = m.basis.transpose() * &m.basis - DMatrix::<f64>::identity(dp, dp);
            assert!(g.abs().max() < 1e-10);
            let again = m.transform(&y).unwrap();
            assert!((again.values() - y.values()).abs().max() < 1e-10);
        }
        assert!(pca_fit_reduce(&x, 4).is_err());
    }

    #[test]
    fn algebraic_center_on_circle() {
        let rows: Vec<Vec<f64>> = (0..9)
            .map(|k| {
                let t = 0.4 + 0.5 * k as f64;
                vec![2.0 + 1.5 * t.cos(), -1.0 + 1.5 * t.sin()]
            })
            .collect();
        let y = DataMatrix::from_rows(&rows).unwrap();
        let c = spca_algebraic_center(&y).unwrap();
        assert!((c[0] - 2.0).abs() < 1e-9 && (c[1] + 1.0).abs() < 1e-9);
        assert!((spca_algebraic_radius(&y, &c).unwrap() - 1.5).abs() < 1e-9);

        let sq = DataMatrix::from_rows(&[vec![1.0, 1.0], vec![-1.0, 1.0], vec![-1.0, -1.0], vec![1.0, -1.0]]).unwrap();
        assert!(spca_algebraic_center(&sq).unwrap().norm() < 1e-15);
    }

    #[test]
    fn algebraic_center_is_stationary() {
        let y = random(3, 25, 3);
        let c = spca_algebraic_center(&y).unwrap();
        // algebraic loss with the radius profiled out in closed form
        let f = |c: &DVector<f64>| {
            let d2: Vec<f64> = (0..y.rows()).map(|i| (y.values().row(i).transpose() - c).norm_squared()).collect();
            let m = d2.iter().sum::<f64>() / d2.len() as f64;
            d2.iter().map(|v| (v - m).powi(2)).sum::<f64>()
        };
        let h = 1e-6;
        let mut g = DVector::zeros(3);
        for j in 0..3 {
            let mut a = c.clone();
            let mut b = c.clone();
            a[j] += h;
            b[j] -= h;
            g[j] = (f(&a) - f(&b)) / (2.0 * h);
        }
        assert!(g.norm() < 1e-6 * (1.0 + f(&c)), "{g}");
    }

    #[test]
    fn singular_scatter_is_an_error() {
        let y = DataMatrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 2.0]]).unwrap();
        assert!(matches!(spca_algebraic_center(&y), Err(SrcaError::Singular(_))));
    }

    #[test]
    fn radius_examples_and_cardano() {
        let c = DVector::from_vec(vec![0.0, 0.0]);
        let y = DataMatrix::from_rows(&[vec![3.0, 0.0], vec![0.0, -3.0]]).unwrap();
        assert!((spca_algebraic_radius(&y, &c).unwrap() - 3.0).abs() < 1e-15);
        let y = DataMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 3.0]]).unwrap();
        let r = spca_algebraic_radius(&y, &c).unwrap();
        assert!((r - 5f64.sqrt()).abs() < 1e-15);
        // r^3 + p r + q with q = 0 and p = -mean |y - c|^2
        assert!((cardano_trig(-5.0, 0.0) - r).abs() < 1e-12);
        let z = DataMatrix::from_rows(&[vec![0.0, 0.0]]).unwrap();
        assert!(spca_algebraic_radius(&z, &c).is_err());
    }

    #[test]
    fn spca_exact_sphere_and_pythagoras() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|_| {
                let t: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                let s: f64 = rng.random_range(-1.0f64..1.0).acos();
                vec![3.0 * s.sin() * t.cos(), 3.0 * s.sin() * t.sin(), 3.0 * s.cos(), 0.0]
            })
            .collect();
        let x = DataMatrix::from_rows(&rows).unwrap();
        let m = spca_fit(&x, 2).unwrap();
        assert!(mse(&x, &m.transform(&x).unwrap()) < 1e-10);

        let x = random(7, 30, 4);
        let m = spca_fit(&x, 1).unwrap();
        let y = m.transform(&x).unwrap();
        for i in 0..x.rows() {
            let xi = x.values().row(i).transpose();
            let z = m.basis.transpose() * (&xi - &m.mean);
            let plane = &m.mean + &m.basis * &z;
            let total = (&xi - y.values().row(i).transpose()).norm_squared();
            let split = (&xi - &plane).norm_squared() + ((&z - &m.center).norm() - m.radius).powi(2);
            assert!((total - split).abs() < 1e-9);
            let zp = m.basis.transpose() * (y.values().row(i).transpose() - &m.mean);
            assert!(((zp - &m.center).norm() - m.radius).abs() < 1e-10);
        }
    }

    #[test]
    fn geometric_refine_never_hurts() {
        let x = random(11, 40, 3);
        let a = spca_fit(&x, 1).unwrap();
        let b = spca_fit_with(&x, 1, SpcaOptions { geometric_refine: true }).unwrap();
        let ya = a.transform(&x).unwrap();
        let yb = b.transform(&x).unwrap();
        assert!(mse(&x, &yb) <= mse(&x, &ya) + 1e-12);
    }

    #[test]
    fn json_has_kind() {
        let x = random(2, 10, 3);
        let (p, _) = pca_fit_reduce(&x, 1).unwrap();
        assert!(p.to_json().unwrap().contains("\"kind\": \"pca\""));
        assert!(spca_fit(&x, 1).unwrap().to_json().unwrap().contains("\"kind\": \"spca\""));
    }
}
