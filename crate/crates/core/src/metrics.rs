//! Reconstruction error, cluster separation indices and coranking scores.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::baselines::{PcaModel, SpcaModel};
use crate::data::{format_float, DataMatrix};
use crate::error::{Result, SrcaError};
use crate::model::SphereModel;

/// Anything that maps rows to their reduced reconstruction in the input
/// coordinates.
pub trait Reducer {
    fn reduce(&self, x: &DataMatrix) -> Result<DataMatrix>;
}

impl Reducer for SphereModel {
    fn reduce(&self, x: &DataMatrix) -> Result<DataMatrix> {
        self.transform(x)
    }
}

impl Reducer for PcaModel {
    fn reduce(&self, x: &DataMatrix) -> Result<DataMatrix> {
        self.transform(x)
    }
}

impl Reducer for SpcaModel {
    fn reduce(&self, x: &DataMatrix) -> Result<DataMatrix> {
        self.transform(x)
    }
}

/// `(1/n) sum_i |x_i - x_hat_i|^2`.
pub fn mse(x: &DataMatrix, x_hat: &DataMatrix) -> Result<f64> {
    same_shape(x, x_hat)?;
    if x.rows() == 0 {
        return Err(SrcaError::Empty("no rows".into()));
    }
    Ok((x.values() - x_hat.values()).norm_squared() / x.rows() as f64)
}

pub fn out_of_sample_mse(model: &impl Reducer, x_test: &DataMatrix) -> Result<f64> {
    mse(x_test, &model.reduce(x_test)?)
}

fn same_shape(a: &DataMatrix, b: &DataMatrix) -> Result<()> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(SrcaError::Dimension(format!(
            "shapes differ: {}x{} vs {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    Ok(())
}

fn pairwise(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (x.row(i) - x.row(j)).norm();
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

/// Groups row indices by label, in ascending label order.
fn clusters(x: &DataMatrix, labels: &[usize]) -> Result<Vec<Vec<usize>>> {
    if labels.len() != x.rows() {
        return Err(SrcaError::Dimension(format!(
            "{} labels for {} rows",
            labels.len(),
            x.rows()
        )));
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        groups.entry(l).or_default().push(i);
    }
    if groups.len() < 2 {
        return Err(SrcaError::InvalidArgument("cluster metrics need at least two clusters".into()));
    }
    Ok(groups.into_values().collect())
}

fn centroid(x: &DMatrix<f64>, members: &[usize]) -> DVector<f64> {
    let mut c = DVector::zeros(x.ncols());
    for &i in members {
        c += x.row(i).transpose();
    }
    c / members.len() as f64
}

/// Mean silhouette. A point alone in its cluster scores 0.
pub fn silhouette(x_hat: &DataMatrix, labels: &[usize]) -> Result<f64> {
    let groups = clusters(x_hat, labels)?;
    let d = pairwise(x_hat.values());
    let n = x_hat.rows();
    let mut of = vec![0usize; n];
    for (g, m) in groups.iter().enumerate() {
        for &i in m {
            of[i] = g;
        }
    }
    let mut total = 0.0;
    for i in 0..n {
        let own = &groups[of[i]];
        if own.len() < 2 {
            continue;
        }
        let a = own.iter().map(|&j| d[(i, j)]).sum::<f64>() / (own.len() - 1) as f64;
        let b = groups
            .iter()
            .enumerate()
            .filter(|(g, _)| *g != of[i])
            .map(|(_, m)| m.iter().map(|&j| d[(i, j)]).sum::<f64>() / m.len() as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / n as f64)
}

/// Calinski-Harabasz: `[tr(B)/(k-1)] / [tr(W)/(n-k)]`. Returns 1 when
/// every cluster has zero scatter.
pub fn calinski_harabasz(x_hat: &DataMatrix, labels: &[usize]) -> Result<f64> {
    let groups = clusters(x_hat, labels)?;
    let (n, k) = (x_hat.rows(), groups.len());
    if n <= k {
        return Err(SrcaError::InvalidArgument("need more points than clusters".into()));
    }
    let x = x_hat.values();
    let grand = x_hat.column_means();
    let mut between = 0.0;
    let mut within = 0.0;
    for m in &groups {
        let c = centroid(x, m);
        between += m.len() as f64 * (&c - &grand).norm_squared();
        for &i in m {
            within += (x.row(i).transpose() - &c).norm_squared();
        }
    }
    if within == 0.0 {
        return Ok(1.0);
    }
    Ok(between / (k - 1) as f64 / (within / (n - k) as f64))
}

/// Davies-Bouldin with mean centroid distance as the cluster scatter.
pub fn davies_bouldin(x_hat: &DataMatrix, labels: &[usize]) -> Result<f64> {
    let groups = clusters(x_hat, labels)?;
    let x = x_hat.values();
    let cents: Vec<DVector<f64>> = groups.iter().map(|m| centroid(x, m)).collect();
    let scatter: Vec<f64> = groups
        .iter()
        .zip(&cents)
        .map(|(m, c)| m.iter().map(|&i| (x.row(i).transpose() - c).norm()).sum::<f64>() / m.len() as f64)
        .collect();
    let k = groups.len();
    let mut total = 0.0;
    for i in 0..k {
        let mut worst = 0.0f64;
        for j in 0..k {
            if i == j {
                continue;
            }
            let sep = (&cents[i] - &cents[j]).norm();
            let s = scatter[i] + scatter[j];
            let ratio = if sep > 0.0 {
                s / sep
            } else if s == 0.0 {
                0.0
            } else {
                return Err(SrcaError::Numerical("two clusters share a centroid".into()));
            };
            worst = worst.max(ratio);
        }
        total += worst;
    }
    Ok(total / k as f64)
}

/// `q[k-1][l-1]` counts ordered pairs with original rank `k` and reduced
/// rank `l`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorankingMatrix {
    counts: Vec<Vec<u64>>,
}

impl CorankingMatrix {
    /// `n - 1`.
    pub fn size(&self) -> usize {
        self.counts.len()
    }

    pub fn n(&self) -> usize {
        self.size() + 1
    }

    /// 1-based ranks.
    pub fn get(&self, k: usize, l: usize) -> u64 {
        self.counts[k - 1][l - 1]
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    /// `Q_NX(K)` for `K = 1..n-1`.
    pub fn q_nx(&self) -> Vec<f64> {
        let m = self.size();
        let n = self.n() as f64;
        // running sum over the growing upper-left K x K block
        let mut out = Vec::with_capacity(m);
        let mut acc = 0u64;
        for kk in 0..m {
            for l in 0..kk {
                acc += self.counts[kk][l] + self.counts[l][kk];
            }
            acc += self.counts[kk][kk];
            out.push(acc as f64 / ((kk + 1) as f64 * n));
        }
        out
    }

    /// `R_NX(K)` for `K = 1..n-2`.
    pub fn r_nx(&self) -> Vec<f64> {
        let n1 = self.size() as f64;
        self.q_nx()
            .iter()
            .enumerate()
            .take(self.size().saturating_sub(1))
            .map(|(i, q)| {
                let k = (i + 1) as f64;
                (n1 * q - k) / (n1 - k)
            })
            .collect()
    }
}

/// Rank of every other point from each point, ties to the smaller index.
fn ranks(d: &DMatrix<f64>) -> Vec<Vec<usize>> {
    let n = d.nrows();
    (0..n)
        .map(|i| {
            let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            order.sort_by(|&a, &b| d[(i, a)].total_cmp(&d[(i, b)]).then(a.cmp(&b)));
            let mut r = vec![0usize; n];
            for (pos, &j) in order.iter().enumerate() {
                r[j] = pos + 1;
            }
            r
        })
        .collect()
}

pub fn coranking_matrix(x: &DataMatrix, x_hat: &DataMatrix) -> Result<CorankingMatrix> {
    if x.rows() != x_hat.rows() {
        return Err(SrcaError::Dimension("coranking needs the same rows".into()));
    }
    let n = x.rows();
    if n < 3 {
        return Err(SrcaError::InvalidArgument("coranking needs at least 3 rows".into()));
    }
    let rho = ranks(&pairwise(x.values()));
    let r = ranks(&pairwise(x_hat.values()));
    let mut counts = vec![vec![0u64; n - 1]; n - 1];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                counts[rho[i][j] - 1][r[i][j] - 1] += 1;
            }
        }
    }
    Ok(CorankingMatrix { counts })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorankingScores {
    pub cc: f64,
    pub auc: f64,
    pub wauc: f64,
}

/// CC is the Pearson correlation of the pairwise distances; AUC is the
/// plain mean of `R_NX(K)` and WAUC its `1/K`-weighted mean.
pub fn coranking_scores(q: &CorankingMatrix, x: &DataMatrix, x_hat: &DataMatrix) -> Result<CorankingScores> {
    if q.n() != x.rows() || x.rows() != x_hat.rows() {
        return Err(SrcaError::Dimension("coranking matrix does not match the data".into()));
    }
    let cc = distance_correlation(x, x_hat)?;
    let r = q.r_nx();
    let auc = r.iter().sum::<f64>() / r.len() as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for (i, v) in r.iter().enumerate() {
        let w = 1.0 / (i + 1) as f64;
        num += v * w;
        den += w;
    }
    Ok(CorankingScores { cc, auc, wauc: num / den })
}

fn distance_correlation(x: &DataMatrix, x_hat: &DataMatrix) -> Result<f64> {
    let (a, b) = (pairwise(x.values()), pairwise(x_hat.values()));
    let n = x.rows();
    let mut u = Vec::with_capacity(n * (n - 1) / 2);
    let mut v = Vec::with_capacity(u.capacity());
    for i in 0..n {
        for j in (i + 1)..n {
            u.push(a[(i, j)]);
            v.push(b[(i, j)]);
        }
    }
    let m = u.len() as f64;
    let (mu, mv) = (u.iter().sum::<f64>() / m, v.iter().sum::<f64>() / m);
    let (mut suv, mut suu, mut svv) = (0.0, 0.0, 0.0);
    for (p, q) in u.iter().zip(&v) {
        suv += (p - mu) * (q - mv);
        suu += (p - mu) * (p - mu);
        svv += (q - mv) * (q - mv);
    }
    if !(suu > 0.0) || !(svv > 0.0) {
        return Err(SrcaError::Numerical("pairwise distances have zero variance; CC undefined".into()));
    }
    Ok((suv / (suu.sqrt() * svv.sqrt())).clamp(-1.0, 1.0))
}

/// All scores for one reduction. Cluster indices need labels; the
/// out-of-sample error needs a held-out split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub mse: f64,
    pub oos_mse: Option<f64>,
    pub sc: Option<f64>,
    pub chi: Option<f64>,
    pub dbi: Option<f64>,
    pub cc: f64,
    pub auc: f64,
    pub wauc: f64,
    pub auc_weighting: String,
    pub wauc_weighting: String,
}

pub const REPORT_COLUMNS: [&str; 8] = ["mse", "oos_mse", "sc", "chi", "dbi", "cc", "auc", "wauc"];

impl EvaluationReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Header plus one row; missing values are empty cells.
    pub fn to_csv(&self) -> String {
        let cell = |v: Option<f64>| v.map(format_float).unwrap_or_default();
        let row = [
            Some(self.mse),
            self.oos_mse,
            self.sc,
            self.chi,
            self.dbi,
            Some(self.cc),
            Some(self.auc),
            Some(self.wauc),
        ]
        .map(cell);
        format!("{}\n{}\n", REPORT_COLUMNS.join(","), row.join(","))
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| SrcaError::io(path, e))
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| SrcaError::io(path, e))
    }
}

/// Scores `x_hat` against `x`. Cluster indices are computed on `x_hat`.
pub fn evaluate(x: &DataMatrix, x_hat: &DataMatrix, labels: Option<&[usize]>, oos_mse: Option<f64>) -> Result<EvaluationReport> {
    let m = mse(x, x_hat)?;
    let (sc, chi, dbi) = match labels {
        Some(l) => (
            Some(silhouette(x_hat, l)?),
            Some(calinski_harabasz(x_hat, l)?),
            Some(davies_bouldin(x_hat, l)?),
        ),
        None => (None, None, None),
    };
    let q = coranking_matrix(x, x_hat)?;
    let s = coranking_scores(&q, x, x_hat)?;
    Ok(EvaluationReport {
        mse: m,
        oos_mse,
        sc,
        chi,
        dbi,
        cc: s.cc,
        auc: s.auc,
        wauc: s.wauc,
        auc_weighting: "uniform mean of R_NX(K), K=1..n-2".into(),
        wauc_weighting: "1/K-weighted mean of R_NX(K), K=1..n-2".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random(seed: u64, n: usize, d: usize) -> DataMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DataMatrix::new(DMatrix::from_fn(n, d, |_, _| rng.sample(StandardNormal))).unwrap()
    }

    #[test]
    fn mse_examples() {
        let x = random(1, 5, 3);
        assert_eq!(mse(&x, &x).unwrap(), 0.0);
        let a = DataMatrix::from_rows(&[vec![0.0, 0.0]]).unwrap();
        let b = DataMatrix::from_rows(&[vec![3.0, 4.0]]).unwrap();
        assert_eq!(mse(&a, &b).unwrap(), 25.0);
        assert!(mse(&a, &x).is_err());
    }

    fn blobs() -> (DataMatrix, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (k, c) in [[0.0, 0.0], [50.0, 50.0]].iter().enumerate() {
            for _ in 0..20 {
                rows.push(vec![c[0] + 0.1 * rng.sample::<f64, _>(StandardNormal), c[1] + 0.1 * rng.sample::<f64, _>(StandardNormal)]);
                labels.push(k);
            }
        }
        (DataMatrix::from_rows(&rows).unwrap(), labels)
    }

    /// Direct silhouette without shared helpers.
    fn silhouette_naive(rows: &[Vec<f64>], labels: &[usize]) -> f64 {
        let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        let mut ks: Vec<usize> = labels.to_vec();
        ks.sort_unstable();
        ks.dedup();
        let mut s = 0.0;
        for i in 0..rows.len() {
            let same: Vec<usize> = (0..rows.len()).filter(|&j| j != i && labels[j] == labels[i]).collect();
            if same.is_empty() {
                continue;
            }
            let a = same.iter().map(|&j| dist(&rows[i], &rows[j])).sum::<f64>() / same.len() as f64;
            let mut b = f64::INFINITY;
            for &k in &ks {
                if k == labels[i] {
                    continue;
                }
                let o: Vec<usize> = (0..rows.len()).filter(|&j| labels[j] == k).collect();
                b = b.min(o.iter().map(|&j| dist(&rows[i], &rows[j])).sum::<f64>() / o.len() as f64);
            }
            s += (b - a) / a.max(b);
        }
        s / rows.len() as f64
    }

    #[test]
    fn cluster_indices_on_blobs() {
        let (x, l) = blobs();
        let sc = silhouette(&x, &l).unwrap();
        assert!(sc > 0.9);
        let rows: Vec<Vec<f64>> = (0..x.rows()).map(|i| x.values().row(i).iter().copied().collect()).collect();
        assert!((sc - silhouette_naive(&rows, &l)).abs() < 1e-12);
        assert!(calinski_harabasz(&x, &l).unwrap() > 1000.0);
        assert!(davies_bouldin(&x, &l).unwrap() < 0.1);
    }

    #[test]
    fn zero_scatter_dbi() {
        let x = DataMatrix::from_rows(&[vec![0.0, 0.0], vec![0.0, 0.0], vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert_eq!(davies_bouldin(&x, &[0, 0, 1, 1]).unwrap(), 0.0);
    }

    #[test]
    fn chi_by_hand() {
        let x = DataMatrix::from_rows(&[vec![0.0], vec![2.0], vec![10.0], vec![12.0]]).unwrap();
        // B = 2*25 + 2*25 = 100, W = 4, k = 2, n = 4
        assert!((calinski_harabasz(&x, &[0, 0, 1, 1]).unwrap() - 100.0 / (4.0 / 2.0)).abs() < 1e-12);
    }

    #[test]
    fn cluster_errors_and_singletons() {
        let x = random(2, 4, 2);
        assert!(silhouette(&x, &[0, 0, 0, 0]).is_err());
        assert!(silhouette(&x, &[0, 0, 0]).is_err());
        let s = silhouette(&x, &[0, 1, 1, 1]).unwrap();
        let rows: Vec<Vec<f64>> = (0..4).map(|i| x.values().row(i).iter().copied().collect()).collect();
        assert!((s - silhouette_naive(&rows, &[0, 1, 1, 1])).abs() < 1e-12);
    }

    #[test]
    fn coranking_identity_is_diagonal() {
        let x = random(4, 8, 3);
        let q = coranking_matrix(&x, &x).unwrap();
        for k in 1..=7 {
            for l in 1..=7 {
                assert_eq!(q.get(k, l), if k == l { 8 } else { 0 });
            }
        }
        let s = coranking_scores(&q, &x, &x).unwrap();
        assert!((s.cc - 1.0).abs() < 1e-12);
        assert!(q.r_nx().iter().all(|r| (r - 1.0).abs() < 1e-12));
        assert!((s.auc - 1.0).abs() < 1e-12 && (s.wauc - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coranking_line_reversal_by_hand() {
        let x = DataMatrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let y = DataMatrix::from_rows(&[vec![3.0], vec![2.0], vec![1.0], vec![0.0]]).unwrap();
        let q = coranking_matrix(&x, &y).unwrap();
        // a reflection keeps every distance and every tie-break: all 12
        // ordered pairs keep their rank
        let expected = [[4, 0, 0], [0, 4, 0], [0, 0, 4]];
        for k in 0..3 {
            for l in 0..3 {
                assert_eq!(q.get(k + 1, l + 1), expected[k][l], "q[{k}][{l}]");
            }
        }
        let z = DataMatrix::from_rows(&[vec![0.0], vec![1.0], vec![3.0], vec![7.0]]).unwrap();
        let w = DataMatrix::from_rows(&[vec![0.0], vec![6.0], vec![8.0], vec![9.0]]).unwrap();
        let q = coranking_matrix(&z, &w).unwrap();
        assert_eq!(q.counts().iter().map(|r| r.iter().sum::<u64>()).collect::<Vec<_>>(), vec![4, 4, 4]);
    }

    /// Literal set-builder count, one (k, l) cell at a time.
    fn coranking_brute(x: &DataMatrix, y: &DataMatrix) -> Vec<Vec<u64>> {
        let n = x.rows();
        let d = |m: &DataMatrix, a: usize, b: usize| (m.values().row(a) - m.values().row(b)).norm();
        let rank = |m: &DataMatrix, i: usize, j: usize| {
            (0..n)
                .filter(|&k| k != i && (d(m, i, k) < d(m, i, j) || (d(m, i, k) == d(m, i, j) && k < j)))
                .count()
                + 1
        };
        let mut q = vec![vec![0u64; n - 1]; n - 1];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    q[rank(x, i, j) - 1][rank(y, i, j) - 1] += 1;
                }
            }
        }
        q
    }

    #[test]
    fn coranking_matches_brute_force() {
        let x = random(5, 12, 3);
        let y = random(6, 12, 2);
        assert_eq!(coranking_matrix(&x, &y).unwrap().counts(), coranking_brute(&x, &y).as_slice());
    }

    #[test]
    fn cc_is_scale_invariant() {
        let x = random(7, 10, 3);
        let y = random(8, 10, 2);
        let y2 = DataMatrix::new(y.values() * 3.5).unwrap();
        let q = coranking_matrix(&x, &y).unwrap();
        let a = coranking_scores(&q, &x, &y).unwrap();
        let b = coranking_scores(&q, &x, &y2).unwrap();
        assert!((a.cc - b.cc).abs() < 1e-12);
    }

    #[test]
    fn report_csv_layout() {
        let x = random(9, 6, 2);
        let (x2, l) = blobs();
        let r = evaluate(&x, &x, None, Some(0.5)).unwrap();
        let csv = r.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "mse,oos_mse,sc,chi,dbi,cc,auc,wauc");
        assert!(lines[1].starts_with("0,0.5,,,,"), "{csv}");
        assert_eq!(lines[1].split(',').count(), 8);
        let r = evaluate(&x2, &x2, Some(&l), None).unwrap();
        assert!(r.sc.unwrap() > 0.9);
        let js: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert!(js["auc_weighting"].is_string());
    }

    proptest! {
        #[test]
        fn coranking_margins_and_permutation(seed in 0u64..1000, n in 3usize..15) {
            let x = random(seed, n, 3);
            let y = random(seed + 1, n, 2);
            let q = coranking_matrix(&x, &y).unwrap();
            for k in 0..n - 1 {
                prop_assert_eq!(q.counts()[k].iter().sum::<u64>(), n as u64);
                prop_assert_eq!(q.counts().iter().map(|r| r[k]).sum::<u64>(), n as u64);
            }
            let r = q.r_nx();
            for (i, v) in r.iter().enumerate() {
                let k = (i + 1) as f64;
                prop_assert!(*v <= 1.0 + 1e-12 && *v >= -k / (n as f64 - 1.0 - k) - 1e-12);
            }
            let s = coranking_scores(&q, &x, &y).unwrap();
            let perm: Vec<usize> = (0..n).rev().collect();
            let (xp, yp) = (x.select_rows(&perm), y.select_rows(&perm));
            let sp = coranking_scores(&coranking_matrix(&xp, &yp).unwrap(), &xp, &yp).unwrap();
            prop_assert!((s.cc - sp.cc).abs() < 1e-12);
            prop_assert!((mse(&x, &x).unwrap() - mse(&xp, &xp).unwrap()).abs() < 1e-12);
        }
    }
}
