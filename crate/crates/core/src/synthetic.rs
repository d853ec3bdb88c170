//! Seeded generators for the synthetic benchmark shapes.
//!
//! Every generator draws from ChaCha8 seeded with `seed`; clean points and
//! noise use separate streams so adding noise never changes the clean
//! sample.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, TAU};
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{Result, SrcaError};

pub const TORUS_R1: f64 = 0.5;
pub const TORUS_R2: f64 = 1.0 / 3.0;
pub const LOOP_POINTS: usize = 200;

const CLEAN_STREAM: u64 = 0;
const NOISE_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Plane,
    Torus,
    Sphere,
    Gem,
    OrthogonalLoops,
}

impl GeneratorKind {
    pub const ALL: [GeneratorKind; 5] = [
        GeneratorKind::Plane,
        GeneratorKind::Torus,
        GeneratorKind::Sphere,
        GeneratorKind::Gem,
        GeneratorKind::OrthogonalLoops,
    ];
}

impl fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GeneratorKind::Plane => "plane",
            GeneratorKind::Torus => "torus",
            GeneratorKind::Sphere => "sphere",
            GeneratorKind::Gem => "gem",
            GeneratorKind::OrthogonalLoops => "orthogonal_loops",
        })
    }
}

impl FromStr for GeneratorKind {
    type Err = SrcaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "plane" => Ok(GeneratorKind::Plane),
            "torus" => Ok(GeneratorKind::Torus),
            "sphere" => Ok(GeneratorKind::Sphere),
            "gem" | "triple_torus" => Ok(GeneratorKind::Gem),
            "orthogonal_loops" | "loops" => Ok(GeneratorKind::OrthogonalLoops),
            _ => Err(SrcaError::InvalidArgument(format!(
                "unknown dataset kind {s:?}; expected plane, torus, sphere, gem or orthogonal_loops"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub n: usize,
    /// Variance of the i.i.d. Gaussian noise added to every coordinate.
    pub noise_var: f64,
    pub seed: u64,
    pub r1: f64,
    pub r2: f64,
}

impl GeneratorSpec {
    pub fn new(kind: GeneratorKind, n: usize, seed: u64) -> Self {
        Self { kind, n, noise_var: 0.0, seed, r1: TORUS_R1, r2: TORUS_R2 }
    }

    pub fn with_noise(mut self, noise_var: f64) -> Self {
        self.noise_var = noise_var;
        self
    }
}

/// Builds the dataset described by `spec`, with batch or loop labels for
/// the gem and loop shapes.
pub fn generate(spec: &GeneratorSpec) -> Result<DataMatrix> {
    if spec.n == 0 {
        return Err(SrcaError::InvalidArgument("n must be at least 1".into()));
    }
    if !(spec.noise_var >= 0.0) || !spec.noise_var.is_finite() {
        return Err(SrcaError::InvalidArgument("noise variance must be finite and >= 0".into()));
    }
    let clean = match spec.kind {
        GeneratorKind::Plane => gen_plane(spec.n, spec.seed)?,
        GeneratorKind::Torus => gen_torus(spec.n, spec.r1, spec.r2, spec.seed)?,
        GeneratorKind::Sphere => gen_sphere(spec.n, spec.seed)?,
        GeneratorKind::Gem => gem_with(spec.n, spec.r1, spec.r2, spec.seed)?,
        GeneratorKind::OrthogonalLoops => return gen_orthogonal_loops(spec.n, spec.noise_var, spec.seed),
    };
    add_noise(clean, spec.noise_var, spec.seed)
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Adds N(0, noise_var) to every entry using the noise stream of `seed`.
pub fn add_noise(x: DataMatrix, noise_var: f64, seed: u64) -> Result<DataMatrix> {
    if noise_var == 0.0 {
        return Ok(x);
    }
    let normal = Normal::new(0.0, noise_var.sqrt())
        .map_err(|e| SrcaError::InvalidArgument(format!("noise: {e}")))?;
    let mut r = rng(seed, NOISE_STREAM);
    let mut v = x.values().clone();
    // row-major draw order so a prefix of rows is stable across n
    for i in 0..v.nrows() {
        for j in 0..v.ncols() {
            v[(i, j)] += normal.sample(&mut r);
        }
    }
    Ok(x.replace_values(v))
}

fn from_rows(rows: Vec<[f64; 3]>, labels: Option<Vec<usize>>) -> Result<DataMatrix> {
    let m = DMatrix::from_fn(rows.len(), 3, |i, j| rows[i][j]);
    match labels {
        Some(l) => DataMatrix::with_labels(m, l),
        None => DataMatrix::new(m),
    }
}

/// Uniform on `[-3,3]^2 x {0}`.
pub fn gen_plane(n: usize, seed: u64) -> Result<DataMatrix> {
    let mut r = rng(seed, CLEAN_STREAM);
    let rows = (0..n).map(|_| [r.random_range(-3.0..=3.0), r.random_range(-3.0..=3.0), 0.0]).collect();
    from_rows(rows, None)
}

fn torus_point(r1: f64, r2: f64, theta: f64, phi: f64) -> [f64; 3] {
    let w = r1 + r2 * theta.cos();
    [w * phi.cos(), w * phi.sin(), r2 * theta.sin()]
}

/// Angles uniform on `[0, 2pi)^2`.
pub fn gen_torus(n: usize, r1: f64, r2: f64, seed: u64) -> Result<DataMatrix> {
    check_torus(r1, r2)?;
    let mut r = rng(seed, CLEAN_STREAM);
    let rows = (0..n)
        .map(|_| {
            let theta = r.random_range(0.0..TAU);
            let phi = r.random_range(0.0..TAU);
            torus_point(r1, r2, theta, phi)
        })
        .collect();
    from_rows(rows, None)
}

fn check_torus(r1: f64, r2: f64) -> Result<()> {
    if !(r2 > 0.0 && r2 < r1) {
        return Err(SrcaError::InvalidArgument(format!(
            "torus radii need 0 < R2 < R1, got R1={r1}, R2={r2}"
        )));
    }
    Ok(())
}

/// `(sin t cos p, sin t sin p, cos t)` with both angles uniform on
/// `[0, 2pi)`; uniform in the angles, not in area.
pub fn gen_sphere(n: usize, seed: u64) -> Result<DataMatrix> {
    let mut r = rng(seed, CLEAN_STREAM);
    let rows = (0..n)
        .map(|_| {
            let t: f64 = r.random_range(0.0..TAU);
            let p: f64 = r.random_range(0.0..TAU);
            [t.sin() * p.cos(), t.sin() * p.sin(), t.cos()]
        })
        .collect();
    from_rows(rows, None)
}

/// The three rigid motions `x -> R x + tau` applied to the torus batches.
pub fn gem_motions() -> [(Matrix3<f64>, Vector3<f64>); 3] {
    let (c2, s2) = (FRAC_PI_2.cos(), FRAC_PI_2.sin());
    let (c4, s4) = (FRAC_PI_4.cos(), FRAC_PI_4.sin());
    [
        (
            Matrix3::new(1.0, 0.0, 0.0, 0.0, c2, -s2, 0.0, s2, c2),
            Vector3::new(0.0, 0.0, 3.0),
        ),
        (
            Matrix3::new(c4, 0.0, s4, 0.0, 1.0, 0.0, -s4, 0.0, c4),
            Vector3::new(0.0, 3.0, 3.0),
        ),
        (Matrix3::identity(), Vector3::new(3.0, 3.0, 3.0)),
    ]
}

/// Batch sizes differing by at most one; the first batches take the
/// remainder.
pub fn balanced_sizes(n: usize, parts: usize) -> Vec<usize> {
    (0..parts).map(|k| n / parts + usize::from(k < n % parts)).collect()
}

/// Three rigidly moved tori, shifted by `-(1,1,1)` and halved. Labels are
/// the batch ids.
pub fn gen_gem(n: usize, seed: u64) -> Result<DataMatrix> {
    gem_with(n, TORUS_R1, TORUS_R2, seed)
}

fn gem_with(n: usize, r1: f64, r2: f64, seed: u64) -> Result<DataMatrix> {
    check_torus(r1, r2)?;
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for (b, ((rot, tau), size)) in gem_motions().iter().zip(balanced_sizes(n, 3)).enumerate() {
        let mut r = rng(seed, 10 + b as u64);
        for _ in 0..size {
            let theta = r.random_range(0.0..TAU);
            let phi = r.random_range(0.0..TAU);
            let p = Vector3::from(torus_point(r1, r2, theta, phi));
            let q = (rot * p + tau).map(|v| (v - 1.0) * 0.5);
            rows.push([q[0], q[1], q[2]]);
            labels.push(b);
        }
    }
    from_rows(rows, Some(labels))
}

/// Two unit circles that meet only at `(1,0,0)`: loop 0 is
/// `(cos t, sin t, 0)` in the xy-plane and loop 1 is
/// `(1 + cos s, 0, 1 + sin s)` in the xz-plane. `n` is the total count;
/// loop 0 takes the extra point when `n` is odd.
pub fn gen_orthogonal_loops(n: usize, noise_var: f64, seed: u64) -> Result<DataMatrix> {
    if n < 2 {
        return Err(SrcaError::InvalidArgument("orthogonal loops need n >= 2".into()));
    }
    let sizes = balanced_sizes(n, 2);
    let mut r = rng(seed, CLEAN_STREAM);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..sizes[0] {
        let t: f64 = r.random_range(0.0..TAU);
        rows.push([t.cos(), t.sin(), 0.0]);
        labels.push(0);
    }
    for _ in 0..sizes[1] {
        let s: f64 = r.random_range(0.0..TAU);
        rows.push([1.0 + s.cos(), 0.0, 1.0 + s.sin()]);
        labels.push(1);
    }
    add_noise(from_rows(rows, Some(labels))?, noise_var, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plane_bounds_and_mean() {
        let x = gen_plane(10_000, 1).unwrap();
        let v = x.values();
        assert!(v.column(2).iter().all(|z| *z == 0.0));
        assert!(v.iter().all(|a| (-3.0..=3.0).contains(a)));
        let m = x.column_means();
        let bound = 4.0 / (10_000f64).sqrt();
        assert!(m[0].abs() < bound && m[1].abs() < bound);
    }

    #[test]
    fn torus_equation() {
        let x = gen_torus(500, TORUS_R1, TORUS_R2, 2).unwrap();
        for row in x.values().row_iter() {
            let rho = (row[0].powi(2) + row[1].powi(2)).sqrt();
            assert!(((rho - TORUS_R1).powi(2) + row[2].powi(2) - TORUS_R2.powi(2)).abs() < 1e-12);
            assert!(row[2].abs() <= TORUS_R2);
        }
        assert_eq!(torus_point(TORUS_R1, TORUS_R2, 0.0, 0.0), [TORUS_R1 + TORUS_R2, 0.0, 0.0]);
        assert!(gen_torus(5, 0.3, 0.3, 0).is_err());
    }

    #[test]
    fn sphere_rows_are_unit() {
        let x = gen_sphere(500, 3).unwrap();
        for row in x.values().row_iter() {
            assert!((row.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gem_batches_satisfy_moved_torus() {
        let x = gen_gem(301, 4).unwrap();
        let labels = x.labels().unwrap();
        let sizes: Vec<usize> = (0..3).map(|b| labels.iter().filter(|&&l| l == b).count()).collect();
        assert_eq!(sizes, vec![101, 100, 100]);
        let motions = gem_motions();
        assert_eq!(motions[2].0, Matrix3::identity());
        for (i, row) in x.values().row_iter().enumerate() {
            let (rot, tau) = &motions[labels[i]];
            let pre = Vector3::new(row[0], row[1], row[2]).map(|v| 2.0 * v + 1.0);
            let p = rot.transpose() * (pre - tau);
            let rho = (p[0].powi(2) + p[1].powi(2)).sqrt();
            assert!(((rho - TORUS_R1).powi(2) + p[2].powi(2) - TORUS_R2.powi(2)).abs() < 1e-10);
        }
    }

    #[test]
    fn loops_lie_on_their_circles() {
        let x = gen_orthogonal_loops(400, 0.0, 5).unwrap();
        let labels = x.labels().unwrap();
        for (i, r) in x.values().row_iter().enumerate() {
            if labels[i] == 0 {
                assert!((r[0].powi(2) + r[1].powi(2) - 1.0).abs() < 1e-12 && r[2] == 0.0);
            } else {
                assert!(((r[0] - 1.0).powi(2) + (r[2] - 1.0).powi(2) - 1.0).abs() < 1e-12 && r[1] == 0.0);
            }
        }
        assert_eq!(labels.iter().filter(|&&l| l == 0).count(), 200);
    }

    #[test]
    fn noise_variance_and_determinism() {
        let spec = GeneratorSpec::new(GeneratorKind::Sphere, 2000, 9).with_noise(0.04);
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a, b);
        let clean = gen_sphere(2000, 9).unwrap();
        let diff = a.values() - clean.values();
        let m = diff.len() as f64;
        let mean = diff.sum() / m;
        let var = diff.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
        // sample variance of m normals has sd var*sqrt(2/(m-1))
        assert!((var - 0.04).abs() < 3.0 * 0.04 * (2.0 / (m - 1.0)).sqrt());
    }

    #[test]
    fn kinds_parse() {
        for k in GeneratorKind::ALL {
            assert_eq!(k.to_string().parse::<GeneratorKind>().unwrap(), k);
        }
        assert!("cube".parse::<GeneratorKind>().is_err());
    }
}
