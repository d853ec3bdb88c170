//! Fitting: center, rotate, choose a coordinate subset and fit a sphere in
//! it by minimizing the geometric loss.
//!
//! The radius is always eliminated with its closed form, so the descent
//! runs on the center only. Steps start from a Barzilai-Borwein estimate
//! and are halved until the Armijo condition holds, which keeps every
//! accepted iterate monotone.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{Result, SrcaError};
use crate::geometry::{fit_flat, EvalOut, Evaluator, IndexSet, Radius, SphereParams, WeightMatrix};
use crate::model::{RelaxationVector, SphereModel, Surface};
use crate::rotation::{apply_rotation, get_rotation, RotationMethod};

/// Above this many subsets the automatic strategy switches to l1.
pub const EXHAUSTIVE_LIMIT: u128 = 500;

const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Exhaustive,
    L1Relaxed,
    Auto,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Exhaustive => "exhaustive",
            Strategy::L1Relaxed => "l1_relaxed",
            Strategy::Auto => "auto",
        })
    }
}

impl FromStr for Strategy {
    type Err = SrcaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "exhaustive" | "l0" => Ok(Strategy::Exhaustive),
            "l1_relaxed" | "l1" | "l1-relaxed" => Ok(Strategy::L1Relaxed),
            "auto" => Ok(Strategy::Auto),
            _ => Err(SrcaError::InvalidArgument(format!(
                "unknown strategy {s:?}; expected exhaustive, l1_relaxed or auto"
            ))),
        }
    }
}

/// Weight matrix as given in a config: the identity or an explicit matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WeightRepr", into = "WeightRepr")]
pub enum WeightSpec {
    Identity,
    Matrix(Vec<Vec<f64>>),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum WeightRepr {
    Name(String),
    Matrix(Vec<Vec<f64>>),
}

impl TryFrom<WeightRepr> for WeightSpec {
    type Error = String;

    fn try_from(r: WeightRepr) -> std::result::Result<Self, String> {
        match r {
            WeightRepr::Name(s) if s == "identity" => Ok(WeightSpec::Identity),
            WeightRepr::Name(s) => Err(format!("unknown weight {s:?}")),
            WeightRepr::Matrix(m) => Ok(WeightSpec::Matrix(m)),
        }
    }
}

impl From<WeightSpec> for WeightRepr {
    fn from(w: WeightSpec) -> Self {
        match w {
            WeightSpec::Identity => WeightRepr::Name("identity".into()),
            WeightSpec::Matrix(m) => WeightRepr::Matrix(m),
        }
    }
}

impl WeightSpec {
    pub fn resolve(&self, d: usize) -> Result<WeightMatrix> {
        match self {
            WeightSpec::Identity => Ok(WeightMatrix::identity(d)),
            WeightSpec::Matrix(rows) => {
                if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                    return Err(SrcaError::Dimension(format!("weight matrix must be {d}x{d}")));
                }
                WeightMatrix::new(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
            }
        }
    }
}

/// Optional bounds on the parameters: `|c_j| <= center_abs_max` and
/// `radius_min <= r <= radius_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamBox {
    pub center_abs_max: f64,
    pub radius_min: f64,
    pub radius_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub retained_dim: usize,
    pub rotation: RotationMethod,
    pub strategy: Strategy,
    pub weight: WeightSpec,
    pub penalty_lambda: f64,
    /// First trial step of each descent run, on the per-row loss.
    pub step_size: f64,
    pub max_outer_iters: usize,
    pub max_gd_iters: usize,
    pub tol: f64,
    pub seed: u64,
    /// Number of center initializations per subset.
    pub restarts: usize,
    pub param_box: Option<ParamBox>,
    /// Hard cap on the number of subsets the exhaustive search will visit.
    pub max_subsets: u64,
}

impl FitConfig {
    pub fn new(retained_dim: usize) -> Self {
        Self {
            retained_dim,
            rotation: RotationMethod::Pca,
            strategy: Strategy::Auto,
            weight: WeightSpec::Identity,
            penalty_lambda: 0.0,
            step_size: 0.5,
            max_outer_iters: 200,
            max_gd_iters: 500,
            tol: 1e-8,
            seed: 0,
            restarts: 1,
            param_box: None,
            max_subsets: 20_000,
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        let bad = |m: String| Err(SrcaError::InvalidArgument(m));
        if self.retained_dim == 0 {
            return bad("retained dimension must be at least 1".into());
        }
        if self.retained_dim + 1 > d {
            return bad(format!(
                "retained dimension {} needs at least {} columns, data has {d}",
                self.retained_dim,
                self.retained_dim + 1
            ));
        }
        if !(self.tol > 0.0) || !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return bad("tol and step_size must be positive".into());
        }
        if !(self.penalty_lambda >= 0.0) || !self.penalty_lambda.is_finite() {
            return bad("penalty lambda must be finite and nonnegative".into());
        }
        if self.restarts == 0 || self.max_outer_iters == 0 || self.max_gd_iters == 0 {
            return bad("restarts and iteration limits must be at least 1".into());
        }
        if let Some(b) = self.param_box {
            if !(b.center_abs_max > 0.0) || !(b.radius_min >= 0.0) || !(b.radius_max > b.radius_min) {
                return bad("invalid parameter box".into());
            }
        }
        Ok(())
    }
}

/// Result of fitting a sphere for one index set.
#[derive(Debug, Clone)]
pub struct FixedSubsetFit {
    pub params: SphereParams,
    /// Sum of squared point-to-sphere distances.
    pub loss: f64,
    /// Per-row objective (loss plus any penalty) of the returned params.
    pub objective: f64,
    pub converged: bool,
    /// Per-row objective after every accepted step of the winning start.
    pub history: Vec<f64>,
}

/// Exhaustive search iff there are at most 500 candidate subsets.
pub fn select_strategy(d: usize, d_prime: usize) -> Strategy {
    if binomial(d, d_prime + 1) <= EXHAUSTIVE_LIMIT {
        Strategy::Exhaustive
    } else {
        Strategy::L1Relaxed
    }
}

/// `C(n, k)`, saturating.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k == 0 || k > n {
        return out;
    }
    let mut cur: Vec<usize> = (0..k).collect();
    loop {
        out.push(cur.clone());
        let mut i = k;
        while i > 0 && cur[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        cur[i - 1] += 1;
        for j in i..k {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

/// Fits by the configured strategy; a positive penalty selects the sparse
/// variant.
pub fn fit(x: &DataMatrix, cfg: &FitConfig) -> Result<SphereModel> {
    cfg.validate(x.cols())?;
    if cfg.penalty_lambda > 0.0 {
        return fit_sparse(x, cfg);
    }
    match resolve_strategy(x.cols(), cfg) {
        Strategy::L1Relaxed => fit_l1(x, cfg),
        _ => fit_exhaustive(x, cfg),
    }
}

/// Strategy `fit` will use for `d` columns once `Auto` is resolved.
pub fn resolve_strategy(d: usize, cfg: &FitConfig) -> Strategy {
    match cfg.strategy {
        Strategy::Auto => select_strategy(d, cfg.retained_dim),
        s => s,
    }
}

struct Prepared {
    mean: DVector<f64>,
    rotation: crate::rotation::OrthogonalMatrix,
    x_rot: DataMatrix,
    weight: WeightMatrix,
}

fn prepare(x: &DataMatrix, cfg: &FitConfig) -> Result<Prepared> {
    cfg.validate(x.cols())?;
    if x.rows() == 0 {
        return Err(SrcaError::Empty("no rows to fit".into()));
    }
    let mean = x.column_means();
    let mut centered = x.values().clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let centered = x.replace_values(centered);
    let rotation = get_rotation(&centered, cfg.rotation)?;
    let x_rot = apply_rotation(&centered, &rotation)?;
    let weight = cfg.weight.resolve(x.cols())?;
    Ok(Prepared { mean, rotation, x_rot, weight })
}

struct Candidate {
    index_set: IndexSet,
    surface: Surface,
    loss: f64,
    objective: f64,
    converged: bool,
}

/// Sphere fit for one subset, replaced by the flat limit when that is
/// strictly better (identity weight, no penalty).
fn fit_candidate(x_rot: &DataMatrix, idx: IndexSet, w: &WeightMatrix, cfg: &FitConfig) -> Result<Candidate> {
    let sphere = fit_fixed_subset(x_rot, &idx, w, cfg);
    let flat = if w.is_identity() && cfg.penalty_lambda == 0.0 {
        Some(fit_flat(x_rot, &idx)?)
    } else {
        None
    };
    let n = x_rot.rows() as f64;
    match (sphere, flat) {
        (Ok(s), Some((f, fl))) if fl < s.loss => Ok(Candidate {
            index_set: idx,
            surface: Surface::Flat(f),
            loss: fl,
            objective: fl / n,
            converged: true,
        }),
        (Ok(s), _) => Ok(Candidate {
            index_set: idx,
            surface: Surface::Sphere(s.params),
            loss: s.loss,
            objective: s.objective,
            converged: s.converged,
        }),
        (Err(_), Some((f, fl))) => Ok(Candidate {
            index_set: idx,
            surface: Surface::Flat(f),
            loss: fl,
            objective: fl / n,
            converged: true,
        }),
        (Err(e), None) => Err(e),
    }
}

fn better(a: f64, b: f64) -> bool {
    a < b - 1e-12 * (1.0 + b.abs())
}

fn into_model(p: Prepared, c: Candidate, x: &DataMatrix, cfg: &FitConfig, relaxation: Option<RelaxationVector>) -> SphereModel {
    SphereModel {
        mean: p.mean,
        rotation: p.rotation,
        index_set: c.index_set,
        surface: c.surface,
        weight: p.weight,
        final_loss: c.loss,
        objective: c.objective,
        converged: c.converged,
        n_train: x.rows(),
        config: cfg.clone(),
        relaxation,
    }
}

/// Tries every subset of size `d' + 1` and keeps the lowest loss; ties go
/// to the lexicographically smallest subset.
pub fn fit_exhaustive(x: &DataMatrix, cfg: &FitConfig) -> Result<SphereModel> {
    let p = prepare(x, cfg)?;
    let d = x.cols();
    let k = cfg.retained_dim + 1;
    let count = binomial(d, k);
    if count > cfg.max_subsets as u128 {
        return Err(SrcaError::TooManySubsets { count, cap: cfg.max_subsets as u128 });
    }
    let subsets = combinations(d, k);
    let results: Vec<Result<Candidate>> = subsets
        .into_par_iter()
        .map(|s| fit_candidate(&p.x_rot, IndexSet::new(s, d)?, &p.weight, cfg))
        .collect();

    let mut best: Option<Candidate> = None;
    let mut first_err = None;
    for r in results {
        match r {
            Ok(c) => {
                if best.as_ref().is_none_or(|b| better(c.loss, b.loss)) {
                    best = Some(c);
                }
            }
            Err(e) => {
                log::debug!("subset failed: {e}");
                first_err.get_or_insert(e);
            }
        }
    }
    match best {
        Some(c) => Ok(into_model(p, c, x, cfg, None)),
        None => Err(first_err.unwrap_or_else(|| SrcaError::Numerical("no subset could be fitted".into()))),
    }
}

/// l1-relaxed subset search followed by a refit on the selected subset.
pub fn fit_l1(x: &DataMatrix, cfg: &FitConfig) -> Result<SphereModel> {
    let mut c = cfg.clone();
    c.penalty_lambda = 0.0;
    fit_relaxed(x, &c)
}

/// As [`fit_l1`] with the penalty `lambda * sum_j v_j |x_ij - c_j|` added
/// to the per-row objective. `lambda = 0` gives exactly [`fit_l1`].
pub fn fit_sparse(x: &DataMatrix, cfg: &FitConfig) -> Result<SphereModel> {
    fit_relaxed(x, cfg)
}

fn fit_relaxed(x: &DataMatrix, cfg: &FitConfig) -> Result<SphereModel> {
    let p = prepare(x, cfg)?;
    let d = x.cols();
    let k = cfg.retained_dim + 1;
    let lambda = cfg.penalty_lambda;
    let ev = Evaluator::new(p.x_rot.values(), &p.weight, vec![0.0; d]);
    let n = ev.n() as f64;
    let free = vec![true; d];

    let mut v = vec![k as f64 / d as f64; d];
    let mut c = DVector::zeros(d);
    let obj = |c: &DVector<f64>, v: &[f64]| {
        let o = ev.eval(c, radius_rule(cfg), Some(v), lambda, false);
        (o.loss + o.penalty) / n
    };
    let mut f = obj(&c, &v);
    let inner = cfg.max_gd_iters.min(50);
    for _ in 0..cfg.max_outer_iters {
        let prev = f;
        let run = descend(&ev, c, &free, Some(&v), cfg, inner);
        c = run.c;
        let (nv, fv) = descend_v(&ev, &c, v, k as f64, cfg, inner);
        v = nv;
        f = fv;
        if (prev - f).abs() < cfg.tol * (1.0 + f) {
            break;
        }
    }

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| v[b].abs().partial_cmp(&v[a].abs()).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    let mut members: Vec<usize> = order[..k].to_vec();
    members.sort_unstable();
    let idx = IndexSet::new(members, d)?;
    let cand = fit_candidate(&p.x_rot, idx, &p.weight, cfg)?;
    Ok(into_model(p, cand, x, cfg, Some(RelaxationVector { values: v, budget: k })))
}

fn radius_rule(cfg: &FitConfig) -> Radius {
    match cfg.param_box {
        Some(b) => Radius::Clamped(b.radius_min, b.radius_max),
        None => Radius::Optimal,
    }
}

/// Fits `(c, r)` for a fixed subset of rotated, centered data. With a
/// diagonal weight the complement coordinates of the center are set to the
/// column means and only the subset coordinates are optimized.
pub fn fit_fixed_subset(x_rot: &DataMatrix, idx: &IndexSet, w: &WeightMatrix, cfg: &FitConfig) -> Result<FixedSubsetFit> {
    let d = x_rot.cols();
    if idx.dim() != d || w.dim() != d {
        return Err(SrcaError::Dimension(format!(
            "data has {d} columns, index set {} and weight {}",
            idx.dim(),
            w.dim()
        )));
    }
    if x_rot.rows() == 0 {
        return Err(SrcaError::Empty("no rows to fit".into()));
    }
    let ev = Evaluator::new(x_rot.values(), w, idx.mask());
    let means = x_rot.column_means();
    let free: Vec<bool> = (0..d).map(|j| !w.is_diagonal() || idx.contains(j)).collect();
    let base: DVector<f64> = DVector::from_fn(d, |j, _| if free[j] { 0.0 } else { means[j] });

    let mut starts = vec![base.clone()];
    if cfg.restarts > 1 {
        if let Some(k) = kasa_center(x_rot, idx) {
            let mut s = base.clone();
            for &j in idx.members() {
                s[j] = k[j];
            }
            starts.push(s);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(subset_seed(cfg.seed, idx));
        let sd: Vec<f64> = (0..d)
            .map(|j| {
                let col = x_rot.values().column(j);
                (col.iter().map(|v| (v - means[j]).powi(2)).sum::<f64>() / x_rot.rows() as f64).sqrt()
            })
            .collect();
        while starts.len() < cfg.restarts {
            let mut s = base.clone();
            for j in 0..d {
                if free[j] {
                    s[j] = means[j] + sd[j] * rng.sample::<f64, _>(StandardNormal);
                }
            }
            starts.push(s);
        }
    }

    let mut best: Option<Descent> = None;
    for s in starts {
        let run = minimize(&ev, clamp_center(s, cfg), &free, cfg);
        if best.as_ref().is_none_or(|b| better(run.objective, b.objective)) {
            best = Some(run);
        }
    }
    let best = best.expect("at least one start");
    let out = ev.eval(&best.c, radius_rule(cfg), None, cfg.penalty_lambda, false);
    if !(out.radius > 0.0) {
        return Err(SrcaError::Singular(format!(
            "all points coincide with the center in {idx}; radius is 0"
        )));
    }
    if !out.loss.is_finite() {
        return Err(SrcaError::Numerical("loss is not finite".into()));
    }
    Ok(FixedSubsetFit {
        params: SphereParams::new(best.c, out.radius)?,
        loss: out.loss,
        objective: best.objective,
        converged: best.converged,
        history: best.history,
    })
}

/// Seed mixing the config seed with the subset members, so a subset gets
/// the same starts whichever search reaches it.
fn subset_seed(seed: u64, idx: &IndexSet) -> u64 {
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    for &j in idx.members() {
        h = splitmix(h ^ (j as u64 + 1));
    }
    splitmix(h ^ idx.dim() as u64)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Algebraic circle fit `|x|^2 = 2 a.x + b` in the subset coordinates.
fn kasa_center(x: &DataMatrix, idx: &IndexSet) -> Option<DVector<f64>> {
    let m = idx.len();
    let n = x.rows();
    if n < m + 1 {
        return None;
    }
    let a = DMatrix::from_fn(n, m + 1, |i, k| if k < m { 2.0 * x.values()[(i, idx.members()[k])] } else { 1.0 });
    let b = DVector::from_fn(n, |i, _| idx.members().iter().map(|&j| x.values()[(i, j)].powi(2)).sum());
    let sol = a.svd(true, true).solve(&b, 1e-12).ok()?;
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut c = DVector::zeros(x.cols());
    for (k, &j) in idx.members().iter().enumerate() {
        c[j] = sol[k];
    }
    Some(c)
}

fn clamp_center(mut c: DVector<f64>, cfg: &FitConfig) -> DVector<f64> {
    if let Some(b) = cfg.param_box {
        c.apply(|v| *v = v.clamp(-b.center_abs_max, b.center_abs_max));
    }
    c
}

struct Descent {
    c: DVector<f64>,
    objective: f64,
    converged: bool,
    history: Vec<f64>,
}

/// Outer loop: repeated descent runs until the objective stops changing.
fn minimize(ev: &Evaluator, c0: DVector<f64>, free: &[bool], cfg: &FitConfig) -> Descent {
    let mut c = c0;
    let mut history = Vec::new();
    let mut prev = f64::INFINITY;
    let mut converged = false;
    for _ in 0..cfg.max_outer_iters {
        let run = descend(ev, c, free, None, cfg, cfg.max_gd_iters);
        c = run.c;
        history.extend(run.history);
        if run.converged || (prev - run.objective).abs() < cfg.tol * (1.0 + run.objective) {
            converged = true;
            prev = run.objective;
            break;
        }
        prev = run.objective;
    }
    Descent { c, objective: prev, converged, history }
}

fn evaluate(ev: &Evaluator, c: &DVector<f64>, v: Option<&[f64]>, free: &[bool], cfg: &FitConfig) -> (f64, DVector<f64>, EvalOut) {
    let n = ev.n() as f64;
    let out = ev.eval(c, radius_rule(cfg), v, cfg.penalty_lambda, true);
    let f = (out.loss + out.penalty) / n;
    let g = DVector::from_fn(c.len(), |j, _| if free[j] { out.grad_c[j] / n } else { 0.0 });
    (f, g, out)
}

/// Gradient descent on the center with Barzilai-Borwein trial steps and
/// Armijo backtracking. `converged` means the gradient became negligible.
fn descend(ev: &Evaluator, c0: DVector<f64>, free: &[bool], v: Option<&[f64]>, cfg: &FitConfig, max_iters: usize) -> Descent {
    let mut c = c0;
    let (mut f, mut g, _) = evaluate(ev, &c, v, free, cfg);
    let mut history = vec![f];
    let gtol = 1e-2 * cfg.tol * (1.0 + f.sqrt());
    let mut alpha = cfg.step_size;
    let mut last: Option<(DVector<f64>, DVector<f64>)> = None;
    let mut converged = false;

    for _ in 0..max_iters {
        if g.norm() <= gtol {
            converged = true;
            break;
        }
        if let Some((s, y)) = &last {
            let sy = s.dot(y);
            alpha = if sy > 0.0 { (s.norm_squared() / sy).clamp(1e-10, 1e10) } else { cfg.step_size };
        }
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let trial = clamp_center(&c - &g * alpha, cfg);
            let step = &trial - &c;
            if step.norm() == 0.0 {
                break;
            }
            let (ft, gt, _) = evaluate(ev, &trial, v, free, cfg);
            if ft.is_finite() && ft <= f + ARMIJO * g.dot(&step) {
                accepted = Some((trial, step, ft, gt));
                break;
            }
            alpha *= 0.5;
        }
        let Some((trial, step, ft, gt)) = accepted else {
            break;
        };
        let progress = f - ft;
        last = Some((step, &gt - &g));
        c = trial;
        f = ft;
        g = gt;
        history.push(f);
        if progress <= 1e-16 * (1.0 + f.abs()) {
            break;
        }
    }
    Descent { c, objective: f, converged, history }
}

/// Projected gradient on the relaxation vector with the center fixed.
fn descend_v(ev: &Evaluator, c: &DVector<f64>, v0: Vec<f64>, budget: f64, cfg: &FitConfig, max_iters: usize) -> (Vec<f64>, f64) {
    let n = ev.n() as f64;
    let eval = |v: &[f64]| {
        let o = ev.eval(c, radius_rule(cfg), Some(v), cfg.penalty_lambda, true);
        ((o.loss + o.penalty) / n, o.grad_v / n)
    };
    let mut v = v0;
    let (mut f, mut g) = eval(&v);
    let gmax = g.amax();
    let mut alpha = if gmax > 0.0 { 0.1 / gmax } else { 1.0 };
    let mut last: Option<(DVector<f64>, DVector<f64>)> = None;
    for _ in 0..max_iters {
        if let Some((s, y)) = &last {
            let sy = s.dot(y);
            if sy > 0.0 {
                alpha = (s.norm_squared() / sy).clamp(1e-10, 1e10);
            }
        }
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let raw: Vec<f64> = v.iter().zip(g.iter()).map(|(a, b)| a - alpha * b).collect();
            let trial = project_capped_simplex(&raw, budget);
            let step = DVector::from_fn(v.len(), |j, _| trial[j] - v[j]);
            if step.norm() == 0.0 {
                break;
            }
            let (ft, gt) = eval(&trial);
            if ft <= f + ARMIJO * g.dot(&step) {
                accepted = Some((trial, step, ft, gt));
                break;
            }
            alpha *= 0.5;
        }
        let Some((trial, step, ft, gt)) = accepted else {
            break;
        };
        let progress = f - ft;
        last = Some((step, &gt - &g));
        v = trial;
        f = ft;
        g = gt;
        if progress <= cfg.tol * 1e-3 * (1.0 + f.abs()) {
            break;
        }
    }
    (v, f)
}

/// Euclidean projection onto `{v in [0,1]^d : sum v <= budget}`.
pub fn project_capped_simplex(v: &[f64], budget: f64) -> Vec<f64> {
    let clip = |t: f64| -> Vec<f64> { v.iter().map(|a| (a - t).clamp(0.0, 1.0)).collect() };
    let base = clip(0.0);
    if base.iter().sum::<f64>() <= budget {
        return base;
    }
    let (mut lo, mut hi) = (0.0, v.iter().fold(0.0f64, |m, a| m.max(*a)));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if clip(mid).iter().sum::<f64>() > budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    clip(hi)
}

/// Applies a fitted model to new rows.
pub fn transform(model: &SphereModel, x: &DataMatrix) -> Result<DataMatrix> {
    model.transform(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::loss;

    fn circle_rows(n: usize, center: &[f64], r: f64, plane: (usize, usize), d: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|k| {
                let t = k as f64 * std::f64::consts::TAU / n as f64 + 0.3;
                let mut row = center.to_vec();
                row.resize(d, 0.0);
                row[plane.0] += r * t.cos();
                row[plane.1] += r * t.sin();
                row
            })
            .collect()
    }

    fn centered(x: &DataMatrix) -> DataMatrix {
        let m = x.column_means();
        let mut v = x.values().clone();
        for mut row in v.row_iter_mut() {
            row -= m.transpose();
        }
        DataMatrix::new(v).unwrap()
    }

    fn identity_cfg(d_prime: usize) -> FitConfig {
        let mut cfg = FitConfig::new(d_prime);
        cfg.rotation = RotationMethod::Identity;
        cfg.strategy = Strategy::Exhaustive;
        cfg
    }

    #[test]
    fn strategy_threshold() {
        assert_eq!(select_strategy(4, 2), Strategy::Exhaustive);
        assert_eq!(select_strategy(40, 2), Strategy::L1Relaxed);
        assert_eq!(select_strategy(12, 3), Strategy::Exhaustive);
        assert_eq!(binomial(12, 4), 495);
        assert_eq!(binomial(40, 3), 9880);
    }

    #[test]
    fn combinations_are_lexicographic() {
        let c = combinations(4, 2);
        assert_eq!(c, vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]);
        assert_eq!(combinations(5, 3).len() as u128, binomial(5, 3));
    }

    #[test]
    fn fixed_subset_recovers_coordinate_circle() {
        // off-center samples so the centered frame does not put c at 0
        let rows: Vec<Vec<f64>> = (0..12)
            .map(|k| {
                let t = 0.2 + 0.4 * k as f64;
                vec![1.5 + 2.0 * t.cos(), 0.7, -1.0 + 2.0 * t.sin()]
            })
            .collect();
        let x = DataMatrix::from_rows(&rows).unwrap();
        let xc = centered(&x);
        let mean = x.column_means();
        let idx = IndexSet::from_one_based(&[1, 3], 3).unwrap();
        let fit = fit_fixed_subset(&xc, &idx, &WeightMatrix::identity(3), &identity_cfg(1)).unwrap();
        assert!(fit.loss < 1e-10, "loss {}", fit.loss);
        assert!((fit.params.radius - 2.0).abs() < 1e-6);
        let c = &fit.params.center + &mean;
        assert!((c[0] - 1.5).abs() < 1e-6 && (c[1] - 0.7).abs() < 1e-9 && (c[2] + 1.0).abs() < 1e-6);
        assert!(fit.converged);
    }

    #[test]
    fn objective_history_is_monotone() {
        let x = DataMatrix::from_rows(&[vec![1.0, 2.0, -0.5]]).unwrap();
        let fit = fit_fixed_subset(&x, &IndexSet::all(3), &WeightMatrix::identity(3), &identity_cfg(2)).unwrap();
        assert!(fit.loss < 1e-20);
        assert!((fit.params.radius - x.row(0).norm()).abs() < 1e-12);
        let centered_single = DataMatrix::from_rows(&[vec![0.0, 0.0, 0.0]]).unwrap();
        assert!(matches!(
            fit_fixed_subset(&centered_single, &IndexSet::all(3), &WeightMatrix::identity(3), &identity_cfg(2)),
            Err(SrcaError::Singular(_))
        ));

        let rows: Vec<Vec<f64>> = (0..30)
            .map(|k| {
                let t = k as f64 * 0.37;
                vec![t.cos() + 0.1 * (k % 3) as f64, t.sin() * 1.3, 0.05 * k as f64]
            })
            .collect();
        let xc = centered(&DataMatrix::from_rows(&rows).unwrap());
        let fit = fit_fixed_subset(&xc, &IndexSet::all(3), &WeightMatrix::identity(3), &identity_cfg(2)).unwrap();
        for w in fit.history.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn fixed_subset_beats_random_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x = DataMatrix::new(DMatrix::from_fn(20, 3, |_, _| rng.sample(StandardNormal))).unwrap();
        let xc = centered(&x);
        let idx = IndexSet::from_one_based(&[1, 2], 3).unwrap();
        let w = WeightMatrix::identity(3);
        let mut cfg = identity_cfg(1);
        cfg.restarts = 5;
        let fit = fit_fixed_subset(&xc, &idx, &w, &cfg).unwrap();
        for _ in 0..1000 {
            let c = DVector::from_fn(3, |_, _| rng.random_range(-3.0..3.0));
            let r = rng.random_range(0.01..5.0);
            let l = loss(&xc, &SphereParams::new(c, r).unwrap(), &idx, &w).unwrap();
            assert!(fit.loss <= l + 1e-9);
        }
    }

    #[test]
    fn exhaustive_picks_true_subset_and_min_loss() {
        let rows = circle_rows(16, &[0.5, -0.2, 1.0, 0.3], 1.5, (0, 2), 4);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rows: Vec<Vec<f64>> = rows
            .into_iter()
            .map(|mut r| {
                r[1] += 0.01 * rng.sample::<f64, _>(StandardNormal);
                r[3] += 0.01 * rng.sample::<f64, _>(StandardNormal);
                r
            })
            .collect();
        let x = DataMatrix::from_rows(&rows).unwrap();
        let cfg = identity_cfg(1);
        let model = fit_exhaustive(&x, &cfg).unwrap();
        assert_eq!(model.index_set.one_based(), vec![1, 3]);

        // independent brute-force loop over subsets
        let xc = centered(&x);
        let w = WeightMatrix::identity(4);
        let mut min = f64::INFINITY;
        for s in combinations(4, 2) {
            let idx = IndexSet::new(s, 4).unwrap();
            let f = fit_fixed_subset(&xc, &idx, &w, &cfg).unwrap();
            let flat = fit_flat(&xc, &idx).unwrap().1;
            min = min.min(f.loss).min(flat);
        }
        assert!((model.final_loss - min).abs() <= 1e-9 * (1.0 + min));
    }

    #[test]
    fn exhaustive_is_permutation_equivariant() {
        let rows = circle_rows(14, &[0.0, 1.0, 2.0], 1.0, (0, 1), 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rows: Vec<Vec<f64>> = rows.into_iter().map(|mut r| {
            r[2] += 0.05 * rng.sample::<f64, _>(StandardNormal);
            r
        }).collect();
        let x = DataMatrix::from_rows(&rows).unwrap();
        let perm = [2usize, 0, 1];
        let xp = x.select_columns(&perm);
        let cfg = identity_cfg(1);
        let a = fit_exhaustive(&x, &cfg).unwrap();
        let b = fit_exhaustive(&xp, &cfg).unwrap();
        let mapped: Vec<usize> = {
            let mut m: Vec<usize> = b.index_set.members().iter().map(|&j| perm[j]).collect();
            m.sort_unstable();
            m
        };
        assert_eq!(mapped, a.index_set.members());
        assert!((a.final_loss - b.final_loss).abs() < 1e-9);
    }

    #[test]
    fn too_many_subsets_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = DataMatrix::new(DMatrix::from_fn(10, 12, |_, _| rng.sample(StandardNormal))).unwrap();
        let mut cfg = identity_cfg(3);
        cfg.max_subsets = 100;
        assert!(matches!(fit_exhaustive(&x, &cfg), Err(SrcaError::TooManySubsets { count: 495, .. })));
    }

    #[test]
    fn capped_simplex_projection() {
        let p = project_capped_simplex(&[0.9, 0.8, 0.7, -0.2, 1.4], 2.0);
        assert!((p.iter().sum::<f64>() - 2.0).abs() < 1e-9);
        assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(project_capped_simplex(&[0.2, 0.3], 2.0), vec![0.2, 0.3]);
        // KKT: brute-force comparison against random feasible points
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let y = [0.9, 0.8, 0.7, -0.2, 1.4];
        let dist = |v: &[f64]| v.iter().zip(y.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        for _ in 0..2000 {
            let q: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..1.0)).collect();
            if q.iter().sum::<f64>() <= 2.0 {
                assert!(dist(&p) <= dist(&q) + 1e-12);
            }
        }
    }

    fn noisy_circle_6d(seed: u64) -> DataMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..60)
            .map(|_| {
                let t: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                let mut r: Vec<f64> = (0..6).map(|_| 0.02 * rng.sample::<f64, _>(StandardNormal)).collect();
                r[1] += 2.0 * t.cos();
                r[4] += 2.0 * t.sin();
                r
            })
            .collect();
        DataMatrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn l1_matches_exhaustive_on_clean_circle() {
        let x = noisy_circle_6d(3);
        let cfg = identity_cfg(1);
        let ex = fit_exhaustive(&x, &cfg).unwrap();
        let l1 = fit_l1(&x, &cfg).unwrap();
        assert_eq!(ex.index_set, l1.index_set);
        assert_eq!(ex.index_set.one_based(), vec![2, 5]);
        let v = &l1.relaxation.as_ref().unwrap().values;
        assert!(v.iter().sum::<f64>() <= 2.0 + 1e-9);
        assert!(l1.final_loss >= ex.final_loss - 1e-9);
    }

    #[test]
    fn l1_never_beats_exhaustive() {
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let x = DataMatrix::new(DMatrix::from_fn(25, 5, |_, _| rng.sample(StandardNormal))).unwrap();
            let mut cfg = FitConfig::new(2);
            cfg.restarts = 3;
            let ex = fit_exhaustive(&x, &cfg).unwrap();
            let l1 = fit_l1(&x, &cfg).unwrap();
            assert!(l1.final_loss >= ex.final_loss - 1e-9 * (1.0 + ex.final_loss));
        }
    }

    #[test]
    fn sparse_with_zero_lambda_is_l1() {
        let x = noisy_circle_6d(8);
        let cfg = identity_cfg(1);
        let a = fit_l1(&x, &cfg).unwrap();
        let b = fit_sparse(&x, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn penalty_raises_objective_monotonically() {
        let x = noisy_circle_6d(9);
        let xc = centered(&x);
        let idx = IndexSet::from_one_based(&[2, 5], 6).unwrap();
        let ev = Evaluator::new(xc.values(), &WeightMatrix::identity(6), idx.mask());
        let c = DVector::from_element(6, 0.1);
        let mut prev = f64::NEG_INFINITY;
        for lambda in [0.0, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1] {
            let o = ev.eval(&c, Radius::Optimal, None, lambda, false);
            let total = o.loss + o.penalty;
            assert!(total >= o.loss);
            assert!(total >= prev);
            prev = total;
        }
        let mut cfg = identity_cfg(1);
        cfg.penalty_lambda = 1e-2;
        let m = fit_sparse(&x, &cfg).unwrap();
        assert!(m.objective * x.rows() as f64 >= m.final_loss - 1e-9);
    }

    #[test]
    fn transform_is_idempotent_and_fixes_sphere_points() {
        let x = noisy_circle_6d(10);
        let cfg = identity_cfg(1);
        let m = fit_exhaustive(&x, &cfg).unwrap();
        let once = m.transform(&x).unwrap();
        let twice = m.transform(&once).unwrap();
        assert!((once.values() - twice.values()).abs().max() < 1e-10);
        let mse = (x.values() - once.values()).norm_squared() / x.rows() as f64;
        assert!((mse - m.final_loss / x.rows() as f64).abs() < 1e-9);
    }

    #[test]
    fn non_diagonal_weight_fits() {
        let rows = circle_rows(20, &[0.0, 0.0, 0.0], 1.0, (0, 1), 3);
        let x = DataMatrix::from_rows(&rows).unwrap();
        let mut cfg = identity_cfg(1);
        cfg.weight = WeightSpec::Matrix(vec![vec![2.0, 0.3, 0.0], vec![0.3, 1.0, 0.0], vec![0.0, 0.0, 1.0]]);
        let m = fit_exhaustive(&x, &cfg).unwrap();
        assert!(m.final_loss.is_finite());
        assert!(m.params().is_some());
    }

    #[test]
    fn config_validation() {
        let x = DataMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0], vec![2.0, 2.0]]).unwrap();
        assert!(matches!(fit(&x, &FitConfig::new(2)), Err(SrcaError::InvalidArgument(_))));
        let mut cfg = FitConfig::new(1);
        cfg.tol = 0.0;
        assert!(fit(&x, &cfg).is_err());
    }

    #[test]
    fn parse_strategy() {
        assert_eq!("l1".parse::<Strategy>().unwrap(), Strategy::L1Relaxed);
        assert_eq!("exhaustive".parse::<Strategy>().unwrap().to_string(), "exhaustive");
        assert!("greedy".parse::<Strategy>().is_err());
    }
}
