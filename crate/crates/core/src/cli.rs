//! Command-line front end: `generate`, `fit`, `transform`, `evaluate` and
//! `benchmark`. Every command goes through the same library calls a
//! program would make.

use std::collections::HashMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{pca_fit_reduce, spca_fit};
use crate::data::{format_float, load_csv, split_train_test, standardize, write_csv, DataMatrix, StandardizeMode};
use crate::error::{Result, SrcaError};
use crate::metrics::{evaluate, mse, out_of_sample_mse, Reducer};
use crate::model::SphereModel;
use crate::rotation::RotationMethod;
use crate::solver::{fit, resolve_strategy, FitConfig, Strategy, WeightSpec};
use crate::synthetic::{generate, GeneratorKind, GeneratorSpec, TORUS_R1, TORUS_R2};

// Like `println!`, but a closed stdout (e.g. piped into `head`) is not an error.
macro_rules! say {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

/// Environment variable that overrides `--jobs`.
pub const JOBS_ENV: &str = "SRCA_JOBS";
/// Held-out share of the rows under `--holdout`.
pub const HOLDOUT_FRACTION: f64 = 0.2;

#[derive(Debug, Parser)]
#[command(name = "srca", version, about = "Sub-sphere dimension reduction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset as CSV.
    Generate(GenerateArgs),
    /// Fit a model and save it as JSON.
    Fit(FitArgs),
    /// Project a dataset with a saved model.
    Transform(TransformArgs),
    /// Score a reduction against the original data.
    Evaluate(EvaluateArgs),
    /// Run a plan of datasets x methods x retained dimensions.
    Benchmark(BenchmarkArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// plane, torus, sphere, gem or orthogonal_loops.
    #[arg(long)]
    pub kind: String,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Variance of the Gaussian noise added to every coordinate.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write one label per row (gem batches, loop ids).
    #[arg(long)]
    pub labels_out: Option<PathBuf>,
}

/// How to read a data CSV.
#[derive(Debug, Clone, Default, Args)]
pub struct CsvArgs {
    /// The first row is a header.
    #[arg(long)]
    pub header: bool,
    /// 1-based column holding class labels; excluded from the data.
    #[arg(long)]
    pub label_column: Option<usize>,
}

impl CsvArgs {
    fn load(&self, path: &Path) -> Result<DataMatrix> {
        let lc = match self.label_column {
            Some(0) => return Err(SrcaError::InvalidArgument("label column is 1-based".into())),
            Some(c) => Some(c - 1),
            None => None,
        };
        load_csv(path, self.header, lc)
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub dprime: usize,
    #[arg(long, default_value = "pca")]
    pub rotation: String,
    #[arg(long, default_value = "auto")]
    pub strategy: String,
    /// Sparsity penalty; a positive value selects the penalized fit.
    #[arg(long, default_value_t = 0.0)]
    pub lambda: f64,
    /// `identity`, `diag:w1,w2,...` or a JSON file holding a matrix.
    #[arg(long, default_value = "identity")]
    pub weight: String,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 1)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Where to write the model JSON.
    #[arg(long, visible_alias = "model")]
    pub out: PathBuf,
    #[command(flatten)]
    pub csv: CsvArgs,
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Scatter plot of original and reduced points in the first two
    /// selected coordinates.
    #[arg(long)]
    pub svg: Option<PathBuf>,
    #[command(flatten)]
    pub csv: CsvArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Original data.
    #[arg(long)]
    pub data: PathBuf,
    /// Reduced data in the input coordinates.
    #[arg(long, conflicts_with = "model", required_unless_present = "model")]
    pub reduced: Option<PathBuf>,
    /// Reduce `--data` with this model instead of reading `--reduced`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// File with one class label per row.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub json: Option<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    pub input: CsvArgs,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[arg(long)]
    pub plan: PathBuf,
    /// Also report out-of-sample MSE on a seeded 80/20 split.
    #[arg(long)]
    pub holdout: bool,
    /// Worker threads; `SRCA_JOBS` takes precedence.
    #[arg(long)]
    pub jobs: Option<usize>,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code: 0 success, 1 usage, 2 data, 3 numerical.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Generate(a) => cmd_generate(&a).map(|_| ()),
        Command::Fit(a) => {
            let model = cmd_fit(&a)?;
            say!("strategy: {}", strategy_label(model.dim(), &model.config));
            say!("index set: {}", model.index_set);
            match model.radius() {
                Some(r) => say!("radius: {}", format_float(r)),
                None => say!("radius: inf (flat limit)"),
            }
            say!("final loss: {}", format_float(model.final_loss));
            Ok(())
        }
        Command::Transform(a) => cmd_transform(&a).map(|_| ()),
        Command::Evaluate(a) => {
            let report = cmd_evaluate(&a)?;
            if a.json.is_none() && a.csv.is_none() {
                say!("{}", report.to_json()?);
            }
            Ok(())
        }
        Command::Benchmark(a) => {
            let plan = BenchmarkPlan::load(&a.plan)?;
            let jobs = jobs_from_env(a.jobs)?;
            let tables = run_benchmark(&plan, a.holdout, jobs)?;
            let written = tables.save(&plan.output_dir)?;
            for p in written {
                say!("wrote {}", p.display());
            }
            Ok(())
        }
    }
}

fn strategy_label(d: usize, cfg: &FitConfig) -> String {
    if cfg.penalty_lambda > 0.0 {
        "sparse_penalty".into()
    } else {
        resolve_strategy(d, cfg).to_string()
    }
}

pub fn cmd_generate(a: &GenerateArgs) -> Result<DataMatrix> {
    let kind: GeneratorKind = a.kind.parse()?;
    let x = generate(&GeneratorSpec::new(kind, a.n, a.seed).with_noise(a.noise))?;
    write_csv(&a.out, &x, None, false)?;
    if let Some(p) = &a.labels_out {
        let labels = x
            .labels()
            .ok_or_else(|| SrcaError::InvalidArgument(format!("{kind} data has no labels")))?;
        write_labels(p, labels)?;
    }
    Ok(x)
}

/// Parses the `--weight` flag for `d` columns.
pub fn parse_weight(s: &str, d: usize) -> Result<WeightSpec> {
    let s = s.trim();
    if s.eq_ignore_ascii_case("identity") {
        return Ok(WeightSpec::Identity);
    }
    if let Some(diag) = s.strip_prefix("diag:") {
        let w: Vec<f64> = diag
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| SrcaError::InvalidArgument(format!("bad diagonal weight: {e}")))?;
        if w.len() != d {
            return Err(SrcaError::Dimension(format!("{} diagonal weights for {d} columns", w.len())));
        }
        return Ok(WeightSpec::Matrix(
            (0..d).map(|i| (0..d).map(|j| if i == j { w[i] } else { 0.0 }).collect()).collect(),
        ));
    }
    let text = std::fs::read_to_string(s).map_err(|e| SrcaError::io(s, e))?;
    let m: Vec<Vec<f64>> = serde_json::from_str(&text)?;
    Ok(WeightSpec::Matrix(m))
}

pub fn fit_config(a: &FitArgs, d: usize) -> Result<FitConfig> {
    let mut cfg = FitConfig::new(a.dprime);
    cfg.rotation = a.rotation.parse::<RotationMethod>()?;
    cfg.strategy = a.strategy.parse::<Strategy>()?;
    cfg.penalty_lambda = a.lambda;
    cfg.weight = parse_weight(&a.weight, d)?;
    cfg.tol = a.tol;
    cfg.restarts = a.restarts;
    cfg.seed = a.seed;
    cfg.validate(d)?;
    Ok(cfg)
}

pub fn cmd_fit(a: &FitArgs) -> Result<SphereModel> {
    let x = a.csv.load(&a.data)?;
    let cfg = fit_config(a, x.cols())?;
    log::info!("strategy {}", strategy_label(x.cols(), &cfg));
    let model = fit(&x, &cfg)?;
    model.save(&a.out)?;
    Ok(model)
}

pub fn cmd_transform(a: &TransformArgs) -> Result<DataMatrix> {
    let model = SphereModel::load(&a.model)?;
    let x = a.csv.load(&a.data)?;
    let reduced = model.transform(&x)?;
    write_csv(&a.out, &reduced, None, false)?;
    if let Some(p) = &a.svg {
        let rot = model.to_rotated(&x)?;
        let proj = model.project_rotated(&rot)?;
        let cols = &model.index_set.members()[..2];
        let svg = scatter_svg(&rot.select_columns(cols), &proj.select_columns(cols));
        std::fs::write(p, svg).map_err(|e| SrcaError::io(p, e))?;
    }
    Ok(reduced)
}

/// Two-layer SVG scatter of the first two columns of `a` (grey) and `b`
/// (red), sharing one scale.
pub fn scatter_svg(a: &DataMatrix, b: &DataMatrix) -> String {
    const SIZE: f64 = 480.0;
    const PAD: f64 = 20.0;
    let pts = |m: &DataMatrix| -> Vec<(f64, f64)> { (0..m.rows()).map(|i| (m.values()[(i, 0)], m.values()[(i, 1)])).collect() };
    let (pa, pb) = (pts(a), pts(b));
    let all = pa.iter().chain(&pb);
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let span = (x1 - x0).max(y1 - y0).max(1e-12);
    let sx = |x: f64| PAD + (x - x0) / span * (SIZE - 2.0 * PAD);
    let sy = |y: f64| SIZE - PAD - (y - y0) / span * (SIZE - 2.0 * PAD);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    for (id, color, p) in [("original", "#888888", &pa), ("reduced", "#d62728", &pb)] {
        let _ = writeln!(s, r#"<g id="{id}" fill="{color}" fill-opacity="0.6">"#);
        for &(x, y) in p {
            let _ = writeln!(s, r#"<circle cx="{:.3}" cy="{:.3}" r="2"/>"#, sx(x), sy(y));
        }
        s.push_str("</g>\n");
    }
    s.push_str("</svg>\n");
    s
}

pub fn cmd_evaluate(a: &EvaluateArgs) -> Result<crate::metrics::EvaluationReport> {
    let x = a.input.load(&a.data)?;
    let x_hat = match (&a.reduced, &a.model) {
        (Some(p), _) => load_csv(p, false, None)?,
        (None, Some(m)) => SphereModel::load(m)?.transform(&x)?,
        (None, None) => return Err(SrcaError::InvalidArgument("need --reduced or --model".into())),
    };
    let labels = match &a.labels {
        Some(p) => Some(read_labels(p)?),
        None => x.labels().map(<[usize]>::to_vec),
    };
    if labels.is_none() {
        eprintln!("note: no labels given; sc, chi and dbi are skipped");
    }
    let report = evaluate(&x, &x_hat, labels.as_deref(), None)?;
    if let Some(p) = &a.json {
        report.save_json(p)?;
    }
    if let Some(p) = &a.csv {
        report.save_csv(p)?;
    }
    Ok(report)
}

/// One label per non-empty line, mapped to dense ids in order of first
/// appearance.
pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path).map_err(|e| SrcaError::io(path, e))?;
    let mut ids: HashMap<&str, usize> = HashMap::new();
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| {
            let next = ids.len();
            *ids.entry(l).or_insert(next)
        })
        .collect())
}

fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let text: String = labels.iter().map(|l| format!("{l}\n")).collect();
    std::fs::write(path, text).map_err(|e| SrcaError::io(path, e))
}

fn jobs_from_env(flag: Option<usize>) -> Result<Option<usize>> {
    match std::env::var(JOBS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| SrcaError::InvalidArgument(format!("{JOBS_ENV}={v:?} is not a count"))),
        Err(_) => Ok(flag),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Pca,
    Spca,
    Srca,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Pca => "pca",
            Method::Spca => "spca",
            Method::Srca => "srca",
        })
    }
}

fn default_n() -> usize {
    400
}
fn default_r1() -> f64 {
    TORUS_R1
}
fn default_r2() -> f64 {
    TORUS_R2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSource {
    pub kind: GeneratorKind,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub noise_var: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_r1")]
    pub r1: f64,
    #[serde(default = "default_r2")]
    pub r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSource {
    pub path: PathBuf,
    #[serde(default)]
    pub has_header: bool,
    /// 1-based.
    #[serde(default)]
    pub label_column: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Generator(GeneratorSource),
    Csv(CsvSource),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub name: String,
    pub source: DataSource,
    #[serde(default = "default_standardize")]
    pub standardize: StandardizeMode,
}

fn default_standardize() -> StandardizeMode {
    StandardizeMode::None
}

fn default_rotations() -> Vec<String> {
    vec!["pca".into()]
}
fn default_restarts() -> usize {
    3
}
fn default_strategy() -> Strategy {
    Strategy::Auto
}

/// A benchmark grid. Relative CSV paths and `output_dir` are resolved
/// against the plan file's directory by [`BenchmarkPlan::load`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkPlan {
    pub datasets: Vec<DatasetEntry>,
    pub methods: Vec<Method>,
    pub d_prime: Vec<usize>,
    /// Rotations tried for SRCA; the baselines ignore it.
    #[serde(default = "default_rotations")]
    pub rotations: Vec<String>,
    pub output_dir: PathBuf,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_strategy")]
    pub strategy: Strategy,
    #[serde(default)]
    pub seed: u64,
}

impl BenchmarkPlan {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SrcaError::io(path, e))?;
        let mut plan: BenchmarkPlan = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for ds in &mut plan.datasets {
            if let DataSource::Csv(c) = &mut ds.source {
                if c.path.is_relative() {
                    c.path = base.join(&c.path);
                }
            }
        }
        if plan.output_dir.is_relative() {
            plan.output_dir = base.join(&plan.output_dir);
        }
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SrcaError::InvalidArgument(m.into()));
        if self.datasets.is_empty() {
            return bad("plan has no datasets");
        }
        if self.methods.is_empty() {
            return bad("plan has no methods");
        }
        if self.d_prime.is_empty() || self.d_prime.contains(&0) {
            return bad("plan needs a nonempty list of positive retained dimensions");
        }
        if self.rotations.is_empty() {
            return bad("plan has no rotations");
        }
        if self.restarts == 0 {
            return bad("restarts must be at least 1");
        }
        for r in &self.rotations {
            r.parse::<RotationMethod>()?;
        }
        Ok(())
    }

    fn load_dataset(&self, ds: &DatasetEntry) -> Result<DataMatrix> {
        let x = match &ds.source {
            DataSource::Generator(g) => generate(&GeneratorSpec {
                kind: g.kind,
                n: g.n,
                noise_var: g.noise_var,
                seed: g.seed,
                r1: g.r1,
                r2: g.r2,
            })?,
            DataSource::Csv(c) => {
                let lc = match c.label_column {
                    Some(0) => return Err(SrcaError::InvalidArgument("label_column is 1-based".into())),
                    lc => lc.map(|l| l - 1),
                };
                load_csv(&c.path, c.has_header, lc)?
            }
        };
        Ok(standardize(&x, ds.standardize)?.0)
    }
}

/// One table row: a dataset, a method and (for SRCA) a rotation, with one
/// cell per retained dimension. Failed cells hold the error message.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRow {
    pub dataset: String,
    pub method: Method,
    pub rotation: String,
    pub cells: Vec<std::result::Result<f64, String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkTable {
    pub d_prime: Vec<usize>,
    pub rows: Vec<BenchmarkRow>,
}

impl BenchmarkTable {
    pub fn row(&self, dataset: &str, method: Method) -> Option<&BenchmarkRow> {
        self.rows.iter().find(|r| r.dataset == dataset && r.method == method)
    }

    /// `dataset,method,rotation,<d'...>`; failed cells read `error`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("dataset,method,rotation");
        for d in &self.d_prime {
            let _ = write!(s, ",{d}");
        }
        s.push('\n');
        for r in &self.rows {
            let _ = write!(s, "{},{},{}", r.dataset, r.method, r.rotation);
            for c in &r.cells {
                match c {
                    Ok(v) => {
                        let _ = write!(s, ",{}", format_float(*v));
                    }
                    Err(_) => s.push_str(",error"),
                }
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkTables {
    /// Training MSE.
    pub mse: BenchmarkTable,
    /// Held-out MSE, present with `--holdout`.
    pub oos_mse: Option<BenchmarkTable>,
}

impl BenchmarkTables {
    /// Writes `mse.csv` and, if present, `oos_mse.csv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| SrcaError::io(dir, e))?;
        let mut out = Vec::new();
        for (name, t) in [("mse.csv", Some(&self.mse)), ("oos_mse.csv", self.oos_mse.as_ref())] {
            if let Some(t) = t {
                let p = dir.join(name);
                std::fs::write(&p, t.to_csv()).map_err(|e| SrcaError::io(&p, e))?;
                out.push(p);
            }
        }
        Ok(out)
    }
}

struct Cell {
    row: usize,
    col: usize,
    data: usize,
    method: Method,
    rotation: Option<RotationMethod>,
    d_prime: usize,
}

/// Runs every cell of the grid on `jobs` worker threads (all cores when
/// `None`). Results are assembled in plan order, so the tables do not
/// depend on scheduling.
pub fn run_benchmark(plan: &BenchmarkPlan, holdout: bool, jobs: Option<usize>) -> Result<BenchmarkTables> {
    plan.validate()?;
    let data: Vec<(DataMatrix, Option<DataMatrix>)> = plan
        .datasets
        .iter()
        .map(|ds| {
            let x = plan.load_dataset(ds)?;
            if holdout {
                let (tr, te) = split_train_test(&x, HOLDOUT_FRACTION, plan.seed)?;
                Ok((tr, Some(te)))
            } else {
                Ok((x, None))
            }
        })
        .collect::<Result<_>>()?;

    let rotations: Vec<(String, RotationMethod)> = plan
        .rotations
        .iter()
        .map(|r| Ok((r.clone(), r.parse::<RotationMethod>()?)))
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut cells = Vec::new();
    for (di, ds) in plan.datasets.iter().enumerate() {
        for &method in &plan.methods {
            let rots: Vec<(String, Option<RotationMethod>)> = if method == Method::Srca {
                rotations.iter().map(|(s, r)| (s.clone(), Some(*r))).collect()
            } else {
                vec![("-".into(), None)]
            };
            for (name, rot) in rots {
                for (ci, &dp) in plan.d_prime.iter().enumerate() {
                    cells.push(Cell { row: rows.len(), col: ci, data: di, method, rotation: rot, d_prime: dp });
                }
                rows.push((ds.name.clone(), method, name));
            }
        }
    }

    let run_cell = |c: &Cell| -> (std::result::Result<f64, String>, std::result::Result<f64, String>) {
        let (train, test) = &data[c.data];
        let r = plan.fit_cell(c, train).and_then(|m| {
            let tr = mse(train, &m.reduce(train)?)?;
            let te = match test {
                Some(t) => Some(out_of_sample_mse(&m, t)?),
                None => None,
            };
            Ok((tr, te))
        });
        match r {
            Ok((tr, te)) => (Ok(tr), te.ok_or_else(String::new)),
            Err(e) => {
                log::warn!("{} / {} / d'={}: {e}", plan.datasets[c.data].name, c.method, c.d_prime);
                (Err(e.to_string()), Err(e.to_string()))
            }
        }
    };

    let results: Vec<_> = match jobs {
        Some(j) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(j.max(1))
                .build()
                .map_err(|e| SrcaError::InvalidArgument(format!("thread pool: {e}")))?;
            pool.install(|| cells.par_iter().map(run_cell).collect())
        }
        None => cells.par_iter().map(run_cell).collect(),
    };

    let k = plan.d_prime.len();
    let blank = |rows: &[(String, Method, String)]| -> Vec<BenchmarkRow> {
        rows.iter()
            .map(|(d, m, r)| BenchmarkRow { dataset: d.clone(), method: *m, rotation: r.clone(), cells: vec![Err(String::new()); k] })
            .collect()
    };
    let mut train_rows = blank(&rows);
    let mut test_rows = blank(&rows);
    for (c, (tr, te)) in cells.iter().zip(results) {
        train_rows[c.row].cells[c.col] = tr;
        test_rows[c.row].cells[c.col] = te;
    }
    Ok(BenchmarkTables {
        mse: BenchmarkTable { d_prime: plan.d_prime.clone(), rows: train_rows },
        oos_mse: holdout.then(|| BenchmarkTable { d_prime: plan.d_prime.clone(), rows: test_rows }),
    })
}

impl BenchmarkPlan {
    fn fit_cell(&self, c: &Cell, x: &DataMatrix) -> Result<Box<dyn Reducer + Send>> {
        Ok(match c.method {
            Method::Pca => Box::new(pca_fit_reduce(x, c.d_prime)?.0),
            Method::Spca => Box::new(spca_fit(x, c.d_prime)?),
            Method::Srca => {
                let mut cfg = FitConfig::new(c.d_prime);
                cfg.rotation = c.rotation.unwrap_or(RotationMethod::Pca);
                cfg.strategy = self.strategy;
                cfg.restarts = self.restarts;
                cfg.seed = self.seed;
                Box::new(fit(x, &cfg)?)
            }
        })
    }
}

impl Reducer for Box<dyn Reducer + Send> {
    fn reduce(&self, x: &DataMatrix) -> Result<DataMatrix> {
        (**self).reduce(x)
    }
}
