//! Fitted models: the surface in rotated coordinates, the out-of-sample
//! transform and the JSON file format.

use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::DataMatrix;
use crate::error::{Result, SrcaError};
use crate::geometry::{project_to_flat, project_to_sphere, FlatParams, IndexSet, SphereParams, WeightMatrix};
use crate::rotation::{apply_rotation, invert_rotation, OrthogonalMatrix};
use crate::solver::{FitConfig, WeightSpec};

const FORMAT: &str = "srca-model";
const VERSION: u32 = 1;

/// The fitted surface in rotated, centered coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum Surface {
    Sphere(SphereParams),
    /// Infinite-radius limit: an affine hyperplane inside the subspace.
    Flat(FlatParams),
}

/// Relaxed selection weights from the l1 search.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxationVector {
    pub values: Vec<f64>,
    pub budget: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SphereModel {
    pub mean: DVector<f64>,
    pub rotation: OrthogonalMatrix,
    pub index_set: IndexSet,
    pub surface: Surface,
    pub weight: WeightMatrix,
    /// Sum over training rows of the squared point-to-surface distance.
    pub final_loss: f64,
    /// Minimized objective per row, including any sparsity penalty.
    pub objective: f64,
    pub converged: bool,
    pub n_train: usize,
    pub config: FitConfig,
    pub relaxation: Option<RelaxationVector>,
}

impl SphereModel {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn retained_dim(&self) -> usize {
        self.index_set.len() - 1
    }

    /// Sphere parameters, or `None` for the flat limit.
    pub fn params(&self) -> Option<&SphereParams> {
        match &self.surface {
            Surface::Sphere(p) => Some(p),
            Surface::Flat(_) => None,
        }
    }

    pub fn center(&self) -> &DVector<f64> {
        match &self.surface {
            Surface::Sphere(p) => &p.center,
            Surface::Flat(f) => &f.offset,
        }
    }

    pub fn radius(&self) -> Option<f64> {
        self.params().map(|p| p.radius)
    }

    /// Center mapped back to the input coordinates.
    pub fn ambient_center(&self) -> DVector<f64> {
        self.rotation.matrix() * self.center() + &self.mean
    }

    /// Rotated, centered coordinates of `x`.
    pub fn to_rotated(&self, x: &DataMatrix) -> Result<DataMatrix> {
        self.check(x)?;
        let mut v = x.values().clone();
        for mut row in v.row_iter_mut() {
            row -= self.mean.transpose();
        }
        apply_rotation(&x.replace_values(v), &self.rotation)
    }

    /// Projects rows (training or unseen) onto the fitted surface and maps
    /// them back to the input coordinates.
    pub fn transform(&self, x: &DataMatrix) -> Result<DataMatrix> {
        let rotated = self.to_rotated(x)?;
        let projected = self.project_rotated(&rotated)?;
        let mut back = invert_rotation(&projected, &self.rotation)?.into_values();
        for mut row in back.row_iter_mut() {
            row += self.mean.transpose();
        }
        Ok(x.replace_values(back))
    }

    /// Projection in rotated coordinates.
    pub fn project_rotated(&self, rotated: &DataMatrix) -> Result<DataMatrix> {
        match &self.surface {
            Surface::Sphere(p) => project_to_sphere(rotated, p, &self.index_set),
            Surface::Flat(f) => project_to_flat(rotated, f, &self.index_set),
        }
    }

    /// Low-dimensional coordinates: the rotated, projected rows restricted
    /// to the index set.
    pub fn embed(&self, x: &DataMatrix) -> Result<DataMatrix> {
        let p = self.project_rotated(&self.to_rotated(x)?)?;
        Ok(p.select_columns(self.index_set.members()))
    }

    fn check(&self, x: &DataMatrix) -> Result<()> {
        if x.cols() != self.dim() {
            return Err(SrcaError::Dimension(format!(
                "model has {} columns, data has {}",
                self.dim(),
                x.cols()
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let (center, radius, normal) = match &self.surface {
            Surface::Sphere(p) => (p.center.as_slice().to_vec(), Some(p.radius), None),
            Surface::Flat(f) => (f.offset.as_slice().to_vec(), None, Some(f.normal.as_slice().to_vec())),
        };
        let doc = ModelDoc {
            format: FORMAT.into(),
            version: VERSION,
            dim: self.dim(),
            retained_dim: self.retained_dim(),
            mean: self.mean.as_slice().to_vec(),
            rotation: self.rotation.to_row_major(),
            index_set: self.index_set.one_based(),
            center,
            radius,
            normal,
            weight: weight_spec(&self.weight),
            final_loss: self.final_loss,
            objective: self.objective,
            converged: self.converged,
            n_train: self.n_train,
            relaxation: self.relaxation.as_ref().map(|r| r.values.clone()),
            config_digest: config_digest(&self.config)?,
            config: self.config.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDoc = serde_json::from_str(text)?;
        if doc.format != FORMAT || doc.version != VERSION {
            return Err(SrcaError::Model(format!(
                "unsupported format {} v{}",
                doc.format, doc.version
            )));
        }
        let d = doc.dim;
        if config_digest(&doc.config)? != doc.config_digest {
            return Err(SrcaError::Model("config digest mismatch".into()));
        }
        for (name, len) in [("mean", doc.mean.len()), ("center", doc.center.len())] {
            if len != d {
                return Err(SrcaError::Dimension(format!("{name} has {len} entries, expected {d}")));
            }
        }
        let index_set = IndexSet::from_one_based(&doc.index_set, d)?;
        if index_set.len() != doc.retained_dim + 1 {
            return Err(SrcaError::Dimension("index set size does not match retained_dim".into()));
        }
        let center = DVector::from_vec(doc.center);
        let surface = match (doc.radius, doc.normal) {
            (Some(r), None) => Surface::Sphere(SphereParams::new(center, r)?),
            (None, Some(n)) if n.len() == d => Surface::Flat(FlatParams { offset: center, normal: DVector::from_vec(n) }),
            _ => {
                return Err(SrcaError::Model(
                    "need exactly one of radius or normal".into(),
                ))
            }
        };
        let weight = doc.weight.resolve(d)?;
        Ok(SphereModel {
            mean: DVector::from_vec(doc.mean),
            rotation: OrthogonalMatrix::from_row_major(d, &doc.rotation)?,
            index_set,
            surface,
            weight,
            final_loss: doc.final_loss,
            objective: doc.objective,
            converged: doc.converged,
            n_train: doc.n_train,
            relaxation: doc.relaxation.map(|values| RelaxationVector { values, budget: doc.retained_dim + 1 }),
            config: doc.config,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| SrcaError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SrcaError::io(path, e))?;
        Self::from_json(&text)
    }
}

fn weight_spec(w: &WeightMatrix) -> WeightSpec {
    if w.is_identity() {
        WeightSpec::Identity
    } else {
        let v = w.values();
        WeightSpec::Matrix((0..v.nrows()).map(|i| v.row(i).iter().copied().collect()).collect())
    }
}

/// Hex SHA-256 of the canonical JSON form of a config.
pub fn config_digest(cfg: &FitConfig) -> Result<String> {
    let bytes = serde_json::to_vec(cfg)?;
    let hash = Sha256::digest(&bytes);
    Ok(hash.iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    format: String,
    version: u32,
    dim: usize,
    retained_dim: usize,
    mean: Vec<f64>,
    rotation: Vec<f64>,
    index_set: Vec<usize>,
    center: Vec<f64>,
    radius: Option<f64>,
    #[serde(default)]
    normal: Option<Vec<f64>>,
    weight: WeightSpec,
    final_loss: f64,
    objective: f64,
    converged: bool,
    n_train: usize,
    #[serde(default)]
    relaxation: Option<Vec<f64>>,
    config: FitConfig,
    config_digest: String,
}
