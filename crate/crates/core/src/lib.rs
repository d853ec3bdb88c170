//! Sub-sphere dimension reduction.
//!
//! Data are centered, rotated into a standard position, and a sphere is
//! fitted inside a small set of coordinates by minimizing a geometric
//! loss. Every point is then projected onto that sub-sphere.

// `!(x > 0.0)` also rejects NaN, which is the point.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod baselines;
pub mod cli;
pub mod data;
pub mod error;
mod linalg;
pub mod metrics;
pub mod geometry;
pub mod model;
pub mod rotation;
pub mod solver;
pub mod synthetic;

pub use data::{DataMatrix, StandardizationRecord, StandardizeMode};
pub use error::{Result, SrcaError};
pub use rotation::{OrthogonalMatrix, RotationMethod};
pub use geometry::{IndexSet, SphereParams, WeightMatrix};
pub use model::{SphereModel, Surface};
pub use solver::{fit, FitConfig, Strategy};
