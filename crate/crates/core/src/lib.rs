//! Topological interpretability for classifiers.
//!
//! The crate reconstructs a classifier's prediction space as a Mapper graph,
//! ranks label-specific features with the discrete distance-to-measure (dtm)
//! estimator, and measures explanation stability with label-specific
//! Lipschitz constants.
//!
//! Modules, bottom-up:
//!
//! * [`records`]: prediction records, record sets, embedding tables and their file formats.
//! * [`dtm`]: exact K-nearest-neighbour machinery and the dtm estimator, generic over [`Scalar`].
//! * [`lens`]: filter ("lens") matrices over a record set.
//! * [`mapper`]: interval covers, per-cell clustering, nerve construction and graph exports.
//! * [`explain`]: high-accuracy vertex selection, feature rankings and per-record explanations.
//! * [`stability`]: label-specific Lipschitz constants and a perturbation baseline explainer.
//! * [`refmodel`]: synthetic planted-keyword corpus and a toy dropout classifier.

pub mod dtm;
pub mod error;
pub mod explain;
pub mod lens;
pub mod mapper;
pub mod records;
pub mod refmodel;
pub mod scalar;
pub mod stability;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Point multiset over `f64` coordinates.
pub type PointMultiset64 = dtm::PointMultiset<f64>;
/// Point multiset over `f32` coordinates.
pub type PointMultiset32 = dtm::PointMultiset<f32>;
/// Single-linkage dendrogram merge heights over `f64`.
pub type Mst64 = mapper::cluster::MinimumSpanningTree<f64>;
/// Single-linkage dendrogram merge heights over `f32`.
pub type Mst32 = mapper::cluster::MinimumSpanningTree<f32>;
