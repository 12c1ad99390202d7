//! Neural free-boundary surface parameterization.
//!
//! A per-shape trained bi-directional cycle mapping (grid → UV → surface → UV
//! and surface → UV → surface) assigns 2D texture coordinates to discrete
//! surface points, discovers cutting seams, and is scored with angle
//! distortion and UV overlap metrics.
//!
//! Layout:
//! - [`geometry`]: point sets, meshes, nearest neighbors, Chamfer distance.
//! - [`autodiff`]: matrix tape with reverse mode, forward-mode tangents
//!   that can themselves be differentiated, and Adam.
//! - [`model`]: the four sub-networks, losses, training and seam extraction.
//! - [`metrics`]: conformality, UV self-intersection, noise robustness.
//! - [`assets`]: OBJ/PLY/XYZ readers and writers, rendering, run pipeline.

pub mod assets;
pub mod autodiff;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod model;

pub use autodiff::{AdamConfig, AdamState, Matrix, NetSpec, ParamStore, Tape, Var};
pub use error::{Error, Result};
pub use geometry::{NormalizationTransform, PointSet, TriMesh};
pub use metrics::MetricsReport;
pub use model::{
    AblationMode, Architecture, BranchOutputs, FlattenModel, LossHistory, LossParts, Reduction,
    SeamSet, TrainConfig,
};
