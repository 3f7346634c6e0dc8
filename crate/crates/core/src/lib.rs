//! Active tactile exploration and mapping of rigid objects buried in a soft
//! planar workspace.
//!
//! A virtual press sensor renders the deformation depth image an optical
//! tactile sensor would produce over a hidden bead layout. Each press is
//! thresholded and segmented into deformation clusters whose centroids become
//! labeled training points for a Gaussian-process classifier (Laplace
//! approximation), which maintains a probabilistic presence map over the
//! workspace. Acquisition policies pick the next press location: the
//! exploration policy trades predictive uncertainty against the centered
//! discrepancy of the sample set, the mapping policy trades presence
//! probability against the same discrepancy, and a seeded random policy serves
//! as the benchmark baseline. Thresholded point clouds are max-fused into a
//! height grid and scored against exact ground truth with cross-entropy and
//! mean-squared-error metrics.
//!
//! The [`experiment`] module orchestrates full benchmark runs; the companion
//! CLI crate exposes them as `generate`, `run`, `bench` and `render`
//! subcommands.

pub mod acquisition;
pub mod domain;
pub mod experiment;
pub mod gp;
pub mod mapper;
pub mod pgm;
pub mod sampling;
pub mod sensor;
pub mod tactile;

pub use domain::{BeadLayout, GroundTruth, Grid2, Label, Point2, TrainingSet, Workspace};
pub use gp::{KernelParams, LaplaceState, Prediction, ProbabilityField};
pub use mapper::{HeightGrid, MetricsRow};
pub use sensor::{DepthImage, SensorConfig};
pub use tactile::{LabeledPoints, PointCloud, ProcConfig};

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("location ({0}, {1}) lies outside the workspace")]
    OutsideWorkspace(f64, f64),
    #[error("layout generation failed: {0}")]
    Layout(String),
    #[error("sample set is empty")]
    EmptySampleSet,
    #[error("candidate grid exhausted: every cell has been sampled")]
    GridExhausted,
    #[error("raster dimensions differ: {0}x{1} vs {2}x{3}")]
    RasterMismatch(usize, usize, usize, usize),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("parse error in {0}: {1}")]
    Parse(String, String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
