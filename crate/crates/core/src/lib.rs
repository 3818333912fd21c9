//! Correspondence-free rigid point cloud registration by direct
//! semi-exhaustive search over an Euler-angle rotation grid.
//!
//! For every grid rotation the translation maximizing the inlier count is
//! the mode of the binned pair differences `y_j - R x_i`; candidates with
//! high vote counts are then re-scored under a robust metric (truncated L1
//! by default). A pure 6-D exhaustive search is provided as an optimality
//! reference.
//!
//! ```no_run
//! use dses_core::{dses, io, SearchConfig};
//!
//! let source = io::read_cloud("scan.xyz")?;
//! let reference = io::read_cloud("model.ply")?;
//! let cfg = SearchConfig::from_ranges(45f64.to_radians(), 3f64.to_radians(), 0.5, 0.025);
//! let result = dses(&source, &reference, &cfg)?;
//! let aligned = result.best.apply(&source);
//! # let _ = aligned;
//! # Ok::<(), dses_core::Error>(())
//! ```

pub mod benchgen;
pub mod engines;
pub mod error;
pub mod exec;
pub mod geometry;
pub mod harness;
pub mod io;
pub mod metrics;
pub mod mode_search;
pub mod oracle;

pub use engines::{dses, exhaustive_search, PoseCandidate, RegistrationResult, SearchConfig};
pub use error::{Error, Result};
pub use exec::Execution;
pub use geometry::{EulerAngles, Point3, PointCloud, RigidTransform, RotationGrid};
pub use metrics::{ErrorMetric, EvalReport};
pub use mode_search::{mode_translation, ModeResult, TranslationBounds};
