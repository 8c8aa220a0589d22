//! Dynamic point removal for LiDAR point-cloud maps.
//!
//! Three traditional cleaners share one data model:
//!
//! * [`removert`]: visibility differencing of range images with multi-resolution reverting,
//! * [`erasor`]: polar-bin height-ratio candidates split by region-wise ground fitting,
//! * [`octomap`]: log-odds occupancy mapping, optionally with per-frame ground
//!   estimation and statistical outlier filtering.
//!
//! [`metrics`] scores any method's per-point verdicts against labeled ground
//! truth, and [`synth`] generates pose-annotated LiDAR datasets with exact labels.

pub mod config;
pub mod dataset;
pub mod erasor;
pub mod error;
pub mod geom;
pub mod metrics;
pub mod octomap;
pub mod pcd;
pub mod preprocess;
pub mod removert;
pub mod spatial;
pub mod synth;

pub use error::{Error, Result};
pub use geom::{transform_to_world, Label, LabelMask, LabeledCloud, Point3, Pose, ScanFrame};
