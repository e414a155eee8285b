//! Safety-critical local navigation for differential-drive robots.
//!
//! The pipeline turns synthetic depth returns into a voxelized point cloud,
//! separates moving obstacles with DBSCAN clustering and constant-velocity
//! Kalman tracking, and assembles a forward-time-domain (FTD) map: one static
//! KD-tree plus one KD-tree per horizon step holding the predicted obstacle
//! clouds. Risk points picked from that map against the previous prediction
//! become discrete control-barrier constraints of a multiple-shooting NMPC
//! solved by an in-crate SQP method.
//!
//! The [`sim`] module runs the stack in a deterministic lockstep world next to
//! two baseline planners and reports comparison metrics.

pub mod error;
pub mod ftd_map;
pub mod geometry;
pub mod kdtree;
pub mod nmpc;
pub mod perception;
pub mod risk;
pub mod sim;
pub mod tracking;

pub use error::{Error, Result};
pub use ftd_map::{FtdMap, HeightBand};
pub use geometry::{voxel_downsample, Aabb, Point3, PointCloud};
pub use kdtree::{KdTree, Neighbor};
pub use nmpc::{ControlInput, NmpcParams, NmpcSolution, RobotState, SolveStatus};
pub use risk::{HistoricalRiskSet, PredictedTrajectory, RiskKind, RiskPoint};
pub use tracking::ObstacleTrack;
