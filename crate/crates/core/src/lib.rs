//! Deterministic stage layout engine.
//!
//! Places stage entities without overlap using a floor occupancy grid plus
//! per-anchor surface grids, projects each entity's audience occlusion onto
//! the back wall, allocates visible background regions and scores layouts
//! with volumetric metrics.

pub mod background;
pub mod collision;
pub mod geometry;
pub mod metrics;
pub mod placement;
pub mod projection;
pub mod render;
pub mod retrieval;
pub mod schema;
pub mod synth;

#[cfg(any(test, feature = "oracles"))]
pub mod oracle;

pub use geometry::{Aabb, StageConfig, Volume};
pub use placement::{place_scene, PlacementOptions, StageLayout};
pub use schema::{parse_ground_truth, parse_scene_spec, GroundTruthLayout, SceneSpec};
