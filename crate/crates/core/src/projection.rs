//! Sightline occlusion on the back wall.
//!
//! For each foreground entity we compute the rectangle of the back-wall plane
//! `y = back_wall_y` hidden from front-row viewers. In perspective mode each
//! box corner is projected along the ray from the viewer; because a projected
//! x coordinate `Vx·(1 − t) + t·Px` is affine and decreasing in the viewer's x
//! (`t > 1` for points in front of the wall), the union over every viewer
//! between the two extremes is spanned by the rightmost viewer's left edge
//! and the leftmost viewer's right edge. Orthographic mode models the audience
//! as parallel rays along +y and copies the entity's silhouette.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Aabb, ProjectionMode, StageConfig};
use crate::placement::StageLayout;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProjectionError {
    #[error("entity '{id}': degenerate sightline: {detail}")]
    Degenerate { id: String, detail: String },
}

/// Rectangle on the back wall: `x` across the stage, `h` up from the floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WallRect {
    pub x0: f64,
    pub x1: f64,
    pub h0: f64,
    pub h1: f64,
}

impl WallRect {
    pub fn area(&self) -> f64 {
        (self.x1 - self.x0).max(0.0) * (self.h1 - self.h0).max(0.0)
    }

    pub fn intersection_area(&self, o: &WallRect) -> f64 {
        let w = self.x1.min(o.x1) - self.x0.max(o.x0);
        let h = self.h1.min(o.h1) - self.h0.max(o.h0);
        w.max(0.0) * h.max(0.0)
    }

    pub fn contains(&self, x: f64, h: f64) -> bool {
        x >= self.x0 && x <= self.x1 && h >= self.h0 && h <= self.h1
    }

    fn clamped(self, n: f64) -> WallRect {
        WallRect {
            x0: self.x0.clamp(0.0, n),
            x1: self.x1.clamp(0.0, n),
            h0: self.h0.clamp(0.0, n),
            h1: self.h1.clamp(0.0, n),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcclusionBox {
    pub entity_id: String,
    pub wall_x: [f64; 2],
    pub wall_h: [f64; 2],
}

impl OcclusionBox {
    pub fn rect(&self) -> WallRect {
        WallRect {
            x0: self.wall_x[0],
            x1: self.wall_x[1],
            h0: self.wall_h[0],
            h1: self.wall_h[1],
        }
    }

    fn new(entity_id: &str, r: WallRect) -> Self {
        OcclusionBox {
            entity_id: entity_id.to_string(),
            wall_x: [r.x0, r.x1],
            wall_h: [r.h0, r.h1],
        }
    }
}

/// Viewer eye position `[x, y, z]`; `y < 0` (in the auditorium).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Viewer(pub [f64; 3]);

/// Unclamped projection of the box silhouette from one viewer.
fn raw_shadow(id: &str, b: &Aabb, v: &Viewer, cfg: &StageConfig) -> Result<WallRect, ProjectionError> {
    let degenerate = |detail: String| ProjectionError::Degenerate { id: id.to_string(), detail };
    let wall = cfg.back_wall_y;
    if b.y1 > wall {
        return Err(degenerate(format!("entity extends behind the back wall (y1 {} > {wall})", b.y1)));
    }
    match cfg.projection_mode {
        ProjectionMode::Orthographic => Ok(WallRect {
            x0: b.x0,
            x1: b.x1,
            h0: b.h0,
            h1: b.h1,
        }),
        ProjectionMode::Perspective => {
            let [vx, vy, vz] = v.0;
            if b.y0 <= vy {
                return Err(degenerate(format!("entity not in front of viewer (y0 {} <= viewer y {vy})", b.y0)));
            }
            let mut r = WallRect {
                x0: f64::INFINITY,
                x1: f64::NEG_INFINITY,
                h0: f64::INFINITY,
                h1: f64::NEG_INFINITY,
            };
            for (i, [px, py, pz]) in b.corners().into_iter().enumerate() {
                let t = (wall - vy) / (py - vy);
                let x = vx + t * (px - vx);
                let z = vz + t * (pz - vz);
                r.x0 = r.x0.min(x);
                r.x1 = r.x1.max(x);
                if i < 4 {
                    r.h0 = r.h0.min(z);
                } else {
                    r.h1 = r.h1.max(z);
                }
            }
            Ok(r)
        }
    }
}

/// Wall region hidden by `b` from a single viewer, clamped to `[0,N]²`.
pub fn shadow_from_viewer(entity_id: &str, b: &Aabb, viewer: &Viewer, cfg: &StageConfig) -> Result<OcclusionBox, ProjectionError> {
    let r = raw_shadow(entity_id, b, viewer, cfg)?;
    Ok(OcclusionBox::new(entity_id, r.clamped(cfg.stage_size)))
}

/// Unclamped union of shadows over every viewer between the two extremes.
pub fn union_shadow_unclamped(entity_id: &str, b: &Aabb, cfg: &StageConfig) -> Result<WallRect, ProjectionError> {
    let left = raw_shadow(entity_id, b, &Viewer(cfg.audience_left), cfg)?;
    let right = raw_shadow(entity_id, b, &Viewer(cfg.audience_right), cfg)?;
    Ok(WallRect {
        x0: right.x0.min(left.x0),
        x1: left.x1.max(right.x1),
        h0: left.h0.min(right.h0),
        h1: left.h1.max(right.h1),
    })
}

/// Occlusion box of one entity for the whole front row.
pub fn occlusion_for_entity(entity_id: &str, b: &Aabb, cfg: &StageConfig) -> Result<OcclusionBox, ProjectionError> {
    let r = union_shadow_unclamped(entity_id, b, cfg)?;
    Ok(OcclusionBox::new(entity_id, r.clamped(cfg.stage_size)))
}

/// One occlusion box per entity, in input order.
pub fn occlusion_union_boxes<'a>(
    entities: impl IntoIterator<Item = (&'a str, &'a Aabb)>,
    cfg: &StageConfig,
) -> Result<Vec<OcclusionBox>, ProjectionError> {
    entities
        .into_iter()
        .map(|(id, b)| occlusion_for_entity(id, b, cfg))
        .collect()
}

pub fn occlusion_union(layout: &StageLayout, cfg: &StageConfig) -> Result<Vec<OcclusionBox>, ProjectionError> {
    occlusion_union_boxes(layout.entities.iter().map(|e| (e.spec.id.as_str(), &e.bbox)), cfg)
}
