//! Background element allocation on the back wall.
//!
//! Occlusion boxes are marked on a wall grid first, then each requested
//! element is seated at the free spot nearest the wall centre. The result is
//! emitted as a layout-controlled generation spec: a prompt plus region boxes
//! normalised to `[0,1]²` with a top-left image origin (`u = x/N`,
//! `v = 1 − h/N`).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::collision::{cells_ceil, outward_rect, CellRect, CollisionGrid};
use crate::geometry::StageConfig;
use crate::projection::{OcclusionBox, WallRect};
use crate::schema::{BackgroundRequest, FORMAT_TAG};

pub const DEFAULT_IMAGE_SIZE: u32 = 512;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackgroundError {
    #[error("background request '{label}': no free {width}x{height} wall area outside occlusions")]
    NoSpace { label: String, width: f64, height: f64 },
    #[error("background request '{label}': {detail}")]
    Invalid { label: String, detail: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WallBox {
    pub label: String,
    pub rect: WallRect,
}

/// Region in normalised image coordinates `[x0, y0, x1, y1]`, top-left origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub label: String,
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackgroundSpec {
    pub format: String,
    pub prompt_text: String,
    pub image_size_hint: u32,
    pub regions: Vec<Region>,
}

impl BackgroundSpec {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("background spec serializes");
        s.push('\n');
        s
    }

    /// Maps regions back to wall centimetres.
    pub fn wall_boxes(&self, stage_size: f64) -> Vec<WallBox> {
        self.regions
            .iter()
            .map(|r| {
                let [u0, v0, u1, v1] = r.bbox;
                WallBox {
                    label: r.label.clone(),
                    rect: WallRect {
                        x0: u0 * stage_size,
                        x1: u1 * stage_size,
                        h0: (1.0 - v1) * stage_size,
                        h1: (1.0 - v0) * stage_size,
                    },
                }
            })
            .collect()
    }
}

/// Seats each request, in input order, on a wall grid with every occlusion
/// box pre-marked.
pub fn allocate_background(
    requests: &[BackgroundRequest],
    occlusions: &[OcclusionBox],
    cfg: &StageConfig,
    cell_size: f64,
) -> Result<Vec<WallBox>, BackgroundError> {
    let n = cfg.stage_size;
    let mut wall = CollisionGrid::covering(n, n, cell_size);
    let marks: Vec<CellRect> = occlusions
        .iter()
        .filter_map(|o| outward_rect(&wall, (o.wall_x[0], o.wall_h[0]), (o.wall_x[1], o.wall_h[1])))
        .collect();
    wall.mark_rects(&marks).expect("clipped rects are in bounds");

    let centre = (wall.width() as i64 / 2, wall.height() as i64 / 2);
    let mut placed = Vec::with_capacity(requests.len());
    for r in requests {
        let ok = |v: f64| v.is_finite() && v > 0.0 && v <= n;
        if !ok(r.width) || !ok(r.height) {
            return Err(BackgroundError::Invalid {
                label: r.label.clone(),
                detail: format!("dims must be in (0, {n}]"),
            });
        }
        let size = (cells_ceil(r.width, cell_size), cells_ceil(r.height, cell_size));
        let (cx, cy) = wall.find_free_rect(size, centre).ok_or_else(|| BackgroundError::NoSpace {
            label: r.label.clone(),
            width: r.width,
            height: r.height,
        })?;
        wall.mark_rect(CellRect::new(cx, cy, size.0, size.1))
            .expect("search result is in bounds");
        let (x0, h0) = (cx as f64 * cell_size, cy as f64 * cell_size);
        placed.push(WallBox {
            label: r.label.clone(),
            rect: WallRect {
                x0,
                x1: x0 + r.width,
                h0,
                h1: h0 + r.height,
            },
        });
    }
    Ok(placed)
}

fn fmt_box(b: &[f64; 4]) -> String {
    format!("[{:.3},{:.3},{:.3},{:.3}]", b[0], b[1], b[2], b[3])
}

/// Prompt text and normalised regions for an external layout-controlled
/// image generator.
pub fn emit_background_spec(imagery: &str, placed: &[WallBox], cfg: &StageConfig, image_size_hint: u32) -> BackgroundSpec {
    let n = cfg.stage_size;
    let regions: Vec<Region> = placed
        .iter()
        .map(|b| Region {
            label: b.label.clone(),
            bbox: [b.rect.x0 / n, 1.0 - b.rect.h1 / n, b.rect.x1 / n, 1.0 - b.rect.h0 / n],
        })
        .collect();
    let imagery = imagery.trim().trim_end_matches('.');
    let prompt_text = if regions.is_empty() {
        imagery.to_string()
    } else {
        let items: Vec<String> = regions.iter().map(|r| format!("{}@{}", r.label, fmt_box(&r.bbox))).collect();
        let lead = if imagery.is_empty() { String::new() } else { format!("{imagery}. ") };
        format!("{lead}Background elements: {}", items.join("; "))
    };
    BackgroundSpec {
        format: FORMAT_TAG.to_string(),
        prompt_text,
        image_size_hint,
        regions,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(label: &str, w: f64, h: f64) -> BackgroundRequest {
        BackgroundRequest {
            label: label.into(),
            width: w,
            height: h,
        }
    }

    fn occ(x0: f64, x1: f64, h0: f64, h1: f64) -> OcclusionBox {
        OcclusionBox {
            entity_id: "e".into(),
            wall_x: [x0, x1],
            wall_h: [h0, h1],
        }
    }

    #[test]
    fn unobstructed_request_is_centred() {
        let cfg = StageConfig::default();
        let out = allocate_background(&[req("moon", 200.0, 100.0)], &[], &cfg, 1.0).unwrap();
        assert_eq!(out[0].rect, WallRect { x0: 400.0, x1: 600.0, h0: 450.0, h1: 550.0 });
    }

    #[test]
    fn fully_occluded_wall_has_no_space() {
        let cfg = StageConfig::default();
        let err = allocate_background(&[req("moon", 10.0, 10.0)], &[occ(0.0, 1000.0, 0.0, 1000.0)], &cfg, 1.0).unwrap_err();
        assert!(matches!(err, BackgroundError::NoSpace { ref label, .. } if label == "moon"));
    }

    #[test]
    fn requests_avoid_central_occlusion_and_each_other() {
        let cfg = StageConfig::default();
        let o = occ(350.0, 650.0, 0.0, 600.0);
        let out = allocate_background(&[req("a", 200.0, 200.0), req("b", 200.0, 200.0)], &[o.clone()], &cfg, 1.0).unwrap();
        assert_eq!(out.len(), 2);
        for b in &out {
            assert_eq!(b.rect.intersection_area(&o.rect()), 0.0);
        }
        assert_eq!(out[0].rect.intersection_area(&out[1].rect), 0.0);
    }

    #[test]
    fn oversize_request_is_invalid() {
        let cfg = StageConfig::default();
        assert!(matches!(
            allocate_background(&[req("x", 1200.0, 10.0)], &[], &cfg, 1.0),
            Err(BackgroundError::Invalid { .. })
        ));
    }

    #[test]
    fn normalisation_flips_vertically() {
        let cfg = StageConfig::default();
        let b = WallBox {
            label: "sky".into(),
            rect: WallRect { x0: 0.0, x1: 500.0, h0: 500.0, h1: 1000.0 },
        };
        let spec = emit_background_spec("A stormy night.", std::slice::from_ref(&b), &cfg, 512);
        assert_eq!(spec.regions[0].bbox, [0.0, 0.0, 0.5, 0.5]);
        assert_eq!(spec.prompt_text, "A stormy night. Background elements: sky@[0.000,0.000,0.500,0.500]");
        assert_eq!(spec.wall_boxes(1000.0), vec![b]);
    }

    #[test]
    fn empty_placement_gives_prompt_only() {
        let spec = emit_background_spec("Dawn over the sea", &[], &StageConfig::default(), 512);
        assert_eq!(spec.prompt_text, "Dawn over the sea");
        assert!(spec.regions.is_empty());
    }
}
