//! Axis-aligned geometry kernel.
//!
//! Stage coordinates are centimetres. `x` runs across the stage from the
//! audience's left to right, `y` runs from downstage (`y = 0`, nearest the
//! audience) to upstage (`y = N`, the back wall) and `h` is height above the
//! floor. Faces that only touch contribute zero volume everywhere.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Cubic centimetres in one cubic metre.
pub const CM3_PER_M3: f64 = 1.0e6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("non-finite coordinate in box")]
    NonFinite,
    #[error("{axis}0 < {axis}1 violated ({lo} >= {hi})")]
    EmptyExtent { axis: char, lo: f64, hi: f64 },
    #[error("invalid stage config: {0}")]
    Config(String),
}

/// Axis-aligned box: footprint corners `[x0, y0]`/`[x1, y1]` plus the height
/// range `[h0, h1]`.
///
/// Boxes below the floor or outside the stage are representable; that is what
/// the out-of-bound metric measures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "CornerBox", into = "CornerBox")]
pub struct Aabb {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    pub h0: f64,
    pub h1: f64,
}

/// On-disk corner representation: `left:[x0,y0]`, `right:[x1,y1]`, `h:[h0,h1]`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CornerBox {
    pub left: [f64; 2],
    pub right: [f64; 2],
    pub h: [f64; 2],
}

impl From<CornerBox> for Aabb {
    fn from(c: CornerBox) -> Self {
        Aabb {
            x0: c.left[0],
            y0: c.left[1],
            x1: c.right[0],
            y1: c.right[1],
            h0: c.h[0],
            h1: c.h[1],
        }
    }
}

impl From<Aabb> for CornerBox {
    fn from(b: Aabb) -> Self {
        CornerBox {
            left: [b.x0, b.y0],
            right: [b.x1, b.y1],
            h: [b.h0, b.h1],
        }
    }
}

impl Aabb {
    /// Builds a validated box.
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64, h0: f64, h1: f64) -> Result<Self, GeometryError> {
        let b = Aabb { x0, y0, x1, y1, h0, h1 };
        b.validate()?;
        Ok(b)
    }

    /// Box from a footprint origin and `(length, width, height)` extents.
    pub fn from_origin(x: f64, y: f64, h: f64, extents: [f64; 3]) -> Result<Self, GeometryError> {
        Self::new(x, y, x + extents[0], y + extents[1], h, h + extents[2])
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let all = [self.x0, self.y0, self.x1, self.y1, self.h0, self.h1];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        for (axis, lo, hi) in [('x', self.x0, self.x1), ('y', self.y0, self.y1), ('h', self.h0, self.h1)] {
            if lo >= hi {
                return Err(GeometryError::EmptyExtent { axis, lo, hi });
            }
        }
        Ok(())
    }

    pub fn length(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn width(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn height(&self) -> f64 {
        self.h1 - self.h0
    }

    pub fn extents(&self) -> [f64; 3] {
        [self.length(), self.width(), self.height()]
    }

    pub fn volume(&self) -> Volume {
        Volume::from_cm3(self.length() * self.width() * self.height())
    }

    pub fn min(&self) -> [f64; 3] {
        [self.x0, self.y0, self.h0]
    }

    pub fn max(&self) -> [f64; 3] {
        [self.x1, self.y1, self.h1]
    }

    /// The 8 corners as `[x, y, h]`, bottom four first.
    pub fn corners(&self) -> [[f64; 3]; 8] {
        let mut out = [[0.0; 3]; 8];
        let mut i = 0;
        for h in [self.h0, self.h1] {
            for y in [self.y0, self.y1] {
                for x in [self.x0, self.x1] {
                    out[i] = [x, y, h];
                    i += 1;
                }
            }
        }
        out
    }

    /// Overlap with positive extent on all three axes, if any.
    pub fn intersection(&self, other: &Aabb) -> Option<Aabb> {
        let b = Aabb {
            x0: self.x0.max(other.x0),
            y0: self.y0.max(other.y0),
            x1: self.x1.min(other.x1),
            y1: self.y1.min(other.y1),
            h0: self.h0.max(other.h0),
            h1: self.h1.min(other.h1),
        };
        (b.x0 < b.x1 && b.y0 < b.y1 && b.h0 < b.h1).then_some(b)
    }

    /// True when `self` lies within `other` (boundaries inclusive).
    pub fn is_within(&self, other: &Aabb) -> bool {
        self.x0 >= other.x0
            && self.y0 >= other.y0
            && self.h0 >= other.h0
            && self.x1 <= other.x1
            && self.y1 <= other.y1
            && self.h1 <= other.h1
    }

    pub fn center(&self) -> [f64; 3] {
        [
            0.5 * (self.x0 + self.x1),
            0.5 * (self.y0 + self.y1),
            0.5 * (self.h0 + self.h1),
        ]
    }

    pub fn translated(&self, dx: f64, dy: f64, dh: f64) -> Aabb {
        Aabb {
            x0: self.x0 + dx,
            y0: self.y0 + dy,
            x1: self.x1 + dx,
            y1: self.y1 + dy,
            h0: self.h0 + dh,
            h1: self.h1 + dh,
        }
    }
}

/// A non-negative volume held in cm³.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
pub struct Volume(f64);

impl Volume {
    pub const ZERO: Volume = Volume(0.0);

    /// Negative inputs (rounding residue) clamp to zero.
    pub fn from_cm3(cm3: f64) -> Self {
        Volume(cm3.max(0.0))
    }

    pub fn cm3(self) -> f64 {
        self.0
    }

    pub fn m3(self) -> f64 {
        self.0 / CM3_PER_M3
    }
}

impl std::ops::Add for Volume {
    type Output = Volume;
    fn add(self, rhs: Volume) -> Volume {
        Volume(self.0 + rhs.0)
    }
}

impl std::iter::Sum for Volume {
    fn sum<I: Iterator<Item = Volume>>(iter: I) -> Volume {
        iter.fold(Volume::ZERO, |a, b| a + b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionMode {
    #[default]
    Perspective,
    Orthographic,
}

/// Stage extents and audience geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StageConfig {
    /// Edge length `N` of the cubic stage volume, cm.
    pub stage_size: f64,
    /// Depth coordinate of the back wall plane, cm.
    pub back_wall_y: f64,
    /// Leftmost front-row viewer `[x, y, z]`, cm.
    pub audience_left: [f64; 3],
    /// Rightmost front-row viewer `[x, y, z]`, cm.
    pub audience_right: [f64; 3],
    pub eye_height: f64,
    pub projection_mode: ProjectionMode,
}

impl Default for StageConfig {
    fn default() -> Self {
        StageConfig {
            stage_size: 1000.0,
            back_wall_y: 1000.0,
            audience_left: [-100.0, -500.0, 120.0],
            audience_right: [1100.0, -500.0, 120.0],
            eye_height: 120.0,
            projection_mode: ProjectionMode::Perspective,
        }
    }
}

impl StageConfig {
    /// Default config for a stage of edge `n`; the back wall sits at `y = n`.
    pub fn with_size(n: f64) -> Self {
        StageConfig {
            stage_size: n,
            back_wall_y: n,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let err = |m: &str| Err(GeometryError::Config(m.to_string()));
        let finite = [self.stage_size, self.back_wall_y, self.eye_height]
            .iter()
            .chain(self.audience_left.iter())
            .chain(self.audience_right.iter())
            .all(|v| v.is_finite());
        if !finite {
            return err("non-finite value");
        }
        if self.stage_size <= 0.0 {
            return err("stage_size must be > 0");
        }
        if self.audience_left[1] >= 0.0 || self.audience_right[1] >= 0.0 {
            return err("audience viewers must sit in front of the stage (y < 0)");
        }
        if self.audience_left[0] > self.audience_right[0] {
            return err("audience_left.x must be <= audience_right.x");
        }
        // Front-row viewers share one row and one eye height; the analytic
        // union over viewers relies on it.
        if self.audience_left[1] != self.audience_right[1] || self.audience_left[2] != self.audience_right[2] {
            return err("audience_left and audience_right must share y and z (one front row)");
        }
        Ok(())
    }

    /// The stage volume `[0,N]³`.
    pub fn stage_box(&self) -> Aabb {
        let n = self.stage_size;
        Aabb {
            x0: 0.0,
            y0: 0.0,
            x1: n,
            y1: n,
            h0: 0.0,
            h1: n,
        }
    }
}

/// Volume of `a ∩ b`; zero for disjoint or touching boxes.
pub fn intersection_volume(a: &Aabb, b: &Aabb) -> Volume {
    let ox = a.x1.min(b.x1) - a.x0.max(b.x0);
    let oy = a.y1.min(b.y1) - a.y0.max(b.y0);
    let oh = a.h1.min(b.h1) - a.h0.max(b.h0);
    Volume::from_cm3(ox.max(0.0) * oy.max(0.0) * oh.max(0.0))
}

/// The part of `a` inside the stage cube, if it has interior overlap.
pub fn clip_to_stage(a: &Aabb, cfg: &StageConfig) -> Option<Aabb> {
    a.intersection(&cfg.stage_box())
}

pub fn out_of_bound_volume(a: &Aabb, cfg: &StageConfig) -> Volume {
    let inside = clip_to_stage(a, cfg).map(|c| c.volume().cm3()).unwrap_or(0.0);
    Volume::from_cm3(a.volume().cm3() - inside)
}

/// Sorted, deduplicated boundary coordinates along one axis.
fn compress<'a>(boxes: impl Iterator<Item = &'a Aabb>, axis: usize) -> Vec<f64> {
    let mut v: Vec<f64> = boxes.flat_map(|b| [b.min()[axis], b.max()[axis]]).collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn slab_range(coords: &[f64], lo: f64, hi: f64) -> std::ops::Range<usize> {
    // coords contains both lo and hi by construction.
    let i = coords.partition_point(|&c| c < lo);
    let j = coords.partition_point(|&c| c < hi);
    i..j
}

/// Compressed cell grid over all box boundaries with one coverage bitmask per
/// cell (bit 0: covered by set A, bit 1: covered by set B).
struct CompressedCells {
    xs: Vec<f64>,
    ys: Vec<f64>,
    hs: Vec<f64>,
    mask: Vec<u8>,
}

impl CompressedCells {
    fn build(sets: &[&[Aabb]]) -> Self {
        let all = || sets.iter().flat_map(|s| s.iter());
        let xs = compress(all(), 0);
        let ys = compress(all(), 1);
        let hs = compress(all(), 2);
        let (nx, ny, nh) = (
            xs.len().saturating_sub(1),
            ys.len().saturating_sub(1),
            hs.len().saturating_sub(1),
        );
        let mut mask = vec![0u8; nx * ny * nh];
        for (bit, set) in sets.iter().enumerate() {
            for b in set.iter() {
                for i in slab_range(&xs, b.x0, b.x1) {
                    for j in slab_range(&ys, b.y0, b.y1) {
                        let row = (i * ny + j) * nh;
                        for k in slab_range(&hs, b.h0, b.h1) {
                            mask[row + k] |= 1 << bit;
                        }
                    }
                }
            }
        }
        CompressedCells { xs, ys, hs, mask }
    }

    fn volume_where(&self, pred: impl Fn(u8) -> bool) -> f64 {
        let ny = self.ys.len().saturating_sub(1);
        let nh = self.hs.len().saturating_sub(1);
        let mut total = 0.0;
        for i in 0..self.xs.len().saturating_sub(1) {
            let dx = self.xs[i + 1] - self.xs[i];
            for j in 0..ny {
                let dxy = dx * (self.ys[j + 1] - self.ys[j]);
                let row = (i * ny + j) * nh;
                for k in 0..nh {
                    if pred(self.mask[row + k]) {
                        total += dxy * (self.hs[k + 1] - self.hs[k]);
                    }
                }
            }
        }
        total
    }
}

/// Exact volume of `(⋃ set_a) ∩ (⋃ set_b)` by coordinate compression.
pub fn union_intersection_volume(set_a: &[Aabb], set_b: &[Aabb]) -> Volume {
    if set_a.is_empty() || set_b.is_empty() {
        return Volume::ZERO;
    }
    let cells = CompressedCells::build(&[set_a, set_b]);
    Volume::from_cm3(cells.volume_where(|m| m == 0b11))
}

/// Exact volume of the union of `boxes`.
pub fn union_volume(boxes: &[Aabb]) -> Volume {
    if boxes.is_empty() {
        return Volume::ZERO;
    }
    let cells = CompressedCells::build(&[boxes]);
    Volume::from_cm3(cells.volume_where(|m| m != 0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube(x0: f64, x1: f64) -> Aabb {
        Aabb::new(x0, 0.0, x1, 100.0, 0.0, 100.0).unwrap()
    }

    #[test]
    fn intersection_examples() {
        let a = cube(0.0, 100.0);
        assert_eq!(intersection_volume(&a, &a).cm3(), 1_000_000.0);
        assert_eq!(intersection_volume(&a, &cube(100.0, 200.0)).cm3(), 0.0);
        let half = intersection_volume(&a, &cube(50.0, 150.0));
        assert_eq!(half.cm3(), 500_000.0);
        assert_eq!(half.m3(), 0.5);
    }

    #[test]
    fn clip_examples() {
        let cfg = StageConfig::default();
        let a = cube(-50.0, 50.0);
        assert_eq!(clip_to_stage(&a, &cfg), Some(cube(0.0, 50.0)));
        let inside = cube(10.0, 20.0);
        assert_eq!(clip_to_stage(&inside, &cfg), Some(inside));
        assert_eq!(clip_to_stage(&cube(1000.0, 1100.0), &cfg), None);
    }

    #[test]
    fn out_of_bound_examples() {
        let cfg = StageConfig::default();
        assert_eq!(out_of_bound_volume(&cube(-50.0, 50.0), &cfg).cm3(), 500_000.0);
        assert_eq!(out_of_bound_volume(&cube(10.0, 20.0), &cfg).cm3(), 0.0);
        let corner = Aabb::new(900.0, 900.0, 1100.0, 1100.0, 0.0, 100.0).unwrap();
        assert_eq!(out_of_bound_volume(&corner, &cfg).cm3(), 3_000_000.0);
    }

    #[test]
    fn union_intersection_single_pair_and_duplicates() {
        let a = cube(0.0, 100.0);
        let b = cube(50.0, 150.0);
        assert_eq!(union_intersection_volume(&[a], &[b]).cm3(), 500_000.0);
        assert_eq!(union_intersection_volume(&[a, a], &[b]).cm3(), 500_000.0);
        assert_eq!(union_intersection_volume(&[], &[b]).cm3(), 0.0);
        assert_eq!(union_volume(&[a, b]).cm3(), 1_500_000.0);
    }

    #[test]
    fn validation_rejects_degenerate_boxes() {
        assert!(matches!(
            Aabb::new(0.0, 0.0, 10.0, 10.0, 150.0, 0.0),
            Err(GeometryError::EmptyExtent { axis: 'h', .. })
        ));
        assert!(Aabb::new(0.0, 0.0, 0.0, 10.0, 0.0, 1.0).is_err());
        assert_eq!(Aabb::new(f64::NAN, 0.0, 1.0, 1.0, 0.0, 1.0), Err(GeometryError::NonFinite));
        // below-floor boxes are representable
        assert!(Aabb::new(0.0, 0.0, 1.0, 1.0, -5.0, 1.0).is_ok());
    }

    #[test]
    fn config_validation() {
        assert!(StageConfig::default().validate().is_ok());
        let mut c = StageConfig::default();
        c.audience_left[1] = 10.0;
        assert!(c.validate().is_err());
        let mut c = StageConfig::default();
        c.audience_left[0] = 2000.0;
        assert!(c.validate().is_err());
        let mut c = StageConfig::default();
        c.stage_size = 0.0;
        assert!(c.validate().is_err());
    }
}
