//! Brute-force reference implementations used by tests.
//!
//! Nothing here calls into the geometry, grid or projection code it checks;
//! only the plain box struct is shared.

use crate::geometry::Aabb;

/// 1 cm voxel coverage counts over `[0, side)³` for integer-coordinate boxes.
pub struct VoxelCounts {
    side: usize,
    counts: Vec<u8>,
}

fn int_range(lo: f64, hi: f64, side: usize) -> std::ops::Range<usize> {
    assert!(lo.fract() == 0.0 && hi.fract() == 0.0, "voxel oracle needs integer coordinates");
    (lo.max(0.0) as usize).min(side)..(hi.max(0.0) as usize).min(side)
}

impl VoxelCounts {
    pub fn new(boxes: &[Aabb], side: usize) -> Self {
        let mut counts = vec![0u8; side * side * side];
        for b in boxes {
            assert!(b.x0 >= 0.0 && b.y0 >= 0.0 && b.h0 >= 0.0, "voxel grid starts at 0");
            assert!(b.x1 <= side as f64 && b.y1 <= side as f64 && b.h1 <= side as f64);
            for x in int_range(b.x0, b.x1, side) {
                for y in int_range(b.y0, b.y1, side) {
                    let row = (x * side + y) * side;
                    for h in int_range(b.h0, b.h1, side) {
                        counts[row + h] += 1;
                    }
                }
            }
        }
        VoxelCounts { side, counts }
    }

    pub fn get(&self, x: usize, y: usize, h: usize) -> u8 {
        self.counts[(x * self.side + y) * self.side + h]
    }

    /// Σ over voxels of C(count, 2): the pairwise overlap volume.
    pub fn pair_overlap(&self) -> u64 {
        self.counts.iter().map(|&c| (c as u64) * (c as u64).saturating_sub(1) / 2).sum()
    }

    pub fn covered(&self) -> u64 {
        self.counts.iter().filter(|&&c| c > 0).count() as u64
    }
}

/// Voxels of `boxes` outside the cube `[0, stage)³`, in cm³.
pub fn voxel_oob(boxes: &[Aabb], stage: usize, side: usize) -> u64 {
    let v = VoxelCounts::new(boxes, side);
    let mut out = 0u64;
    for x in 0..side {
        for y in 0..side {
            for h in 0..side {
                if x >= stage || y >= stage || h >= stage {
                    out += v.get(x, y, h) as u64;
                }
            }
        }
    }
    out
}

pub fn voxel_ois(boxes: &[Aabb], side: usize) -> u64 {
    VoxelCounts::new(boxes, side).pair_overlap()
}

/// Voxels covered by at least one box of each set.
pub fn voxel_union_intersection(a: &[Aabb], b: &[Aabb], side: usize) -> u64 {
    let va = VoxelCounts::new(a, side);
    let vb = VoxelCounts::new(b, side);
    va.counts.iter().zip(&vb.counts).filter(|(p, q)| **p > 0 && **q > 0).count() as u64
}

pub fn voxel_union(a: &[Aabb], side: usize) -> u64 {
    VoxelCounts::new(a, side).covered()
}

/// Plain occupancy matrix, row-major `[y][x]`.
#[derive(Clone, Debug)]
pub struct NaiveGrid {
    pub width: usize,
    pub height: usize,
    pub cells: Vec<bool>,
}

impl NaiveGrid {
    pub fn new(width: usize, height: usize) -> Self {
        NaiveGrid {
            width,
            height,
            cells: vec![false; width * height],
        }
    }

    pub fn mark(&mut self, x: usize, y: usize, w: usize, h: usize) {
        for yy in y..y + h {
            for xx in x..x + w {
                self.cells[yy * self.width + xx] = true;
            }
        }
    }

    pub fn is_free(&self, x: usize, y: usize, w: usize, h: usize) -> bool {
        (y..y + h).all(|yy| (x..x + w).all(|xx| !self.cells[yy * self.width + xx]))
    }

    /// Every free placement, scanned exhaustively, minimised by
    /// (Chebyshev distance of centre from `preferred`, x, y).
    pub fn nearest_free(&self, w: usize, h: usize, preferred: (i64, i64)) -> Option<(usize, usize)> {
        if w > self.width || h > self.height {
            return None;
        }
        let mut best: Option<((f64, usize, usize), (usize, usize))> = None;
        for y in 0..=self.height - h {
            for x in 0..=self.width - w {
                if !self.is_free(x, y, w, h) {
                    continue;
                }
                let cx = x as f64 + w as f64 / 2.0;
                let cy = y as f64 + h as f64 / 2.0;
                let d = (cx - preferred.0 as f64).abs().max((cy - preferred.1 as f64).abs());
                let key = (d, x, y);
                if best.as_ref().is_none_or(|(k, _)| key.partial_cmp(k) == Some(std::cmp::Ordering::Less)) {
                    best = Some((key, (x, y)));
                }
            }
        }
        best.map(|(_, p)| p)
    }

    /// Minimal Chebyshev centre distance over all free placements.
    pub fn min_distance(&self, w: usize, h: usize, preferred: (f64, f64)) -> Option<f64> {
        let mut best: Option<f64> = None;
        for y in 0..=self.height.checked_sub(h)? {
            for x in 0..=self.width.checked_sub(w)? {
                if self.is_free(x, y, w, h) {
                    let d = (x as f64 + w as f64 / 2.0 - preferred.0)
                        .abs()
                        .max((y as f64 + h as f64 / 2.0 - preferred.1).abs());
                    best = Some(best.map_or(d, |b: f64| b.min(d)));
                }
            }
        }
        best
    }
}

/// Where the ray from `viewer` through `point` meets the plane `y = wall`,
/// as `(x, h)`; `None` if the ray does not travel toward the wall.
pub fn ray_to_wall(viewer: [f64; 3], point: [f64; 3], wall: f64) -> Option<(f64, f64)> {
    let dy = point[1] - viewer[1];
    if dy <= 0.0 {
        return None;
    }
    let s = (wall - viewer[1]) / dy;
    Some((viewer[0] + s * (point[0] - viewer[0]), viewer[2] + s * (point[2] - viewer[2])))
}
