//! Occupancy grids with a summed-area table for O(1) free-rectangle queries.
//!
//! One grid covers the stage floor; each anchor carries four more for its
//! front, left, right and top faces (see [`SurfaceMaps`]). Cell `(x, y)` is
//! column `x`, row `y`.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("rect {rect} exceeds {width}x{height} grid")]
pub struct BoundsError {
    pub rect: CellRect,
    pub width: usize,
    pub height: usize,
}

/// Half-open cell rectangle `[x, x+w) × [y, y+h)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CellRect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl CellRect {
    pub fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        CellRect { x, y, w, h }
    }

    pub fn x1(&self) -> usize {
        self.x + self.w
    }

    pub fn y1(&self) -> usize {
        self.y + self.h
    }

    pub fn overlaps(&self, o: &CellRect) -> bool {
        self.x < o.x1() && o.x < self.x1() && self.y < o.y1() && o.y < self.y1()
    }
}

impl fmt::Display for CellRect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{})x[{},{})", self.x, self.x1(), self.y, self.y1())
    }
}

/// How the summed-area table is kept current after a mark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PrefixMode {
    /// Recompute only the rows at and below the first dirty row.
    #[default]
    Incremental,
    /// Rebuild the whole table after every mutation. Reference path for
    /// differential tests.
    Naive,
}

/// Candidate ordering for free-rectangle search. Targets are in doubled cell
/// units so half-cell centres stay integral: a rect at `x` of width `w` has
/// doubled centre `2x + w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SearchOrder {
    /// Ascending Chebyshev distance of the rect centre from the target, then
    /// ascending x, then ascending y.
    Chebyshev { target2: (i64, i64) },
    /// Nearest row first (vertical centre distance), then horizontal centre
    /// distance, then ascending x, then ascending y.
    RowFirst { target2: (f64, f64) },
}

#[derive(Debug, Clone)]
pub struct CollisionGrid {
    width: usize,
    height: usize,
    cell_size: f64,
    occupancy: Vec<u8>,
    /// `(height + 1) × (width + 1)`, row-major; entry `[y][x]` counts occupied
    /// cells in columns `< x` of rows `< y`.
    prefix: Vec<u32>,
    mode: PrefixMode,
}

impl CollisionGrid {
    pub fn new(width: usize, height: usize, cell_size: f64) -> Self {
        Self::with_mode(width, height, cell_size, PrefixMode::Incremental)
    }

    pub fn with_mode(width: usize, height: usize, cell_size: f64, mode: PrefixMode) -> Self {
        CollisionGrid {
            width,
            height,
            cell_size,
            occupancy: vec![0; width * height],
            prefix: vec![0; (width + 1) * (height + 1)],
            mode,
        }
    }

    /// Grid covering `extent_w × extent_h` cm, rounded up to whole cells.
    pub fn covering(extent_w: f64, extent_h: f64, cell_size: f64) -> Self {
        Self::new(cells_ceil(extent_w, cell_size), cells_ceil(extent_h, cell_size), cell_size)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn mode(&self) -> PrefixMode {
        self.mode
    }

    pub fn cell(&self, x: usize, y: usize) -> bool {
        self.occupancy[y * self.width + x] != 0
    }

    pub fn prefix_at(&self, x: usize, y: usize) -> u32 {
        self.prefix[y * (self.width + 1) + x]
    }

    pub fn occupied_total(&self) -> usize {
        self.prefix_at(self.width, self.height) as usize
    }

    fn check(&self, r: &CellRect) -> Result<(), BoundsError> {
        if r.x1() > self.width || r.y1() > self.height {
            return Err(BoundsError {
                rect: *r,
                width: self.width,
                height: self.height,
            });
        }
        Ok(())
    }

    pub fn mark_rect(&mut self, rect: CellRect) -> Result<(), BoundsError> {
        self.mark_rects(std::slice::from_ref(&rect))
    }

    /// Marks several rects and refreshes the prefix table once. Nothing is
    /// marked if any rect is out of bounds.
    pub fn mark_rects(&mut self, rects: &[CellRect]) -> Result<(), BoundsError> {
        for r in rects {
            self.check(r)?;
        }
        let mut first_dirty = None::<usize>;
        for r in rects.iter().filter(|r| r.w > 0 && r.h > 0) {
            for y in r.y..r.y1() {
                self.occupancy[y * self.width + r.x..y * self.width + r.x1()].fill(1);
            }
            first_dirty = Some(first_dirty.map_or(r.y, |d| d.min(r.y)));
        }
        if let Some(row) = first_dirty {
            match self.mode {
                PrefixMode::Incremental => self.rebuild_from(row),
                PrefixMode::Naive => self.rebuild_from(0),
            }
        }
        Ok(())
    }

    fn rebuild_from(&mut self, row: usize) {
        let stride = self.width + 1;
        for y in row..self.height {
            let mut run = 0u32;
            for x in 0..self.width {
                run += self.occupancy[y * self.width + x] as u32;
                self.prefix[(y + 1) * stride + x + 1] = self.prefix[y * stride + x + 1] + run;
            }
        }
    }

    /// Occupied cells inside `rect`.
    pub fn occupied_in(&self, rect: &CellRect) -> Result<u32, BoundsError> {
        self.check(rect)?;
        Ok(self.sum_unchecked(rect))
    }

    fn sum_unchecked(&self, r: &CellRect) -> u32 {
        let stride = self.width + 1;
        let (x0, y0, x1, y1) = (r.x, r.y, r.x1(), r.y1());
        self.prefix[y1 * stride + x1] + self.prefix[y0 * stride + x0]
            - self.prefix[y0 * stride + x1]
            - self.prefix[y1 * stride + x0]
    }

    pub fn is_free(&self, rect: &CellRect) -> Result<bool, BoundsError> {
        Ok(self.occupied_in(rect)? == 0)
    }

    /// Top-left cell of the nearest free `w × h` rect to `preferred`, by the
    /// Chebyshev ring order.
    pub fn find_free_rect(&self, size: (usize, usize), preferred: (i64, i64)) -> Option<(usize, usize)> {
        let order = SearchOrder::Chebyshev {
            target2: (2 * preferred.0, 2 * preferred.1),
        };
        self.find_free_rect_where(size, order, |_, _| true)
    }

    /// Like [`find_free_rect`](Self::find_free_rect) with an explicit order and
    /// an extra acceptance test applied to grid-free candidates, in order.
    pub fn find_free_rect_where(
        &self,
        size: (usize, usize),
        order: SearchOrder,
        mut accept: impl FnMut(usize, usize) -> bool,
    ) -> Option<(usize, usize)> {
        let (w, h) = size;
        if w == 0 || h == 0 || w > self.width || h > self.height {
            return None;
        }
        let free_cells = self.width * self.height - self.occupied_total();
        if free_cells < w * h {
            return None;
        }
        let mut ok = |x: usize, y: usize| self.sum_unchecked(&CellRect::new(x, y, w, h)) == 0 && accept(x, y);
        match order {
            SearchOrder::Chebyshev { target2 } => self.search_rings(w, h, target2, &mut ok),
            SearchOrder::RowFirst { target2 } => self.search_rows(w, h, target2, &mut ok),
        }
    }

    fn search_rings(
        &self,
        w: usize,
        h: usize,
        (px, py): (i64, i64),
        ok: &mut impl FnMut(usize, usize) -> bool,
    ) -> Option<(usize, usize)> {
        let (w_i, h_i) = (w as i64, h as i64);
        let max_x = (self.width - w) as i64;
        let max_y = (self.height - h) as i64;
        let dx = |x: i64| 2 * x + w_i - px;
        let dy = |y: i64| 2 * y + h_i - py;
        let d_max = dx(0).abs().max(dx(max_x).abs()).max(dy(0).abs()).max(dy(max_y).abs());
        for d in 0..=d_max {
            // x with |dx(x)| <= d
            let lo = div_ceil_i(px - w_i - d, 2).max(0);
            let hi = div_floor_i(px - w_i + d, 2).min(max_x);
            if lo > hi {
                continue;
            }
            let y_lo = div_ceil_i(py - h_i - d, 2).max(0);
            let y_hi = div_floor_i(py - h_i + d, 2).min(max_y);
            if y_lo > y_hi {
                continue;
            }
            for x in lo..=hi {
                if dx(x).abs() == d {
                    for y in y_lo..=y_hi {
                        if ok(x as usize, y as usize) {
                            return Some((x as usize, y as usize));
                        }
                    }
                } else {
                    // only the two rows at exactly |dy| = d
                    for y in [y_lo, y_hi] {
                        if dy(y).abs() == d && (y == y_lo || y_hi != y_lo) && ok(x as usize, y as usize) {
                            return Some((x as usize, y as usize));
                        }
                    }
                }
            }
        }
        None
    }

    fn search_rows(
        &self,
        w: usize,
        h: usize,
        (tx, ty): (f64, f64),
        ok: &mut impl FnMut(usize, usize) -> bool,
    ) -> Option<(usize, usize)> {
        let mut rows: Vec<usize> = (0..=self.height - h).collect();
        let row_dist = |y: usize| (2.0 * y as f64 + h as f64 - ty).abs();
        rows.sort_by(|a, b| row_dist(*a).total_cmp(&row_dist(*b)).then(a.cmp(b)));
        let mut cols: Vec<usize> = (0..=self.width - w).collect();
        let col_dist = |x: usize| (2.0 * x as f64 + w as f64 - tx).abs();
        cols.sort_by(|a, b| col_dist(*a).total_cmp(&col_dist(*b)).then(a.cmp(b)));

        let mut i = 0;
        while i < rows.len() {
            let mut j = i + 1;
            while j < rows.len() && row_dist(rows[j]) == row_dist(rows[i]) {
                j += 1;
            }
            // rows[i..j] are equidistant and sorted by y, cols by (dist, x):
            // the first hit is the minimum of (col dist, x, y).
            for &x in &cols {
                for &y in &rows[i..j] {
                    if ok(x, y) {
                        return Some((x, y));
                    }
                }
            }
            i = j;
        }
        None
    }

    /// Binary portable bitmap (P4); 1 = occupied, row 0 first.
    pub fn to_pbm(&self) -> Vec<u8> {
        let mut out = format!("P4\n{} {}\n", self.width, self.height).into_bytes();
        let row_bytes = self.width.div_ceil(8);
        for y in 0..self.height {
            let mut row = vec![0u8; row_bytes];
            for x in 0..self.width {
                if self.cell(x, y) {
                    row[x / 8] |= 0x80 >> (x % 8);
                }
            }
            out.extend_from_slice(&row);
        }
        out
    }
}

fn div_floor_i(a: i64, b: i64) -> i64 {
    a.div_euclid(b)
}

fn div_ceil_i(a: i64, b: i64) -> i64 {
    -(-a).div_euclid(b)
}

/// Cells needed to cover `extent` cm (rounded up, tolerant of float noise).
pub fn cells_ceil(extent: f64, cell_size: f64) -> usize {
    let v = extent / cell_size;
    let r = v.round();
    if (v - r).abs() < 1e-9 {
        r.max(0.0) as usize
    } else {
        v.ceil().max(0.0) as usize
    }
}

/// Cell index at or below `coord` cm.
pub fn cell_floor(coord: f64, cell_size: f64) -> i64 {
    let v = coord / cell_size;
    let r = v.round();
    if (v - r).abs() < 1e-9 {
        r as i64
    } else {
        v.floor() as i64
    }
}

/// Cell index at or above `coord` cm.
pub fn cell_ceil(coord: f64, cell_size: f64) -> i64 {
    let v = coord / cell_size;
    let r = v.round();
    if (v - r).abs() < 1e-9 {
        r as i64
    } else {
        v.ceil() as i64
    }
}

/// Outward-rounded cell rect covering `[lo0, hi0) × [lo1, hi1)` cm, clipped to
/// the grid. `None` when nothing of it falls inside.
pub fn outward_rect(grid: &CollisionGrid, lo: (f64, f64), hi: (f64, f64)) -> Option<CellRect> {
    let cs = grid.cell_size();
    let x0 = cell_floor(lo.0, cs).max(0);
    let y0 = cell_floor(lo.1, cs).max(0);
    let x1 = cell_ceil(hi.0, cs).min(grid.width() as i64);
    let y1 = cell_ceil(hi.1, cs).min(grid.height() as i64);
    (x0 < x1 && y0 < y1).then(|| CellRect::new(x0 as usize, y0 as usize, (x1 - x0) as usize, (y1 - y0) as usize))
}

/// Per-anchor face grids. For an anchor with extents `(L, W, H)`: front is
/// `L × H` (column = x offset, row = height offset), left and right are
/// `W × H` (column = y offset), top is `L × W`.
#[derive(Debug, Clone)]
pub struct SurfaceMaps {
    pub front: CollisionGrid,
    pub left: CollisionGrid,
    pub right: CollisionGrid,
    pub top: CollisionGrid,
}

impl SurfaceMaps {
    pub fn for_extents(extents: [f64; 3], cell_size: f64) -> Self {
        let [l, w, h] = extents;
        SurfaceMaps {
            front: CollisionGrid::covering(l, h, cell_size),
            left: CollisionGrid::covering(w, h, cell_size),
            right: CollisionGrid::covering(w, h, cell_size),
            top: CollisionGrid::covering(l, w, cell_size),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_free(g: &CollisionGrid, r: &CellRect) -> bool {
        (r.y..r.y1()).all(|y| (r.x..r.x1()).all(|x| !g.cell(x, y)))
    }

    #[test]
    fn mark_examples() {
        let mut g = CollisionGrid::new(100, 100, 1.0);
        g.mark_rect(CellRect::new(0, 0, 10, 10)).unwrap();
        assert_eq!(g.occupied_total(), 100);
        g.mark_rect(CellRect::new(0, 0, 10, 10)).unwrap();
        assert_eq!(g.occupied_total(), 100);
        let err = g.mark_rect(CellRect::new(95, 0, 10, 10)).unwrap_err();
        assert_eq!(err.width, 100);
        assert_eq!(g.occupied_total(), 100);
    }

    #[test]
    fn is_free_examples() {
        let mut g = CollisionGrid::new(50, 50, 1.0);
        assert!(g.is_free(&CellRect::new(3, 7, 20, 11)).unwrap());
        g.mark_rect(CellRect::new(10, 10, 1, 1)).unwrap();
        assert!(!g.is_free(&CellRect::new(5, 5, 6, 6)).unwrap());
        g.mark_rect(CellRect::new(20, 20, 5, 5)).unwrap();
        for r in [CellRect::new(25, 20, 3, 5), CellRect::new(15, 20, 5, 5), CellRect::new(20, 25, 5, 2)] {
            assert!(g.is_free(&r).unwrap());
            assert!(naive_free(&g, &r));
        }
        assert!(g.is_free(&CellRect::new(45, 45, 10, 1)).is_err());
    }

    #[test]
    fn find_free_centered_on_empty_grid() {
        let g = CollisionGrid::new(100, 100, 1.0);
        assert_eq!(g.find_free_rect((10, 10), (50, 50)), Some((45, 45)));
        // odd sizes round toward the origin
        assert_eq!(g.find_free_rect((5, 3), (50, 50)), Some((47, 48)));
    }

    #[test]
    fn find_free_below_occupied_rows() {
        let mut g = CollisionGrid::new(10, 10, 1.0);
        g.mark_rect(CellRect::new(0, 0, 10, 5)).unwrap();
        assert_eq!(g.find_free_rect((3, 3), (0, 0)), Some((0, 5)));
    }

    #[test]
    fn find_free_on_full_grid_or_oversized() {
        let mut g = CollisionGrid::new(10, 10, 1.0);
        assert_eq!(g.find_free_rect((11, 1), (0, 0)), None);
        g.mark_rect(CellRect::new(0, 0, 10, 10)).unwrap();
        assert_eq!(g.find_free_rect((1, 1), (5, 5)), None);
    }

    #[test]
    fn row_first_prefers_target_row_then_centre() {
        let mut g = CollisionGrid::new(40, 30, 1.0);
        let order = SearchOrder::RowFirst { target2: (40.0, 36.0) };
        let first = g.find_free_rect_where((8, 6), order, |_, _| true).unwrap();
        assert_eq!(first, (16, 15));
        g.mark_rect(CellRect::new(first.0, first.1, 8, 6)).unwrap();
        let second = g.find_free_rect_where((8, 6), order, |_, _| true).unwrap();
        assert_eq!(second.1, 15);
        assert_eq!(second.0, 8);
    }

    #[test]
    fn pbm_dump_layout() {
        let mut g = CollisionGrid::new(9, 2, 1.0);
        g.mark_rect(CellRect::new(0, 0, 1, 1)).unwrap();
        g.mark_rect(CellRect::new(8, 1, 1, 1)).unwrap();
        let pbm = g.to_pbm();
        assert!(pbm.starts_with(b"P4\n9 2\n"));
        assert_eq!(&pbm[pbm.len() - 4..], &[0x80, 0x00, 0x00, 0x80]);
    }

    #[test]
    fn rounding_helpers() {
        assert_eq!(cells_ceil(50.0, 1.0), 50);
        assert_eq!(cells_ceil(50.2, 1.0), 51);
        assert_eq!(cells_ceil(0.3 * 3.0, 0.3), 3);
        assert_eq!(cell_floor(-0.5, 1.0), -1);
        assert_eq!(cell_ceil(10.0000000001, 1.0), 10);
        let g = CollisionGrid::new(100, 100, 1.0);
        assert_eq!(outward_rect(&g, (9.5, -3.0), (20.2, 5.0)), Some(CellRect::new(9, 0, 12, 5)));
        assert_eq!(outward_rect(&g, (100.0, 0.0), (120.0, 5.0)), None);
    }

    #[test]
    fn surface_map_dimensions() {
        let s = SurfaceMaps::for_extents([400.0, 50.5, 300.0], 1.0);
        assert_eq!((s.front.width(), s.front.height()), (400, 300));
        assert_eq!((s.left.width(), s.left.height()), (51, 300));
        assert_eq!((s.top.width(), s.top.height()), (400, 51));
    }
}
