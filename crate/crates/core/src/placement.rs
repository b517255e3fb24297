//! Foreground placement.
//!
//! Anchors arrive with explicit boxes and are validated (or re-seated in
//! repair mode). Everything else is positioned by searching the collision
//! grids: the floor grid for `on_floor_near`, an anchor's face grid for
//! `on_surface` and its top grid for `on_top`. Every candidate must also be
//! inside the stage and volume-disjoint from all placed boxes, so engine
//! layouts never go out of bounds and never overlap.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::collision::{cell_floor, cells_ceil, outward_rect, CollisionGrid, PrefixMode, SearchOrder, SurfaceMaps};
use crate::geometry::{intersection_volume, Aabb, GeometryError, StageConfig};
use crate::schema::{
    EntityKind, EntitySpec, Face, GroundTruthLayout, LayoutRecord, RelationMode, SceneSpec, SchemaError, FORMAT_TAG,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlacementError {
    #[error("anchor validation failed: {}", .0.join("; "))]
    Anchors(Vec<String>),
    #[error("entity '{id}': no free space: {detail}")]
    NoSpace { id: String, detail: String },
    #[error("entity '{id}': does not fit: {detail}")]
    Fit { id: String, detail: String },
    #[error("entity '{id}': out of bounds: {detail}")]
    Bounds { id: String, detail: String },
    #[error("entity '{id}': {detail}")]
    Invalid { id: String, detail: String },
    #[error("stage config: {0}")]
    Config(#[from] GeometryError),
    #[error(transparent)]
    Schema(#[from] SchemaError),
}

impl PlacementError {
    /// Id of the entity the error is about, when there is a single one.
    pub fn entity_id(&self) -> Option<&str> {
        match self {
            PlacementError::NoSpace { id, .. }
            | PlacementError::Fit { id, .. }
            | PlacementError::Bounds { id, .. }
            | PlacementError::Invalid { id, .. } => Some(id),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorMode {
    /// Out-of-bounds or colliding anchors are errors.
    #[default]
    Strict,
    /// Offending anchors are re-seated at the nearest free floor position.
    Repair,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlacementOptions {
    pub cell_size: f64,
    pub anchor_mode: AnchorMode,
    pub prefix_mode: PrefixMode,
    /// Defaults to the scene title.
    pub stage_id: Option<String>,
}

impl Default for PlacementOptions {
    fn default() -> Self {
        PlacementOptions {
            cell_size: 1.0,
            anchor_mode: AnchorMode::Strict,
            prefix_mode: PrefixMode::Incremental,
            stage_id: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlacedEntity {
    pub spec: EntitySpec,
    pub bbox: Aabb,
    pub supported_by: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageLayout {
    pub stage_id: String,
    pub entities: Vec<PlacedEntity>,
    pub config: StageConfig,
    /// Human-readable notes about repairs made while placing.
    pub notes: Vec<String>,
}

impl StageLayout {
    pub fn boxes(&self) -> Vec<Aabb> {
        self.entities.iter().map(|e| e.bbox).collect()
    }

    pub fn get(&self, id: &str) -> Option<&PlacedEntity> {
        self.entities.iter().find(|e| e.spec.id == id)
    }

    /// Layout file document: the ground-truth format plus `id`, `kind` and
    /// `supported_by` per entity.
    pub fn to_file(&self) -> GroundTruthLayout {
        GroundTruthLayout {
            format: FORMAT_TAG.to_string(),
            stage_id: self.stage_id.clone(),
            stage_size: Some(self.config.stage_size),
            entities: self
                .entities
                .iter()
                .map(|e| LayoutRecord {
                    id: Some(e.spec.id.clone()),
                    category: e.spec.category.clone(),
                    kind: Some(e.spec.kind),
                    bbox: e.bbox,
                    supported_by: e.supported_by.clone(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        self.to_file().to_json()
    }
}

/// Mutable placement state for one stage: the floor grid, one set of face
/// grids per anchor and everything placed so far.
#[derive(Debug, Clone)]
pub struct LayoutState {
    cfg: StageConfig,
    cell: f64,
    floor: CollisionGrid,
    surfaces: HashMap<String, SurfaceMaps>,
    placed: Vec<PlacedEntity>,
    index: HashMap<String, usize>,
    notes: Vec<String>,
}

impl LayoutState {
    pub fn new(cfg: &StageConfig, opts: &PlacementOptions) -> Result<Self, PlacementError> {
        cfg.validate()?;
        if !(opts.cell_size.is_finite() && opts.cell_size > 0.0) {
            return Err(GeometryError::Config("cell_size must be > 0".into()).into());
        }
        let n = cells_ceil(cfg.stage_size, opts.cell_size);
        Ok(LayoutState {
            cfg: cfg.clone(),
            cell: opts.cell_size,
            floor: CollisionGrid::with_mode(n, n, opts.cell_size, opts.prefix_mode),
            surfaces: HashMap::new(),
            placed: Vec::new(),
            index: HashMap::new(),
            notes: Vec::new(),
        })
    }

    pub fn floor(&self) -> &CollisionGrid {
        &self.floor
    }

    pub fn surfaces(&self, anchor_id: &str) -> Option<&SurfaceMaps> {
        self.surfaces.get(anchor_id)
    }

    pub fn placed(&self) -> &[PlacedEntity] {
        &self.placed
    }

    pub fn into_layout(self, stage_id: impl Into<String>) -> StageLayout {
        StageLayout {
            stage_id: stage_id.into(),
            entities: self.placed,
            config: self.cfg,
            notes: self.notes,
        }
    }

    /// In the stage and volume-disjoint from everything placed.
    fn fits(&self, b: &Aabb) -> bool {
        b.is_within(&self.cfg.stage_box()) && self.placed.iter().all(|p| intersection_volume(b, &p.bbox).cm3() == 0.0)
    }

    fn mark_floor(&mut self, b: &Aabb) {
        if let Some(r) = outward_rect(&self.floor, (b.x0, b.y0), (b.x1, b.y1)) {
            self.floor.mark_rect(r).expect("clipped rect is in bounds");
        }
    }

    fn commit(&mut self, entity: PlacedEntity) -> PlacedEntity {
        self.index.insert(entity.spec.id.clone(), self.placed.len());
        self.placed.push(entity.clone());
        entity
    }

    fn anchor(&self, spec: &EntitySpec, anchor_id: &str) -> Result<Aabb, PlacementError> {
        match self.index.get(anchor_id).map(|&i| &self.placed[i]) {
            Some(p) if p.spec.kind == EntityKind::Anchor => Ok(p.bbox),
            Some(_) => Err(PlacementError::Invalid {
                id: spec.id.clone(),
                detail: format!("'{anchor_id}' is not an anchor"),
            }),
            None => Err(PlacementError::Invalid {
                id: spec.id.clone(),
                detail: format!("anchor '{anchor_id}' has not been placed"),
            }),
        }
    }

    fn dims(spec: &EntitySpec) -> Result<[f64; 3], PlacementError> {
        spec.dims.map(|d| d.0).ok_or_else(|| PlacementError::Invalid {
            id: spec.id.clone(),
            detail: format!("dims required for {}", spec.kind),
        })
    }

    fn floor_cell(&self, v: f64) -> i64 {
        cell_floor(v, self.cell)
    }

    /// Checks anchors against the stage and each other, then seats them.
    pub fn validate_anchors(&mut self, specs: &[EntitySpec], mode: AnchorMode) -> Result<Vec<PlacedEntity>, PlacementError> {
        let n = self.cfg.stage_size;
        let mut violations = Vec::new();
        let mut accepted: Vec<(usize, Aabb)> = Vec::new();
        let mut rejected: Vec<usize> = Vec::new();
        for (i, spec) in specs.iter().enumerate() {
            if spec.kind != EntityKind::Anchor {
                return Err(PlacementError::Invalid {
                    id: spec.id.clone(),
                    detail: format!("expected an anchor, found {}", spec.kind),
                });
            }
            let b = spec.anchor_box.ok_or_else(|| PlacementError::Invalid {
                id: spec.id.clone(),
                detail: "anchor_box required for anchor".into(),
            })?;
            b.validate().map_err(|g| PlacementError::Invalid {
                id: spec.id.clone(),
                detail: g.to_string(),
            })?;
            let mut rules = Vec::new();
            for (name, v, bad) in [
                ("x0", b.x0, b.x0 < 0.0),
                ("y0", b.y0, b.y0 < 0.0),
                ("h0", b.h0, b.h0 < 0.0),
            ] {
                if bad {
                    rules.push(format!("out of bounds: {name} < 0 ({v})"));
                }
            }
            for (name, v) in [("x1", b.x1), ("y1", b.y1), ("h1", b.h1)] {
                if v > n {
                    rules.push(format!("out of bounds: {name} > {n}"));
                }
            }
            for (j, other) in &accepted {
                if intersection_volume(&b, other).cm3() > 0.0 {
                    rules.push(format!("collides with '{}'", specs[*j].id));
                }
            }
            if rules.is_empty() {
                accepted.push((i, b));
            } else {
                for r in rules {
                    violations.push(format!("'{}': {r}", spec.id));
                }
                rejected.push(i);
            }
        }
        if mode == AnchorMode::Strict && !violations.is_empty() {
            return Err(PlacementError::Anchors(violations));
        }
        let mut seats: Vec<(usize, Aabb)> = accepted.clone();
        for (_, b) in &accepted {
            self.mark_floor(b);
        }
        // Accepted anchors go in first so repairs see them as obstacles.
        let mut out = Vec::new();
        for &(i, b) in &accepted {
            out.push(self.seat_anchor(&specs[i], b));
        }
        for i in rejected {
            let spec = &specs[i];
            let b = self.reseat_anchor(spec, spec.anchor_box.expect("checked above"))?;
            self.notes.push(format!(
                "anchor '{}' re-seated to left:[{}, {}] right:[{}, {}] h:[{}, {}]",
                spec.id, b.x0, b.y0, b.x1, b.y1, b.h0, b.h1
            ));
            self.mark_floor(&b);
            seats.push((i, b));
            out.push(self.seat_anchor(spec, b));
        }
        // Return in file order.
        let order: HashMap<&str, usize> = specs.iter().enumerate().map(|(i, s)| (s.id.as_str(), i)).collect();
        out.sort_by_key(|p| order[p.spec.id.as_str()]);
        Ok(out)
    }

    fn seat_anchor(&mut self, spec: &EntitySpec, b: Aabb) -> PlacedEntity {
        self.surfaces
            .insert(spec.id.clone(), SurfaceMaps::for_extents(b.extents(), self.cell));
        self.commit(PlacedEntity {
            spec: spec.clone(),
            bbox: b,
            supported_by: None,
        })
    }

    fn reseat_anchor(&self, spec: &EntitySpec, b: Aabb) -> Result<Aabb, PlacementError> {
        let n = self.cfg.stage_size;
        let [l, w, ht] = b.extents();
        let no_space = |detail: String| PlacementError::NoSpace {
            id: spec.id.clone(),
            detail,
        };
        if ht > n {
            return Err(no_space(format!("height {ht} exceeds stage size {n}")));
        }
        // Keep the height range unless it leaves the stage.
        let h0 = b.h0.clamp(0.0, n - ht);
        let size = (cells_ceil(l, self.cell), cells_ceil(w, self.cell));
        let [cx, cy, _] = b.center();
        let preferred = (self.floor_cell(cx), self.floor_cell(cy));
        let order = SearchOrder::Chebyshev {
            target2: (2 * preferred.0, 2 * preferred.1),
        };
        let cell = self.cell;
        let at = |x: usize, y: usize| Aabb {
            x0: x as f64 * cell,
            y0: y as f64 * cell,
            x1: x as f64 * cell + l,
            y1: y as f64 * cell + w,
            h0,
            h1: h0 + ht,
        };
        self.floor
            .find_free_rect_where(size, order, |x, y| self.fits(&at(x, y)))
            .map(|(x, y)| at(x, y))
            .ok_or_else(|| no_space(format!("no free {l}x{w} floor area to re-seat anchor")))
    }

    /// Seats `spec` on the floor at the free spot nearest the anchor's
    /// footprint centre (or the stage centre without an anchor).
    pub fn place_on_floor_near(&mut self, spec: &EntitySpec, anchor_id: Option<&str>) -> Result<PlacedEntity, PlacementError> {
        let [l, w, ht] = Self::dims(spec)?;
        let centre = match anchor_id {
            Some(a) => {
                let c = self.anchor(spec, a)?.center();
                (c[0], c[1])
            }
            None => (0.5 * self.cfg.stage_size, 0.5 * self.cfg.stage_size),
        };
        let preferred = (self.floor_cell(centre.0), self.floor_cell(centre.1));
        let order = SearchOrder::Chebyshev {
            target2: (2 * preferred.0, 2 * preferred.1),
        };
        let size = (cells_ceil(l, self.cell), cells_ceil(w, self.cell));
        let cell = self.cell;
        let at = |x: usize, y: usize| Aabb {
            x0: x as f64 * cell,
            y0: y as f64 * cell,
            x1: x as f64 * cell + l,
            y1: y as f64 * cell + w,
            h0: 0.0,
            h1: ht,
        };
        let (x, y) = self
            .floor
            .find_free_rect_where(size, order, |x, y| self.fits(&at(x, y)))
            .ok_or_else(|| PlacementError::NoSpace {
                id: spec.id.clone(),
                detail: format!("no free {l}x{w} floor area"),
            })?;
        let b = at(x, y);
        self.mark_floor(&b);
        Ok(self.commit(PlacedEntity {
            spec: spec.clone(),
            bbox: b,
            supported_by: None,
        }))
    }

    /// Hangs `spec` on one face of an anchor, centred as close as possible to
    /// its mount height.
    pub fn place_on_surface(&mut self, spec: &EntitySpec, anchor_id: &str) -> Result<PlacedEntity, PlacementError> {
        let [l, w, ht] = Self::dims(spec)?;
        let a = self.anchor(spec, anchor_id)?;
        let rel = spec.relation.as_ref();
        let (Some(face), Some(mount)) = (rel.and_then(|r| r.face), rel.and_then(|r| r.mount_height)) else {
            return Err(PlacementError::Invalid {
                id: spec.id.clone(),
                detail: "on_surface requires face and mount_height".into(),
            });
        };
        if mount > a.h1 {
            return Err(PlacementError::Bounds {
                id: spec.id.clone(),
                detail: format!("mount_height {mount} above top of '{anchor_id}' ({})", a.h1),
            });
        }
        if mount < a.h0 {
            return Err(PlacementError::Bounds {
                id: spec.id.clone(),
                detail: format!("mount_height {mount} below base of '{anchor_id}' ({})", a.h0),
            });
        }
        let cell = self.cell;
        let maps = &self.surfaces[anchor_id];
        let grid = match face {
            Face::Front => &maps.front,
            Face::Left => &maps.left,
            Face::Right => &maps.right,
        };
        let order = SearchOrder::RowFirst {
            target2: (grid.width() as f64, 2.0 * (mount - a.h0) / cell),
        };
        let size = (cells_ceil(l, cell), cells_ceil(ht, cell));
        let at = |col: usize, row: usize| {
            let u = col as f64 * cell;
            let h0 = a.h0 + row as f64 * cell;
            let (h0, h1) = (h0, h0 + ht);
            match face {
                Face::Front => Aabb { x0: a.x0 + u, x1: a.x0 + u + l, y0: a.y0 - w, y1: a.y0, h0, h1 },
                Face::Left => Aabb { x0: a.x0 - w, x1: a.x0, y0: a.y0 + u, y1: a.y0 + u + l, h0, h1 },
                Face::Right => Aabb { x0: a.x1, x1: a.x1 + w, y0: a.y0 + u, y1: a.y0 + u + l, h0, h1 },
            }
        };
        let (col, row) = grid
            .find_free_rect_where(size, order, |c, r| self.fits(&at(c, r)))
            .ok_or_else(|| PlacementError::NoSpace {
                id: spec.id.clone(),
                detail: format!("no free {l}x{ht} region on {face:?} face of '{anchor_id}'"),
            })?;
        let b = at(col, row);
        let maps = self.surfaces.get_mut(anchor_id).expect("anchor has maps");
        let grid = match face {
            Face::Front => &mut maps.front,
            Face::Left => &mut maps.left,
            Face::Right => &mut maps.right,
        };
        grid.mark_rect(crate::collision::CellRect::new(col, row, size.0, size.1))
            .expect("search result is in bounds");
        Ok(self.commit(PlacedEntity {
            spec: spec.clone(),
            bbox: b,
            supported_by: Some(anchor_id.to_string()),
        }))
    }

    /// Stands `spec` on the top face of `supporter_id`, nearest its centre.
    pub fn place_on_top(&mut self, spec: &EntitySpec, supporter_id: &str) -> Result<PlacedEntity, PlacementError> {
        let [l, w, ht] = Self::dims(spec)?;
        let s = self.anchor(spec, supporter_id)?;
        let cell = self.cell;
        let size = (cells_ceil(l, cell), cells_ceil(w, cell));
        let grid = &self.surfaces[supporter_id].top;
        if size.0 > grid.width() || size.1 > grid.height() || l > s.length() || w > s.width() {
            return Err(PlacementError::Fit {
                id: spec.id.clone(),
                detail: format!(
                    "footprint {l}x{w} larger than top face of '{supporter_id}' ({}x{})",
                    s.length(),
                    s.width()
                ),
            });
        }
        let order = SearchOrder::Chebyshev {
            target2: (grid.width() as i64, grid.height() as i64),
        };
        let at = |x: usize, y: usize| Aabb {
            x0: s.x0 + x as f64 * cell,
            y0: s.y0 + y as f64 * cell,
            x1: s.x0 + x as f64 * cell + l,
            y1: s.y0 + y as f64 * cell + w,
            h0: s.h1,
            h1: s.h1 + ht,
        };
        // Positions on the footprint-sized lattice from the face corner come
        // first so identical items tile the top without slivers.
        let on_lattice = |x: usize, y: usize| x % size.0 == 0 && y % size.1 == 0;
        let (x, y) = grid
            .find_free_rect_where(size, order, |x, y| on_lattice(x, y) && self.fits(&at(x, y)))
            .or_else(|| grid.find_free_rect_where(size, order, |x, y| self.fits(&at(x, y))))
            .ok_or_else(|| PlacementError::NoSpace {
                id: spec.id.clone(),
                detail: format!("no free {l}x{w} area on top of '{supporter_id}'"),
            })?;
        let b = at(x, y);
        self.surfaces
            .get_mut(supporter_id)
            .expect("anchor has maps")
            .top
            .mark_rect(crate::collision::CellRect::new(x, y, size.0, size.1))
            .expect("search result is in bounds");
        Ok(self.commit(PlacedEntity {
            spec: spec.clone(),
            bbox: b,
            supported_by: Some(supporter_id.to_string()),
        }))
    }

    /// Dispatches a non-anchor or ornament on its relation.
    pub fn place_entity(&mut self, spec: &EntitySpec) -> Result<PlacedEntity, PlacementError> {
        let rel = spec.relation.as_ref().ok_or_else(|| PlacementError::Invalid {
            id: spec.id.clone(),
            detail: format!("relation required for {}", spec.kind),
        })?;
        let anchor = spec.anchor_ref.as_deref();
        let need_anchor = || {
            anchor.ok_or_else(|| PlacementError::Invalid {
                id: spec.id.clone(),
                detail: format!("anchor_ref required for {:?}", rel.mode),
            })
        };
        match rel.mode {
            RelationMode::OnFloorNear => self.place_on_floor_near(spec, anchor),
            RelationMode::OnSurface => self.place_on_surface(spec, need_anchor()?),
            RelationMode::OnTop => self.place_on_top(spec, need_anchor()?),
        }
    }
}

/// Standalone anchor check on a fresh stage.
pub fn validate_anchors(
    specs: &[EntitySpec],
    cfg: &StageConfig,
    mode: AnchorMode,
) -> Result<Vec<PlacedEntity>, PlacementError> {
    let mut state = LayoutState::new(cfg, &PlacementOptions::default())?;
    state.validate_anchors(specs, mode)
}

/// Places a whole scene: anchors, then non-anchors, then ornaments, each in
/// file order.
pub fn place_scene(spec: &SceneSpec, cfg: &StageConfig, opts: &PlacementOptions) -> Result<StageLayout, PlacementError> {
    spec.validate()?;
    let mut state = LayoutState::new(cfg, opts)?;
    let of_kind = |k: EntityKind| spec.entities.iter().filter(move |e| e.kind == k);
    let anchors: Vec<EntitySpec> = of_kind(EntityKind::Anchor).cloned().collect();
    state.validate_anchors(&anchors, opts.anchor_mode)?;
    for e in of_kind(EntityKind::NonAnchor).chain(of_kind(EntityKind::Ornament)) {
        state.place_entity(e)?;
    }
    let stage_id = opts.stage_id.clone().unwrap_or_else(|| spec.title.clone());
    Ok(state.into_layout(stage_id))
}
