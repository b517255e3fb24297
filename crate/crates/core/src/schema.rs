//! Scene-spec and ground-truth layout file formats.
//!
//! Both formats are JSON documents tagged with `"format": "stagelayout/1"`.
//! Boxes use the corner representation `left:[x0,y0]`, `right:[x1,y1]`,
//! `h:[h0,h1]` in centimetres. See `docs/formats.md` for the grammar.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Aabb, CornerBox};

pub const FORMAT_TAG: &str = "stagelayout/1";

/// Entity-count range observed in the annotated dataset.
pub const DATASET_MIN_ENTITIES: usize = 1;
pub const DATASET_MAX_ENTITIES: usize = 21;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchemaError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("{context}: {rule}")]
    Schema { context: String, rule: String },
}

impl SchemaError {
    fn schema(context: impl Into<String>, rule: impl Into<String>) -> Self {
        SchemaError::Schema {
            context: context.into(),
            rule: rule.into(),
        }
    }

    fn from_json(e: serde_json::Error) -> Self {
        SchemaError::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Anchor,
    NonAnchor,
    Ornament,
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EntityKind::Anchor => "anchor",
            EntityKind::NonAnchor => "non_anchor",
            EntityKind::Ornament => "ornament",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Facing {
    #[default]
    TowardAudience,
    Away,
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationMode {
    OnFloorNear,
    OnSurface,
    OnTop,
}

/// Anchor face used by `on_surface` placements. `front` faces the audience
/// (plane `y = y0`), `left` is the plane `x = x0`, `right` is `x = x1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Face {
    Front,
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlacementRelation {
    pub mode: RelationMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub face: Option<Face>,
    /// Absolute stage height (cm) of the mounted object's vertical centre.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mount_height: Option<f64>,
}

/// `(length, width, height)` in cm; length runs along x, width along y.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dims(pub [f64; 3]);

impl Dims {
    pub fn length(&self) -> f64 {
        self.0[0]
    }
    pub fn width(&self) -> f64 {
        self.0[1]
    }
    pub fn height(&self) -> f64 {
        self.0[2]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntitySpec {
    pub id: String,
    pub name: String,
    pub category: String,
    pub kind: EntityKind,
    #[serde(default)]
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<Dims>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor_box: Option<Aabb>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relation: Option<PlacementRelation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor_ref: Option<String>,
    #[serde(default)]
    pub facing: Facing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackgroundRequest {
    pub label: String,
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub format: String,
    pub title: String,
    #[serde(default)]
    pub imagery: String,
    pub entities: Vec<EntitySpec>,
    #[serde(default)]
    pub background_requests: Vec<BackgroundRequest>,
}

/// One entity in a ground-truth or engine-produced layout file. The `id`,
/// `kind` and `supported_by` fields are only written by the placement engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "LayoutRecordRepr", into = "LayoutRecordRepr")]
pub struct LayoutRecord {
    pub id: Option<String>,
    pub category: String,
    pub kind: Option<EntityKind>,
    pub bbox: Aabb,
    pub supported_by: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayoutRecordRepr {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    category: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kind: Option<EntityKind>,
    left: [f64; 2],
    right: [f64; 2],
    h: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    supported_by: Option<String>,
}

impl From<LayoutRecordRepr> for LayoutRecord {
    fn from(r: LayoutRecordRepr) -> Self {
        LayoutRecord {
            id: r.id,
            category: r.category,
            kind: r.kind,
            bbox: CornerBox {
                left: r.left,
                right: r.right,
                h: r.h,
            }
            .into(),
            supported_by: r.supported_by,
        }
    }
}

impl From<LayoutRecord> for LayoutRecordRepr {
    fn from(r: LayoutRecord) -> Self {
        let c = CornerBox::from(r.bbox);
        LayoutRecordRepr {
            id: r.id,
            category: r.category,
            kind: r.kind,
            left: c.left,
            right: c.right,
            h: c.h,
            supported_by: r.supported_by,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthLayout {
    pub format: String,
    pub stage_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage_size: Option<f64>,
    pub entities: Vec<LayoutRecord>,
}

impl GroundTruthLayout {
    pub fn boxes(&self) -> Vec<Aabb> {
        self.entities.iter().map(|e| e.bbox).collect()
    }

    pub fn categories(&self) -> Vec<String> {
        self.entities.iter().map(|e| e.category.clone()).collect()
    }

    /// Dataset-range findings that do not make the file invalid.
    pub fn warnings(&self) -> Vec<String> {
        let n = self.entities.len();
        if n > DATASET_MAX_ENTITIES {
            vec![format!(
                "entity count {n} outside dataset range {DATASET_MIN_ENTITIES}–{DATASET_MAX_ENTITIES}"
            )]
        } else {
            Vec::new()
        }
    }
}

fn check_format(tag: &str) -> Result<(), SchemaError> {
    if tag != FORMAT_TAG {
        return Err(SchemaError::schema("format", format!("expected \"{FORMAT_TAG}\", found \"{tag}\"")));
    }
    Ok(())
}

fn decode<T: serde::de::DeserializeOwned>(bytes: &[u8]) -> Result<T, SchemaError> {
    let text = std::str::from_utf8(bytes).map_err(|e| {
        let prefix = &bytes[..e.valid_up_to()];
        let line = prefix.iter().filter(|&&b| b == b'\n').count() + 1;
        let column = prefix.iter().rev().take_while(|&&b| b != b'\n').count() + 1;
        SchemaError::Syntax {
            line,
            column,
            message: "invalid utf-8".into(),
        }
    })?;
    serde_json::from_str(text).map_err(SchemaError::from_json)
}

fn positive_dims(d: &Dims) -> bool {
    d.0.iter().all(|v| v.is_finite() && *v > 0.0)
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SchemaError> {
        check_format(&self.format)?;
        if self.entities.is_empty() {
            return Err(SchemaError::schema("entities", "at least one entity required"));
        }
        let mut kinds: HashMap<&str, EntityKind> = HashMap::new();
        for (i, e) in self.entities.iter().enumerate() {
            if e.id.is_empty() {
                return Err(SchemaError::schema(format!("entity {i}"), "id must be non-empty"));
            }
            if kinds.insert(&e.id, e.kind).is_some() {
                return Err(SchemaError::schema(format!("entity '{}'", e.id), "duplicate id"));
            }
        }
        for e in &self.entities {
            validate_entity(e, &kinds)?;
        }
        for (i, r) in self.background_requests.iter().enumerate() {
            let ok = |v: f64| v.is_finite() && v > 0.0;
            if !ok(r.width) || !ok(r.height) {
                return Err(SchemaError::schema(
                    format!("background_requests[{i}] '{}'", r.label),
                    "width and height must be > 0",
                ));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scene spec serializes");
        s.push('\n');
        s
    }
}

fn validate_entity(e: &EntitySpec, kinds: &HashMap<&str, EntityKind>) -> Result<(), SchemaError> {
    let ctx = format!("entity '{}'", e.id);
    let fail = |rule: String| Err(SchemaError::schema(ctx.clone(), rule));
    if e.category.trim().is_empty() {
        return fail("category must be non-empty".into());
    }
    match e.kind {
        EntityKind::Anchor => {
            let Some(b) = &e.anchor_box else {
                return fail("anchor_box required for anchor".into());
            };
            if let Err(g) = b.validate() {
                return fail(format!("anchor_box invalid: {g}"));
            }
            if e.dims.is_some() {
                return fail("dims not allowed for anchor".into());
            }
            if e.relation.is_some() {
                return fail("relation not allowed for anchor".into());
            }
            if e.anchor_ref.is_some() {
                return fail("anchor_ref not allowed for anchor".into());
            }
        }
        kind @ (EntityKind::NonAnchor | EntityKind::Ornament) => {
            match &e.dims {
                None => return fail(format!("dims required for {kind}")),
                Some(d) if !positive_dims(d) => return fail(format!("dims must all be > 0 for {kind}")),
                _ => {}
            }
            if e.anchor_box.is_some() {
                return fail(format!("anchor_box not allowed for {kind}"));
            }
            let Some(rel) = &e.relation else {
                return fail(format!("relation required for {kind}"));
            };
            let on_surface = rel.mode == RelationMode::OnSurface;
            if rel.face.is_some() != on_surface {
                return fail("face present iff mode = on_surface".into());
            }
            if rel.mount_height.is_some() != on_surface {
                return fail("mount_height present iff mode = on_surface".into());
            }
            if let Some(m) = rel.mount_height {
                if !(m.is_finite() && m >= 0.0) {
                    return fail("mount_height must be >= 0".into());
                }
            }
            let needs_ref = kind == EntityKind::NonAnchor || rel.mode != RelationMode::OnFloorNear;
            match &e.anchor_ref {
                None if needs_ref => return fail(format!("anchor_ref required for {kind} with mode {:?}", rel.mode)),
                None => {}
                Some(r) => match kinds.get(r.as_str()) {
                    None => return fail(format!("anchor_ref '{r}' names no entity")),
                    Some(EntityKind::Anchor) => {}
                    Some(other) => {
                        return fail(format!("anchor_ref '{r}' of '{}' names a {other}, not an anchor", e.id))
                    }
                },
            }
        }
    }
    Ok(())
}

/// Parses and fully validates a scene-spec file.
pub fn parse_scene_spec(bytes: &[u8]) -> Result<SceneSpec, SchemaError> {
    let spec: SceneSpec = decode(bytes)?;
    spec.validate()?;
    Ok(spec)
}

impl GroundTruthLayout {
    pub fn validate(&self) -> Result<(), SchemaError> {
        check_format(&self.format)?;
        if self.entities.is_empty() {
            return Err(SchemaError::schema(format!("stage '{}'", self.stage_id), "at least one entity required"));
        }
        for (i, e) in self.entities.iter().enumerate() {
            if let Err(g) = e.bbox.validate() {
                let who = match &e.id {
                    Some(id) => format!("entity {i} '{id}'"),
                    None => format!("entity {i}"),
                };
                return Err(SchemaError::schema(who, g.to_string()));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("layout serializes");
        s.push('\n');
        s
    }
}

/// Parses and validates a ground-truth (or engine-produced) layout file.
pub fn parse_ground_truth(bytes: &[u8]) -> Result<GroundTruthLayout, SchemaError> {
    let gt: GroundTruthLayout = decode(bytes)?;
    gt.validate()?;
    Ok(gt)
}

/// Like [`parse_ground_truth`] but accepts an empty entity list (a bare
/// stage), for drawing and inspection.
pub fn parse_layout_allow_empty(bytes: &[u8]) -> Result<GroundTruthLayout, SchemaError> {
    let gt: GroundTruthLayout = decode(bytes)?;
    if gt.entities.is_empty() {
        check_format(&gt.format)?;
    } else {
        gt.validate()?;
    }
    Ok(gt)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FileStatus {
    Pass,
    Warn,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileReport {
    pub path: PathBuf,
    pub status: FileStatus,
    pub messages: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub files: Vec<FileReport>,
}

impl ValidationReport {
    pub fn has_failures(&self) -> bool {
        self.files.iter().any(|f| f.status == FileStatus::Fail)
    }

    pub fn count(&self, status: FileStatus) -> usize {
        self.files.iter().filter(|f| f.status == status).count()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.files {
            let tag = match r.status {
                FileStatus::Pass => "PASS",
                FileStatus::Warn => "WARN",
                FileStatus::Fail => "FAIL",
            };
            write!(f, "{tag} {}", r.path.display())?;
            for m in &r.messages {
                write!(f, " | {m}")?;
            }
            writeln!(f)?;
        }
        writeln!(
            f,
            "{} pass, {} warn, {} fail",
            self.count(FileStatus::Pass),
            self.count(FileStatus::Warn),
            self.count(FileStatus::Fail)
        )
    }
}

/// Validates one file: scene specs are recognised by their `title` key,
/// everything else is checked as a layout file.
pub fn validate_file(path: &Path) -> FileReport {
    let report = |status, messages| FileReport {
        path: path.to_path_buf(),
        status,
        messages,
    };
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) => return report(FileStatus::Fail, vec![format!("io error: {e}")]),
    };
    let is_scene = serde_json::from_slice::<serde_json::Value>(&bytes)
        .ok()
        .and_then(|v| v.as_object().map(|o| o.contains_key("title")))
        .unwrap_or(false);
    let outcome = if is_scene {
        parse_scene_spec(&bytes).map(|_| Vec::new())
    } else {
        parse_ground_truth(&bytes).map(|gt| gt.warnings())
    };
    match outcome {
        Ok(w) if w.is_empty() => report(FileStatus::Pass, w),
        Ok(w) => report(FileStatus::Warn, w),
        Err(e) => report(FileStatus::Fail, vec![e.to_string()]),
    }
}

/// Validates every `*.json` file directly inside `dir`. Files are checked
/// independently and in parallel; the report is ordered by path.
pub fn validate_corpus(dir: &Path) -> std::io::Result<ValidationReport> {
    let mut paths: BTreeSet<PathBuf> = BTreeSet::new();
    for entry in std::fs::read_dir(dir)? {
        let p = entry?.path();
        if p.extension().is_some_and(|e| e == "json") && p.is_file() {
            paths.insert(p);
        }
    }
    let paths: Vec<PathBuf> = paths.into_iter().collect();
    let files = paths.par_iter().map(|p| validate_file(p)).collect();
    Ok(ValidationReport { files })
}
