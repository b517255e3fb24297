//! Steps shared by the single-purpose subcommands and the pipeline.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use stagelayout::background::{allocate_background, emit_background_spec, BackgroundError, BackgroundSpec};
use stagelayout::geometry::ProjectionMode;
use stagelayout::metrics::{build_report, MetricsReport, StageInput};
use stagelayout::placement::{AnchorMode, PlacementOptions};
use stagelayout::projection::{occlusion_union_boxes, OcclusionBox};
use stagelayout::retrieval::{
    candidate_set, derive_seed, parse_index, score_assets, select_asset, AssetRecord, EmbeddingTableProvider,
    RetrievalError, ScoredAsset, SimilarityProvider, StubProvider, ThresholdTarget,
};
use stagelayout::schema::{parse_layout_allow_empty, GroundTruthLayout, SceneSpec, FORMAT_TAG};
use stagelayout::{parse_ground_truth, parse_scene_spec, place_scene, StageLayout};

use crate::config::PipelineConfig;
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Output directory. Every write goes to a plain file name inside it.
pub struct Out {
    dir: PathBuf,
}

impl Out {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Out { dir: dir.to_path_buf() })
    }

    pub fn write(&self, name: &str, bytes: &[u8]) -> Result<Artifact, CliError> {
        debug_assert!(!name.contains('/') && !name.contains(".."));
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        Ok(Artifact {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
        })
    }
}

pub fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::io(path, e))
}

/// Runs `sh -c cmd` with `input` on stdin and returns its stdout.
pub fn run_analyzer(cmd: &str, input: &[u8]) -> Result<Vec<u8>, CliError> {
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(cmd)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit())
        .spawn()
        .map_err(|e| CliError::Io(format!("analyzer command: {e}")))?;
    let mut stdin = child.stdin.take().expect("stdin is piped");
    let payload = input.to_vec();
    // Feed stdin from a thread so a chatty analyzer cannot deadlock on a full pipe.
    let writer = std::thread::spawn(move || stdin.write_all(&payload));
    let out = child
        .wait_with_output()
        .map_err(|e| CliError::Io(format!("analyzer command: {e}")))?;
    // The analyzer may exit without reading all of its input.
    let _ = writer.join();
    if !out.status.success() {
        return Err(CliError::Io(format!("analyzer command failed: {}", out.status)));
    }
    Ok(out.stdout)
}

pub fn parse_scene_bytes(bytes: &[u8], origin: &str) -> Result<SceneSpec, CliError> {
    parse_scene_spec(bytes).map_err(|e| CliError::Schema(format!("{origin}: {e}")))
}

/// Reads a scene spec, or a raw script piped through the analyzer command.
pub fn load_scene(path: &Path, analyzer: Option<&str>) -> Result<(Vec<u8>, SceneSpec), CliError> {
    let raw = read(path)?;
    let scene = match analyzer {
        None => parse_scene_bytes(&raw, &path.display().to_string())?,
        Some(cmd) => {
            let produced = run_analyzer(cmd, &raw)?;
            parse_scene_bytes(&produced, &format!("analyzer output for {}", path.display()))?
        }
    };
    Ok((raw, scene))
}

pub fn load_layout(path: &Path, cfg: &PipelineConfig) -> Result<GroundTruthLayout, CliError> {
    check_layout(path, parse_ground_truth(&read(path)?), cfg)
}

/// [`load_layout`] that also accepts a layout with no entities.
pub fn load_layout_allow_empty(path: &Path, cfg: &PipelineConfig) -> Result<GroundTruthLayout, CliError> {
    check_layout(path, parse_layout_allow_empty(&read(path)?), cfg)
}

fn check_layout(
    path: &Path,
    parsed: Result<GroundTruthLayout, stagelayout::schema::SchemaError>,
    cfg: &PipelineConfig,
) -> Result<GroundTruthLayout, CliError> {
    let layout = parsed.map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))?;
    if let Some(n) = layout.stage_size {
        if n != cfg.stage.stage_size {
            return Err(CliError::Schema(format!(
                "{}: layout stage_size {n} does not match configured stage_size {}",
                path.display(),
                cfg.stage.stage_size
            )));
        }
    }
    Ok(layout)
}

pub fn place(scene: &SceneSpec, cfg: &PipelineConfig) -> Result<StageLayout, CliError> {
    let opts = PlacementOptions {
        cell_size: cfg.placement.cell_size,
        anchor_mode: if cfg.placement.repair { AnchorMode::Repair } else { AnchorMode::Strict },
        ..PlacementOptions::default()
    };
    let layout = place_scene(scene, &cfg.stage, &opts)?;
    for note in &layout.notes {
        eprintln!("note: {note}");
    }
    Ok(layout)
}

/// Entity ids for a layout file; records without an id get `category#index`.
pub fn entity_ids(layout: &GroundTruthLayout) -> Vec<String> {
    layout
        .entities
        .iter()
        .enumerate()
        .map(|(i, e)| e.id.clone().unwrap_or_else(|| format!("{}#{i}", e.category)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OcclusionFile {
    pub format: String,
    pub stage_id: String,
    pub projection_mode: ProjectionMode,
    pub occlusions: Vec<OcclusionBox>,
}

impl OcclusionFile {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("occlusions serialize");
        s.push('\n');
        s
    }
}

pub fn project(layout: &GroundTruthLayout, cfg: &PipelineConfig) -> Result<OcclusionFile, CliError> {
    let ids = entity_ids(layout);
    let occlusions = occlusion_union_boxes(ids.iter().map(String::as_str).zip(layout.entities.iter().map(|e| &e.bbox)), &cfg.stage)
        .map_err(|e| CliError::Placement(e.to_string()))?;
    Ok(OcclusionFile {
        format: FORMAT_TAG.to_string(),
        stage_id: layout.stage_id.clone(),
        projection_mode: cfg.stage.projection_mode,
        occlusions,
    })
}

pub fn load_occlusions(path: &Path) -> Result<OcclusionFile, CliError> {
    serde_json::from_slice(&read(path)?).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))
}

pub fn background(scene: &SceneSpec, occlusions: &[OcclusionBox], cfg: &PipelineConfig) -> Result<BackgroundSpec, CliError> {
    let placed = allocate_background(&scene.background_requests, occlusions, &cfg.stage, cfg.background.cell_size).map_err(|e| match e {
        BackgroundError::NoSpace { .. } => CliError::Placement(e.to_string()),
        BackgroundError::Invalid { .. } => CliError::Schema(e.to_string()),
    })?;
    Ok(emit_background_spec(&scene.imagery, &placed, &cfg.stage, cfg.background.image_size))
}

pub fn load_background(path: &Path) -> Result<BackgroundSpec, CliError> {
    serde_json::from_slice(&read(path)?).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, Serialize)]
pub struct RetrievalResult {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub entity_id: Option<String>,
    pub query: String,
    pub candidates: Vec<ScoredAsset>,
    pub selected: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RetrievalReport {
    pub format: String,
    pub seed: u64,
    pub threshold: f64,
    pub top_k: usize,
    pub threshold_target: ThresholdTarget,
    pub results: Vec<RetrievalResult>,
}

impl RetrievalReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("retrieval report serializes");
        s.push('\n');
        s
    }
}

fn retrieval_error(e: RetrievalError) -> CliError {
    CliError::Schema(e.to_string())
}

pub fn load_index(path: &Path) -> Result<Vec<AssetRecord>, CliError> {
    let text = String::from_utf8(read(path)?).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))?;
    parse_index(&text).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))
}

pub fn provider(text_embeddings: Option<&Path>, cfg: &PipelineConfig) -> Result<Box<dyn SimilarityProvider + Sync>, CliError> {
    Ok(match text_embeddings {
        None => Box::new(StubProvider {
            dim: cfg.retrieval.stub_dim,
        }),
        Some(p) => {
            let text = String::from_utf8(read(p)?).map_err(|e| CliError::Schema(format!("{}: {e}", p.display())))?;
            Box::new(EmbeddingTableProvider::parse(&text).map_err(|e| CliError::Schema(format!("{}: {e}", p.display())))?)
        }
    })
}

/// One draw per query. Keyed queries draw with a seed derived from the key.
pub fn retrieve(
    queries: &[(Option<String>, String)],
    index: &[AssetRecord],
    provider: &dyn SimilarityProvider,
    cfg: &PipelineConfig,
) -> Result<RetrievalReport, CliError> {
    let r = &cfg.retrieval;
    let seed = cfg.placement.seed;
    let results = queries
        .iter()
        .map(|(key, query)| {
            let scored = score_assets(query, index, provider, r.weights).map_err(retrieval_error)?;
            let draw_seed = key.as_deref().map_or(seed, |k| derive_seed(seed, k));
            Ok(RetrievalResult {
                entity_id: key.clone(),
                query: query.clone(),
                candidates: candidate_set(&scored, r.threshold, r.top_k, r.threshold_target).into_iter().cloned().collect(),
                selected: select_asset(&scored, r.threshold, r.top_k, r.threshold_target, draw_seed),
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(RetrievalReport {
        format: FORMAT_TAG.to_string(),
        seed,
        threshold: r.threshold,
        top_k: r.top_k,
        threshold_target: r.threshold_target,
        results,
    })
}

/// Retrieval query for each entity: its description, or its name.
pub fn scene_queries(scene: &SceneSpec) -> Vec<(Option<String>, String)> {
    scene
        .entities
        .iter()
        .map(|e| {
            let q = if e.description.trim().is_empty() { &e.name } else { &e.description };
            (Some(e.id.clone()), q.clone())
        })
        .collect()
}

pub fn metrics(stages: &[StageInput], cfg: &PipelineConfig) -> Result<MetricsReport, CliError> {
    build_report(stages, &cfg.stage, cfg.iwg_mode).map_err(|e| CliError::Usage(format!("metrics: {e}")))
}

/// `*.json` files in `dir`, sorted by name.
pub fn json_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    files_where(dir, |p| p.extension().is_some_and(|e| e == "json"))
}

pub fn files_where(dir: &Path, keep: impl Fn(&Path) -> bool) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
        let p = entry.map_err(|e| CliError::io(dir, e))?.path();
        if p.is_file() && keep(&p) {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}
