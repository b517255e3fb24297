//! Scene spec → layout, occlusions, background spec, renders and optional
//! metrics/retrieval, with a content-hashed manifest.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use stagelayout::metrics::StageInput;
use stagelayout::render::{render_front, render_top};
use stagelayout::schema::FORMAT_TAG;

use crate::config::PipelineConfig;
use crate::error::CliError;
use crate::ops::{self, Artifact, Out};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Default)]
pub struct PipelineInputs {
    pub gt: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub text_embeddings: Option<PathBuf>,
    pub analyzer: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub step: String,
    pub exit_code: u8,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub format: String,
    pub stage_id: Option<String>,
    pub status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<Failure>,
    /// Input contents by role; paths are left out so the manifest does not
    /// depend on where the inputs live.
    pub inputs: Vec<Artifact>,
    pub artifacts: Vec<Artifact>,
}

impl Manifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

struct Run<'a> {
    out: Out,
    cfg: &'a PipelineConfig,
    manifest: Manifest,
}

impl Run<'_> {
    fn input(&mut self, role: &str, bytes: &[u8]) {
        self.manifest.inputs.push(Artifact {
            path: role.to_string(),
            sha256: ops::sha256_hex(bytes),
        });
    }

    fn emit(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let a = self.out.write(name, bytes)?;
        self.manifest.artifacts.push(a);
        Ok(())
    }
}

/// Runs every step for one scene into `out_dir`. The manifest is written
/// even when a step fails; it then records the failing step and exit code.
pub fn run_stage(scene: &Path, inputs: &PipelineInputs, cfg: &PipelineConfig, out_dir: &Path) -> Result<Manifest, CliError> {
    let mut run = Run {
        out: Out::create(out_dir)?,
        cfg,
        manifest: Manifest {
            format: FORMAT_TAG.to_string(),
            stage_id: None,
            status: "ok",
            failure: None,
            inputs: Vec::new(),
            artifacts: Vec::new(),
        },
    };
    let mut step = "scene";
    let result = steps(&mut run, scene, inputs, &mut step);
    if let Err(e) = &result {
        run.manifest.status = "failed";
        run.manifest.failure = Some(Failure {
            step: step.to_string(),
            exit_code: e.code(),
            message: e.to_string(),
        });
    }
    run.out.write(MANIFEST, run.manifest.to_json().as_bytes())?;
    result.map(|()| run.manifest)
}

fn steps<'s>(run: &mut Run, scene_path: &Path, inputs: &PipelineInputs, step: &mut &'s str) -> Result<(), CliError> {
    let cfg = run.cfg;
    // Where the artifacts go is not an input to them.
    let hashed = PipelineConfig {
        output_dir: PathBuf::new(),
        ..cfg.clone()
    };
    run.input("config", hashed.to_toml().as_bytes());
    let (raw, scene) = ops::load_scene(scene_path, inputs.analyzer.as_deref())?;
    run.input("scene", &raw);
    run.manifest.stage_id = Some(scene.title.clone());

    *step = "place";
    let layout = ops::place(&scene, cfg)?;
    let file = layout.to_file();
    run.emit("layout.json", file.to_json().as_bytes())?;

    if let Some(index_path) = &inputs.index {
        *step = "retrieve";
        let index_bytes = ops::read(index_path)?;
        run.input("index", &index_bytes);
        let index = ops::load_index(index_path)?;
        if let Some(p) = &inputs.text_embeddings {
            run.input("text_embeddings", &ops::read(p)?);
        }
        let provider = ops::provider(inputs.text_embeddings.as_deref(), cfg)?;
        let report = ops::retrieve(&ops::scene_queries(&scene), &index, provider.as_ref(), cfg)?;
        run.emit("retrieval.json", report.to_json().as_bytes())?;
    }

    *step = "project";
    let occ = ops::project(&file, cfg)?;
    run.emit("occlusions.json", occ.to_json().as_bytes())?;

    *step = "background";
    let bg = ops::background(&scene, &occ.occlusions, cfg)?;
    run.emit("background.json", bg.to_json().as_bytes())?;

    if let Some(gt_path) = &inputs.gt {
        *step = "metrics";
        let gt_bytes = ops::read(gt_path)?;
        run.input("ground_truth", &gt_bytes);
        let gt = ops::load_layout(gt_path, cfg)?;
        let report = ops::metrics(
            &[StageInput {
                layout: file.clone(),
                ground_truth: Some(gt),
            }],
            cfg,
        )?;
        run.emit("metrics.json", report.to_json().as_bytes())?;
        run.emit("metrics.txt", report.to_table().as_bytes())?;
    }

    *step = "render";
    let n = cfg.stage.stage_size;
    run.emit("top.svg", render_top(&file.entities, n, &scene.title).as_bytes())?;
    let front = render_front(&file.entities, n, &scene.title, &occ.occlusions, &bg.wall_boxes(n));
    run.emit("front.svg", front.as_bytes())?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct BatchEntry {
    pub name: String,
    pub status: &'static str,
    pub exit_code: u8,
    pub manifest_sha256: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BatchManifest {
    pub format: String,
    pub stages: Vec<BatchEntry>,
}

/// One pipeline per scene file in `dir`, run concurrently, each into
/// `out/<file stem>/`. Ground truth, when `inputs.gt` is a directory, is
/// matched by file name. Returns the batch manifest and the exit code of the
/// first failing stage in name order.
pub fn run_batch(dir: &Path, inputs: &PipelineInputs, cfg: &PipelineConfig, out_dir: &Path) -> Result<(BatchManifest, u8), CliError> {
    let scenes = if inputs.analyzer.is_some() {
        ops::files_where(dir, |_| true)?
    } else {
        ops::json_files(dir)?
    };
    let out = Out::create(out_dir)?;
    let mut stages: Vec<BatchEntry> = scenes
        .par_iter()
        .map(|scene| {
            let name = scene.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
            let file_name = scene.file_name().expect("listed files have names");
            let mut stage_inputs = inputs.clone();
            stage_inputs.gt = match &inputs.gt {
                Some(g) if g.is_dir() => Some(g.join(file_name)).filter(|p| p.is_file()),
                other => other.clone(),
            };
            let stage_dir = out_dir.join(&name);
            let result = run_stage(scene, &stage_inputs, cfg, &stage_dir);
            let exit_code = result.as_ref().map_or_else(CliError::code, |_| 0);
            if let Err(e) = &result {
                eprintln!("{name}: error: {e}");
            }
            let manifest_sha256 = std::fs::read(stage_dir.join(MANIFEST)).ok().map(|b| ops::sha256_hex(&b));
            BatchEntry {
                name,
                status: if exit_code == 0 { "ok" } else { "failed" },
                exit_code,
                manifest_sha256,
            }
        })
        .collect();
    stages.sort_by(|a, b| a.name.cmp(&b.name));
    let code = stages.iter().map(|s| s.exit_code).find(|&c| c != 0).unwrap_or(0);
    let batch = BatchManifest {
        format: FORMAT_TAG.to_string(),
        stages,
    };
    let mut json = serde_json::to_string_pretty(&batch).expect("batch manifest serializes");
    json.push('\n');
    out.write(MANIFEST, json.as_bytes())?;
    Ok((batch, code))
}
