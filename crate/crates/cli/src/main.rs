//! `stagelayout` command-line interface.
//!
//! Exit codes: 0 success, 1 invalid input file, 2 engine could not satisfy
//! the request, 3 I/O failure, 64 bad flags or config.

mod config;
mod error;
mod ops;
mod pipeline;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use stagelayout::metrics::StageInput;
use stagelayout::render::{render_front, render_top};
use stagelayout::schema::{validate_corpus, validate_file, ValidationReport};

use crate::config::PipelineConfig;
use crate::error::{CliError, EXIT_SCHEMA, EXIT_USAGE};
use crate::ops::Out;
use crate::pipeline::PipelineInputs;

#[derive(Debug, Parser)]
#[command(name = "stagelayout", version, about = "Deterministic stage layout engine")]
struct Cli {
    /// TOML config file; every key is optional.
    #[arg(long, global = true, env = "STAGELAYOUT_CONFIG", value_name = "FILE")]
    config: Option<PathBuf>,
    /// Overrides `placement.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides `output_dir`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum View {
    Top,
    Front,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Place a scene spec; writes layout.json.
    Place {
        scene: PathBuf,
        /// Shell command turning the input (a raw script) into a scene spec on stdout.
        #[arg(long, value_name = "CMD")]
        analyzer_cmd: Option<String>,
    },
    /// Project a layout's occlusion onto the back wall; writes occlusions.json.
    Project {
        layout: PathBuf,
        /// Also write front.svg with the occlusion boxes.
        #[arg(long)]
        svg: bool,
    },
    /// Allocate a scene's background requests around occlusions; writes background.json.
    Background {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        occlusions: PathBuf,
    },
    /// Score and draw assets from an index; writes retrieval.json.
    Retrieve {
        #[arg(long)]
        index: PathBuf,
        /// One query per entity of this scene.
        #[arg(long, required_unless_present = "query", conflicts_with = "query")]
        scene: Option<PathBuf>,
        #[arg(long)]
        query: Option<String>,
        /// Precomputed text embeddings (`text<TAB>base64` lines) instead of the hash stub.
        #[arg(long, value_name = "FILE")]
        text_embeddings: Option<PathBuf>,
    },
    /// Score layout files; writes metrics.json and metrics.txt and prints the table.
    Metrics {
        /// A layout file or a directory of them.
        layouts: PathBuf,
        /// Ground-truth file or directory (matched by file name).
        #[arg(long)]
        gt: Option<PathBuf>,
    },
    /// Check scene specs and layout files; prints one line per file.
    Validate { path: PathBuf },
    /// Draw a layout as SVG; writes top.svg or front.svg.
    Render {
        layout: PathBuf,
        #[arg(long, value_enum, default_value_t = View::Top)]
        mode: View,
        #[arg(long)]
        occlusions: Option<PathBuf>,
        #[arg(long)]
        background: Option<PathBuf>,
    },
    /// Run place → project → background → metrics → render with a manifest.
    /// A directory runs every scene in it concurrently.
    Pipeline {
        scene: PathBuf,
        #[arg(long)]
        gt: Option<PathBuf>,
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        text_embeddings: Option<PathBuf>,
        #[arg(long, value_name = "CMD")]
        analyzer_cmd: Option<String>,
    },
    /// Print the effective configuration as TOML.
    Config,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: Cli) -> Result<u8, CliError> {
    let mut cfg = PipelineConfig::load(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.placement.seed = s;
    }
    if let Some(o) = cli.out {
        cfg.output_dir = o;
    }
    let out_dir = cfg.output_dir.clone();
    let out = || Out::create(&out_dir);
    match cli.command {
        Cmd::Place { scene, analyzer_cmd } => {
            let (_, spec) = ops::load_scene(&scene, analyzer_cmd.as_deref())?;
            let layout = ops::place(&spec, &cfg)?;
            out()?.write("layout.json", layout.to_file().to_json().as_bytes())?;
        }
        Cmd::Project { layout, svg } => {
            let file = ops::load_layout(&layout, &cfg)?;
            let occ = ops::project(&file, &cfg)?;
            let o = out()?;
            o.write("occlusions.json", occ.to_json().as_bytes())?;
            if svg {
                let n = cfg.stage.stage_size;
                o.write("front.svg", render_front(&file.entities, n, &file.stage_id, &occ.occlusions, &[]).as_bytes())?;
            }
        }
        Cmd::Background { scene, occlusions } => {
            let (_, spec) = ops::load_scene(&scene, None)?;
            let occ = ops::load_occlusions(&occlusions)?;
            let bg = ops::background(&spec, &occ.occlusions, &cfg)?;
            out()?.write("background.json", bg.to_json().as_bytes())?;
        }
        Cmd::Retrieve {
            index,
            scene,
            query,
            text_embeddings,
        } => {
            let records = ops::load_index(&index)?;
            let provider = ops::provider(text_embeddings.as_deref(), &cfg)?;
            let queries = match (scene, query) {
                (Some(s), _) => ops::scene_queries(&ops::load_scene(&s, None)?.1),
                (None, Some(q)) => vec![(None, q)],
                (None, None) => unreachable!("clap requires one of --scene/--query"),
            };
            let report = ops::retrieve(&queries, &records, provider.as_ref(), &cfg)?;
            out()?.write("retrieval.json", report.to_json().as_bytes())?;
        }
        Cmd::Metrics { layouts, gt } => cmd_metrics(&layouts, gt.as_deref(), &cfg, &out()?)?,
        Cmd::Validate { path } => return cmd_validate(&path),
        Cmd::Render {
            layout,
            mode,
            occlusions,
            background,
        } => {
            let file = ops::load_layout_allow_empty(&layout, &cfg)?;
            let n = cfg.stage.stage_size;
            let (name, svg) = match mode {
                View::Top => ("top.svg", render_top(&file.entities, n, &file.stage_id)),
                View::Front => {
                    let occ = occlusions.as_deref().map(ops::load_occlusions).transpose()?;
                    let bg = background.as_deref().map(ops::load_background).transpose()?;
                    let occ = occ.map(|o| o.occlusions).unwrap_or_default();
                    let walls = bg.map(|b| b.wall_boxes(n)).unwrap_or_default();
                    ("front.svg", render_front(&file.entities, n, &file.stage_id, &occ, &walls))
                }
            };
            out()?.write(name, svg.as_bytes())?;
        }
        Cmd::Pipeline {
            scene,
            gt,
            index,
            text_embeddings,
            analyzer_cmd,
        } => {
            let inputs = PipelineInputs {
                gt,
                index,
                text_embeddings,
                analyzer: analyzer_cmd,
            };
            if scene.is_dir() {
                let (_, code) = pipeline::run_batch(&scene, &inputs, &cfg, &out_dir)?;
                return Ok(code);
            }
            pipeline::run_stage(&scene, &inputs, &cfg, &out_dir)?;
        }
        Cmd::Config => print!("{}", cfg.to_toml()),
    }
    Ok(0)
}

fn cmd_metrics(layouts: &Path, gt: Option<&Path>, cfg: &PipelineConfig, out: &Out) -> Result<(), CliError> {
    let files = if layouts.is_dir() { ops::json_files(layouts)? } else { vec![layouts.to_path_buf()] };
    let stages = files
        .iter()
        .map(|f| {
            let gt_file = match gt {
                Some(g) if g.is_dir() => Some(g.join(f.file_name().expect("file has a name"))).filter(|p| p.is_file()),
                Some(g) => Some(g.to_path_buf()),
                None => None,
            };
            Ok(StageInput {
                layout: ops::load_layout(f, cfg)?,
                ground_truth: gt_file.as_deref().map(|g| ops::load_layout(g, cfg)).transpose()?,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let report = ops::metrics(&stages, cfg)?;
    out.write("metrics.json", report.to_json().as_bytes())?;
    let table = report.to_table();
    out.write("metrics.txt", table.as_bytes())?;
    print!("{table}");
    Ok(())
}

fn cmd_validate(path: &Path) -> Result<u8, CliError> {
    let report = if path.is_dir() {
        validate_corpus(path).map_err(|e| CliError::io(path, e))?
    } else if path.is_file() {
        ValidationReport {
            files: vec![validate_file(path)],
        }
    } else {
        return Err(CliError::Io(format!("{}: no such file or directory", path.display())));
    };
    print!("{report}");
    Ok(if report.has_failures() { EXIT_SCHEMA } else { 0 })
}
