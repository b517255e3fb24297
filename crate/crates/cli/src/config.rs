use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stagelayout::metrics::IwgMode;
use stagelayout::retrieval::{ScoreWeights, ThresholdTarget, DEFAULT_THRESHOLD, DEFAULT_TOP_K};
use stagelayout::StageConfig;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub output_dir: PathBuf,
    pub iwg_mode: IwgMode,
    pub stage: StageConfig,
    pub placement: PlacementSection,
    pub retrieval: RetrievalSection,
    pub background: BackgroundSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            output_dir: PathBuf::from("out"),
            iwg_mode: IwgMode::Union,
            stage: StageConfig::default(),
            placement: PlacementSection::default(),
            retrieval: RetrievalSection::default(),
            background: BackgroundSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlacementSection {
    pub cell_size: f64,
    /// Re-seat colliding or out-of-bounds anchors instead of failing.
    pub repair: bool,
    /// The only source of randomness in a run (retrieval draws).
    pub seed: u64,
}

impl Default for PlacementSection {
    fn default() -> Self {
        PlacementSection {
            cell_size: 1.0,
            repair: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetrievalSection {
    pub threshold: f64,
    pub top_k: usize,
    pub weights: ScoreWeights,
    pub threshold_target: ThresholdTarget,
    /// Embedding width of the hash stub provider.
    pub stub_dim: usize,
}

impl Default for RetrievalSection {
    fn default() -> Self {
        RetrievalSection {
            threshold: DEFAULT_THRESHOLD,
            top_k: DEFAULT_TOP_K,
            weights: ScoreWeights::default(),
            threshold_target: ThresholdTarget::Image,
            stub_dim: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackgroundSection {
    pub cell_size: f64,
    pub image_size: u32,
}

impl Default for BackgroundSection {
    fn default() -> Self {
        BackgroundSection {
            cell_size: 1.0,
            image_size: stagelayout::background::DEFAULT_IMAGE_SIZE,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let cfg: PipelineConfig = match path {
            None => PipelineConfig::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Usage(format!("config: {m}")));
        self.stage.validate().map_err(|e| CliError::Usage(format!("config: stage: {e}")))?;
        for (name, v) in [("placement.cell_size", self.placement.cell_size), ("background.cell_size", self.background.cell_size)] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be > 0"));
            }
        }
        if self.retrieval.top_k == 0 {
            return bad("retrieval.top_k must be >= 1".into());
        }
        if self.retrieval.stub_dim == 0 {
            return bad("retrieval.stub_dim must be >= 1".into());
        }
        if !self.retrieval.threshold.is_finite() {
            return bad("retrieval.threshold must be finite".into());
        }
        if self.background.image_size == 0 {
            return bad("background.image_size must be >= 1".into());
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
