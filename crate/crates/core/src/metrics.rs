//! Layout evaluation metrics.
//!
//! Per stage: out-of-bound volume (OOB), pairwise overlap among the stage's
//! own entities (OIS), intersection with the ground-truth layout (IWG) and
//! the number of distinct categories. Volumes are reported in m³; stage
//! aggregates are plain means over stages.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{intersection_volume, out_of_bound_volume, union_intersection_volume, Aabb, StageConfig, Volume};
use crate::schema::GroundTruthLayout;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no stages to evaluate")]
    Empty,
    #[error("duplicate stage id '{0}'")]
    DuplicateStage(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IwgMode {
    /// Volume of (⋃ generated) ∩ (⋃ ground truth).
    #[default]
    Union,
    /// Sum of intersection volumes over all (generated, ground-truth) pairs.
    PairwiseSum,
}

pub fn metric_oob(layout: &[Aabb], cfg: &StageConfig) -> Volume {
    layout.iter().map(|b| out_of_bound_volume(b, cfg)).sum()
}

/// Sum over unordered pairs of distinct entities.
pub fn metric_ois(layout: &[Aabb]) -> Volume {
    let mut total = Volume::ZERO;
    for (i, a) in layout.iter().enumerate() {
        for b in &layout[i + 1..] {
            total = total + intersection_volume(a, b);
        }
    }
    total
}

pub fn metric_iwg(generated: &[Aabb], ground_truth: &[Aabb], mode: IwgMode) -> Volume {
    match mode {
        IwgMode::Union => union_intersection_volume(generated, ground_truth),
        IwgMode::PairwiseSum => generated
            .iter()
            .flat_map(|g| ground_truth.iter().map(move |t| intersection_volume(g, t)))
            .sum(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassDiversity {
    pub mean: f64,
    pub min: usize,
    pub max: usize,
}

/// Unique categories per stage (exact, case-sensitive); mean/min/max over
/// stages.
pub fn metric_class_diversity<S: AsRef<str>>(stages: &[(&str, &[S])]) -> Result<ClassDiversity, MetricsError> {
    if stages.is_empty() {
        return Err(MetricsError::Empty);
    }
    let counts: Vec<usize> = stages.iter().map(|(_, cats)| unique_count(cats)).collect();
    Ok(ClassDiversity {
        mean: counts.iter().sum::<usize>() as f64 / counts.len() as f64,
        min: *counts.iter().min().expect("non-empty"),
        max: *counts.iter().max().expect("non-empty"),
    })
}

fn unique_count<S: AsRef<str>>(cats: &[S]) -> usize {
    cats.iter().map(AsRef::as_ref).collect::<BTreeSet<&str>>().len()
}

/// One generated layout and, optionally, its ground truth.
#[derive(Debug, Clone)]
pub struct StageInput {
    pub layout: GroundTruthLayout,
    pub ground_truth: Option<GroundTruthLayout>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageMetrics {
    pub stage_id: String,
    pub oob_m3: f64,
    pub ois_m3: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iwg_m3: Option<f64>,
    pub class_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub mean_oob_m3: f64,
    pub mean_ois_m3: f64,
    /// Mean over stages that have ground truth.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_iwg_m3: Option<f64>,
    pub mean_class_diversity: f64,
    pub min_classes: usize,
    pub max_classes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub format: String,
    pub iwg_mode: IwgMode,
    pub per_stage: Vec<StageMetrics>,
    pub aggregate: Aggregate,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Per-stage metrics plus aggregates. Stages are evaluated in parallel and
/// reported (and summed) in stage-id order.
pub fn build_report(stages: &[StageInput], cfg: &StageConfig, iwg_mode: IwgMode) -> Result<MetricsReport, MetricsError> {
    if stages.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut order: Vec<&StageInput> = stages.iter().collect();
    order.sort_by(|a, b| a.layout.stage_id.cmp(&b.layout.stage_id));
    for w in order.windows(2) {
        if w[0].layout.stage_id == w[1].layout.stage_id {
            return Err(MetricsError::DuplicateStage(w[0].layout.stage_id.clone()));
        }
    }
    let per_stage: Vec<StageMetrics> = order
        .par_iter()
        .map(|s| {
            let boxes = s.layout.boxes();
            StageMetrics {
                stage_id: s.layout.stage_id.clone(),
                oob_m3: metric_oob(&boxes, cfg).m3(),
                ois_m3: metric_ois(&boxes).m3(),
                iwg_m3: s.ground_truth.as_ref().map(|gt| metric_iwg(&boxes, &gt.boxes(), iwg_mode).m3()),
                class_count: unique_count(&s.layout.categories()),
            }
        })
        .collect();
    let aggregate = Aggregate {
        mean_oob_m3: mean(per_stage.iter().map(|s| s.oob_m3)).expect("non-empty"),
        mean_ois_m3: mean(per_stage.iter().map(|s| s.ois_m3)).expect("non-empty"),
        mean_iwg_m3: mean(per_stage.iter().filter_map(|s| s.iwg_m3)),
        mean_class_diversity: mean(per_stage.iter().map(|s| s.class_count as f64)).expect("non-empty"),
        min_classes: per_stage.iter().map(|s| s.class_count).min().expect("non-empty"),
        max_classes: per_stage.iter().map(|s| s.class_count).max().expect("non-empty"),
    };
    Ok(MetricsReport {
        format: crate::schema::FORMAT_TAG.to_string(),
        iwg_mode,
        per_stage,
        aggregate,
    })
}

/// Three significant figures, plain decimal notation.
pub fn sig3(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { format!("{x}") };
    }
    let sci = format!("{x:.2e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    let m: f64 = mantissa.parse().expect("mantissa");
    let decimals = (2 - exp).max(0) as usize;
    format!("{:.*}", decimals, m * 10f64.powi(exp))
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn min_max_classes(&self) -> String {
        format!("{}/{}", self.aggregate.min_classes, self.aggregate.max_classes)
    }

    /// Aligned text table with 3-significant-figure values.
    pub fn to_table(&self) -> String {
        let width = self
            .per_stage
            .iter()
            .map(|s| s.stage_id.chars().count())
            .max()
            .unwrap_or(0)
            .max("Stage".len());
        let mut out = String::new();
        let row = |out: &mut String, a: &str, b: &str, c: &str, d: &str, e: &str| {
            let _ = writeln!(out, "{a:<width$}  {b:>16}  {c:>10}  {d:>10}  {e:>15}");
        };
        row(&mut out, "Stage", "Out-of-Bound(m³)", "OIS(m³)", "IWG(m³)", "Class Diversity");
        for s in &self.per_stage {
            let iwg = s.iwg_m3.map(sig3).unwrap_or_else(|| "-".into());
            row(&mut out, &s.stage_id, &sig3(s.oob_m3), &sig3(s.ois_m3), &iwg, &s.class_count.to_string());
        }
        let a = &self.aggregate;
        let iwg = a.mean_iwg_m3.map(sig3).unwrap_or_else(|| "-".into());
        row(&mut out, "Mean", &sig3(a.mean_oob_m3), &sig3(a.mean_ois_m3), &iwg, &sig3(a.mean_class_diversity));
        let _ = writeln!(out, "Min/Max Classes: {}", self.min_max_classes());
        let _ = writeln!(out, "IWG mode: {}", match self.iwg_mode {
            IwgMode::Union => "union",
            IwgMode::PairwiseSum => "pairwise-sum",
        });
        out
    }
}
