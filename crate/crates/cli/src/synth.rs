//! `synth`: generate an annotated scene corpus.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::Result;
use rayon::prelude::*;
use serde::Serialize;
use zoo3d::scene::{
    default_pose_pool, default_shape_pool, generate_corpus, occlusion_stats, write_corpus,
    SceneAnnotation,
};

use crate::config::RunConfig;

pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthSummary {
    pub config: RunConfig,
    pub scenes: u64,
    pub instances: usize,
    /// Instance count per scene mapped to the number of such scenes.
    pub instance_histogram: BTreeMap<usize, usize>,
    /// Mean over instances of the share of in-frame keypoints marked hidden.
    pub mean_occluded_fraction: f64,
    /// Mean and maximum box IoU over instance pairs within a scene.
    pub mean_pair_iou: f64,
    pub max_pair_iou: f64,
    pub overlapping_pairs: usize,
    pub pairs: usize,
}

impl SynthSummary {
    pub fn render(&self) -> String {
        let mut s = String::new();
        writeln!(s, "config {}", self.config.to_compact_json()).unwrap();
        writeln!(s, "scenes {}  instances {}", self.scenes, self.instances).unwrap();
        let hist: Vec<String> = self
            .instance_histogram
            .iter()
            .map(|(n, c)| format!("{n}:{c}"))
            .collect();
        writeln!(s, "instances per scene  {}", hist.join(" ")).unwrap();
        writeln!(
            s,
            "occluded keypoints {:.4}  pair IoU mean {:.4} max {:.4}  overlapping pairs {}/{}",
            self.mean_occluded_fraction,
            self.mean_pair_iou,
            self.max_pair_iou,
            self.overlapping_pairs,
            self.pairs
        )
        .unwrap();
        s
    }
}

/// Generate `config.num_scenes` scenes. Nothing is written.
pub fn synthesize(config: &RunConfig) -> Result<Vec<SceneAnnotation>> {
    let template = config.template.load()?;
    let poses = default_pose_pool(&template, config.pools.pose_pool_size, config.pools.seed);
    let shapes = default_shape_pool(
        &template,
        config.pools.shapes_per_species,
        config.pools.seed,
    );
    Ok(generate_corpus(
        &template,
        &poses,
        &shapes,
        &config.scene,
        config.seed,
        config.num_scenes,
    )?)
}

pub fn summarize(config: &RunConfig, scenes: &[SceneAnnotation]) -> Result<SynthSummary> {
    let stats = scenes
        .par_iter()
        .map(occlusion_stats)
        .collect::<zoo3d::Result<Vec<_>>>()?;
    let mut histogram = BTreeMap::new();
    for s in scenes {
        *histogram.entry(s.instances.len()).or_insert(0) += 1;
    }
    let fractions: Vec<f64> = stats
        .iter()
        .flat_map(|s| s.occluded_fraction.iter().copied())
        .collect();
    let ious: Vec<f64> = stats
        .iter()
        .flat_map(|s| {
            let n = s.iou.len();
            (0..n).flat_map(move |i| (i + 1..n).map(move |j| s.iou[i][j]))
        })
        .collect();
    let mean = |v: &[f64]| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    Ok(SynthSummary {
        config: config.clone(),
        scenes: scenes.len() as u64,
        instances: fractions.len(),
        instance_histogram: histogram,
        mean_occluded_fraction: mean(&fractions),
        mean_pair_iou: mean(&ious),
        max_pair_iou: ious.iter().copied().fold(0.0, f64::max),
        overlapping_pairs: ious.iter().filter(|v| **v > 0.0).count(),
        pairs: ious.len(),
    })
}

/// Write scene files and `summary.json` into `out`.
pub fn run(config: &RunConfig, out: &Path) -> Result<SynthSummary> {
    let scenes = synthesize(config)?;
    let summary = summarize(config, &scenes)?;
    write_corpus(out, &scenes)?;
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    fs::write(out.join(SUMMARY_FILE), text)?;
    Ok(summary)
}
