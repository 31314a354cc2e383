//! `match`: optimal assignment per scene with cost and loss breakdowns.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::Result;
use rayon::prelude::*;
use serde::Serialize;
use zoo3d::losses::{build_denoising_groups, total_loss, DenoisingPair, LossBreakdown};
use zoo3d::matcher::{
    brute_force_assignment, cost_matrix, match_and_reorder, CostBreakdown, MatchWeights,
};
use zoo3d::scene::SceneAnnotation;
use zoo3d::seeds;

use crate::config::RunConfig;
use crate::corpus::{pair_scenes, read_annotations, read_predictions, write_json};

/// Brute force runs only on scenes with at most this many ground truths.
pub const VERIFY_MAX_GROUND_TRUTHS: usize = 6;
/// and at most this many predictions.
pub const VERIFY_MAX_PREDICTIONS: usize = 10;

const DENOISING_STREAM: u64 = 0xD0;

/// `(λ_conf, λ_bbox, λ_giou, λ_kpts)` as printed in report headers.
pub fn weights_tuple(w: &MatchWeights) -> String {
    format!(
        "({},{},{},{})",
        w.lambda_conf, w.lambda_bbox, w.lambda_giou, w.lambda_kpts
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Pair {
    pub ground_truth: usize,
    pub prediction: usize,
    pub cost: CostBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verification {
    pub brute_force_cost: f64,
    pub brute_force_assignment: Vec<usize>,
    /// Bitwise equality of the two total costs.
    pub agrees: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneMatch {
    pub scene_index: u64,
    pub ground_truths: usize,
    pub predictions: usize,
    pub pairs: Vec<Pair>,
    pub total_cost: f64,
    pub unmatched: Vec<usize>,
    pub loss: LossBreakdown,
    /// Absent when not requested or the scene is too large.
    pub verification: Option<Verification>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchReport {
    pub config: RunConfig,
    pub weights: String,
    pub scenes: Vec<SceneMatch>,
    pub total_cost: f64,
    pub verified: usize,
    pub disagreements: usize,
}

impl MatchReport {
    pub fn header(&self) -> String {
        let w = &self.config.match_weights;
        format!(
            "match weights (lambda_conf, lambda_bbox, lambda_giou, lambda_kpts) = {}  focal (alpha, gamma) = ({}, {})",
            self.weights, w.focal_alpha, w.focal_gamma
        )
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{}", self.header()).unwrap();
        writeln!(s, "config {}", self.config.to_compact_json()).unwrap();
        for m in &self.scenes {
            let pairs: Vec<String> = m
                .pairs
                .iter()
                .map(|p| format!("{}->{}", p.ground_truth, p.prediction))
                .collect();
            let check = match &m.verification {
                Some(v) if v.agrees => "  verified",
                Some(_) => "  MISMATCH",
                None => "",
            };
            writeln!(
                s,
                "scene {:06}  M {} P {}  cost {:.6}  loss {:.6}  [{}]{check}",
                m.scene_index,
                m.ground_truths,
                m.predictions,
                m.total_cost,
                m.loss.total,
                pairs.join(" ")
            )
            .unwrap();
        }
        writeln!(
            s,
            "scenes {}  total cost {:.6}  verified {}  disagreements {}",
            self.scenes.len(),
            self.total_cost,
            self.verified,
            self.disagreements
        )
        .unwrap();
        s
    }
}

fn match_scene(
    config: &RunConfig,
    gt: &SceneAnnotation,
    pr: &SceneAnnotation,
    verify: bool,
) -> Result<SceneMatch> {
    let gts = gt.ground_truths();
    let preds = pr.predictions();
    let w = &config.match_weights;
    let outcome = match_and_reorder(&preds, &gts, w)?;

    let boxes: Vec<_> = gts.iter().map(|g| g.bbox).collect();
    let mut rng = seeds::rng(seeds::sub_seed(gt.scene_seed, DENOISING_STREAM));
    let dn: Vec<DenoisingPair> = build_denoising_groups(&boxes, &config.denoising, &mut rng)
        .into_iter()
        .map(DenoisingPair::identity)
        .collect();
    let unmatched_conf: Vec<f64> = outcome.unmatched.iter().map(|(_, c)| *c).collect();
    let loss = total_loss(
        &outcome.reordered,
        &gts,
        &unmatched_conf,
        &dn,
        &boxes,
        &config.loss_weights,
    )?;

    let verification =
        if verify && gts.len() <= VERIFY_MAX_GROUND_TRUTHS && preds.len() <= VERIFY_MAX_PREDICTIONS
        {
            let (matrix, _) = cost_matrix(&preds, &gts, w);
            let (assignment, cost) = brute_force_assignment(&matrix)?;
            Some(Verification {
                agrees: cost.to_bits() == outcome.result.total_cost.to_bits(),
                brute_force_cost: cost,
                brute_force_assignment: assignment,
            })
        } else {
            None
        };

    let r = &outcome.result;
    Ok(SceneMatch {
        scene_index: gt.scene_index,
        ground_truths: gts.len(),
        predictions: preds.len(),
        pairs: r
            .assignment
            .iter()
            .zip(&r.per_pair_costs)
            .enumerate()
            .map(|(g, (&p, c))| Pair {
                ground_truth: g,
                prediction: p,
                cost: *c,
            })
            .collect(),
        total_cost: r.total_cost,
        unmatched: outcome.unmatched.iter().map(|(j, _)| *j).collect(),
        loss,
        verification,
    })
}

pub fn match_corpus(
    config: &RunConfig,
    annotations: &[SceneAnnotation],
    predictions: &[SceneAnnotation],
    verify: bool,
) -> Result<MatchReport> {
    let pairs = pair_scenes(annotations, predictions)?;
    let scenes = pairs
        .par_iter()
        .map(|(gt, pr)| match_scene(config, gt, pr, verify))
        .collect::<Result<Vec<_>>>()?;
    Ok(MatchReport {
        config: config.clone(),
        weights: weights_tuple(&config.match_weights),
        total_cost: scenes.iter().map(|s| s.total_cost).sum(),
        verified: scenes.iter().filter(|s| s.verification.is_some()).count(),
        disagreements: scenes
            .iter()
            .filter(|s| s.verification.as_ref().is_some_and(|v| !v.agrees))
            .count(),
        scenes,
    })
}

pub fn run(
    config: &RunConfig,
    annotations: &Path,
    predictions: &Path,
    verify: bool,
    out: Option<&Path>,
) -> Result<MatchReport> {
    let a = read_annotations(annotations)?;
    let p = read_predictions(predictions)?;
    let report = match_corpus(config, &a, &p, verify)?;
    if let Some(out) = out {
        write_json(out, &report)?;
    }
    Ok(report)
}
