//! `eval`: PA-MPJPE, PCK and keypoint AP of a prediction corpus.
//!
//! Within each scene ground truths and predictions are paired by the optimal
//! assignment under the configured match weights. PA-MPJPE averages over
//! matched pairs. PCK averages over ground truths with a visible keypoint,
//! an unmatched one scoring 0. AP uses every prediction except those assigned
//! to a ground truth with no visible keypoint, which are ignored rather than
//! counted as false positives.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::Result;
use rayon::prelude::*;
use serde::Serialize;
use zoo3d::matcher::{
    cost_matrix, hungarian, GroundTruthInstance, InstancePrediction, MatchWeights,
};
use zoo3d::metrics::{
    average_precision, pa_mpjpe, pck, ApGroundTruth, ApPrediction, ApReport, ApScene,
};
use zoo3d::scene::SceneAnnotation;

use crate::config::RunConfig;
use crate::corpus::{pair_scenes, read_annotations, read_predictions, write_json};

/// Optimal `(ground truth, prediction)` pairs. When there are fewer
/// predictions than ground truths every prediction is matched instead.
pub fn assign_pairs(
    preds: &[InstancePrediction],
    gts: &[GroundTruthInstance],
    w: &MatchWeights,
) -> Result<Vec<(usize, usize)>> {
    if preds.is_empty() || gts.is_empty() {
        return Ok(Vec::new());
    }
    let (matrix, _) = cost_matrix(preds, gts, w);
    let mut pairs: Vec<(usize, usize)> = if gts.len() <= preds.len() {
        hungarian(&matrix)?.into_iter().enumerate().collect()
    } else {
        hungarian(&matrix.transposed())?
            .into_iter()
            .enumerate()
            .map(|(p, g)| (g, p))
            .collect()
    };
    pairs.sort_unstable();
    Ok(pairs)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct InstanceScore {
    visible: usize,
    pa_mpjpe: Option<f64>,
    pck: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub instances: usize,
    pub matched: usize,
    pub pa_mpjpe: Option<f64>,
    pub pck: Option<f64>,
}

fn summarize<'a>(scores: impl Iterator<Item = &'a InstanceScore>) -> Summary {
    let (mut n, mut matched) = (0, 0);
    let (mut pa, mut pa_n, mut pk, mut pk_n) = (0.0, 0usize, 0.0, 0usize);
    for s in scores {
        n += 1;
        if let Some(v) = s.pa_mpjpe {
            matched += 1;
            pa += v;
            pa_n += 1;
        }
        if let Some(v) = s.pck {
            pk += v;
            pk_n += 1;
        }
    }
    Summary {
        instances: n,
        matched,
        pa_mpjpe: (pa_n > 0).then(|| pa / pa_n as f64),
        pck: (pk_n > 0).then(|| pk / pk_n as f64),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bucket {
    pub name: String,
    /// Visible keypoint counts `v` with `visible[0] <= v < visible[1]`.
    pub visible: [usize; 2],
    #[serde(flatten)]
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub config: RunConfig,
    pub scenes: usize,
    pub predictions: usize,
    #[serde(flatten)]
    pub overall: Summary,
    /// `None` when no ground truth has a visible keypoint.
    pub ap: Option<ApReport>,
    pub buckets: Vec<Bucket>,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.6}"))
}

impl EvalReport {
    pub fn map(&self) -> Option<f64> {
        self.ap.as_ref().map(|a| a.map)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        writeln!(s, "config {}", self.config.to_compact_json()).unwrap();
        writeln!(
            s,
            "scenes {}  ground truths {}  predictions {}  matched {}",
            self.scenes, self.overall.instances, self.predictions, self.overall.matched
        )
        .unwrap();
        writeln!(
            s,
            "PA-MPJPE {}  PCK@{} {}  mAP {}",
            opt(self.overall.pa_mpjpe),
            self.config.eval.pck_threshold,
            opt(self.overall.pck),
            opt(self.map())
        )
        .unwrap();
        if let Some(ap) = &self.ap {
            let per: Vec<String> = ap
                .per_threshold
                .iter()
                .map(|(t, v)| format!("{t:.2}:{v:.4}"))
                .collect();
            writeln!(s, "AP  {}", per.join(" ")).unwrap();
        }
        writeln!(
            s,
            "{:<6} {:>9} {:>9} {:>12} {:>10}",
            "bucket", "visible", "instances", "PA-MPJPE", "PCK"
        )
        .unwrap();
        for b in &self.buckets {
            writeln!(
                s,
                "{:<6} {:>9} {:>9} {:>12} {:>10}",
                b.name,
                format!("{}..{}", b.visible[0], b.visible[1]),
                b.summary.instances,
                opt(b.summary.pa_mpjpe),
                opt(b.summary.pck)
            )
            .unwrap();
        }
        s
    }
}

fn scene_scores(
    config: &RunConfig,
    gt: &SceneAnnotation,
    pr: &SceneAnnotation,
) -> Result<(Vec<InstanceScore>, ApScene)> {
    let image = gt.image();
    let eval = config
        .eval
        .eval_config(gt.instances.first().map_or(0, |i| i.keypoints3d.len()));
    let pairs = assign_pairs(
        &pr.predictions(),
        &gt.ground_truths(),
        &config.match_weights,
    )?;
    let mut matched_to = vec![None; gt.instances.len()];
    for &(g, p) in &pairs {
        matched_to[g] = Some(p);
    }
    let scores = gt
        .instances
        .iter()
        .zip(&matched_to)
        .map(|(g, m)| {
            let vis = g.visibility();
            let visible = vis.iter().filter(|v| **v).count();
            let Some(p) = m.map(|p| &pr.instances[p]) else {
                let pck = (visible > 0).then_some(0.0);
                return Ok(InstanceScore {
                    visible,
                    pa_mpjpe: None,
                    pck,
                });
            };
            Ok(InstanceScore {
                visible,
                pa_mpjpe: Some(pa_mpjpe(&p.keypoints3d(), &g.keypoints3d())?),
                pck: pck(
                    &p.keypoints_px(),
                    &g.keypoints_px(),
                    &vis,
                    &g.bbox(),
                    image,
                    &eval,
                ),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let ignored: Vec<usize> = pairs
        .iter()
        .filter(|(g, _)| gt.instances[*g].visible_count() == 0)
        .map(|(_, p)| *p)
        .collect();
    let (iw, ih) = (image.width as f64, image.height as f64);
    let ap = ApScene {
        predictions: pr
            .instances
            .iter()
            .enumerate()
            .filter(|(i, _)| !ignored.contains(i))
            .map(|(_, p)| ApPrediction {
                keypoints2d: p.keypoints_px(),
                confidence: p.confidence.unwrap_or(0.0),
            })
            .collect(),
        ground_truths: gt
            .instances
            .iter()
            .map(|g| ApGroundTruth {
                keypoints2d: g.keypoints_px(),
                visibility: g.visibility(),
                area: g.bbox[2] * iw * g.bbox[3] * ih,
            })
            .collect(),
    };
    Ok((scores, ap))
}

pub fn evaluate(
    config: &RunConfig,
    annotations: &[SceneAnnotation],
    predictions: &[SceneAnnotation],
) -> Result<EvalReport> {
    let pairs = pair_scenes(annotations, predictions)?;
    let per_scene = pairs
        .par_iter()
        .map(|(gt, pr)| scene_scores(config, gt, pr))
        .collect::<Result<Vec<_>>>()?;
    let k = annotations
        .iter()
        .flat_map(|s| s.instances.first())
        .map(|i| i.keypoints3d.len())
        .next()
        .unwrap_or(0);
    let eval = config.eval.eval_config(k);
    let ap_scenes: Vec<ApScene> = per_scene.iter().map(|(_, a)| a.clone()).collect();
    let scores: Vec<InstanceScore> = per_scene.into_iter().flat_map(|(s, _)| s).collect();

    let [mid, high] = config.eval.buckets(k);
    let ranges = [
        ("Low", 0, mid),
        ("Mid", mid, high),
        ("High", high, k.max(high) + 1),
    ];
    let buckets = ranges
        .iter()
        .map(|&(name, lo, hi)| Bucket {
            name: name.to_string(),
            visible: [lo, hi],
            summary: summarize(scores.iter().filter(|s| (lo..hi).contains(&s.visible))),
        })
        .collect();

    Ok(EvalReport {
        config: config.clone(),
        scenes: pairs.len(),
        predictions: predictions.iter().map(|s| s.instances.len()).sum(),
        overall: summarize(scores.iter()),
        ap: average_precision(&ap_scenes, &eval),
        buckets,
    })
}

pub fn run(
    config: &RunConfig,
    annotations: &Path,
    predictions: &Path,
    out: Option<&Path>,
) -> Result<EvalReport> {
    let a = read_annotations(annotations)?;
    let p = read_predictions(predictions)?;
    let report = evaluate(config, &a, &p)?;
    if let Some(out) = out {
        write_json(out, &report)?;
    }
    Ok(report)
}
