//! Evaluation metrics: Procrustes-aligned MPJPE, PCK, OKS and keypoint AP/mAP.

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::projection::{BBox, ImageSize};

/// `x -> scale * rotation * x + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl SimilarityTransform {
    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p * self.scale + self.translation
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PckNormalizer {
    BboxMaxSide,
    BboxDiagonal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub pck_threshold: f64,
    pub pck_normalizer: PckNormalizer,
    pub oks_sigmas: Vec<f64>,
    pub ap_thresholds: Vec<f64>,
}

pub const DEFAULT_OKS_SIGMA: f64 = 0.05;

impl EvalConfig {
    /// PCK@0.1 on the longer box side, uniform OKS sigmas, thresholds 0.50:0.05:0.95.
    pub fn with_keypoints(k: usize) -> Self {
        Self {
            pck_threshold: 0.1,
            pck_normalizer: PckNormalizer::BboxMaxSide,
            oks_sigmas: vec![DEFAULT_OKS_SIGMA; k],
            ap_thresholds: (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |t: f64| !(t > 0.0 && t < 1.0);
        if bad(self.pck_threshold) || self.ap_thresholds.iter().any(|&t| bad(t)) {
            return Err(Error::InvalidConfig("thresholds must lie in (0, 1)".into()));
        }
        if self.ap_thresholds.is_empty() {
            return Err(Error::InvalidConfig("no AP thresholds".into()));
        }
        if self.oks_sigmas.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::InvalidConfig("OKS sigmas must be positive".into()));
        }
        Ok(())
    }
}

/// Relative singular-value floor below which a point set counts as collinear.
const RANK_TOL: f64 = 1e-12;

/// Least-squares similarity mapping `source` onto `target` (Umeyama), with
/// the reflection case excluded by a determinant sign correction.
pub fn procrustes_align(
    source: &[Vector3<f64>],
    target: &[Vector3<f64>],
) -> Result<SimilarityTransform> {
    check_len("procrustes target", source.len(), target.len())?;
    let n = source.len();
    if n < 3 {
        return Err(Error::Degenerate(format!(
            "need at least 3 points, got {n}"
        )));
    }
    let inv_n = 1.0 / n as f64;
    let mu_s = source.iter().sum::<Vector3<f64>>() * inv_n;
    let mu_t = target.iter().sum::<Vector3<f64>>() * inv_n;

    let mut cov = Matrix3::zeros();
    let mut src_scatter = Matrix3::zeros();
    let mut var_s = 0.0;
    for (s, t) in source.iter().zip(target) {
        let (ds, dt) = (s - mu_s, t - mu_t);
        cov += dt * ds.transpose();
        src_scatter += ds * ds.transpose();
        var_s += ds.norm_squared();
    }
    cov *= inv_n;
    var_s *= inv_n;

    let sv = src_scatter.symmetric_eigenvalues();
    let mut sv: Vec<f64> = sv.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    if !(sv[0] > 0.0) || sv[1] <= RANK_TOL * sv[0] {
        return Err(Error::Degenerate(
            "source points are collinear or coincident".into(),
        ));
    }

    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let d = if (u * v_t).determinant() < 0.0 {
        -1.0
    } else {
        1.0
    };
    let correction = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d));
    let rotation = u * correction * v_t;
    let trace = svd.singular_values[0] + svd.singular_values[1] + d * svd.singular_values[2];
    let scale = trace / var_s;
    if !(scale > 0.0) {
        return Err(Error::Degenerate("target points are coincident".into()));
    }
    let translation = mu_t - rotation * mu_s * scale;
    Ok(SimilarityTransform {
        scale,
        rotation,
        translation,
    })
}

/// Mean per-joint Euclidean error after optimal similarity alignment.
pub fn pa_mpjpe(pred: &[Vector3<f64>], gt: &[Vector3<f64>]) -> Result<f64> {
    let t = procrustes_align(pred, gt)?;
    Ok(pred
        .iter()
        .zip(gt)
        .map(|(p, g)| (t.apply(p) - g).norm())
        .sum::<f64>()
        / pred.len() as f64)
}

pub fn pck_normalizer(bbox: &BBox, image: ImageSize, kind: PckNormalizer) -> f64 {
    let (w, h) = bbox.pixel_size(image);
    match kind {
        PckNormalizer::BboxMaxSide => w.max(h),
        PckNormalizer::BboxDiagonal => w.hypot(h),
    }
}

/// Fraction of visible keypoints within `threshold * normalizer` pixels.
/// `None` when no keypoint is visible.
pub fn pck(
    pred: &[Vector2<f64>],
    gt: &[Vector2<f64>],
    vis: &[bool],
    gt_bbox: &BBox,
    image: ImageSize,
    config: &EvalConfig,
) -> Option<f64> {
    let radius = config.pck_threshold * pck_normalizer(gt_bbox, image, config.pck_normalizer);
    let (hits, n) = pred
        .iter()
        .zip(gt)
        .zip(vis)
        .filter(|(_, v)| **v)
        .fold((0usize, 0usize), |(h, n), ((p, g), _)| {
            (h + usize::from((p - g).norm() < radius), n + 1)
        });
    (n > 0).then(|| hits as f64 / n as f64)
}

/// Object keypoint similarity: mean over visible keypoints of
/// `exp(-d² / (2·area·σ²))`. Zero when nothing is visible.
pub fn oks(
    pred: &[Vector2<f64>],
    gt: &[Vector2<f64>],
    vis: &[bool],
    gt_area: f64,
    sigmas: &[f64],
) -> f64 {
    let (sum, n) = pred
        .iter()
        .zip(gt)
        .zip(vis)
        .zip(sigmas)
        .filter(|(((_, _), v), _)| **v)
        .fold((0.0, 0usize), |(s, n), (((p, g), _), sigma)| {
            let d2 = (p - g).norm_squared();
            (s + (-d2 / (2.0 * gt_area * sigma * sigma)).exp(), n + 1)
        });
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApPrediction {
    /// Pixel coordinates.
    pub keypoints2d: Vec<Vector2<f64>>,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApGroundTruth {
    /// Pixel coordinates.
    pub keypoints2d: Vec<Vector2<f64>>,
    pub visibility: Vec<bool>,
    /// Box area in square pixels.
    pub area: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ApScene {
    pub predictions: Vec<ApPrediction>,
    pub ground_truths: Vec<ApGroundTruth>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApReport {
    /// `(OKS threshold, AP)`.
    pub per_threshold: Vec<(f64, f64)>,
    pub map: f64,
}

impl ApReport {
    pub fn ap_at(&self, threshold: f64) -> Option<f64> {
        self.per_threshold
            .iter()
            .find(|(t, _)| (t - threshold).abs() < 1e-9)
            .map(|(_, ap)| *ap)
    }
}

/// Area under the precision/recall curve with all-point interpolation.
/// `hits` are in descending-confidence order.
pub fn interpolated_ap(hits: &[bool], n_gt: usize) -> f64 {
    if n_gt == 0 {
        return 0.0;
    }
    let mut precision = Vec::with_capacity(hits.len());
    let mut recall = Vec::with_capacity(hits.len());
    let (mut tp, mut fp) = (0usize, 0usize);
    for &h in hits {
        if h {
            tp += 1;
        } else {
            fp += 1;
        }
        precision.push(tp as f64 / (tp + fp) as f64);
        recall.push(tp as f64 / n_gt as f64);
    }
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (p, r) in precision.iter().zip(&recall) {
        ap += (r - prev_recall) * p;
        prev_recall = *r;
    }
    ap
}

/// Greedy per-scene matching at one OKS threshold. Returns, for each
/// prediction in descending-confidence order, `(confidence, is_true_positive)`.
fn greedy_scene(scene: &ApScene, sigmas: &[f64], threshold: f64) -> Vec<(f64, bool)> {
    let gts: Vec<&ApGroundTruth> = scene
        .ground_truths
        .iter()
        .filter(|g| g.visibility.iter().any(|v| *v))
        .collect();
    let mut order: Vec<usize> = (0..scene.predictions.len()).collect();
    order.sort_by(|&a, &b| {
        scene.predictions[b]
            .confidence
            .total_cmp(&scene.predictions[a].confidence)
            .then(a.cmp(&b))
    });
    let mut taken = vec![false; gts.len()];
    order
        .into_iter()
        .map(|pi| {
            let p = &scene.predictions[pi];
            let mut best: Option<(usize, f64)> = None;
            for (gi, g) in gts.iter().enumerate() {
                if taken[gi] {
                    continue;
                }
                let s = oks(
                    &p.keypoints2d,
                    &g.keypoints2d,
                    &g.visibility,
                    g.area,
                    sigmas,
                );
                if s >= threshold && best.is_none_or(|(_, b)| s > b) {
                    best = Some((gi, s));
                }
            }
            if let Some((gi, _)) = best {
                taken[gi] = true;
            }
            (p.confidence, best.is_some())
        })
        .collect()
}

/// Corpus-level keypoint AP per OKS threshold and their mean.
/// `None` when the corpus has no ground truth with a visible keypoint.
pub fn average_precision(scenes: &[ApScene], config: &EvalConfig) -> Option<ApReport> {
    let n_gt: usize = scenes
        .iter()
        .map(|s| {
            s.ground_truths
                .iter()
                .filter(|g| g.visibility.iter().any(|v| *v))
                .count()
        })
        .sum();
    if n_gt == 0 {
        return None;
    }
    let per_threshold: Vec<(f64, f64)> = config
        .ap_thresholds
        .iter()
        .map(|&thr| {
            let mut records: Vec<(f64, bool)> = scenes
                .iter()
                .flat_map(|s| greedy_scene(s, &config.oks_sigmas, thr))
                .collect();
            // Stable: equal confidences keep scene order.
            records.sort_by(|a, b| b.0.total_cmp(&a.0));
            let hits: Vec<bool> = records.iter().map(|r| r.1).collect();
            (thr, interpolated_ap(&hits, n_gt))
        })
        .collect();
    let map = per_threshold.iter().map(|(_, ap)| ap).sum::<f64>() / per_threshold.len() as f64;
    Some(ApReport { per_threshold, map })
}
