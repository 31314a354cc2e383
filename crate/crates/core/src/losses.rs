//! Multi-task training objective.
//!
//! ```text
//! L     = λ_params·L_params + λ_2D·L_2D + λ_3D·L_3D + λ_box·L_box
//! L_box = L_coord + L_giou + L_conf + L_dn
//! ```
//!
//! Per-instance terms are averaged over matched pairs. `L_conf` is a binary
//! cross-entropy whose target is the IoU of the matched pair (0 for unmatched
//! predictions); its sum over all predictions is divided by the matched count.
//! `L_dn` supervises the boxes recovered from noised ground-truth queries with
//! the same L1 + (1 - GIoU) terms.

use nalgebra::{SVector, Vector2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::body_model::InstanceParams;
use crate::error::{check_len, Result};
use crate::matcher::{bbox_l1, giou, iou, GroundTruthInstance, InstancePrediction, CONF_EPS};
use crate::projection::{project_point, BBox, PerspectiveCamera};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub lambda_params: f64,
    pub lambda_2d: f64,
    pub lambda_3d: f64,
    pub lambda_box: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_params: 1.0,
            lambda_2d: 5.0,
            lambda_3d: 5.0,
            lambda_box: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_params: f64,
    pub l_2d: f64,
    pub l_3d: f64,
    pub l_coord: f64,
    pub l_giou: f64,
    pub l_conf: f64,
    pub l_dn: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn l_box(&self) -> f64 {
        self.l_coord + self.l_giou + self.l_conf + self.l_dn
    }

    /// Recompute `total` from the components.
    pub fn weighted_total(&self, w: &LossWeights) -> f64 {
        w.lambda_params * self.l_params
            + w.lambda_2d * self.l_2d
            + w.lambda_3d * self.l_3d
            + w.lambda_box * self.l_box()
    }
}

/// Box-noise settings for denoising queries. Centre offsets are uniform in
/// `±center_frac·(w, h)`; sizes are scaled by `1 + U(-size_frac, size_frac)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DenoisingConfig {
    pub groups: usize,
    pub center_frac: f64,
    pub size_frac: f64,
}

impl Default for DenoisingConfig {
    fn default() -> Self {
        Self {
            groups: 5,
            center_frac: 0.2,
            size_frac: 0.4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenoisingGroup {
    /// Index of the ground truth this query was built from.
    pub source: usize,
    pub group: usize,
    pub noised: BBox,
    pub center_frac: f64,
    pub size_frac: f64,
}

/// A denoising query with the box recovered from it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenoisingPair {
    pub query: DenoisingGroup,
    pub predicted: BBox,
}

impl DenoisingPair {
    /// With no trained network the recovered box is the noised box itself.
    pub fn identity(query: DenoisingGroup) -> Self {
        Self {
            predicted: query.noised,
            query,
        }
    }
}

/// `config.groups` noised copies of every ground-truth box, group-major.
pub fn build_denoising_groups<R: Rng + ?Sized>(
    gt_boxes: &[BBox],
    config: &DenoisingConfig,
    rng: &mut R,
) -> Vec<DenoisingGroup> {
    let mut out = Vec::with_capacity(config.groups * gt_boxes.len());
    for group in 0..config.groups {
        for (source, b) in gt_boxes.iter().enumerate() {
            let mut u = || rng.gen_range(-1.0..=1.0);
            let (dx, dy, sw, sh) = (u(), u(), u(), u());
            let noised = BBox::new(
                b.cx + dx * config.center_frac * b.w,
                b.cy + dy * config.center_frac * b.h,
                (b.w * (1.0 + sw * config.size_frac)).max(0.0),
                (b.h * (1.0 + sh * config.size_frac)).max(0.0),
            );
            out.push(DenoisingGroup {
                source,
                group,
                noised,
                center_frac: config.center_frac,
                size_frac: config.size_frac,
            });
        }
    }
    out
}

/// Mean squared error over the concatenated `(beta, theta)` vector; 0 when
/// the ground truth carries no parameters.
pub fn l_params(pred: &InstanceParams, gt: Option<&InstanceParams>) -> Result<f64> {
    let Some(gt) = gt else {
        return Ok(0.0);
    };
    check_len("beta", gt.shape.beta.len(), pred.shape.beta.len())?;
    check_len("theta", gt.pose.theta.len(), pred.pose.theta.len())?;
    let beta_sq: f64 = pred
        .shape
        .beta
        .iter()
        .zip(&gt.shape.beta)
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    let theta_sq: f64 = pred
        .pose
        .theta
        .iter()
        .zip(&gt.pose.theta)
        .map(|(a, b)| (a - b).norm_squared())
        .sum();
    let n = gt.shape.beta.len() + 3 * gt.pose.theta.len();
    Ok(if n == 0 {
        0.0
    } else {
        (beta_sq + theta_sq) / n as f64
    })
}

/// Visibility-masked L1, averaged per coordinate over visible keypoints.
pub fn l_keypoints<const D: usize>(
    pred: &[SVector<f64, D>],
    gt: &[SVector<f64, D>],
    vis: &[bool],
) -> f64 {
    let (sum, n) = pred
        .iter()
        .zip(gt)
        .zip(vis)
        .filter(|(_, v)| **v)
        .fold((0.0, 0usize), |(s, n), ((p, g), _)| {
            (s + (p - g).abs().sum(), n + 1)
        });
    if n == 0 {
        0.0
    } else {
        sum / (n * D) as f64
    }
}

/// Binary cross-entropy of confidence `c` against soft target `t`.
/// Terms with zero weight contribute exactly zero; logs are floored at `ln(1e-7)`.
pub fn l_conf(pred_conf: f64, target: f64) -> f64 {
    let c = pred_conf.clamp(0.0, 1.0);
    let t = target.clamp(0.0, 1.0);
    let pos = if t > 0.0 {
        t * c.max(CONF_EPS).ln()
    } else {
        0.0
    };
    let neg = if t < 1.0 {
        (1.0 - t) * (1.0 - c).max(CONF_EPS).ln()
    } else {
        0.0
    };
    -(pos + neg)
}

/// Keypoints of a predicted mesh in normalized image coordinates. Points at or
/// behind the camera map to the principal point.
pub fn project_keypoints_normalized(
    points: &[nalgebra::Vector3<f64>],
    camera: &PerspectiveCamera,
) -> Vec<Vector2<f64>> {
    let (w, h) = (
        camera.image_size.width as f64,
        camera.image_size.height as f64,
    );
    points
        .iter()
        .map(|p| {
            let q = project_point(p, camera);
            let px = if q.valid {
                q.pixel
            } else {
                camera.principal_point
            };
            Vector2::new(px.x / w, px.y / h)
        })
        .collect()
}

/// Assemble every loss term. `reordered[i]` is the prediction matched to `gts[i]`.
pub fn total_loss(
    reordered: &[InstancePrediction],
    gts: &[GroundTruthInstance],
    unmatched_confidences: &[f64],
    dn: &[DenoisingPair],
    gt_boxes_for_dn: &[BBox],
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    check_len("matched predictions", gts.len(), reordered.len())?;
    let m = gts.len();
    let mut b = LossBreakdown::default();

    let mut n_params = 0usize;
    for (p, g) in reordered.iter().zip(gts) {
        if let (Some(pp), Some(gp)) = (&p.params, &g.params) {
            b.l_params += l_params(pp, Some(gp))?;
            n_params += 1;
        }
        check_len("keypoints2d", g.keypoints2d.len(), p.keypoints2d.len())?;
        check_len("keypoints3d", g.keypoints3d.len(), p.keypoints3d.len())?;
        b.l_2d += l_keypoints(&p.keypoints2d, &g.keypoints2d, &g.visibility);
        b.l_3d += l_keypoints(&p.keypoints3d, &g.keypoints3d, &g.visibility);
        b.l_coord += bbox_l1(&p.bbox, &g.bbox);
        b.l_giou += 1.0 - giou(&p.bbox, &g.bbox);
        b.l_conf += l_conf(p.confidence, iou(&p.bbox, &g.bbox));
    }
    for &c in unmatched_confidences {
        b.l_conf += l_conf(c, 0.0);
    }
    if n_params > 0 {
        b.l_params /= n_params as f64;
    }
    let norm = m.max(1) as f64;
    b.l_2d /= norm;
    b.l_3d /= norm;
    b.l_coord /= norm;
    b.l_giou /= norm;
    b.l_conf /= norm;

    if !dn.is_empty() {
        let mut sum = 0.0;
        for pair in dn {
            let target =
                gt_boxes_for_dn
                    .get(pair.query.source)
                    .ok_or(crate::error::Error::Dimension {
                        context: "denoising source",
                        expected: gt_boxes_for_dn.len(),
                        actual: pair.query.source,
                    })?;
            sum += bbox_l1(&pair.predicted, target) + (1.0 - giou(&pair.predicted, target));
        }
        b.l_dn = sum / dn.len() as f64;
    }
    b.total = b.weighted_total(weights);
    Ok(b)
}
