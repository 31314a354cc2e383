//! Keypoint and mask prompts, their token encoding, and prompt dropout.

use nalgebra::{DMatrix, RowDVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::DecoderConfig;
use crate::error::{Error, Result};
use crate::projection::BBox;

/// Prompts for one instance slot. Keypoints are `(x, y, valid)` in
/// normalized image coordinates; the mask is a row-major `H0 × W0` grid.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InstancePrompt {
    #[serde(default)]
    pub keypoints: Option<Vec<[f64; 3]>>,
    #[serde(default)]
    pub mask: Option<Vec<bool>>,
}

impl InstancePrompt {
    pub fn is_empty(&self) -> bool {
        self.keypoints.is_none() && self.mask.is_none()
    }
}

/// Slot `i` receives `instances[i]`; missing entries mean no prompt.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PromptSet {
    pub instances: Vec<InstancePrompt>,
}

impl PromptSet {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn validate(&self, config: &DecoderConfig) -> Result<()> {
        if self.instances.len() > config.slots {
            return Err(Error::InvalidConfig(format!(
                "{} prompted instances but only {} slots",
                self.instances.len(),
                config.slots
            )));
        }
        for (i, p) in self.instances.iter().enumerate() {
            if let Some(kp) = &p.keypoints {
                if kp.len() != config.n_keypoints {
                    return Err(Error::Dimension {
                        context: "keypoint prompt",
                        expected: config.n_keypoints,
                        actual: kp.len(),
                    });
                }
                for k in kp {
                    if k[2] != 0.0 && k[2] != 1.0 {
                        return Err(Error::InvalidConfig(format!(
                            "prompt {i}: keypoint valid flag must be 0 or 1"
                        )));
                    }
                    let inside = (0.0..=1.0).contains(&k[0]) && (0.0..=1.0).contains(&k[1]);
                    if k[2] == 1.0 && !inside {
                        return Err(Error::InvalidConfig(format!(
                            "prompt {i}: keypoint outside [0, 1]"
                        )));
                    }
                }
            }
            if let Some(m) = &p.mask {
                if m.len() != config.grid_h * config.grid_w {
                    return Err(Error::Dimension {
                        context: "mask prompt",
                        expected: config.grid_h * config.grid_w,
                        actual: m.len(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Grid cells whose centres fall inside `bbox`.
pub fn mask_from_bbox(bbox: &BBox, grid_h: usize, grid_w: usize) -> Vec<bool> {
    let (x0, y0, x1, y1) = bbox.corners();
    (0..grid_h * grid_w)
        .map(|i| {
            let u = ((i % grid_w) as f64 + 0.5) / grid_w as f64;
            let v = ((i / grid_w) as f64 + 0.5) / grid_h as f64;
            u >= x0 && u <= x1 && v >= y0 && v <= y1
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptWeights {
    /// 2 × D.
    pub kp_pos: DMatrix<f64>,
    /// K × D, one identity embedding per keypoint.
    pub kp_id: DMatrix<f64>,
    /// (H0·W0) × D.
    pub mask: DMatrix<f64>,
    /// Used for absent keypoint prompts.
    pub kp_placeholder: RowDVector<f64>,
    /// Used for absent mask prompts.
    pub mask_placeholder: RowDVector<f64>,
}

/// Prompt tokens for one slot.
///
/// With `n` prompt tokens, the last encodes the mask and the first `n - 1`
/// encode keypoints, keypoint `k` going to token `k % (n - 1)` as the mean of
/// `[x, y] kp_pos + kp_id[k]` over its valid keypoints. A lone prompt token
/// holds the sum of both encodings. Absent prompts give the placeholders.
pub fn encode_prompt(
    config: &DecoderConfig,
    prompt: Option<&InstancePrompt>,
    w: &PromptWeights,
) -> Vec<RowDVector<f64>> {
    let n = config.layout.prompt;
    let kp_tokens = n.saturating_sub(1).max(1);
    let keypoints = prompt.and_then(|p| p.keypoints.as_ref());
    let mut kp: Vec<RowDVector<f64>> = (0..kp_tokens)
        .map(|t| {
            let mut acc = RowDVector::zeros(config.width);
            let mut count = 0usize;
            if let Some(kps) = keypoints {
                for (k, p) in kps.iter().enumerate() {
                    if k % kp_tokens == t && p[2] == 1.0 {
                        acc += w.kp_pos.row(0) * p[0] + w.kp_pos.row(1) * p[1] + w.kp_id.row(k);
                        count += 1;
                    }
                }
            }
            if count == 0 {
                w.kp_placeholder.clone()
            } else {
                acc / count as f64
            }
        })
        .collect();
    let mask = match prompt.and_then(|p| p.mask.as_ref()) {
        None => w.mask_placeholder.clone(),
        Some(m) => {
            let on = m.iter().filter(|b| **b).count();
            let mut acc = RowDVector::zeros(config.width);
            for (i, _) in m.iter().enumerate().filter(|(_, b)| **b) {
                acc += w.mask.row(i);
            }
            acc / on.max(1) as f64
        }
    };
    if n == 1 {
        vec![&kp[0] + mask]
    } else {
        kp.push(mask);
        kp
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DropoutConfig {
    pub p_mask_drop: f64,
    pub p_kp_prompt_drop: f64,
    /// Per-instance keypoint masking rate is uniform on `[0, kp_rate_max]`.
    pub kp_rate_max: f64,
}

impl Default for DropoutConfig {
    fn default() -> Self {
        Self {
            p_mask_drop: 0.5,
            p_kp_prompt_drop: 0.2,
            kp_rate_max: 0.7,
        }
    }
}

impl DropoutConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("p_mask_drop", self.p_mask_drop),
            ("p_kp_prompt_drop", self.p_kp_prompt_drop),
            ("kp_rate_max", self.kp_rate_max),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must lie in [0, 1], got {p}"
                )));
            }
        }
        Ok(())
    }
}

/// Training-time prompt dropout, drawn independently per instance.
///
/// The mask is dropped with `p_mask_drop`; the keypoint prompt is dropped
/// entirely with `p_kp_prompt_drop`, and otherwise each valid keypoint is
/// invalidated with a rate `r ~ U[0, kp_rate_max]` drawn once per instance.
pub fn apply_prompt_dropout<R: Rng + ?Sized>(
    prompts: &PromptSet,
    config: &DropoutConfig,
    rng: &mut R,
) -> PromptSet {
    let instances = prompts
        .instances
        .iter()
        .map(|p| {
            let mut out = p.clone();
            if out.mask.is_some() && rng.gen_bool(config.p_mask_drop) {
                out.mask = None;
            }
            if let Some(kps) = &mut out.keypoints {
                if rng.gen_bool(config.p_kp_prompt_drop) {
                    out.keypoints = None;
                } else {
                    let rate = rng.gen_range(0.0..=config.kp_rate_max);
                    for k in kps.iter_mut() {
                        if k[2] == 1.0 && rng.gen_bool(rate) {
                            *k = [0.0, 0.0, 0.0];
                        }
                    }
                }
            }
            out
        })
        .collect();
    PromptSet { instances }
}
