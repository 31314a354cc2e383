//! Forward pass of a toy promptable decoder.
//!
//! The query matrix concatenates five token groups (params, box, 2D
//! keypoints, 3D keypoints, prompt) for each of `P` instance slots. Each
//! layer runs attention among every slot's own tokens, then cross-attention
//! from `[Q^l | Q^{l-1}]` to the image feature tokens. Between layers the
//! current params readout is posed through the body model and its 2D and 3D
//! keypoints are fed back into the keypoint token groups. Final predictions
//! read only the params and box tokens.
//!
//! Nothing here is trained: weights are seeded or loaded from a file.

mod attention;
mod encoder;
mod prompts;
mod tokens;
mod weights;

pub use attention::{
    attend, attention, cross_attention, instance_self_attention, normalize_kp3d,
    refresh_kp2d_tokens, refresh_kp3d_tokens, softmax_rows, Attended, AttentionWeights,
    FeedbackWeights, SelfAttentionWeights, KP3D_SCALE,
};
pub use encoder::{stub_encode, ImageFeatureMap};
pub use prompts::{
    apply_prompt_dropout, encode_prompt, mask_from_bbox, DropoutConfig, InstancePrompt, PromptSet,
    PromptWeights,
};
pub use tokens::{assemble_queries, Group, TokenLayout, TokenState};
pub use weights::{DecoderWeights, LayerWeights, ReadoutWeights, WEIGHTS_KIND};

use nalgebra::{DVector, Matrix3, Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::body_model::{
    axis_angle_from_matrix, rodrigues, GlobalTranslation, InstanceParams, PoseParams, ShapeParams,
    TemplateModel,
};
use crate::error::{Error, Result};
use crate::matcher::InstancePrediction;
use crate::projection::{project, BBox, PerspectiveCamera};
use crate::seeds;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecoderConfig {
    /// Instance slots `P`.
    pub slots: usize,
    pub layout: TokenLayout,
    /// Token width `D`.
    pub width: usize,
    pub layers: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub grid_h: usize,
    pub grid_w: usize,
    /// Feature channels `C0`.
    pub channels: usize,
    pub n_keypoints: usize,
    pub n_shape: usize,
    pub n_joints: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl DecoderConfig {
    /// P = 4, 13 tokens per instance, D = 32, 3 layers, 8×8×16 features.
    pub fn desk() -> Self {
        Self {
            slots: 4,
            layout: TokenLayout::desk(),
            width: 32,
            layers: 3,
            heads: 1,
            head_dim: 32,
            grid_h: 8,
            grid_w: 8,
            channels: 16,
            n_keypoints: 26,
            n_shape: 12,
            n_joints: 19,
        }
    }

    /// P = 30, 405 tokens per instance, D = 1024, 6 layers, 32×32×1280 features.
    pub fn full() -> Self {
        Self {
            slots: 30,
            layout: TokenLayout::full(),
            width: 1024,
            layers: 6,
            heads: 8,
            head_dim: 128,
            grid_h: 32,
            grid_w: 32,
            channels: 1280,
            n_keypoints: 26,
            n_shape: 145,
            n_joints: 35,
        }
    }

    /// Copy the keypoint, shape and joint counts from a template.
    pub fn for_template(mut self, template: &TemplateModel) -> Self {
        self.n_keypoints = template.n_keypoints();
        self.n_shape = template.n_shape();
        self.n_joints = template.n_joints();
        self
    }

    pub fn n_tokens(&self) -> usize {
        self.slots * self.layout.per_instance()
    }

    /// Shape, per-joint rotations, translation.
    pub fn param_dim(&self) -> usize {
        self.n_shape + 3 * self.n_joints + 3
    }

    pub fn validate(&self) -> Result<()> {
        let l = &self.layout;
        let positive = [
            ("slots", self.slots),
            ("params tokens", l.params),
            ("box tokens", l.bbox),
            ("kp2d tokens", l.kp2d),
            ("kp3d tokens", l.kp3d),
            ("prompt tokens", l.prompt),
            ("width", self.width),
            ("heads", self.heads),
            ("head_dim", self.head_dim),
            ("grid_h", self.grid_h),
            ("grid_w", self.grid_w),
            ("n_keypoints", self.n_keypoints),
            ("n_shape", self.n_shape),
            ("n_joints", self.n_joints),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if self.channels < 2 {
            return Err(Error::InvalidConfig("channels must be at least 2".into()));
        }
        if !self.width.is_multiple_of(self.heads) {
            return Err(Error::InvalidConfig(format!(
                "width {} is not divisible by {} heads",
                self.width, self.heads
            )));
        }
        Ok(())
    }

    pub fn check_template(&self, template: &TemplateModel) -> Result<()> {
        for (context, expected, actual) in [
            (
                "decoder keypoints",
                template.n_keypoints(),
                self.n_keypoints,
            ),
            (
                "decoder shape coefficients",
                template.n_shape(),
                self.n_shape,
            ),
            ("decoder joints", template.n_joints(), self.n_joints),
        ] {
            if expected != actual {
                return Err(Error::Dimension {
                    context,
                    expected,
                    actual,
                });
            }
        }
        Ok(())
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Map a raw params vector to body model parameters.
///
/// `β = 2 tanh(r)`, joint rotations `0.5 tanh(r)`, the root additionally
/// turned upright for the camera frame, and
/// `γ = (1.5 tanh, 0.3 + 0.5 tanh, 8 + 42 σ)` so instances sit in front of
/// the camera at scene depths.
pub fn params_from_raw(raw: &DVector<f64>, config: &DecoderConfig) -> InstanceParams {
    let (b, j) = (config.n_shape, config.n_joints);
    let beta = (0..b).map(|i| 2.0 * raw[i].tanh()).collect();
    let flip = Matrix3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0);
    let theta = (0..j)
        .map(|k| {
            let o = b + 3 * k;
            let w = Vector3::new(raw[o].tanh(), raw[o + 1].tanh(), raw[o + 2].tanh()) * 0.5;
            if k == 0 {
                axis_angle_from_matrix(&(flip * rodrigues(&w)))
            } else {
                w
            }
        })
        .collect();
    let t = b + 3 * j;
    InstanceParams {
        shape: ShapeParams { beta },
        pose: PoseParams { theta },
        translation: GlobalTranslation::new(
            1.5 * raw[t].tanh(),
            0.3 + 0.5 * raw[t + 1].tanh(),
            8.0 + 42.0 * sigmoid(raw[t + 2]),
        ),
    }
}

/// Predictions for one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedInstance {
    pub params: InstanceParams,
    pub bbox: BBox,
    pub confidence: f64,
    /// Normalized image coordinates.
    pub keypoints2d: Vec<Vector2<f64>>,
    pub keypoints3d: Vec<Vector3<f64>>,
    /// Root joint position, used to normalize 3D keypoints for feedback.
    pub root: Vector3<f64>,
}

impl DecodedInstance {
    pub fn to_prediction(&self) -> InstancePrediction {
        InstancePrediction {
            bbox: self.bbox,
            confidence: self.confidence,
            keypoints2d: self.keypoints2d.clone(),
            keypoints3d: self.keypoints3d.clone(),
            params: Some(self.params.clone()),
        }
    }
}

fn mean_rows(state: &TokenState, g: Group, slot: usize) -> DVector<f64> {
    let n = state.layout().count(g);
    let mut acc = DVector::zeros(state.width());
    for t in 0..n {
        acc += state.tokens.row(state.index(g, slot, t)).transpose();
    }
    acc / n as f64
}

/// Read every slot's params and box tokens and pose the predicted bodies.
pub fn readout(
    state: &TokenState,
    template: &TemplateModel,
    camera: &PerspectiveCamera,
    weights: &DecoderWeights,
) -> Result<Vec<DecodedInstance>> {
    let config = &weights.config;
    let (iw, ih) = (
        camera.image_size.width as f64,
        camera.image_size.height as f64,
    );
    (0..state.slots())
        .into_par_iter()
        .map(|slot| {
            let raw = weights.readout.params.transpose() * mean_rows(state, Group::Params, slot);
            let params = params_from_raw(&raw, config);
            let mesh = params.pose_mesh(template)?;
            let keypoints2d = project(&mesh.keypoints3d, camera)
                .iter()
                .map(|p| {
                    if p.valid {
                        Vector2::new(p.pixel.x / iw, p.pixel.y / ih)
                    } else {
                        Vector2::new(0.5, 0.5)
                    }
                })
                .collect();
            let b = weights.readout.bbox.transpose() * mean_rows(state, Group::Box, slot);
            let (cx, cy) = (sigmoid(b[0]), sigmoid(b[1]));
            let (w, h) = (sigmoid(b[2]), sigmoid(b[3]));
            Ok(DecodedInstance {
                bbox: BBox::new(cx, cy, w, h).clamped(),
                confidence: sigmoid(b[4]),
                keypoints2d,
                keypoints3d: mesh.keypoints3d,
                root: mesh.joints3d[0],
                params,
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct DecodeOutput {
    pub instances: Vec<DecodedInstance>,
    pub tokens: TokenState,
}

/// Full forward pass; always returns `P` instances.
pub fn decode(
    features: &ImageFeatureMap,
    prompts: &PromptSet,
    template: &TemplateModel,
    camera: &PerspectiveCamera,
    weights: &DecoderWeights,
) -> Result<DecodeOutput> {
    let config = &weights.config;
    config.validate()?;
    config.check_template(template)?;
    if features.grid_h != config.grid_h
        || features.grid_w != config.grid_w
        || features.channels() != config.channels
    {
        return Err(Error::InvalidConfig(format!(
            "features are {}x{}x{}, decoder expects {}x{}x{}",
            features.grid_h,
            features.grid_w,
            features.channels(),
            config.grid_h,
            config.grid_w,
            config.channels
        )));
    }
    let mut rng = seeds::rng(weights.query_seed);
    let mut state = assemble_queries(config, prompts, &weights.prompt, &mut rng)?;
    for (l, lw) in weights.layers.iter().enumerate() {
        state = instance_self_attention(&state, &lw.self_attn)?;
        state = cross_attention(&state, features, &lw.cross)?;
        if l + 1 < weights.layers.len() {
            let current = readout(&state, template, camera, weights)?;
            let kp2d: Vec<_> = current.iter().map(|d| d.keypoints2d.clone()).collect();
            let kp3d: Vec<_> = current
                .iter()
                .map(|d| normalize_kp3d(&d.keypoints3d, &d.root))
                .collect();
            state = refresh_kp2d_tokens(&state, &kp2d, features, &weights.feedback)?;
            state = refresh_kp3d_tokens(&state, &kp3d, &weights.feedback)?;
        }
    }
    let instances = readout(&state, template, camera, weights)?;
    Ok(DecodeOutput {
        instances,
        tokens: state,
    })
}
