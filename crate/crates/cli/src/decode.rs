//! `decode`: run the toy decoder on rasterized scenes and write predictions.
//!
//! Each scene is drawn as flat boxes at `grid × patch` pixels, encoded by the
//! stub encoder and decoded with `P` slots. Predictions keep the scene's
//! identifiers and camera; every slot becomes one predicted instance.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use zoo3d::body_model::TemplateModel;
use zoo3d::decoder::{
    apply_prompt_dropout, decode, stub_encode, DecodedInstance, DecoderConfig, DecoderWeights,
    InstancePrompt, PromptSet,
};
use zoo3d::projection::{project, PerspectiveCamera};
use zoo3d::scene::{rasterize_scene, write_corpus, SceneAnnotation, SceneInstance};
use zoo3d::{seeds, Error};

use crate::config::{PromptMode, RunConfig};
use crate::corpus::{read_annotations, write_json};

pub const SUMMARY_FILE: &str = "decode.json";
pub const PREDICTED_TAG: &str = "predicted";

const DROPOUT_STREAM: u64 = 0xD1;

/// One entry of a prompts file, which holds a JSON array of these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenePrompts {
    pub scene_index: u64,
    pub prompts: PromptSet,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecodeSummary {
    pub config: RunConfig,
    /// Configuration of the weights actually used.
    pub decoder: DecoderConfig,
    pub weights_source: String,
    pub scenes: usize,
    pub instances: usize,
    pub mean_confidence: f64,
}

impl DecodeSummary {
    pub fn render(&self) -> String {
        let mut s = String::new();
        writeln!(s, "config {}", self.config.to_compact_json()).unwrap();
        writeln!(
            s,
            "weights {}  slots {}  tokens {}  width {}  layers {}",
            self.weights_source,
            self.decoder.slots,
            self.decoder.n_tokens(),
            self.decoder.width,
            self.decoder.layers
        )
        .unwrap();
        writeln!(
            s,
            "scenes {}  predicted instances {}  mean confidence {:.4}",
            self.scenes, self.instances, self.mean_confidence
        )
        .unwrap();
        s
    }
}

/// Loaded weights must match the template; seeded weights are built for it.
pub fn load_weights(
    config: &RunConfig,
    template: &TemplateModel,
) -> Result<(DecoderWeights, String)> {
    let d = &config.decoder;
    match &d.weights {
        Some(path) => {
            let w = DecoderWeights::load(path)
                .with_context(|| format!("loading weights {}", path.display()))?;
            w.config
                .check_template(template)
                .with_context(|| format!("weights {} do not fit the template", path.display()))?;
            Ok((w, path.display().to_string()))
        }
        None => {
            let seed = d.weights_seed.unwrap_or(config.seed);
            let w = DecoderWeights::random(&d.config.for_template(template), seed)?;
            Ok((w, format!("random seed {seed}")))
        }
    }
}

pub fn read_prompts_file(path: &Path) -> Result<Vec<ScenePrompts>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading prompts {}", path.display()))?;
    let entries: Vec<ScenePrompts> = serde_json::from_str(&text)
        .with_context(|| format!("parsing prompts {}", path.display()))?;
    Ok(entries)
}

/// Visible ground-truth keypoints of the first `slots` instances, normalized.
pub fn gt_keypoint_prompts(scene: &SceneAnnotation, slots: usize) -> PromptSet {
    let image = scene.image();
    let (w, h) = (image.width as f64, image.height as f64);
    PromptSet {
        instances: scene
            .instances
            .iter()
            .take(slots)
            .map(|inst| InstancePrompt {
                keypoints: Some(
                    inst.keypoints2d
                        .iter()
                        .map(|k| {
                            if k[2] == 1.0 {
                                [k[0] / w, k[1] / h, 1.0]
                            } else {
                                [0.0, 0.0, 0.0]
                            }
                        })
                        .collect(),
                ),
                mask: None,
            })
            .collect(),
    }
}

fn to_instance(d: &DecodedInstance, camera: &PerspectiveCamera) -> SceneInstance {
    let keypoints2d = project(&d.keypoints3d, camera)
        .iter()
        .map(|p| {
            let v = p.valid && camera.in_frame(&p.pixel);
            if p.valid {
                [p.pixel.x, p.pixel.y, f64::from(u8::from(v))]
            } else {
                [0.0, 0.0, 0.0]
            }
        })
        .collect();
    let g = d.params.translation.gamma;
    SceneInstance {
        species_tag: PREDICTED_TAG.to_string(),
        shape: d.params.shape.beta.clone(),
        pose: d
            .params
            .pose
            .theta
            .iter()
            .map(|w| [w.x, w.y, w.z])
            .collect(),
        translation: [g.x, g.y, g.z],
        yaw_deg: 0.0,
        pitch_deg: 0.0,
        keypoints3d: d.keypoints3d.iter().map(|k| [k.x, k.y, k.z]).collect(),
        keypoints2d,
        bbox: d.bbox.to_array(),
        confidence: Some(d.confidence),
        layout: None,
    }
}

fn decode_scene(
    config: &RunConfig,
    template: &TemplateModel,
    weights: &DecoderWeights,
    scene: &SceneAnnotation,
    file_prompts: Option<&PromptSet>,
) -> Result<SceneAnnotation> {
    let dc = &weights.config;
    let patch = config.decoder.patch;
    let image = rasterize_scene(scene, dc.grid_h * patch, dc.grid_w * patch);
    let features = stub_encode(&image, dc)?;
    let mut prompts = match config.decoder.prompts {
        PromptMode::None => PromptSet::empty(),
        PromptMode::GtKeypoints => gt_keypoint_prompts(scene, dc.slots),
        PromptMode::File => file_prompts.cloned().unwrap_or_default(),
    };
    if config.decoder.train_mode {
        let mut rng = seeds::rng(seeds::sub_seed(scene.scene_seed, DROPOUT_STREAM));
        prompts = apply_prompt_dropout(&prompts, &config.decoder.dropout, &mut rng);
    }
    let camera = scene.camera()?;
    let out = decode(&features, &prompts, template, &camera, weights)
        .with_context(|| format!("decoding scene {}", scene.scene_index))?;
    let prediction = SceneAnnotation {
        instances: out
            .instances
            .iter()
            .map(|d| to_instance(d, &camera))
            .collect(),
        ..scene.clone()
    };
    prediction.validate()?;
    Ok(prediction)
}

/// Decode every scene. Returns the predictions and the weights used.
pub fn decode_scenes(
    config: &RunConfig,
    scenes: &[SceneAnnotation],
) -> Result<(Vec<SceneAnnotation>, DecoderWeights, String)> {
    let template = config.template.load()?;
    let (weights, source) = load_weights(config, &template)?;
    for s in scenes {
        s.validate_for(&template)
            .with_context(|| format!("scene {} does not fit the template", s.scene_index))?;
    }
    let file_prompts = match (&config.decoder.prompts, &config.decoder.prompts_file) {
        (PromptMode::File, Some(p)) => read_prompts_file(p)?,
        (PromptMode::File, None) => bail!(Error::InvalidConfig(
            "prompts mode `file` needs a prompts file".into()
        )),
        _ => Vec::new(),
    };
    let predictions = scenes
        .par_iter()
        .map(|s| {
            let p = file_prompts
                .iter()
                .find(|e| e.scene_index == s.scene_index)
                .map(|e| &e.prompts);
            decode_scene(config, &template, &weights, s, p)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((predictions, weights, source))
}

/// Write one prediction file per scene plus `decode.json` into `out`.
pub fn run(config: &RunConfig, annotations: &Path, out: &Path) -> Result<DecodeSummary> {
    let scenes = read_annotations(annotations)?;
    let (predictions, weights, source) = decode_scenes(config, &scenes)?;
    write_corpus(out, &predictions)?;
    let confidences: Vec<f64> = predictions
        .iter()
        .flat_map(|s| s.instances.iter().filter_map(|i| i.confidence))
        .collect();
    let summary = DecodeSummary {
        config: config.clone(),
        decoder: weights.config,
        weights_source: source,
        scenes: predictions.len(),
        instances: confidences.len(),
        mean_confidence: if confidences.is_empty() {
            0.0
        } else {
            confidences.iter().sum::<f64>() / confidences.len() as f64
        },
    };
    write_json(&out.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}
