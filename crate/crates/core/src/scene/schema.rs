//! JSON annotation and prediction files.
//!
//! One scene per object:
//!
//! ```text
//! { schema_version, master_seed, scene_index, scene_seed, image_size: [w, h],
//!   camera: { focal, principal: [x, y] },
//!   instances: [ { species_tag, shape: [B], pose: [[x, y, z]; J],
//!                  translation: [3], yaw_deg, pitch_deg,
//!                  keypoints3d: [[x, y, z]; K], keypoints2d: [[x, y, v]; K],
//!                  bbox: [cx, cy, w, h], confidence?, layout? } ] }
//! ```
//!
//! `keypoints2d` are pixels; `v` is 1 when the keypoint projects inside the
//! image and no nearer instance's box covers it. `bbox` is normalized.
//! Prediction files carry `confidence` on every instance. A corpus is either a
//! directory of `scene_*.json` files or one file holding a JSON array of scenes.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::layout::Placement;
use crate::body_model::{
    GlobalTranslation, InstanceParams, PoseParams, ShapeParams, TemplateModel,
};
use crate::error::{Error, Result};
use crate::matcher::{GroundTruthInstance, InstancePrediction};
use crate::projection::{BBox, ImageSize, PerspectiveCamera};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraRecord {
    pub focal: f64,
    pub principal: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneInstance {
    pub species_tag: String,
    pub shape: Vec<f64>,
    pub pose: Vec<[f64; 3]>,
    pub translation: [f64; 3],
    pub yaw_deg: f64,
    pub pitch_deg: f64,
    pub keypoints3d: Vec<[f64; 3]>,
    pub keypoints2d: Vec<[f64; 3]>,
    pub bbox: [f64; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<Placement>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneAnnotation {
    pub schema_version: u32,
    pub master_seed: u64,
    pub scene_index: u64,
    pub scene_seed: u64,
    pub image_size: [usize; 2],
    pub camera: CameraRecord,
    pub instances: Vec<SceneInstance>,
}

fn v3(a: &[f64; 3]) -> Vector3<f64> {
    Vector3::new(a[0], a[1], a[2])
}

impl SceneInstance {
    pub fn params(&self) -> InstanceParams {
        InstanceParams {
            shape: ShapeParams {
                beta: self.shape.clone(),
            },
            pose: PoseParams {
                theta: self.pose.iter().map(v3).collect(),
            },
            translation: GlobalTranslation {
                gamma: v3(&self.translation),
            },
        }
    }

    pub fn keypoints3d(&self) -> Vec<Vector3<f64>> {
        self.keypoints3d.iter().map(v3).collect()
    }

    pub fn keypoints_px(&self) -> Vec<Vector2<f64>> {
        self.keypoints2d
            .iter()
            .map(|k| Vector2::new(k[0], k[1]))
            .collect()
    }

    pub fn visibility(&self) -> Vec<bool> {
        self.keypoints2d.iter().map(|k| k[2] == 1.0).collect()
    }

    pub fn visible_count(&self) -> usize {
        self.visibility().iter().filter(|v| **v).count()
    }

    pub fn bbox(&self) -> BBox {
        BBox::from_array(self.bbox)
    }

    fn keypoints_normalized(&self, image: ImageSize) -> Vec<Vector2<f64>> {
        let (w, h) = (image.width as f64, image.height as f64);
        self.keypoints2d
            .iter()
            .map(|k| Vector2::new(k[0] / w, k[1] / h))
            .collect()
    }

    pub fn ground_truth(&self, image: ImageSize) -> GroundTruthInstance {
        GroundTruthInstance {
            bbox: self.bbox(),
            keypoints2d: self.keypoints_normalized(image),
            visibility: self.visibility(),
            keypoints3d: self.keypoints3d(),
            params: Some(self.params()),
        }
    }

    /// Missing confidence reads as 0.
    pub fn prediction(&self, image: ImageSize) -> InstancePrediction {
        InstancePrediction {
            bbox: self.bbox(),
            confidence: self.confidence.unwrap_or(0.0),
            keypoints2d: self.keypoints_normalized(image),
            keypoints3d: self.keypoints3d(),
            params: Some(self.params()),
        }
    }

    fn validate(&self, index: usize) -> Result<()> {
        let bad = |m: &str| Err(Error::Schema(format!("instance {index}: {m}")));
        let values = self
            .shape
            .iter()
            .chain(self.pose.iter().flatten())
            .chain(&self.translation)
            .chain(self.keypoints3d.iter().flatten())
            .chain(self.keypoints2d.iter().flatten())
            .chain(&self.bbox)
            .chain([&self.yaw_deg, &self.pitch_deg]);
        if !values.into_iter().all(|x| x.is_finite()) {
            return bad("non-finite value");
        }
        if self.species_tag.is_empty() {
            return bad("empty species_tag");
        }
        if self.keypoints2d.len() != self.keypoints3d.len() {
            return bad("keypoints2d and keypoints3d differ in length");
        }
        if self.keypoints2d.iter().any(|k| k[2] != 0.0 && k[2] != 1.0) {
            return bad("visibility must be 0 or 1");
        }
        let b = self.bbox;
        if b[2] < 0.0 || b[3] < 0.0 {
            return bad("negative bbox size");
        }
        let (x0, y0, x1, y1) = self.bbox().corners();
        let tol = 1e-9;
        if x0 < -tol || y0 < -tol || x1 > 1.0 + tol || y1 > 1.0 + tol {
            return bad("bbox outside the unit square");
        }
        if let Some(c) = self.confidence {
            if !(0.0..=1.0).contains(&c) {
                return bad("confidence outside [0, 1]");
            }
        }
        Ok(())
    }
}

impl SceneAnnotation {
    pub fn image(&self) -> ImageSize {
        ImageSize {
            width: self.image_size[0],
            height: self.image_size[1],
        }
    }

    pub fn camera(&self) -> Result<PerspectiveCamera> {
        PerspectiveCamera::new(
            self.camera.focal,
            Vector2::new(self.camera.principal[0], self.camera.principal[1]),
            self.image(),
        )
    }

    pub fn ground_truths(&self) -> Vec<GroundTruthInstance> {
        let image = self.image();
        self.instances
            .iter()
            .map(|i| i.ground_truth(image))
            .collect()
    }

    pub fn predictions(&self) -> Vec<InstancePrediction> {
        let image = self.image();
        self.instances.iter().map(|i| i.prediction(image)).collect()
    }

    pub fn is_prediction(&self) -> bool {
        self.instances.iter().all(|i| i.confidence.is_some())
    }

    /// Structural checks: version, camera, finite values and consistent sizes.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "schema_version {} is not {SCHEMA_VERSION}",
                self.schema_version
            )));
        }
        self.camera()
            .map_err(|e| Error::Schema(format!("camera: {e}")))?;
        if !self.camera.principal.iter().all(|p| p.is_finite()) {
            return Err(Error::Schema("camera principal point is not finite".into()));
        }
        let sizes = |i: &SceneInstance| (i.shape.len(), i.pose.len(), i.keypoints3d.len());
        let first = self.instances.first().map(sizes);
        for (n, inst) in self.instances.iter().enumerate() {
            inst.validate(n)?;
            if Some(sizes(inst)) != first {
                return Err(Error::Schema(format!(
                    "instance {n} has different shape, pose or keypoint counts"
                )));
            }
        }
        Ok(())
    }

    /// [`validate`](Self::validate) plus sizes matching a template.
    pub fn validate_for(&self, template: &TemplateModel) -> Result<()> {
        self.validate()?;
        for (n, inst) in self.instances.iter().enumerate() {
            if inst.shape.len() != template.n_shape()
                || inst.pose.len() != template.n_joints()
                || inst.keypoints3d.len() != template.n_keypoints()
            {
                return Err(Error::Schema(format!(
                    "instance {n} does not match the template's shape, joint or keypoint counts"
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scene serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let scene: Self = serde_json::from_str(text)?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn file_name(&self) -> String {
        scene_file_name(self.scene_index)
    }
}

pub fn scene_file_name(index: u64) -> String {
    format!("scene_{index:06}.json")
}

/// Writes one file per scene into `dir`, creating it if needed.
pub fn write_corpus(dir: &Path, scenes: &[SceneAnnotation]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    scenes
        .iter()
        .map(|s| {
            let path = dir.join(s.file_name());
            fs::write(&path, s.to_json())?;
            Ok(path)
        })
        .collect()
}

/// Reads the `scene_*.json` files of a directory (sorted by name), a JSON
/// array file or a single scene file.
pub fn read_corpus(path: &Path) -> Result<Vec<SceneAnnotation>> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        files.retain(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.starts_with("scene_") && name.ends_with(".json")
        });
        files.sort();
        return files
            .iter()
            .map(|f| {
                let text = fs::read_to_string(f)?;
                SceneAnnotation::from_json(&text)
                    .map_err(|e| Error::Schema(format!("{}: {e}", f.display())))
            })
            .collect();
    }
    let text = fs::read_to_string(path)?;
    if text.trim_start().starts_with('[') {
        let scenes: Vec<SceneAnnotation> = serde_json::from_str(&text)?;
        for s in &scenes {
            s.validate()?;
        }
        Ok(scenes)
    } else {
        Ok(vec![SceneAnnotation::from_json(&text)?])
    }
}
