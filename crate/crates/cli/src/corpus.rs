//! Reading annotation and prediction corpora and pairing their scenes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use zoo3d::scene::{read_corpus, SceneAnnotation};
use zoo3d::Error;

pub fn read_annotations(path: &Path) -> Result<Vec<SceneAnnotation>> {
    read_corpus(path).with_context(|| format!("reading annotations {}", path.display()))
}

/// Like [`read_annotations`], but every instance must carry a confidence.
pub fn read_predictions(path: &Path) -> Result<Vec<SceneAnnotation>> {
    let scenes =
        read_corpus(path).with_context(|| format!("reading predictions {}", path.display()))?;
    for s in &scenes {
        if !s.is_prediction() {
            bail!(Error::Schema(format!(
                "scene {} in {} has instances without confidence",
                s.scene_index,
                path.display()
            )));
        }
    }
    Ok(scenes)
}

/// Pair scenes by `scene_index`. Both sides must hold the same indices, with
/// equal scene seeds, image sizes and keypoint counts.
pub fn pair_scenes<'a>(
    annotations: &'a [SceneAnnotation],
    predictions: &'a [SceneAnnotation],
) -> Result<Vec<(&'a SceneAnnotation, &'a SceneAnnotation)>> {
    let index =
        |scenes: &'a [SceneAnnotation], what: &str| -> Result<BTreeMap<u64, &'a SceneAnnotation>> {
            let mut map = BTreeMap::new();
            for s in scenes {
                if map.insert(s.scene_index, s).is_some() {
                    bail!(Error::Schema(format!(
                        "duplicate scene {} in {what}",
                        s.scene_index
                    )));
                }
            }
            Ok(map)
        };
    let a = index(annotations, "annotations")?;
    let p = index(predictions, "predictions")?;
    if let Some(i) = a.keys().find(|i| !p.contains_key(i)) {
        bail!(Error::Schema(format!("scene {i} has no predictions")));
    }
    if let Some(i) = p.keys().find(|i| !a.contains_key(i)) {
        bail!(Error::Schema(format!("predictions for unknown scene {i}")));
    }
    a.into_iter()
        .map(|(i, gt)| {
            let pr = p[&i];
            if gt.scene_seed != pr.scene_seed || gt.master_seed != pr.master_seed {
                bail!(Error::Schema(format!(
                    "scene {i}: seeds differ between annotations and predictions"
                )));
            }
            if gt.image_size != pr.image_size {
                bail!(Error::Schema(format!("scene {i}: image sizes differ")));
            }
            let k = gt.instances.first().map(|x| x.keypoints3d.len());
            if let Some(k) = k {
                if pr.instances.iter().any(|x| x.keypoints3d.len() != k) {
                    bail!(Error::Schema(format!("scene {i}: keypoint counts differ")));
                }
            }
            Ok((gt, pr))
        })
        .collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
