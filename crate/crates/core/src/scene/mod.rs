//! Multi-animal synthetic scenes.
//!
//! A scene places several posed animals on a ground plane in front of one
//! camera and records everything derived from them: 3D and 2D keypoints,
//! per-keypoint visibility and normalized boxes. Annotations are a pure
//! function of `(master_seed, scene_index, config)`, so corpora can be
//! generated in parallel.
//!
//! The template is modelled `+y` up while the camera looks down `+z` with `+y`
//! pointing down. Each root rotation is therefore a half turn about `x`
//! followed by yaw (about the model's vertical axis) and pitch (about its
//! lateral axis). The translation is `(t_x, t_y + ground_offset, t_z)`.

mod layout;
mod schema;

pub use layout::{
    check_placements, equal_intervals, max_placeable, sample_layout, sample_orientation, spread,
    LayoutConfig, Placement,
};
pub use schema::{
    read_corpus, scene_file_name, write_corpus, CameraRecord, SceneAnnotation, SceneInstance,
    SCHEMA_VERSION,
};

use nalgebra::{Matrix3, Vector2, Vector3};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::body_model::{
    axis_angle_from_matrix, rodrigues, GlobalTranslation, InstanceParams, PoseParams, ShapeParams,
    TemplateModel,
};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::matcher::iou;
use crate::projection::{
    bbox_from_points, project, ImageSize, PerspectiveCamera, DEFAULT_FOCAL, DEFAULT_IMAGE_SIZE,
};
use crate::seeds;

pub const SPECIES: [&str; 8] = [
    "zebra", "horse", "cow", "sheep", "deer", "dog", "bear", "giraffe",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub layout: LayoutConfig,
    pub focal: f64,
    pub image_size: [usize; 2],
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            layout: LayoutConfig::default(),
            focal: DEFAULT_FOCAL,
            image_size: [DEFAULT_IMAGE_SIZE, DEFAULT_IMAGE_SIZE],
        }
    }
}

impl SceneConfig {
    pub fn camera(&self) -> Result<PerspectiveCamera> {
        PerspectiveCamera::centered(
            self.focal,
            ImageSize {
                width: self.image_size[0],
                height: self.image_size[1],
            },
        )
    }

    pub fn validate(&self) -> Result<()> {
        self.layout.validate()?;
        self.camera().map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeciesShape {
    pub species_tag: String,
    pub shape: ShapeParams,
}

/// `per_species` shape variants around a random mean for each of [`SPECIES`].
pub fn default_shape_pool(
    template: &TemplateModel,
    per_species: usize,
    seed: u64,
) -> Vec<SpeciesShape> {
    let mut rng = seeds::rng(seeds::sub_seed(seed, 1));
    let nb = template.n_shape();
    let mut pool = Vec::with_capacity(SPECIES.len() * per_species);
    for tag in SPECIES {
        let mean: Vec<f64> = (0..nb).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for _ in 0..per_species {
            let beta = mean.iter().map(|m| m + rng.gen_range(-0.3..0.3)).collect();
            pool.push(SpeciesShape {
                species_tag: tag.to_string(),
                shape: ShapeParams { beta },
            });
        }
    }
    pool
}

/// Random articulations with an unrotated root; joint angles within ±0.3 rad per axis.
pub fn default_pose_pool(template: &TemplateModel, size: usize, seed: u64) -> Vec<PoseParams> {
    let mut rng = seeds::rng(seeds::sub_seed(seed, 2));
    (0..size)
        .map(|_| {
            let mut pose = template.zero_pose();
            for w in pose.theta.iter_mut().skip(1) {
                *w = Vector3::new(
                    rng.gen_range(-0.3..0.3),
                    rng.gen_range(-0.3..0.3),
                    rng.gen_range(-0.3..0.3),
                );
            }
            pose
        })
        .collect()
}

/// Root rotation placing a model-frame pose into the camera frame.
pub fn orient_root(pool_root: &Vector3<f64>, yaw_deg: f64, pitch_deg: f64) -> Vector3<f64> {
    let flip = Matrix3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0);
    let yaw = rodrigues(&(Vector3::y() * yaw_deg.to_radians()));
    let pitch = rodrigues(&(Vector3::z() * pitch_deg.to_radians()));
    axis_angle_from_matrix(&(flip * yaw * pitch * rodrigues(pool_root)))
}

/// Everything needed to render one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceSpec {
    pub species_tag: String,
    pub shape: ShapeParams,
    /// Model-frame pose; the root is re-oriented by yaw and pitch.
    pub pose: PoseParams,
    pub yaw_deg: f64,
    pub pitch_deg: f64,
    pub placement: Placement,
}

/// Pose, project and annotate a set of instances sharing one camera.
pub fn render_instances(
    template: &TemplateModel,
    camera: &PerspectiveCamera,
    ground_offset: f64,
    specs: &[InstanceSpec],
) -> Result<Vec<SceneInstance>> {
    struct Posed {
        params: InstanceParams,
        keypoints3d: Vec<Vector3<f64>>,
        depth: f64,
        box_px: (f64, f64, f64, f64),
        bbox: [f64; 4],
    }
    let image = camera.image_size;
    let (iw, ih) = (image.width as f64, image.height as f64);
    let mut posed = Vec::with_capacity(specs.len());
    for spec in specs {
        let mut pose = spec.pose.clone();
        if let Some(root) = pose.theta.first_mut() {
            *root = orient_root(root, spec.yaw_deg, spec.pitch_deg);
        }
        let p = spec.placement;
        let params = InstanceParams {
            shape: spec.shape.clone(),
            pose,
            translation: GlobalTranslation::new(p.tx, p.ty + ground_offset, p.tz),
        };
        let mesh = params.pose_mesh(template)?;
        let bbox = bbox_from_points(&project(&mesh.vertices, camera), image)?;
        let (x0, y0, x1, y1) = bbox.corners();
        let depth = mesh.vertices.iter().map(|v| v.z).sum::<f64>() / mesh.vertices.len() as f64;
        posed.push(Posed {
            params,
            keypoints3d: mesh.keypoints3d,
            depth,
            box_px: (x0 * iw, y0 * ih, x1 * iw, y1 * ih),
            bbox: bbox.to_array(),
        });
    }

    let covered = |i: usize, px: &Vector2<f64>, z: f64| {
        posed.iter().enumerate().any(|(j, o)| {
            let (x0, y0, x1, y1) = o.box_px;
            j != i && o.depth < z && px.x >= x0 && px.x <= x1 && px.y >= y0 && px.y <= y1
        })
    };

    let mut out = Vec::with_capacity(specs.len());
    for (i, (spec, p)) in specs.iter().zip(&posed).enumerate() {
        let keypoints2d = project(&p.keypoints3d, camera)
            .iter()
            .zip(&p.keypoints3d)
            .map(|(q, k)| {
                if !q.valid {
                    return [0.0, 0.0, 0.0];
                }
                let visible = camera.in_frame(&q.pixel) && !covered(i, &q.pixel, k.z);
                [q.pixel.x, q.pixel.y, if visible { 1.0 } else { 0.0 }]
            })
            .collect();
        out.push(SceneInstance {
            species_tag: spec.species_tag.clone(),
            shape: p.params.shape.beta.clone(),
            pose: p
                .params
                .pose
                .theta
                .iter()
                .map(|w| [w.x, w.y, w.z])
                .collect(),
            translation: p.params.translation.gamma.into(),
            yaw_deg: spec.yaw_deg,
            pitch_deg: spec.pitch_deg,
            keypoints3d: p.keypoints3d.iter().map(|k| [k.x, k.y, k.z]).collect(),
            keypoints2d,
            bbox: p.bbox,
            confidence: None,
            layout: Some(spec.placement),
        });
    }
    Ok(out)
}

/// Generate scene `scene_index` of the corpus seeded by `master_seed`.
pub fn assemble_scene(
    template: &TemplateModel,
    pose_pool: &[PoseParams],
    shape_pool: &[SpeciesShape],
    config: &SceneConfig,
    master_seed: u64,
    scene_index: u64,
) -> Result<SceneAnnotation> {
    if pose_pool.is_empty() || shape_pool.is_empty() {
        return Err(Error::InvalidConfig(
            "pose and shape pools must be non-empty".into(),
        ));
    }
    config.validate()?;
    let camera = config.camera()?;
    let lc = &config.layout;
    let scene_seed = seeds::scene_seed(master_seed, scene_index);
    let mut rng = seeds::rng(scene_seed);

    let n = rng.gen_range(lc.min_animals..=lc.max_animals);
    let placements = sample_layout(n, lc, &mut rng)?;
    let specs: Vec<InstanceSpec> = placements
        .into_iter()
        .map(|placement| {
            let s = shape_pool.choose(&mut rng).expect("non-empty");
            let pose = pose_pool.choose(&mut rng).expect("non-empty").clone();
            let (pitch_deg, yaw_deg) = sample_orientation(lc, &mut rng);
            InstanceSpec {
                species_tag: s.species_tag.clone(),
                shape: s.shape.clone(),
                pose,
                yaw_deg,
                pitch_deg,
                placement,
            }
        })
        .collect();
    let instances = render_instances(template, &camera, lc.ground_offset, &specs)?;

    Ok(SceneAnnotation {
        schema_version: SCHEMA_VERSION,
        master_seed,
        scene_index,
        scene_seed,
        image_size: config.image_size,
        camera: CameraRecord {
            focal: camera.focal,
            principal: [camera.principal_point.x, camera.principal_point.y],
        },
        instances,
    })
}

/// Scenes `0..count`, generated in parallel; identical to sequential generation.
pub fn generate_corpus(
    template: &TemplateModel,
    pose_pool: &[PoseParams],
    shape_pool: &[SpeciesShape],
    config: &SceneConfig,
    master_seed: u64,
    count: u64,
) -> Result<Vec<SceneAnnotation>> {
    (0..count)
        .into_par_iter()
        .map(|i| assemble_scene(template, pose_pool, shape_pool, config, master_seed, i))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OcclusionStats {
    /// Symmetric, unit diagonal.
    pub iou: Vec<Vec<f64>>,
    /// Keypoints that project inside the image but are marked invisible, over all keypoints.
    pub occluded_fraction: Vec<f64>,
}

pub fn occlusion_stats(scene: &SceneAnnotation) -> Result<OcclusionStats> {
    scene.validate()?;
    let camera = scene.camera()?;
    let n = scene.instances.len();
    let boxes: Vec<_> = scene.instances.iter().map(|i| i.bbox()).collect();
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n {
        m[i][i] = 1.0;
        for j in i + 1..n {
            let v = iou(&boxes[i], &boxes[j]);
            m[i][j] = v;
            m[j][i] = v;
        }
    }
    let occluded_fraction = scene
        .instances
        .iter()
        .map(|inst| {
            let k = inst.keypoints2d.len();
            if k == 0 {
                return 0.0;
            }
            let hidden = inst
                .keypoints2d
                .iter()
                .filter(|p| p[2] == 0.0 && camera.in_frame(&Vector2::new(p[0], p[1])))
                .count();
            hidden as f64 / k as f64
        })
        .collect();
    Ok(OcclusionStats {
        iou: m,
        occluded_fraction,
    })
}

/// Flat-shaded box overlay of a scene, far instances drawn first. Each
/// species gets a fixed colour.
pub fn rasterize_scene(scene: &SceneAnnotation, height: usize, width: usize) -> Image {
    let mut image = Image::filled(height, width, [0.5, 0.5, 0.5]);
    let mut order: Vec<&SceneInstance> = scene.instances.iter().collect();
    order.sort_by(|a, b| b.translation[2].total_cmp(&a.translation[2]));
    for inst in order {
        let h = inst
            .species_tag
            .bytes()
            .fold(0u64, |h, b| seeds::mix64(h ^ u64::from(b)));
        let channel = |shift: u32| ((h >> shift) & 0xff) as f64 / 255.0;
        image.fill_box(inst.bbox().corners(), [channel(0), channel(8), channel(16)]);
    }
    image
}
