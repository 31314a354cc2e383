//! Procedural quadruped template and template file I/O.
//!
//! The toy template is a single closed tube swept along an Euler tour of a
//! quadruped skeleton (spine, head, tail and four legs). Sweeping one tube
//! keeps the surface closed and genus-0, so `n_faces = 2 * n_verts - 4` for
//! any vertex budget; 3889 vertices give 7774 faces. Rings may differ in size
//! by one vertex; neighbouring rings are stitched by an angular merge.
//!
//! Model frame: `+x` forward (head), `+y` up, `+z` to the animal's left,
//! feet at `y = 0`, root joint at `(0, 0.5, 0)`, body length about 1.5 units.
//!
//! Template files use the [`crate::container`] format with `kind template`
//! and the matrices listed in [`TemplateModel::to_container`].

use std::f64::consts::TAU;
use std::path::Path;

use nalgebra::Vector3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::body_model::{KinematicTree, TemplateModel};
use crate::container::MatrixFile;
use crate::error::{check_len, Error, Result};
use crate::seeds;

pub const DEFAULT_KEYPOINTS: usize = 26;
pub const MIN_JOINTS: usize = 8;
pub const MIN_VERTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct TemplateConfig {
    pub n_verts: usize,
    pub n_shape: usize,
    pub n_joints: usize,
    pub n_keypoints: usize,
    pub seed: u64,
}

impl Default for TemplateConfig {
    fn default() -> Self {
        Self::desk_scale(0)
    }
}

impl TemplateConfig {
    /// 3889 vertices, 7774 faces, 145 shape coefficients, 35 joints.
    pub fn full_scale(seed: u64) -> Self {
        Self {
            n_verts: 3889,
            n_shape: 145,
            n_joints: 35,
            n_keypoints: DEFAULT_KEYPOINTS,
            seed,
        }
    }

    /// Small model for fast tests and demos.
    pub fn desk_scale(seed: u64) -> Self {
        Self {
            n_verts: 482,
            n_shape: 12,
            n_joints: 19,
            n_keypoints: DEFAULT_KEYPOINTS,
            seed,
        }
    }

    pub fn n_faces(&self) -> usize {
        2 * self.n_verts - 4
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_joints < MIN_JOINTS {
            return Err(Error::InvalidConfig(format!(
                "need at least {MIN_JOINTS} joints for a quadruped, got {}",
                self.n_joints
            )));
        }
        if self.n_verts < MIN_VERTS {
            return Err(Error::InvalidConfig(format!(
                "need at least {MIN_VERTS} vertices, got {}",
                self.n_verts
            )));
        }
        if self.n_keypoints == 0 || self.n_shape == 0 {
            return Err(Error::InvalidConfig(
                "keypoint and shape counts must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Part {
    Spine,
    Head,
    Tail,
    Leg,
}

impl Part {
    fn radius(self) -> f64 {
        match self {
            Part::Spine => 0.16,
            Part::Head => 0.08,
            Part::Tail => 0.025,
            Part::Leg => 0.045,
        }
    }
}

struct Skeleton {
    parents: Vec<Option<usize>>,
    anchors: Vec<Vector3<f64>>,
    parts: Vec<Part>,
    /// Tip point beyond each chain's last joint (paw, nose, tail tip).
    tips: Vec<(usize, Vector3<f64>)>,
}

/// Lay out a quadruped skeleton with `n_joints` joints in topological order.
fn quadruped_skeleton(n_joints: usize) -> Skeleton {
    // Chain order: spine, head, fore-left, fore-right, tail, hind-left, hind-right.
    let mut counts = [1usize; 7];
    let priority = [2, 3, 5, 6, 0, 4, 1];
    let mut extra = n_joints - MIN_JOINTS;
    let mut k = 0;
    while extra > 0 {
        counts[priority[k % priority.len()]] += 1;
        extra -= 1;
        k += 1;
    }

    let root = Vector3::new(0.0, 0.5, 0.0);
    let shoulders = Vector3::new(0.6, 0.52, 0.0);
    let mut parents = vec![None];
    let mut anchors = vec![root];
    let mut parts = vec![Part::Spine];
    let mut tips = Vec::new();

    let chain = |parent: usize,
                 start: Vector3<f64>,
                 end: Vector3<f64>,
                 n: usize,
                 part: Part,
                 skip_start: bool,
                 parents: &mut Vec<Option<usize>>,
                 anchors: &mut Vec<Vector3<f64>>,
                 parts: &mut Vec<Part>,
                 tips: &mut Vec<(usize, Vector3<f64>)>| {
        let mut prev = parent;
        for i in 0..n {
            let f = if skip_start {
                (i + 1) as f64 / n as f64
            } else {
                i as f64 / n as f64
            };
            parents.push(Some(prev));
            anchors.push(start + (end - start) * f);
            parts.push(part);
            prev = anchors.len() - 1;
        }
        if !skip_start {
            tips.push((prev, end));
        }
        prev
    };

    let spine_end = chain(
        0,
        root,
        shoulders,
        counts[0],
        Part::Spine,
        true,
        &mut parents,
        &mut anchors,
        &mut parts,
        &mut tips,
    );
    chain(
        spine_end,
        shoulders + Vector3::new(0.08, 0.05, 0.0),
        Vector3::new(0.92, 0.72, 0.0),
        counts[1],
        Part::Head,
        false,
        &mut parents,
        &mut anchors,
        &mut parts,
        &mut tips,
    );
    for (c, side) in [(2, 1.0), (3, -1.0)] {
        chain(
            spine_end,
            Vector3::new(0.6, 0.42, 0.11 * side),
            Vector3::new(0.62, 0.0, 0.11 * side),
            counts[c],
            Part::Leg,
            false,
            &mut parents,
            &mut anchors,
            &mut parts,
            &mut tips,
        );
    }
    chain(
        0,
        root + Vector3::new(-0.12, 0.0, 0.0),
        Vector3::new(-0.55, 0.3, 0.0),
        counts[4],
        Part::Tail,
        false,
        &mut parents,
        &mut anchors,
        &mut parts,
        &mut tips,
    );
    for (c, side) in [(5, 1.0), (6, -1.0)] {
        chain(
            0,
            Vector3::new(0.0, 0.42, 0.11 * side),
            Vector3::new(0.0, 0.0, 0.11 * side),
            counts[c],
            Part::Leg,
            false,
            &mut parents,
            &mut anchors,
            &mut parts,
            &mut tips,
        );
    }
    Skeleton {
        parents,
        anchors,
        parts,
        tips,
    }
}

/// A bone is the segment swept by one joint: joint -> child, or joint -> tip.
struct Bone {
    owner: usize,
    a: Vector3<f64>,
    b: Vector3<f64>,
    radius: f64,
}

/// Depth-first Euler tour of the skeleton, descending to chain tips.
fn euler_tour(sk: &Skeleton, tree: &KinematicTree) -> (Vec<Vector3<f64>>, Vec<Bone>) {
    let mut path = vec![sk.anchors[0]];
    let mut bones = Vec::new();
    fn visit(
        j: usize,
        sk: &Skeleton,
        tree: &KinematicTree,
        path: &mut Vec<Vector3<f64>>,
        bones: &mut Vec<Bone>,
    ) {
        for c in tree.children(j) {
            bones.push(Bone {
                owner: j,
                a: sk.anchors[j],
                b: sk.anchors[c],
                radius: sk.parts[c].radius(),
            });
            path.push(sk.anchors[c]);
            visit(c, sk, tree, path, bones);
            path.push(sk.anchors[j]);
        }
        if let Some((_, tip)) = sk.tips.iter().find(|(t, _)| *t == j) {
            bones.push(Bone {
                owner: j,
                a: sk.anchors[j],
                b: *tip,
                radius: sk.parts[j].radius(),
            });
            path.push(*tip);
            path.push(sk.anchors[j]);
        }
    }
    visit(0, sk, tree, &mut path, &mut bones);
    (path, bones)
}

fn point_segment_distance(p: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(&ab) / ab.norm_squared().max(1e-300)).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

fn any_perpendicular(t: &Vector3<f64>) -> Vector3<f64> {
    let helper = if t.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    t.cross(&helper).normalize()
}

struct Ring {
    center: Vector3<f64>,
    radius: f64,
    normal: Vector3<f64>,
    binormal: Vector3<f64>,
    size: usize,
}

/// Rings spaced evenly by arc length along the tour, with parallel-transported frames.
fn sweep_rings(
    path: &[Vector3<f64>],
    bones: &[Bone],
    n_rings: usize,
    n_ring_verts: usize,
) -> Vec<Ring> {
    let seg_len: Vec<f64> = path.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
    let total: f64 = seg_len.iter().sum();
    let base = n_ring_verts / n_rings;
    let rem = n_ring_verts % n_rings;

    let mut rings = Vec::with_capacity(n_rings);
    let mut seg = 0;
    let mut seg_start = 0.0;
    let mut normal: Option<Vector3<f64>> = None;
    for r in 0..n_rings {
        let s = total * (r as f64 + 0.5) / n_rings as f64;
        while seg + 1 < seg_len.len() && seg_start + seg_len[seg] < s {
            seg_start += seg_len[seg];
            seg += 1;
        }
        let f = ((s - seg_start) / seg_len[seg].max(1e-300)).clamp(0.0, 1.0);
        let (a, b) = (path[seg], path[seg + 1]);
        let center = a + (b - a) * f;
        let tangent = (b - a).normalize();
        let n = match normal {
            None => any_perpendicular(&tangent),
            Some(prev) => {
                let proj = prev - tangent * prev.dot(&tangent);
                if proj.norm() > 1e-6 {
                    proj.normalize()
                } else {
                    any_perpendicular(&tangent)
                }
            }
        };
        normal = Some(n);
        let radius = bones
            .iter()
            .map(|bone| {
                (
                    point_segment_distance(&center, &bone.a, &bone.b),
                    bone.radius,
                )
            })
            .min_by(|x, y| x.0.total_cmp(&y.0))
            .map(|(_, r)| r)
            .unwrap_or(0.05);
        rings.push(Ring {
            center,
            radius,
            normal: n,
            binormal: tangent.cross(&n),
            size: base + usize::from(r < rem),
        });
    }
    rings
}

/// Triangulate the strip between two rings by merging their angular parameters.
fn stitch(faces: &mut Vec<[u32; 3]>, a0: usize, na: usize, b0: usize, nb: usize) {
    let (mut i, mut j) = (0usize, 0usize);
    while i < na || j < nb {
        let next_a = (i + 1) as f64 / na as f64;
        let next_b = (j + 1) as f64 / nb as f64;
        let ai = (a0 + i % na) as u32;
        let bj = (b0 + j % nb) as u32;
        if j >= nb || (i < na && next_a <= next_b) {
            faces.push([ai, (a0 + (i + 1) % na) as u32, bj]);
            i += 1;
        } else {
            faces.push([ai, (b0 + (j + 1) % nb) as u32, bj]);
            j += 1;
        }
    }
}

fn normalized(mut row: Vec<f64>) -> Vec<f64> {
    let s: f64 = row.iter().sum();
    row.iter_mut().for_each(|w| *w /= s);
    row
}

/// Build a deterministic quadruped template. Same config, same bits.
pub fn make_toy_template(config: &TemplateConfig) -> Result<TemplateModel> {
    config.validate()?;
    let mut rng: ChaCha8Rng = seeds::rng(seeds::sub_seed(config.seed, 0x7e3));
    let sk = quadruped_skeleton(config.n_joints);
    let tree = KinematicTree::new(sk.parents.clone())?;
    let (path, bones) = euler_tour(&sk, &tree);

    let n_ring_verts = config.n_verts - 2;
    let n_rings = ((n_ring_verts as f64 * 4.0).sqrt().round() as usize).clamp(2, n_ring_verts / 3);
    let rings = sweep_rings(&path, &bones, n_rings, n_ring_verts);

    // Vertices: pole, rings, pole.
    let mut verts = Vec::with_capacity(config.n_verts);
    let mut ring_of_vertex = Vec::with_capacity(config.n_verts);
    let first_t = (path[1] - path[0]).normalize();
    let last_t = (path[path.len() - 1] - path[path.len() - 2]).normalize();
    verts.push(rings[0].center - first_t * rings[0].radius);
    ring_of_vertex.push(0);
    let mut ring_start = Vec::with_capacity(rings.len());
    for (r, ring) in rings.iter().enumerate() {
        ring_start.push(verts.len());
        let phase = rng.gen_range(0.0..TAU / ring.size as f64);
        for i in 0..ring.size {
            let phi = phase + TAU * i as f64 / ring.size as f64;
            let wobble = 1.0 + rng.gen_range(-0.04..0.04);
            let offset =
                (ring.normal * phi.cos() + ring.binormal * phi.sin()) * ring.radius * wobble;
            verts.push(ring.center + offset);
            ring_of_vertex.push(r);
        }
    }
    let last = rings.len() - 1;
    verts.push(rings[last].center + last_t * rings[last].radius);
    ring_of_vertex.push(last);
    debug_assert_eq!(verts.len(), config.n_verts);

    let mut faces = Vec::with_capacity(config.n_faces());
    let south = 0u32;
    let north = (config.n_verts - 1) as u32;
    for i in 0..rings[0].size {
        let s = ring_start[0];
        faces.push([south, (s + (i + 1) % rings[0].size) as u32, (s + i) as u32]);
    }
    for r in 0..last {
        stitch(
            &mut faces,
            ring_start[r],
            rings[r].size,
            ring_start[r + 1],
            rings[r + 1].size,
        );
    }
    for i in 0..rings[last].size {
        let s = ring_start[last];
        faces.push([
            north,
            (s + i) as u32,
            (s + (i + 1) % rings[last].size) as u32,
        ]);
    }
    debug_assert_eq!(faces.len(), config.n_faces());

    // Skin weights: Gaussian falloff from the ring centre to each bone, top three owners.
    let nj = config.n_joints;
    let ring_weights: Vec<Vec<f64>> = rings
        .iter()
        .map(|ring| {
            let mut per_joint = vec![f64::INFINITY; nj];
            for bone in &bones {
                let d = point_segment_distance(&ring.center, &bone.a, &bone.b);
                per_joint[bone.owner] = per_joint[bone.owner].min(d);
            }
            let mut order: Vec<usize> = (0..nj).collect();
            order.sort_by(|a, b| per_joint[*a].total_cmp(&per_joint[*b]).then(a.cmp(b)));
            let sigma = 0.06;
            let mut w = vec![0.0; nj];
            let d0 = per_joint[order[0]];
            for &j in order.iter().take(3) {
                let d = per_joint[j] - d0;
                w[j] = (-(d * d) / (2.0 * sigma * sigma)).exp();
            }
            normalized(w)
        })
        .collect();
    let mut skin_weights = Vec::with_capacity(config.n_verts * nj);
    for &r in &ring_of_vertex {
        skin_weights.extend_from_slice(&ring_weights[r]);
    }

    let nearest_ring = |p: &Vector3<f64>| -> usize {
        rings
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1.center - p).norm().total_cmp(&(b.1.center - p).norm()))
            .map(|(i, _)| i)
            .unwrap_or(0)
    };

    // Joint regressor: centroid of the ring nearest each joint anchor.
    let nv = config.n_verts;
    let mut joint_regressor = vec![0.0; nj * nv];
    for j in 0..nj {
        let r = nearest_ring(&sk.anchors[j]);
        let row = &mut joint_regressor[j * nv..(j + 1) * nv];
        let start = ring_start[r];
        row[start..start + rings[r].size].fill(1.0 / rings[r].size as f64);
    }

    // Keypoints: chain tips first, then rings spaced along the tour; each a
    // random convex combination of its ring's vertices.
    let nk = config.n_keypoints;
    let mut kp_rings: Vec<usize> = sk.tips.iter().map(|(_, tip)| nearest_ring(tip)).collect();
    kp_rings.truncate(nk);
    let remaining = nk - kp_rings.len();
    for i in 0..remaining {
        kp_rings.push(((i as f64 + 0.5) / remaining as f64 * rings.len() as f64) as usize);
    }
    let mut keypoint_regressor = vec![0.0; nk * nv];
    for (k, &r) in kp_rings.iter().enumerate() {
        let start = ring_start[r];
        let raw: Vec<f64> = (0..rings[r].size)
            .map(|_| rng.gen_range(0.0..1.0f64).exp())
            .collect();
        let w = normalized(raw);
        keypoint_regressor[k * nv + start..k * nv + start + rings[r].size].copy_from_slice(&w);
    }

    // Shape basis: smooth low-frequency displacement fields with decaying amplitude.
    let nb = config.n_shape;
    let mut shape_basis = Vec::with_capacity(nb * nv * 3);
    for b in 0..nb {
        let amp = 0.03 / (1.0 + b as f64).sqrt();
        let waves: Vec<(Vector3<f64>, f64)> = (0..3)
            .map(|_| {
                let k = Vector3::new(
                    rng.gen_range(-3.0..3.0),
                    rng.gen_range(-3.0..3.0),
                    rng.gen_range(-3.0..3.0),
                );
                (k, rng.gen_range(0.0..TAU))
            })
            .collect();
        for v in &verts {
            for (k, phase) in &waves {
                shape_basis.push(amp * (k.dot(v) + phase).sin());
            }
        }
    }

    TemplateModel::new(
        verts,
        faces,
        shape_basis,
        nb,
        skin_weights,
        joint_regressor,
        keypoint_regressor,
        nk,
        tree,
    )
}

impl TemplateModel {
    /// Matrices: `template_vertices` (n×3 f64), `faces` (F×3 i64),
    /// `shape_basis` (B×3n f64, row b holds basis b as x0 y0 z0 x1 ...),
    /// `skin_weights` (n×J f64), `joint_regressor` (J×n f64),
    /// `keypoint_regressor` (K×n f64), `parents` (1×J i64, root = -1).
    pub fn to_container(&self) -> MatrixFile {
        let nv = self.n_verts();
        let mut f = MatrixFile::new("template");
        f.push_f64(
            "template_vertices",
            nv,
            3,
            self.template_vertices()
                .iter()
                .flat_map(|v| [v.x, v.y, v.z])
                .collect(),
        );
        f.push_i64(
            "faces",
            self.n_faces(),
            3,
            self.faces().iter().flat_map(|t| t.map(i64::from)).collect(),
        );
        f.push_f64(
            "shape_basis",
            self.n_shape(),
            nv * 3,
            self.shape_basis().to_vec(),
        );
        f.push_f64(
            "skin_weights",
            nv,
            self.n_joints(),
            self.skin_weights().to_vec(),
        );
        f.push_f64(
            "joint_regressor",
            self.n_joints(),
            nv,
            self.joint_regressor().to_vec(),
        );
        f.push_f64(
            "keypoint_regressor",
            self.n_keypoints(),
            nv,
            self.keypoint_regressor().to_vec(),
        );
        f.push_i64(
            "parents",
            1,
            self.n_joints(),
            self.tree()
                .parents()
                .iter()
                .map(|p| p.map_or(-1, |p| p as i64))
                .collect(),
        );
        f
    }

    pub fn from_container(file: &MatrixFile) -> Result<Self> {
        if file.kind != "template" {
            return Err(Error::Schema(format!(
                "expected kind `template`, got `{}`",
                file.kind
            )));
        }
        let (nv, c, tv) = file.f64("template_vertices")?;
        check_len("template_vertices columns", 3, c)?;
        let verts = tv
            .chunks_exact(3)
            .map(|r| Vector3::new(r[0], r[1], r[2]))
            .collect();

        let (_, c, fv) = file.i64("faces")?;
        check_len("faces columns", 3, c)?;
        let faces = fv
            .chunks_exact(3)
            .map(|r| {
                let mut t = [0u32; 3];
                for (dst, &src) in t.iter_mut().zip(r) {
                    *dst = u32::try_from(src)
                        .map_err(|_| Error::Schema(format!("bad face index {src}")))?;
                }
                Ok(t)
            })
            .collect::<Result<Vec<_>>>()?;

        let (_, jc, parents) = file.i64("parents")?;
        let parents = parents
            .iter()
            .map(|&p| match p {
                -1 => Ok(None),
                p if p >= 0 => Ok(Some(p as usize)),
                p => Err(Error::Schema(format!("bad parent index {p}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        let tree = KinematicTree::new(parents).map_err(|e| Error::Schema(e.to_string()))?;

        let (nb, c, basis) = file.f64("shape_basis")?;
        check_len("shape_basis columns", nv * 3, c)?;
        let (r, c, skin) = file.f64("skin_weights")?;
        check_len("skin_weights rows", nv, r)?;
        check_len("skin_weights columns", jc, c)?;
        let (r, c, jreg) = file.f64("joint_regressor")?;
        check_len("joint_regressor rows", jc, r)?;
        check_len("joint_regressor columns", nv, c)?;
        let (nk, c, kreg) = file.f64("keypoint_regressor")?;
        check_len("keypoint_regressor columns", nv, c)?;

        TemplateModel::new(
            verts,
            faces,
            basis.to_vec(),
            nb,
            skin.to_vec(),
            jreg.to_vec(),
            kreg.to_vec(),
            nk,
            tree,
        )
        .map_err(|e| match e {
            Error::Dimension { .. } | Error::MalformedTree(_) => Error::Schema(e.to_string()),
            other => other,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container().write(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&MatrixFile::read(path)?)
    }
}
