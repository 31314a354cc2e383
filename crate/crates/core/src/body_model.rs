//! Articulated animal body model.
//!
//! A posed mesh is produced in four steps: shape blendshapes are added to the
//! template, rest joint locations are regressed from the shaped mesh, per-joint
//! axis-angle rotations are chained down the kinematic tree, and every vertex
//! is moved by the skin-weighted blend of its joints' rigid transforms. The
//! global translation is added last.

use nalgebra::{Matrix3, Vector3};

use crate::error::{check_len, Error, Result};

/// Below this rotation angle `rodrigues` uses the first-order series `I + [w]x`.
pub const SMALL_ANGLE: f64 = 1e-8;

/// Joint hierarchy. Joint 0 is the root; every other joint's parent has a
/// smaller index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KinematicTree {
    parents: Vec<Option<usize>>,
}

impl KinematicTree {
    pub fn new(parents: Vec<Option<usize>>) -> Result<Self> {
        if parents.is_empty() {
            return Err(Error::MalformedTree("no joints".into()));
        }
        if parents[0].is_some() {
            return Err(Error::MalformedTree("joint 0 must be the root".into()));
        }
        for (j, p) in parents.iter().enumerate().skip(1) {
            match p {
                None => return Err(Error::MalformedTree(format!("second root at joint {j}"))),
                Some(p) if *p >= j => {
                    return Err(Error::MalformedTree(format!(
                        "joint {j} has parent {p}, parents must precede children"
                    )))
                }
                Some(_) => {}
            }
        }
        Ok(Self { parents })
    }

    pub fn joint_count(&self) -> usize {
        self.parents.len()
    }

    pub fn parent(&self, joint: usize) -> Option<usize> {
        self.parents[joint]
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parents
    }

    pub fn children(&self, joint: usize) -> impl Iterator<Item = usize> + '_ {
        self.parents
            .iter()
            .enumerate()
            .filter(move |(_, p)| **p == Some(joint))
            .map(|(c, _)| c)
    }
}

/// Mesh template, shape space, skinning weights and regressors.
///
/// Dense matrices are stored row-major: `shape_basis[b][v][axis]`,
/// `skin_weights[v][j]`, `joint_regressor[j][v]`, `keypoint_regressor[k][v]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateModel {
    template_vertices: Vec<Vector3<f64>>,
    faces: Vec<[u32; 3]>,
    shape_basis: Vec<f64>,
    skin_weights: Vec<f64>,
    joint_regressor: Vec<f64>,
    keypoint_regressor: Vec<f64>,
    tree: KinematicTree,
    n_shape: usize,
    n_keypoints: usize,
}

/// Tolerance for "rows sum to one" checks on loaded templates.
pub const ROW_SUM_TOL: f64 = 1e-9;

impl TemplateModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        template_vertices: Vec<Vector3<f64>>,
        faces: Vec<[u32; 3]>,
        shape_basis: Vec<f64>,
        n_shape: usize,
        skin_weights: Vec<f64>,
        joint_regressor: Vec<f64>,
        keypoint_regressor: Vec<f64>,
        n_keypoints: usize,
        tree: KinematicTree,
    ) -> Result<Self> {
        let nv = template_vertices.len();
        let nj = tree.joint_count();
        check_len("shape_basis", n_shape * nv * 3, shape_basis.len())?;
        check_len("skin_weights", nv * nj, skin_weights.len())?;
        check_len("joint_regressor", nj * nv, joint_regressor.len())?;
        check_len(
            "keypoint_regressor",
            n_keypoints * nv,
            keypoint_regressor.len(),
        )?;
        if nv == 0 {
            return Err(Error::Schema("template has no vertices".into()));
        }
        if let Some(f) = faces.iter().find(|f| f.iter().any(|&i| i as usize >= nv)) {
            return Err(Error::Schema(format!(
                "face {f:?} indexes past {nv} vertices"
            )));
        }
        let all_finite = template_vertices
            .iter()
            .all(|v| v.iter().all(|x| x.is_finite()))
            && shape_basis.iter().all(|x| x.is_finite());
        if !all_finite {
            return Err(Error::Schema("non-finite template data".into()));
        }
        check_rows("skin_weights", &skin_weights, nj, true)?;
        check_rows("joint_regressor", &joint_regressor, nv, false)?;
        check_rows("keypoint_regressor", &keypoint_regressor, nv, false)?;
        Ok(Self {
            template_vertices,
            faces,
            shape_basis,
            skin_weights,
            joint_regressor,
            keypoint_regressor,
            tree,
            n_shape,
            n_keypoints,
        })
    }

    pub fn n_verts(&self) -> usize {
        self.template_vertices.len()
    }
    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }
    pub fn n_shape(&self) -> usize {
        self.n_shape
    }
    pub fn n_joints(&self) -> usize {
        self.tree.joint_count()
    }
    pub fn n_keypoints(&self) -> usize {
        self.n_keypoints
    }
    pub fn tree(&self) -> &KinematicTree {
        &self.tree
    }
    pub fn template_vertices(&self) -> &[Vector3<f64>] {
        &self.template_vertices
    }
    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }
    pub fn shape_basis(&self) -> &[f64] {
        &self.shape_basis
    }
    pub fn skin_weights(&self) -> &[f64] {
        &self.skin_weights
    }
    pub fn joint_regressor(&self) -> &[f64] {
        &self.joint_regressor
    }
    pub fn keypoint_regressor(&self) -> &[f64] {
        &self.keypoint_regressor
    }

    /// Skin weight of vertex `v` on joint `j`.
    pub fn skin_weight(&self, v: usize, j: usize) -> f64 {
        self.skin_weights[v * self.n_joints() + j]
    }

    pub fn zero_shape(&self) -> ShapeParams {
        ShapeParams::zeros(self.n_shape)
    }

    pub fn zero_pose(&self) -> PoseParams {
        PoseParams::zeros(self.n_joints())
    }
}

fn check_rows(name: &str, data: &[f64], cols: usize, nonneg: bool) -> Result<()> {
    for (r, row) in data.chunks(cols.max(1)).enumerate() {
        if row.iter().any(|x| !x.is_finite() || (nonneg && *x < 0.0)) {
            return Err(Error::Schema(format!("{name} row {r} has invalid entries")));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::Schema(format!(
                "{name} row {r} sums to {s}, expected 1"
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeParams {
    pub beta: Vec<f64>,
}

impl ShapeParams {
    pub fn zeros(n: usize) -> Self {
        Self { beta: vec![0.0; n] }
    }
}

/// Per-joint axis-angle rotations, radians.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseParams {
    pub theta: Vec<Vector3<f64>>,
}

impl PoseParams {
    pub fn zeros(joints: usize) -> Self {
        Self {
            theta: vec![Vector3::zeros(); joints],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalTranslation {
    pub gamma: Vector3<f64>,
}

impl GlobalTranslation {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self {
            gamma: Vector3::new(x, y, z),
        }
    }
    pub fn zero() -> Self {
        Self {
            gamma: Vector3::zeros(),
        }
    }
}

/// Shape, pose and translation of one animal.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceParams {
    pub shape: ShapeParams,
    pub pose: PoseParams,
    pub translation: GlobalTranslation,
}

impl InstanceParams {
    pub fn pose_mesh(&self, template: &TemplateModel) -> Result<PosedMesh> {
        pose_mesh(template, &self.shape, &self.pose, &self.translation)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosedMesh {
    pub vertices: Vec<Vector3<f64>>,
    pub keypoints3d: Vec<Vector3<f64>>,
    pub joints3d: Vec<Vector3<f64>>,
}

/// `x -> rotation * x + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Rotation by `rotation` about the fixed point `pivot`.
    pub fn about(rotation: Matrix3<f64>, pivot: &Vector3<f64>) -> Self {
        Self {
            rotation,
            translation: pivot - rotation * pivot,
        }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// `self ∘ inner`: apply `inner` first.
    pub fn compose(&self, inner: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * inner.rotation,
            translation: self.rotation * inner.translation + self.translation,
        }
    }
}

fn skew(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Axis-angle vector to rotation matrix.
pub fn rodrigues(axis_angle: &Vector3<f64>) -> Matrix3<f64> {
    let angle = axis_angle.norm();
    if angle < SMALL_ANGLE {
        return Matrix3::identity() + skew(axis_angle);
    }
    let k = skew(&(axis_angle / angle));
    Matrix3::identity() + k * angle.sin() + (k * k) * (1.0 - angle.cos())
}

/// Rotation matrix to axis-angle vector (inverse of [`rodrigues`] for angles in `[0, π]`).
pub fn axis_angle_from_matrix(r: &Matrix3<f64>) -> Vector3<f64> {
    let rot = nalgebra::Rotation3::from_matrix_unchecked(*r);
    let q = nalgebra::UnitQuaternion::from_rotation_matrix(&rot);
    let q = if q.w < 0.0 {
        nalgebra::UnitQuaternion::new_unchecked(-q.into_inner())
    } else {
        q
    };
    q.scaled_axis()
}

/// Rest mesh: template plus the `beta`-weighted shape basis.
pub fn shape_blend(template: &TemplateModel, beta: &ShapeParams) -> Result<Vec<Vector3<f64>>> {
    check_len("beta", template.n_shape, beta.beta.len())?;
    let nv = template.n_verts();
    let mut rest = template.template_vertices.clone();
    for (b, &coef) in beta.beta.iter().enumerate() {
        if coef == 0.0 {
            continue;
        }
        let slice = &template.shape_basis[b * nv * 3..(b + 1) * nv * 3];
        for (v, d) in rest.iter_mut().zip(slice.chunks_exact(3)) {
            v.x += coef * d[0];
            v.y += coef * d[1];
            v.z += coef * d[2];
        }
    }
    Ok(rest)
}

/// Apply a row-major `(rows × points.len())` regressor to a point set.
pub fn regress(regressor: &[f64], points: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
    let n = points.len();
    regressor
        .chunks_exact(n)
        .map(|row| {
            row.iter()
                .zip(points)
                .filter(|(w, _)| **w != 0.0)
                .fold(Vector3::zeros(), |acc, (w, p)| acc + p * *w)
        })
        .collect()
}

/// Per-joint skinning transforms, mapping rest-space points to posed space.
///
/// Joint `j` rotates by `theta[j]` about its rest location, after which the
/// parent's transform is applied. The root therefore rotates about its own
/// rest location; translation is not part of these transforms.
pub fn forward_kinematics(
    tree: &KinematicTree,
    rest_joints: &[Vector3<f64>],
    theta: &PoseParams,
) -> Result<Vec<RigidTransform>> {
    let nj = tree.joint_count();
    check_len("rest_joints", nj, rest_joints.len())?;
    check_len("theta", nj, theta.theta.len())?;
    let mut global: Vec<RigidTransform> = Vec::with_capacity(nj);
    for (j, (w, rest)) in theta.theta.iter().zip(rest_joints).enumerate() {
        let local = RigidTransform::about(rodrigues(w), rest);
        let g = match tree.parent(j) {
            None => local,
            Some(p) if p < j => global[p].compose(&local),
            Some(p) => {
                return Err(Error::MalformedTree(format!(
                    "joint {j} precedes parent {p}"
                )));
            }
        };
        global.push(g);
    }
    Ok(global)
}

/// Full forward function: shape, articulate, skin, translate, regress.
///
/// Keypoints are regressed from the untranslated posed mesh and then shifted
/// by `gamma`, so every output is exactly translation-equivariant. Skinning
/// is evaluated as `v + Σ_j w_j (A_j v - v)`, which equals the usual blend for
/// weights summing to one and returns the rest mesh bit-for-bit at zero pose.
pub fn pose_mesh(
    template: &TemplateModel,
    beta: &ShapeParams,
    theta: &PoseParams,
    gamma: &GlobalTranslation,
) -> Result<PosedMesh> {
    let rest = shape_blend(template, beta)?;
    let rest_joints = regress(&template.joint_regressor, &rest);
    let transforms = forward_kinematics(&template.tree, &rest_joints, theta)?;
    let nj = template.n_joints();

    let local: Vec<Vector3<f64>> = rest
        .iter()
        .enumerate()
        .map(|(v, p)| {
            let weights = &template.skin_weights[v * nj..(v + 1) * nj];
            weights
                .iter()
                .zip(&transforms)
                .filter(|(w, _)| **w != 0.0)
                .fold(*p, |acc, (w, t)| acc + (t.apply(p) - p) * *w)
        })
        .collect();

    let keypoints3d = regress(&template.keypoint_regressor, &local)
        .into_iter()
        .map(|k| k + gamma.gamma)
        .collect();
    let joints3d = transforms
        .iter()
        .zip(&rest_joints)
        .map(|(t, j)| t.apply(j) + gamma.gamma)
        .collect();
    let vertices = local.into_iter().map(|p| p + gamma.gamma).collect();

    Ok(PosedMesh {
        vertices,
        keypoints3d,
        joints3d,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::template::{make_toy_template, TemplateConfig};
    use nalgebra::UnitQuaternion;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn max_abs(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
        (a - b).abs().max()
    }

    #[test]
    fn rodrigues_zero_is_identity() {
        assert_eq!(rodrigues(&Vector3::zeros()), Matrix3::identity());
    }

    #[test]
    fn rodrigues_quarter_turn_about_z() {
        let r = rodrigues(&Vector3::new(0.0, 0.0, FRAC_PI_2));
        let x = r * Vector3::x();
        assert!((x - Vector3::y()).norm() < 1e-15);
        // Quaternion route as an independent oracle.
        let q = UnitQuaternion::from_scaled_axis(Vector3::new(0.0, 0.0, FRAC_PI_2));
        assert!(max_abs(&r, q.to_rotation_matrix().matrix()) < 1e-15);
    }

    #[test]
    fn rodrigues_half_turn_twice_is_identity() {
        let r = rodrigues(&Vector3::new(PI, 0.0, 0.0));
        assert!(max_abs(&(r * r), &Matrix3::identity()) < 1e-12);
    }

    #[test]
    fn rodrigues_small_angle_matches_series() {
        let w = Vector3::new(3e-9, -2e-9, 1e-9);
        let r = rodrigues(&w);
        assert_eq!(r, Matrix3::identity() + skew(&w));
        let q = UnitQuaternion::from_scaled_axis(w);
        assert!(max_abs(&r, q.to_rotation_matrix().matrix()) < 1e-16);
    }

    proptest! {
        #[test]
        fn rodrigues_is_proper_rotation_fixing_axis(
            x in -7.0f64..7.0, y in -7.0f64..7.0, z in -7.0f64..7.0
        ) {
            let w = Vector3::new(x, y, z);
            let r = rodrigues(&w);
            prop_assert!(max_abs(&(r.transpose() * r), &Matrix3::identity()) < 1e-10);
            prop_assert!((r.determinant() - 1.0).abs() < 1e-10);
            prop_assert!((r * w - w).norm() < 1e-10 * (1.0 + w.norm()));
            let q = UnitQuaternion::from_scaled_axis(w);
            prop_assert!(max_abs(&r, q.to_rotation_matrix().matrix()) < 1e-12);
        }

        #[test]
        fn axis_angle_round_trip(x in -3.0f64..3.0, y in -3.0f64..3.0, z in -3.0f64..3.0) {
            let w = Vector3::new(x, y, z);
            prop_assume!(w.norm() < PI - 1e-3);
            let back = axis_angle_from_matrix(&rodrigues(&w));
            prop_assert!((back - w).norm() < 1e-9);
        }
    }

    #[test]
    fn half_turn_recovered() {
        for axis in [
            Vector3::x(),
            Vector3::y(),
            Vector3::new(1.0, 2.0, -2.0).normalize(),
        ] {
            let r = rodrigues(&(axis * PI));
            let back = axis_angle_from_matrix(&r);
            assert!((back.norm() - PI).abs() < 1e-9);
            assert!(max_abs(&rodrigues(&back), &r) < 1e-12);
        }
    }

    #[test]
    fn tree_validation() {
        assert!(KinematicTree::new(vec![None, Some(0), Some(1)]).is_ok());
        assert!(KinematicTree::new(vec![]).is_err());
        assert!(KinematicTree::new(vec![Some(0)]).is_err());
        assert!(KinematicTree::new(vec![None, None]).is_err());
        assert!(KinematicTree::new(vec![None, Some(2), Some(0)]).is_err());
        assert!(KinematicTree::new(vec![None, Some(1)]).is_err());
    }

    fn small_template() -> TemplateModel {
        make_toy_template(&TemplateConfig::desk_scale(11)).unwrap()
    }

    #[test]
    fn shape_blend_zero_and_unit() {
        let t = small_template();
        let rest = shape_blend(&t, &t.zero_shape()).unwrap();
        assert_eq!(rest, t.template_vertices());
        let mut beta = t.zero_shape();
        beta.beta[1] = 1.0;
        let rest = shape_blend(&t, &beta).unwrap();
        let nv = t.n_verts();
        for (v, p) in rest.iter().enumerate() {
            let d = &t.shape_basis()[nv * 3 + v * 3..nv * 3 + v * 3 + 3];
            let expect = t.template_vertices()[v] + Vector3::new(d[0], d[1], d[2]);
            assert_eq!(*p, expect);
        }
        assert!(matches!(
            shape_blend(&t, &ShapeParams::zeros(t.n_shape() + 1)),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn shape_blend_is_linear() {
        use rand::Rng;
        let t = small_template();
        let mut rng = crate::seeds::rng(3);
        let b1: Vec<f64> = (0..t.n_shape()).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let b2: Vec<f64> = (0..t.n_shape()).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let sum: Vec<f64> = b1.iter().zip(&b2).map(|(a, b)| a + b).collect();
        let r1 = shape_blend(&t, &ShapeParams { beta: b1 }).unwrap();
        let r2 = shape_blend(&t, &ShapeParams { beta: b2 }).unwrap();
        let r12 = shape_blend(&t, &ShapeParams { beta: sum }).unwrap();
        for v in 0..t.n_verts() {
            let lhs = r1[v] + r2[v] - t.template_vertices()[v];
            assert!((lhs - r12[v]).norm() < 1e-12);
        }
    }

    #[test]
    fn fk_zero_pose_is_identity() {
        let tree = KinematicTree::new(vec![None, Some(0), Some(1), Some(0)]).unwrap();
        let joints = vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(2.0, 0.5, 0.0),
            Vector3::new(-1.0, 0.3, 0.2),
        ];
        let g = forward_kinematics(&tree, &joints, &PoseParams::zeros(4)).unwrap();
        for t in g {
            assert_eq!(t, RigidTransform::identity());
        }
    }

    #[test]
    fn fk_root_rotation_propagates() {
        let tree = KinematicTree::new(vec![None, Some(0), Some(1), Some(0)]).unwrap();
        let joints = vec![
            Vector3::new(0.1, 0.2, 0.3),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(2.0, 0.5, 0.0),
            Vector3::new(-1.0, 0.3, 0.2),
        ];
        let mut pose = PoseParams::zeros(4);
        pose.theta[0] = Vector3::new(0.3, -1.1, 0.4);
        let r = rodrigues(&pose.theta[0]);
        let g = forward_kinematics(&tree, &joints, &pose).unwrap();
        for t in &g {
            assert!(max_abs(&t.rotation, &r) < 1e-15);
        }
        // Root is a pure rotation about its own rest location.
        assert!((g[0].apply(&joints[0]) - joints[0]).norm() < 1e-15);
    }

    #[test]
    fn fk_chain_matches_hand_composition() {
        // Chain 0 -> 1 -> 2 along x, each rotating about z.
        let tree = KinematicTree::new(vec![None, Some(0), Some(1)]).unwrap();
        let joints = vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(2.0, 0.0, 0.0),
        ];
        let angles = [0.3, -0.7, 1.1];
        let mut pose = PoseParams::zeros(3);
        for (j, a) in angles.iter().enumerate() {
            pose.theta[j] = Vector3::new(0.0, 0.0, *a);
        }
        let g = forward_kinematics(&tree, &joints, &pose).unwrap();

        // Hand-built homogeneous matrices: T(J_j) R_j T(-J_j), chained.
        let hom = |a: f64, pivot: f64| {
            let (s, c) = a.sin_cos();
            let t = nalgebra::Matrix4::new(
                1.0, 0.0, 0.0, pivot, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0,
            );
            let r = nalgebra::Matrix4::new(
                c, -s, 0.0, 0.0, s, c, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0,
            );
            let ti = nalgebra::Matrix4::new(
                1.0, 0.0, 0.0, -pivot, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0,
            );
            t * r * ti
        };
        let m0 = hom(angles[0], 0.0);
        let m1 = m0 * hom(angles[1], 1.0);
        let m2 = m1 * hom(angles[2], 2.0);
        let tip = nalgebra::Vector4::new(3.0, 0.0, 0.0, 1.0);
        let expect = m2 * tip;
        let got = g[2].apply(&Vector3::new(3.0, 0.0, 0.0));
        assert!((got - expect.xyz()).norm() < 1e-14);

        // Joint 2's posed location in closed form: cumulative angles along the chain.
        let p1 = Vector3::new(angles[0].cos(), angles[0].sin(), 0.0);
        let a01 = angles[0] + angles[1];
        let p2 = p1 + Vector3::new(a01.cos(), a01.sin(), 0.0);
        assert!((g[2].apply(&joints[2]) - p2).norm() < 1e-14);
        assert!((g[1].apply(&joints[1]) - p1).norm() < 1e-14);
    }

    #[test]
    fn pose_mesh_rest_and_translation() {
        let t = small_template();
        let m = pose_mesh(
            &t,
            &t.zero_shape(),
            &t.zero_pose(),
            &GlobalTranslation::zero(),
        )
        .unwrap();
        assert_eq!(m.vertices, t.template_vertices());
        let g = GlobalTranslation::new(1.0, 2.0, 3.0);
        let shifted = pose_mesh(&t, &t.zero_shape(), &t.zero_pose(), &g).unwrap();
        for (a, b) in shifted.vertices.iter().zip(t.template_vertices()) {
            assert_eq!(*a, b + g.gamma);
        }
        // Keypoints are the regressor applied to the posed vertices.
        let kp = regress(t.keypoint_regressor(), &shifted.vertices);
        for (a, b) in kp.iter().zip(&shifted.keypoints3d) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn single_joint_rigid_rotation() {
        let verts = vec![
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.5),
            Vector3::new(-1.0, -1.0, 0.0),
        ];
        let tree = KinematicTree::new(vec![None]).unwrap();
        let t = TemplateModel::new(
            verts.clone(),
            vec![[0, 1, 2]],
            vec![],
            0,
            vec![1.0; 3],
            vec![1.0, 0.0, 0.0],
            vec![0.0, 0.5, 0.5],
            1,
            tree,
        )
        .unwrap();
        let mut pose = PoseParams::zeros(1);
        pose.theta[0] = Vector3::new(0.0, 0.0, FRAC_PI_2);
        let m = pose_mesh(
            &t,
            &ShapeParams::zeros(0),
            &pose,
            &GlobalTranslation::zero(),
        )
        .unwrap();
        // Pivot is the regressed root joint, vertex 0 at (1,0,0).
        let pivot = verts[0];
        for (p, v) in m.vertices.iter().zip(&verts) {
            let d = v - pivot;
            let expect = pivot + Vector3::new(-d.y, d.x, d.z);
            assert!((p - expect).norm() < 1e-12);
        }
    }

    #[test]
    fn template_rejects_bad_inputs() {
        let tree = KinematicTree::new(vec![None]).unwrap();
        let v = vec![Vector3::zeros(); 3];
        let bad_face = TemplateModel::new(
            v.clone(),
            vec![[0, 1, 3]],
            vec![],
            0,
            vec![1.0; 3],
            vec![1.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0],
            1,
            tree.clone(),
        );
        assert!(matches!(bad_face, Err(Error::Schema(_))));
        let bad_weights = TemplateModel::new(
            v,
            vec![[0, 1, 2]],
            vec![],
            0,
            vec![1.0, 0.5, 1.0],
            vec![1.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0],
            1,
            tree,
        );
        assert!(matches!(bad_weights, Err(Error::Schema(_))));
    }
}
