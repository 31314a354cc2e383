//! `selfcheck`: oracle and invariant suites run against the library.
//!
//! Suites are sized to finish in a few seconds. The optimality suite solves
//! with the weights in [`MATCH_WEIGHTS_ENV`] when that variable is set
//! (`"conf,bbox,giou,kpts"`) while still scoring against the configured
//! weights, so a mis-weighted solver is caught.

use std::fmt::Write as _;

use anyhow::{anyhow, bail, Result};
use rand::Rng;
use serde::Serialize;
use zoo3d::body_model::{
    forward_kinematics, regress, rodrigues, shape_blend, GlobalTranslation, InstanceParams,
    PoseParams, ShapeParams, TemplateModel,
};
use zoo3d::container::MatrixFile;
use zoo3d::decoder::{
    apply_prompt_dropout, attend, decode, refresh_kp2d_tokens, refresh_kp3d_tokens, stub_encode,
    DecoderConfig, DecoderWeights, DropoutConfig, Group, InstancePrompt, PromptSet, TokenState,
};
use zoo3d::image::Image;
use zoo3d::losses::{total_loss, LossWeights};
use zoo3d::matcher::{
    brute_force_assignment, cost_matrix, hungarian, GroundTruthInstance, InstancePrediction,
    MatchWeights,
};
use zoo3d::metrics::{pa_mpjpe, procrustes_align};
use zoo3d::projection::BBox;
use zoo3d::scene::{
    default_pose_pool, default_shape_pool, generate_corpus, LayoutConfig, SceneAnnotation,
    SceneConfig,
};
use zoo3d::seeds;
use zoo3d::template::make_toy_template;

use nalgebra::{Vector2, Vector3};

use crate::config::RunConfig;
use crate::eval::evaluate;

pub const MATCH_WEIGHTS_ENV: &str = "ZOO3D_SELFCHECK_MATCH_WEIGHTS";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelfcheckReport {
    pub config: RunConfig,
    pub suites: Vec<SuiteResult>,
}

impl SelfcheckReport {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(|s| s.passed)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        writeln!(s, "config {}", self.config.to_compact_json()).unwrap();
        for r in &self.suites {
            let tag = if r.passed { "PASS" } else { "FAIL" };
            writeln!(s, "{tag} {}: {}", r.name, r.detail).unwrap();
        }
        let failed = self.suites.iter().filter(|r| !r.passed).count();
        writeln!(s, "{} suites, {failed} failed", self.suites.len()).unwrap();
        s
    }
}

fn parse_weights(text: &str) -> Result<MatchWeights> {
    let v: Vec<f64> = text
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| anyhow!("{MATCH_WEIGHTS_ENV}: {e}"))?;
    let [c, b, g, k] = v[..] else {
        bail!("{MATCH_WEIGHTS_ENV} needs four comma-separated values");
    };
    Ok(MatchWeights {
        lambda_conf: c,
        lambda_bbox: b,
        lambda_giou: g,
        lambda_kpts: k,
        ..MatchWeights::default()
    })
}

/// Random predictions and ground truths with `k` keypoints each.
pub fn random_match_problem<R: Rng + ?Sized>(
    rng: &mut R,
    m: usize,
    p: usize,
    k: usize,
) -> (Vec<InstancePrediction>, Vec<GroundTruthInstance>) {
    let bbox = |rng: &mut R| {
        let (w, h) = (rng.gen_range(0.05..0.5), rng.gen_range(0.05..0.5));
        BBox::new(
            rng.gen_range(w / 2.0..1.0 - w / 2.0),
            rng.gen_range(h / 2.0..1.0 - h / 2.0),
            w,
            h,
        )
    };
    let kp2 = |rng: &mut R| {
        (0..k)
            .map(|_| Vector2::new(rng.gen(), rng.gen()))
            .collect::<Vec<_>>()
    };
    let preds = (0..p)
        .map(|_| InstancePrediction {
            bbox: bbox(rng),
            confidence: rng.gen(),
            keypoints2d: kp2(rng),
            keypoints3d: vec![Vector3::zeros(); k],
            params: None,
        })
        .collect();
    let gts = (0..m)
        .map(|_| GroundTruthInstance {
            bbox: bbox(rng),
            keypoints2d: kp2(rng),
            visibility: (0..k).map(|_| rng.gen_bool(0.7)).collect(),
            keypoints3d: vec![Vector3::zeros(); k],
            params: None,
        })
        .collect();
    (preds, gts)
}

/// Hungarian under `solve` weights against brute force under `score` weights,
/// on `cases` problems with `1 <= M <= P <= max_p`. Costs must agree bitwise.
pub fn matcher_optimality(
    cases: usize,
    max_p: usize,
    seed: u64,
    score: &MatchWeights,
    solve: &MatchWeights,
) -> Result<String> {
    let mut rng = seeds::rng(seed);
    let mut bad = 0;
    let mut first = None;
    for case in 0..cases {
        let p = rng.gen_range(1..=max_p);
        let m = rng.gen_range(1..=p);
        let (preds, gts) = random_match_problem(&mut rng, m, p, 6);
        let (truth, _) = cost_matrix(&preds, &gts, score);
        let (solved, _) = cost_matrix(&preds, &gts, solve);
        let a = hungarian(&solved)?;
        let (_, best) = brute_force_assignment(&truth)?;
        let got = truth.assignment_cost(&a);
        if got.to_bits() != best.to_bits() {
            bad += 1;
            first.get_or_insert(format!("case {case}: {got} vs optimum {best}"));
        }
    }
    match first {
        None => Ok(format!("{cases} problems, P <= {max_p}")),
        Some(f) => bail!("{bad}/{cases} suboptimal, first {f}"),
    }
}

/// Maximum absolute entry of `a - b`.
fn max_diff(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).amax())
        .fold(0.0, f64::max)
}

/// Rest-pose identity, exact translation equivariance, skinning against an
/// independent chain of joint frames, and orthonormal joint rotations.
pub fn body_model_identities(template: &TemplateModel, cases: usize, seed: u64) -> Result<String> {
    let mut rng = seeds::rng(seed);
    let nj = template.n_joints();
    let (mut rest_err, mut rigid_err, mut ortho_err) = (0.0f64, 0.0f64, 0.0f64);
    for case in 0..cases {
        let beta = ShapeParams {
            beta: (0..template.n_shape())
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect(),
        };
        let theta = PoseParams {
            theta: (0..nj)
                .map(|_| {
                    Vector3::new(
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                    )
                })
                .collect(),
        };
        let gamma = GlobalTranslation::new(
            rng.gen_range(-5.0..5.0),
            rng.gen_range(-5.0..5.0),
            rng.gen_range(-5.0..5.0),
        );

        let rest = shape_blend(template, &beta)?;
        let at_rest = InstanceParams {
            shape: beta.clone(),
            pose: template.zero_pose(),
            translation: GlobalTranslation::zero(),
        }
        .pose_mesh(template)?;
        rest_err = rest_err.max(max_diff(&at_rest.vertices, &rest));

        let posed = InstanceParams {
            shape: beta.clone(),
            pose: theta.clone(),
            translation: GlobalTranslation::zero(),
        }
        .pose_mesh(template)?;
        let moved = InstanceParams {
            shape: beta,
            pose: theta.clone(),
            translation: gamma,
        }
        .pose_mesh(template)?;
        let shifted = |v: &[Vector3<f64>]| v.iter().map(|p| p + gamma.gamma).collect::<Vec<_>>();
        if moved.vertices != shifted(&posed.vertices)
            || moved.keypoints3d != shifted(&posed.keypoints3d)
            || moved.joints3d != shifted(&posed.joints3d)
        {
            bail!("case {case}: translation is not exactly equivariant");
        }

        let joints = regress(template.joint_regressor(), &rest);
        let tree = template.tree();
        let mut rot = Vec::with_capacity(nj);
        let mut pos: Vec<Vector3<f64>> = Vec::with_capacity(nj);
        for j in 0..nj {
            let local = rodrigues(&theta.theta[j]);
            match tree.parent(j) {
                None => {
                    rot.push(local);
                    pos.push(joints[j]);
                }
                Some(p) => {
                    pos.push(pos[p] + rot[p] * (joints[j] - joints[p]));
                    rot.push(rot[p] * local);
                }
            }
        }
        let expected: Vec<Vector3<f64>> = rest
            .iter()
            .enumerate()
            .map(|(v, x)| {
                (0..nj)
                    .map(|j| (pos[j] + rot[j] * (x - joints[j])) * template.skin_weight(v, j))
                    .sum()
            })
            .collect();
        rigid_err = rigid_err.max(max_diff(&posed.vertices, &expected));

        for t in forward_kinematics(tree, &joints, &theta)? {
            let r = t.rotation;
            let e = (r.transpose() * r - nalgebra::Matrix3::identity())
                .amax()
                .max((r.determinant() - 1.0).abs());
            ortho_err = ortho_err.max(e);
        }
    }
    if rest_err > 1e-12 || rigid_err > 1e-10 || ortho_err > 1e-10 {
        bail!("rest {rest_err:.3e}, skinning {rigid_err:.3e}, orthonormality {ortho_err:.3e}");
    }
    Ok(format!(
        "{cases} cases, rest {rest_err:.1e}, skinning {rigid_err:.1e}, orthonormality {ortho_err:.1e}"
    ))
}

/// Random similarities with scale in `[0.1, 10]` are recovered from random point sets.
pub fn procrustes_recovery(cases: usize, seed: u64) -> Result<String> {
    let mut rng = seeds::rng(seed);
    let (mut worst_pa, mut worst_rel) = (0.0f64, 0.0f64);
    for case in 0..cases {
        let n = rng.gen_range(4..=30);
        let src: Vec<Vector3<f64>> = (0..n)
            .map(|_| {
                Vector3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                )
            })
            .collect();
        let axis = Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let r = rodrigues(&(axis.normalize() * rng.gen_range(0.0..std::f64::consts::PI)));
        let s = 10f64.powf(rng.gen_range(-1.0..1.0));
        let t = Vector3::new(
            rng.gen_range(-10.0..10.0),
            rng.gen_range(-10.0..10.0),
            rng.gen_range(-10.0..10.0),
        );
        let dst: Vec<Vector3<f64>> = src.iter().map(|p| r * p * s + t).collect();
        let fit = procrustes_align(&src, &dst)?;
        let rel = ((fit.scale - s).abs() / s)
            .max((fit.rotation - r).amax())
            .max((fit.translation - t).norm() / t.norm().max(1.0));
        let pa = pa_mpjpe(&src, &dst)?;
        worst_pa = worst_pa.max(pa);
        worst_rel = worst_rel.max(rel);
        if pa > 1e-9 || rel > 1e-7 {
            bail!("case {case}: PA-MPJPE {pa:.3e}, relative transform error {rel:.3e}");
        }
    }
    Ok(format!(
        "{cases} cases, PA-MPJPE <= {worst_pa:.1e}, transform error <= {worst_rel:.1e}"
    ))
}

fn perturbed<R: Rng + ?Sized>(
    preds: &[InstancePrediction],
    eps: f64,
    rng: &mut R,
) -> Vec<InstancePrediction> {
    let mut d = || rng.gen_range(-1.0..1.0) * eps;
    preds
        .iter()
        .map(|p| {
            let mut q = p.clone();
            q.bbox = BBox::new(
                q.bbox.cx + d(),
                q.bbox.cy + d(),
                q.bbox.w + d(),
                q.bbox.h + d(),
            );
            q.confidence = (q.confidence + d()).clamp(0.0, 1.0);
            for k in &mut q.keypoints2d {
                *k += Vector2::new(d(), d());
            }
            for k in &mut q.keypoints3d {
                *k += Vector3::new(d(), d(), d());
            }
            if let Some(params) = &mut q.params {
                for b in &mut params.shape.beta {
                    *b += d();
                }
                for w in &mut params.pose.theta {
                    *w += Vector3::new(d(), d(), d());
                }
            }
            q
        })
        .collect()
}

/// Ground-truth copies with confidence 1 give zero loss, and `directions`
/// random perturbations of size `eps` never lower it.
pub fn loss_contract(
    scenes: &[SceneAnnotation],
    directions: usize,
    eps: f64,
    weights: &LossWeights,
    seed: u64,
) -> Result<String> {
    let mut rng = seeds::rng(seed);
    let mut probes = 0;
    for s in scenes {
        let gts = s.ground_truths();
        let preds: Vec<InstancePrediction> = s
            .instances
            .iter()
            .map(|i| InstancePrediction {
                confidence: 1.0,
                ..i.prediction(s.image())
            })
            .collect();
        let base = total_loss(&preds, &gts, &[], &[], &[], weights)?;
        if base.total != 0.0 {
            bail!(
                "scene {}: loss {} at ground truth",
                s.scene_index,
                base.total
            );
        }
        for _ in 0..directions {
            let q = perturbed(&preds, eps, &mut rng);
            let l = total_loss(&q, &gts, &[], &[], &[], weights)?;
            if l.total < base.total {
                bail!(
                    "scene {}: perturbation lowered the loss to {}",
                    s.scene_index,
                    l.total
                );
            }
            probes += 1;
        }
    }
    Ok(format!(
        "{} scenes, {probes} probes at eps {eps}",
        scenes.len()
    ))
}

/// Scene-level layout audit plus byte-identical regeneration.
pub fn layout_audit(
    template: &TemplateModel,
    scene: &SceneConfig,
    master_seed: u64,
    count: u64,
) -> Result<String> {
    let poses = default_pose_pool(template, 32, master_seed);
    let shapes = default_shape_pool(template, 2, master_seed);
    let a = generate_corpus(template, &poses, &shapes, scene, master_seed, count)?;
    let b = generate_corpus(template, &poses, &shapes, scene, master_seed, count)?;
    let lc: &LayoutConfig = &scene.layout;
    let [z0, z1] = lc.tz_range;
    for (x, y) in a.iter().zip(&b) {
        if x.to_json() != y.to_json() {
            bail!("scene {} differs on regeneration", x.scene_index);
        }
        let n = x.instances.len();
        if n < lc.min_animals || n > lc.max_animals {
            bail!("scene {} has {n} instances", x.scene_index);
        }
        let placements = x
            .instances
            .iter()
            .map(|i| {
                i.layout
                    .ok_or_else(|| anyhow!("scene {} lacks layout records", x.scene_index))
            })
            .collect::<Result<Vec<_>>>()?;
        zoo3d::scene::check_placements(&placements, lc)?;
        for (i, p) in x.instances.iter().zip(&placements) {
            if p.ty != 0.0 || !(z0..=z1).contains(&i.translation[2]) || !(z0..=z1).contains(&p.tz) {
                bail!("scene {}: placement {:?} out of range", x.scene_index, p);
            }
        }
    }
    let total: usize = a.iter().map(|s| s.instances.len()).sum();
    Ok(format!("{count} scenes, {total} instances"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DropoutRates {
    pub mask_drop: f64,
    pub kp_prompt_drop: f64,
    /// Retained share of valid keypoints among prompts that were kept.
    pub kp_retention: f64,
}

pub fn dropout_rates(config: &DropoutConfig, draws: usize, k: usize, seed: u64) -> DropoutRates {
    let mut rng = seeds::rng(seed);
    let prompt = PromptSet {
        instances: vec![InstancePrompt {
            keypoints: Some(vec![[0.5, 0.5, 1.0]; k]),
            mask: Some(vec![true; 4]),
        }],
    };
    let (mut mask_drop, mut kp_drop, mut kept, mut offered) = (0usize, 0usize, 0usize, 0usize);
    for _ in 0..draws {
        let out = apply_prompt_dropout(&prompt, config, &mut rng);
        let p = &out.instances[0];
        mask_drop += usize::from(p.mask.is_none());
        match &p.keypoints {
            None => kp_drop += 1,
            Some(kps) => {
                offered += k;
                kept += kps.iter().filter(|x| x[2] == 1.0).count();
            }
        }
    }
    DropoutRates {
        mask_drop: mask_drop as f64 / draws as f64,
        kp_prompt_drop: kp_drop as f64 / draws as f64,
        kp_retention: kept as f64 / offered.max(1) as f64,
    }
}

fn dropout_suite(config: &DropoutConfig, seed: u64) -> Result<String> {
    let r = dropout_rates(config, 10_000, 26, seed);
    let expected_retention = 1.0 - config.kp_rate_max / 2.0;
    let near = |v: f64, c: f64| (v - c).abs() <= 0.02;
    if !near(r.mask_drop, config.p_mask_drop)
        || !near(r.kp_prompt_drop, config.p_kp_prompt_drop)
        || !near(r.kp_retention, expected_retention)
    {
        bail!("rates {r:?}");
    }
    Ok(format!(
        "mask {:.4}, keypoint prompt {:.4}, retention {:.4}",
        r.mask_drop, r.kp_prompt_drop, r.kp_retention
    ))
}

/// Rows of `state` that differ between `a` and `b`.
fn changed_rows(a: &TokenState, b: &TokenState) -> Vec<usize> {
    (0..a.n_tokens())
        .filter(|&r| a.tokens.row(r) != b.tokens.row(r))
        .collect()
}

/// Token count at full scale, attention row sums, feedback locality and
/// bit-stable decoding at `config`.
pub fn decoder_mechanics(
    template: &TemplateModel,
    config: &DecoderConfig,
    seed: u64,
) -> Result<String> {
    let full = DecoderConfig::full();
    if full.n_tokens() != 12_150
        || full.width != 1024
        || (full.grid_h, full.grid_w, full.channels) != (32, 32, 1280)
    {
        bail!("full-scale config has {} tokens", full.n_tokens());
    }
    let config = config.for_template(template);
    let weights = DecoderWeights::random(&config, seed)?;
    let mut rng = seeds::rng(seeds::sub_seed(seed, 1));
    let data = (0..config.grid_h * config.grid_w * 64 * 3)
        .map(|_| rng.gen())
        .collect();
    let image = Image::new(config.grid_h * 8, config.grid_w * 8, data)?;
    let features = stub_encode(&image, &config)?;
    let camera = zoo3d::projection::PerspectiveCamera::centered(
        1000.0,
        zoo3d::projection::ImageSize::square(1024),
    )?;

    let mut qrng = seeds::rng(weights.query_seed);
    let state =
        zoo3d::decoder::assemble_queries(&config, &PromptSet::empty(), &weights.prompt, &mut qrng)?;
    let mut worst = 0.0f64;
    for layer in &weights.layers {
        for w in attend(&state, &features, &layer.cross)?.weights {
            for row in w.row_iter() {
                worst = worst.max((row.sum() - 1.0).abs());
            }
        }
    }
    if worst > 1e-6 {
        bail!("attention row sum off by {worst:.3e}");
    }

    let kp2: Vec<Vec<Vector2<f64>>> = (0..config.slots)
        .map(|_| {
            (0..config.n_keypoints)
                .map(|_| Vector2::new(rng.gen(), rng.gen()))
                .collect()
        })
        .collect();
    let kp3: Vec<Vec<Vector3<f64>>> = (0..config.slots)
        .map(|_| {
            (0..config.n_keypoints)
                .map(|_| Vector3::new(rng.gen(), rng.gen(), rng.gen()))
                .collect()
        })
        .collect();
    let after2 = refresh_kp2d_tokens(&state, &kp2, &features, &weights.feedback)?;
    let after3 = refresh_kp3d_tokens(&state, &kp3, &weights.feedback)?;
    let kp2_rows = state.group_range(Group::Kp2d);
    let kp3_rows = state.group_range(Group::Kp3d);
    if changed_rows(&state, &after2)
        .iter()
        .any(|r| !kp2_rows.contains(r))
        || changed_rows(&state, &after3)
            .iter()
            .any(|r| !kp3_rows.contains(r))
    {
        bail!("feedback touched rows outside its token group");
    }

    let a = decode(&features, &PromptSet::empty(), template, &camera, &weights)?;
    let b = decode(&features, &PromptSet::empty(), template, &camera, &weights)?;
    if a.tokens.tokens != b.tokens.tokens || a.instances != b.instances {
        bail!("decode is not bit-stable");
    }
    Ok(format!(
        "full-scale tokens {}, row sums within {worst:.1e}, {} slots decoded twice",
        full.n_tokens(),
        a.instances.len()
    ))
}

/// Perfect predictions score PA-MPJPE 0, PCK 1 and AP 1; empty ones AP 0.
pub fn metrics_oracles(config: &RunConfig, scenes: &[SceneAnnotation]) -> Result<String> {
    let perfect: Vec<SceneAnnotation> = scenes
        .iter()
        .map(|s| {
            let mut p = s.clone();
            for i in &mut p.instances {
                i.confidence = Some(1.0);
            }
            p
        })
        .collect();
    let r = evaluate(config, scenes, &perfect)?;
    let pa = r.overall.pa_mpjpe.unwrap_or(f64::NAN);
    if !(pa <= 1e-9) || r.overall.pck != Some(1.0) || r.map() != Some(1.0) {
        bail!(
            "perfect predictions gave PA-MPJPE {pa:?}, PCK {:?}, mAP {:?}",
            r.overall.pck,
            r.map()
        );
    }
    let empty: Vec<SceneAnnotation> = scenes
        .iter()
        .map(|s| SceneAnnotation {
            instances: Vec::new(),
            ..s.clone()
        })
        .collect();
    let e = evaluate(config, scenes, &empty)?;
    if e.map() != Some(0.0) {
        bail!("empty predictions gave mAP {:?}", e.map());
    }
    Ok(format!(
        "{} scenes, perfect PA-MPJPE {pa:.1e}",
        scenes.len()
    ))
}

/// Loads the configured template file, or round-trips a generated template
/// through the text container.
pub fn template_loader(config: &RunConfig) -> Result<String> {
    match &config.template.path {
        Some(path) => {
            let t = TemplateModel::load(path)?;
            Ok(format!(
                "{}: {} vertices, {} joints",
                path.display(),
                t.n_verts(),
                t.n_joints()
            ))
        }
        None => {
            let t = make_toy_template(&config.template.generate)?;
            let text = t.to_container().to_text();
            let back = TemplateModel::from_container(&MatrixFile::parse(&text)?)?;
            if back != t {
                bail!("template changed on round trip");
            }
            let broken = text.replacen("faces", "facez", 1);
            if TemplateModel::from_container(&MatrixFile::parse(&broken)?).is_ok() {
                bail!("template with a missing matrix was accepted");
            }
            Ok(format!(
                "{} vertices round-tripped, corruption rejected",
                t.n_verts()
            ))
        }
    }
}

/// Scenes survive a JSON round trip and fit the template.
pub fn scene_schema(template: &TemplateModel, scenes: &[SceneAnnotation]) -> Result<String> {
    for s in scenes {
        let back = SceneAnnotation::from_json(&s.to_json())?;
        if &back != s {
            bail!("scene {} changed on round trip", s.scene_index);
        }
        back.validate_for(template)?;
    }
    Ok(format!("{} scenes round-tripped", scenes.len()))
}

pub fn run(config: &RunConfig) -> SelfcheckReport {
    let mut suites = Vec::new();
    let mut record = |name: &str, r: Result<String>| {
        suites.push(match r {
            Ok(detail) => SuiteResult {
                name: name.to_string(),
                passed: true,
                detail,
            },
            Err(e) => SuiteResult {
                name: name.to_string(),
                passed: false,
                detail: format!("{e:#}"),
            },
        });
    };
    let seed = config.seed;
    record("template-loader", template_loader(config));

    let template = match make_toy_template(&config.template.generate) {
        Ok(t) => t,
        Err(e) => {
            record("template", Err(e.into()));
            return SelfcheckReport {
                config: config.clone(),
                suites,
            };
        }
    };
    let solve = match std::env::var(MATCH_WEIGHTS_ENV) {
        Ok(text) => parse_weights(&text),
        Err(_) => Ok(config.match_weights),
    };
    record(
        "matcher-optimality",
        solve.and_then(|w| matcher_optimality(300, 7, seed, &config.match_weights, &w)),
    );
    record("body-model", body_model_identities(&template, 300, seed));
    record("procrustes", procrustes_recovery(300, seed));

    let poses = default_pose_pool(&template, 16, seed);
    let shapes = default_shape_pool(&template, 2, seed);
    let scenes = generate_corpus(&template, &poses, &shapes, &config.scene, seed, 8);
    match scenes {
        Ok(scenes) => {
            record("scene-schema", scene_schema(&template, &scenes));
            record(
                "losses",
                loss_contract(&scenes, 100, 1e-3, &config.loss_weights, seed),
            );
            record("metrics", metrics_oracles(config, &scenes));
        }
        Err(e) => record("scenes", Err(e.into())),
    }
    record("layout", layout_audit(&template, &config.scene, seed, 500));
    record(
        "prompt-dropout",
        dropout_suite(&config.decoder.dropout, seed),
    );
    record(
        "decoder",
        decoder_mechanics(&template, &config.decoder.config, seed),
    );
    SelfcheckReport {
        config: config.clone(),
        suites,
    }
}
