use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use anyhow::{bail, ensure, Result};
use nalgebra::{Matrix3, Vector2, Vector3};
use rand::Rng;
use zoo3d::body_model::rodrigues;
use zoo3d::decoder::{DecoderConfig, DropoutConfig};
use zoo3d::losses::LossWeights;
use zoo3d::matcher::{focal_conf_cost, MatchWeights};
use zoo3d::metrics::{
    average_precision, oks, pa_mpjpe, pck, ApGroundTruth, ApPrediction, ApScene, EvalConfig,
};
use zoo3d::projection::{BBox, ImageSize};
use zoo3d::scene::{
    default_pose_pool, default_shape_pool, generate_corpus, read_corpus, SceneConfig,
};
use zoo3d::seeds;
use zoo3d::template::{make_toy_template, TemplateConfig};
use zoo3d_cli::config::RunConfig;
use zoo3d_cli::eval::evaluate;
use zoo3d_cli::selfcheck;

const SEED: u64 = 20_240_901;

fn criterion_1() -> Result<String> {
    let w = MatchWeights::default();
    let start = Instant::now();
    let detail = selfcheck::matcher_optimality(1200, 7, SEED, &w, &w)?;
    let took = start.elapsed();
    ensure!(took < Duration::from_secs(10), "took {took:?}");
    Ok(format!("{detail} in {:.2}s", took.as_secs_f64()))
}

fn criterion_2() -> Result<String> {
    let w = MatchWeights::default();
    ensure!(
        (w.lambda_conf, w.lambda_bbox, w.lambda_giou, w.lambda_kpts) == (1.0, 1.0, 1.0, 10.0),
        "weights {w:?}"
    );
    ensure!(w.focal_alpha == 0.25 && w.focal_gamma == 2.0, "focal {w:?}");
    let c = focal_conf_cost(0.5, w.focal_alpha, w.focal_gamma);
    let expected = 0.25 * 0.25 * std::f64::consts::LN_2;
    ensure!(
        (c - expected).abs() <= 1e-12,
        "focal cost {c} vs {expected}"
    );
    Ok(format!(
        "(1,1,1,10), alpha 0.25, gamma 2, focal(0.5) = {c:.15}"
    ))
}

fn criterion_3() -> Result<String> {
    let template = make_toy_template(&TemplateConfig::default())?;
    selfcheck::body_model_identities(&template, 10_000, SEED)
}

fn criterion_4() -> Result<String> {
    selfcheck::procrustes_recovery(1000, SEED)
}

fn criterion_5() -> Result<String> {
    let w = LossWeights::default();
    ensure!(
        (w.lambda_params, w.lambda_2d, w.lambda_3d, w.lambda_box) == (1.0, 5.0, 5.0, 1.0),
        "loss weights {w:?}"
    );
    let template = make_toy_template(&TemplateConfig::default())?;
    let poses = default_pose_pool(&template, 16, SEED);
    let shapes = default_shape_pool(&template, 2, SEED);
    let scenes = generate_corpus(&template, &poses, &shapes, &SceneConfig::default(), SEED, 4)?;
    let detail = selfcheck::loss_contract(&scenes, 100, 1e-3, &w, SEED)?;
    Ok(format!("weights (1,5,5,1), {detail}"))
}

fn criterion_6() -> Result<String> {
    let template = make_toy_template(&TemplateConfig::default())?;
    selfcheck::layout_audit(&template, &SceneConfig::default(), SEED, 10_000)
}

fn criterion_7() -> Result<String> {
    let r = selfcheck::dropout_rates(&DropoutConfig::default(), 10_000, 26, SEED);
    ensure!(
        (0.48..=0.52).contains(&r.mask_drop),
        "mask drop {}",
        r.mask_drop
    );
    ensure!(
        (0.18..=0.22).contains(&r.kp_prompt_drop),
        "keypoint prompt drop {}",
        r.kp_prompt_drop
    );
    ensure!(
        (0.63..=0.67).contains(&r.kp_retention),
        "retention {}",
        r.kp_retention
    );
    Ok(format!(
        "mask {:.4}, keypoint prompt {:.4}, retention {:.4}",
        r.mask_drop, r.kp_prompt_drop, r.kp_retention
    ))
}

fn criterion_8() -> Result<String> {
    let template = make_toy_template(&TemplateConfig::default())?;
    let full = DecoderConfig::full();
    ensure!(
        full.n_tokens() == 12_150 && full.width == 1024,
        "full-scale config {full:?}"
    );
    ensure!(
        (full.grid_h, full.grid_w, full.channels) == (32, 32, 1280),
        "full-scale grid"
    );
    selfcheck::decoder_mechanics(&template, &DecoderConfig::desk(), SEED)
}

/// All-point interpolated AP written as a sum over true positives of the
/// best precision reachable at that recall or later.
fn enumerated_ap(scenes: &[ApScene], config: &EvalConfig, threshold: f64) -> f64 {
    let n_gt: usize = scenes
        .iter()
        .map(|s| {
            s.ground_truths
                .iter()
                .filter(|g| g.visibility.contains(&true))
                .count()
        })
        .sum();
    let mut records = Vec::new();
    for s in scenes {
        let gts: Vec<&ApGroundTruth> = s
            .ground_truths
            .iter()
            .filter(|g| g.visibility.contains(&true))
            .collect();
        let mut order: Vec<usize> = (0..s.predictions.len()).collect();
        order.sort_by(|&a, &b| {
            s.predictions[b]
                .confidence
                .partial_cmp(&s.predictions[a].confidence)
                .unwrap()
        });
        let mut free = vec![true; gts.len()];
        for pi in order {
            let p = &s.predictions[pi];
            let scores: Vec<f64> = gts
                .iter()
                .map(|g| {
                    oks(
                        &p.keypoints2d,
                        &g.keypoints2d,
                        &g.visibility,
                        g.area,
                        &config.oks_sigmas,
                    )
                })
                .collect();
            let best = (0..gts.len())
                .filter(|&g| free[g] && scores[g] >= threshold)
                .max_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap().then(b.cmp(&a)));
            if let Some(g) = best {
                free[g] = false;
            }
            records.push((p.confidence, best.is_some()));
        }
    }
    records.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let precision: Vec<f64> = (0..records.len())
        .map(|i| records[..=i].iter().filter(|r| r.1).count() as f64 / (i + 1) as f64)
        .collect();
    (0..records.len())
        .filter(|&i| records[i].1)
        .map(|i| precision[i..].iter().cloned().fold(0.0, f64::max) / n_gt as f64)
        .sum()
}

fn enumerated_pck(
    pred: &[Vector2<f64>],
    gt: &[Vector2<f64>],
    vis: &[bool],
    radius: f64,
) -> Option<f64> {
    let n = vis.iter().filter(|v| **v).count();
    let hits = (0..gt.len())
        .filter(|&i| vis[i] && (pred[i] - gt[i]).norm() <= radius)
        .count();
    (n > 0).then(|| hits as f64 / n as f64)
}

fn hand_built_corpus<R: Rng>(rng: &mut R, k: usize) -> Vec<ApScene> {
    let offsets = [0.0, 1.0, 3.0, 6.0, 12.0, 40.0];
    (0..rng.gen_range(1..=3))
        .map(|_| {
            let n_gt = rng.gen_range(0..=4);
            let ground_truths: Vec<ApGroundTruth> = (0..n_gt)
                .map(|g| ApGroundTruth {
                    keypoints2d: (0..k)
                        .map(|i| {
                            Vector2::new(100.0 * g as f64 + 10.0 * i as f64, 50.0 + 7.0 * i as f64)
                        })
                        .collect(),
                    visibility: (0..k).map(|i| g != 3 || i % 2 == 0).collect(),
                    area: [900.0, 1600.0, 2500.0][g % 3],
                })
                .collect();
            let predictions = (0..rng.gen_range(0..=4))
                .map(|p| {
                    let base = p % n_gt.max(1);
                    let d = offsets[rng.gen_range(0..offsets.len())];
                    ApPrediction {
                        keypoints2d: (0..k)
                            .map(|i| {
                                Vector2::new(
                                    100.0 * base as f64 + 10.0 * i as f64 + d,
                                    50.0 + 7.0 * i as f64 - d / 2.0,
                                )
                            })
                            .collect(),
                        confidence: [0.9, 0.7, 0.5, 0.3, 0.1][rng.gen_range(0..5)]
                            + 0.01 * p as f64,
                    }
                })
                .collect();
            ApScene {
                predictions,
                ground_truths,
            }
        })
        .collect()
}

fn criterion_9() -> Result<String> {
    let k = 4;
    let config = EvalConfig::with_keypoints(k);
    let mut rng = seeds::rng(SEED);
    let mut corpora = 0;
    let mut scored = 0;
    for _ in 0..500 {
        let scenes = hand_built_corpus(&mut rng, k);
        let got = average_precision(&scenes, &config);
        let has_gt = scenes
            .iter()
            .any(|s| s.ground_truths.iter().any(|g| g.visibility.contains(&true)));
        match got {
            None if !has_gt => continue,
            None => bail!("no AP report for a corpus with ground truths"),
            Some(report) => {
                for &(t, ap) in &report.per_threshold {
                    let e = enumerated_ap(&scenes, &config, t);
                    ensure!((ap - e).abs() <= 1e-12, "AP@{t} {ap} vs enumeration {e}");
                }
                let m = config
                    .ap_thresholds
                    .iter()
                    .map(|&t| enumerated_ap(&scenes, &config, t))
                    .sum::<f64>()
                    / config.ap_thresholds.len() as f64;
                ensure!((report.map - m).abs() <= 1e-12, "mAP {} vs {m}", report.map);
                corpora += 1;
            }
        }
        for s in &scenes {
            for (p, g) in s.predictions.iter().zip(&s.ground_truths) {
                let side = 80.0 + 20.0 * rng.gen::<f64>();
                let image = ImageSize {
                    width: 400,
                    height: 300,
                };
                let bbox = BBox::new(0.1, 0.1, side / 400.0, 0.5 * side / 300.0);
                let radius = config.pck_threshold * side;
                let got = pck(
                    &p.keypoints2d,
                    &g.keypoints2d,
                    &g.visibility,
                    &bbox,
                    image,
                    &config,
                );
                let e = enumerated_pck(&p.keypoints2d, &g.keypoints2d, &g.visibility, radius);
                match (got, e) {
                    (Some(a), Some(b)) => ensure!((a - b).abs() <= 1e-12, "PCK {a} vs {b}"),
                    (None, None) => {}
                    _ => bail!("PCK availability differs"),
                }
                scored += 1;
            }
        }
    }

    let mut worst_pa = 0.0f64;
    for _ in 0..200 {
        let gt: Vec<Vector3<f64>> = (0..k + 2)
            .map(|_| {
                Vector3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                )
            })
            .collect();
        let axis = Vector3::new(
            rng.gen_range(-3.0..3.0),
            rng.gen_range(-3.0..3.0),
            rng.gen_range(-3.0..3.0),
        );
        let r: Matrix3<f64> = rodrigues(&axis);
        let s = rng.gen_range(0.5..2.0);
        let t = Vector3::new(rng.gen(), rng.gen(), rng.gen());
        let pred: Vec<Vector3<f64>> = gt.iter().map(|p| s * (r * p) + t).collect();
        worst_pa = worst_pa.max(pa_mpjpe(&pred, &gt)?);
    }
    ensure!(worst_pa <= 1e-12, "PA-MPJPE of a similar copy {worst_pa}");

    let run = RunConfig {
        num_scenes: 6,
        seed: SEED,
        ..RunConfig::default()
    };
    let scenes = zoo3d_cli::synth::synthesize(&run)?;
    let perfect: Vec<_> = scenes
        .iter()
        .map(|s| {
            let mut p = s.clone();
            for i in &mut p.instances {
                i.confidence = Some(1.0);
            }
            p
        })
        .collect();
    let report = evaluate(&run, &scenes, &perfect)?;
    let pa = report.overall.pa_mpjpe.unwrap_or(f64::NAN);
    ensure!(pa <= 1e-9, "perfect PA-MPJPE {pa}");
    ensure!(
        report.overall.pck == Some(1.0),
        "perfect PCK {:?}",
        report.overall.pck
    );
    let ap = report.ap.as_ref().ok_or_else(|| anyhow::anyhow!("no AP"))?;
    ensure!(
        ap.per_threshold.iter().all(|(_, v)| *v == 1.0),
        "perfect AP {:?}",
        ap.per_threshold
    );
    ensure!(ap.map == 1.0, "perfect mAP {}", ap.map);
    selfcheck::metrics_oracles(&run, &scenes)?;
    Ok(format!(
        "{corpora} hand-built corpora and {scored} PCK cases agree; perfect predictions give PA 0, PCK 1, mAP 1"
    ))
}

fn zoo3d(args: &[&str]) -> Result<String> {
    let out = Command::new(env!("CARGO_BIN_EXE_zoo3d"))
        .args(args)
        .output()?;
    ensure!(
        out.status.success(),
        "{} exited {:?}: {}",
        args[0],
        out.status.code(),
        String::from_utf8_lossy(&out.stderr).trim()
    );
    Ok(String::from_utf8(out.stdout)?)
}

fn json(path: &Path) -> Result<serde_json::Value> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

fn criterion_10() -> Result<String> {
    let dir = tempfile::tempdir()?;
    let s = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let (ann, pred, matched, evald) = (s("ann"), s("pred"), s("match.json"), s("eval.json"));
    let start = Instant::now();
    zoo3d(&["synth", "--num-scenes", "100", "--out", &ann])?;
    zoo3d(&[
        "decode",
        "--annotations",
        &ann,
        "--prompts",
        "gt-keypoints",
        "--out",
        &pred,
    ])?;
    let text = zoo3d(&[
        "match",
        "--annotations",
        &ann,
        "--predictions",
        &pred,
        "--verify",
        "--out",
        &matched,
    ])?;
    zoo3d(&[
        "eval",
        "--annotations",
        &ann,
        "--predictions",
        &pred,
        "--out",
        &evald,
    ])?;
    let took = start.elapsed();
    ensure!(took < Duration::from_secs(60), "pipeline took {took:?}");

    let scenes = read_corpus(Path::new(&ann))?;
    ensure!(
        scenes.len() == 100 && scenes.iter().all(|s| !s.is_prediction()),
        "annotations"
    );
    ensure!(
        json(&dir.path().join("ann/summary.json"))?["scenes"] == 100,
        "synth summary"
    );
    let preds = read_corpus(Path::new(&pred))?;
    ensure!(
        preds.len() == 100 && preds.iter().all(|s| s.is_prediction()),
        "predictions"
    );
    ensure!(
        json(&dir.path().join("pred/decode.json"))?["scenes"] == 100,
        "decode summary"
    );

    ensure!(text.starts_with("match weights"), "match header");
    let m = json(Path::new(&matched))?;
    ensure!(
        m["weights"] == "(1,1,1,10)",
        "match weights {}",
        m["weights"]
    );
    ensure!(
        m["scenes"].as_array().map(Vec::len) == Some(100),
        "match scenes"
    );
    ensure!(
        m["disagreements"] == 0 && m["verified"].as_u64() > Some(0),
        "verification"
    );

    let e = json(Path::new(&evald))?;
    for key in ["pa_mpjpe", "pck"] {
        ensure!(e[key].as_f64().is_some_and(f64::is_finite), "eval {key}");
    }
    ensure!(
        e["ap"]["map"]
            .as_f64()
            .is_some_and(|v| (0.0..=1.0).contains(&v)),
        "eval mAP"
    );
    ensure!(
        e["buckets"].as_array().map(Vec::len) == Some(3),
        "eval buckets"
    );
    ensure!(e["config"]["seed"] == 0, "eval config echo");
    Ok(format!(
        "100 scenes in {:.2}s, {} verified",
        took.as_secs_f64(),
        m["verified"]
    ))
}

type Criterion = (&'static str, fn() -> Result<String>);

fn main() {
    let criteria: [Criterion; 10] = [
        ("matcher equals brute force", criterion_1),
        ("matcher defaults", criterion_2),
        ("body-model identities", criterion_3),
        ("procrustes recovery", criterion_4),
        ("loss contract", criterion_5),
        ("layout audit", criterion_6),
        ("prompt dropout rates", criterion_7),
        ("decoder mechanics", criterion_8),
        ("metric oracles", criterion_9),
        ("end-to-end pipeline", criterion_10),
    ];
    let mut failed = 0;
    for (n, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        match check() {
            Ok(detail) => println!(
                "PASS criterion {}: {name}: {detail} ({:.2}s)",
                n + 1,
                start.elapsed().as_secs_f64()
            ),
            Err(e) => {
                failed += 1;
                println!("FAIL criterion {}: {name}: {e:#}", n + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
