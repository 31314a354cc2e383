use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::Rng;
use zoo3d::decoder::{DecoderConfig, DecoderWeights};
use zoo3d::metrics::{average_precision, pa_mpjpe, pck, ApGroundTruth, ApPrediction, ApScene};
use zoo3d::scene::{read_corpus, SceneAnnotation};
use zoo3d::seeds;
use zoo3d_cli::config::RunConfig;
use zoo3d_cli::eval::evaluate;

fn zoo3d(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zoo3d"))
        .args(args)
        .env_remove("ZOO3D_SELFCHECK_MATCH_WEIGHTS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = zoo3d(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn dir_bytes(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| (p.file_name().unwrap().into(), fs::read(&p).unwrap()))
        .collect()
}

fn synth(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let out = dir.join(name);
    let mut args = vec!["synth", "--out", s(&out)];
    args.extend_from_slice(extra);
    ok(&args);
    out
}

#[test]
fn synth_is_deterministic_and_bounded() {
    let t = tempfile::tempdir().unwrap();
    let a = synth(t.path(), "a", &["--num-scenes", "10", "--seed", "7"]);
    let b = synth(t.path(), "b", &["--num-scenes", "10", "--seed", "7"]);
    assert_eq!(dir_bytes(&a), dir_bytes(&b));
    assert_eq!(dir_bytes(&a).len(), 11);

    let scenes = read_corpus(&a).unwrap();
    assert!(scenes.iter().all(|s| (2..=8).contains(&s.instances.len())));
    let summary: serde_json::Value =
        serde_json::from_slice(&fs::read(a.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["config"]["seed"], 7);
    assert_eq!(summary["scenes"], 10);

    let single = synth(
        t.path(),
        "one",
        &["--num-scenes", "10", "--max-animals", "1"],
    );
    assert!(read_corpus(&single)
        .unwrap()
        .iter()
        .all(|s| s.instances.len() == 1));
}

fn with_confidence(scenes: &[SceneAnnotation]) -> Vec<SceneAnnotation> {
    scenes
        .iter()
        .map(|s| {
            let mut p = s.clone();
            for i in &mut p.instances {
                i.confidence = Some(1.0);
            }
            p
        })
        .collect()
}

fn write_scenes(dir: &Path, scenes: &[SceneAnnotation]) {
    zoo3d::scene::write_corpus(dir, scenes).unwrap();
}

#[test]
fn eval_perfect_and_empty() {
    let t = tempfile::tempdir().unwrap();
    let ann = synth(t.path(), "ann", &["--num-scenes", "6"]);
    let scenes = read_corpus(&ann).unwrap();
    let perfect = t.path().join("perfect");
    write_scenes(&perfect, &with_confidence(&scenes));
    let report = t.path().join("eval.json");
    ok(&[
        "eval",
        "--annotations",
        s(&ann),
        "--predictions",
        s(&perfect),
        "--out",
        s(&report),
    ]);
    let v: serde_json::Value = serde_json::from_slice(&fs::read(&report).unwrap()).unwrap();
    assert!(v["pa_mpjpe"].as_f64().unwrap() < 1e-9);
    assert_eq!(v["pck"].as_f64(), Some(1.0));
    assert_eq!(v["ap"]["map"].as_f64(), Some(1.0));
    assert_eq!(v["buckets"].as_array().unwrap().len(), 3);
    assert_eq!(v["config"]["eval"]["pck_threshold"].as_f64(), Some(0.1));

    let empty = t.path().join("empty");
    let none: Vec<SceneAnnotation> = scenes
        .iter()
        .map(|s| SceneAnnotation {
            instances: vec![],
            ..s.clone()
        })
        .collect();
    write_scenes(&empty, &none);
    ok(&[
        "eval",
        "--annotations",
        s(&ann),
        "--predictions",
        s(&empty),
        "--out",
        s(&report),
    ]);
    let v: serde_json::Value = serde_json::from_slice(&fs::read(&report).unwrap()).unwrap();
    assert_eq!(v["ap"]["map"].as_f64(), Some(0.0));
    assert!(v["ap"]["per_threshold"]
        .as_array()
        .unwrap()
        .iter()
        .all(|p| p[1].as_f64() == Some(0.0)));
}

#[test]
fn eval_matches_recomputation_under_known_noise() {
    let config = RunConfig {
        num_scenes: 12,
        seed: 3,
        ..RunConfig::default()
    };
    let scenes = zoo3d_cli::synth::synthesize(&config).unwrap();
    let mut rng = seeds::rng(99);
    let noisy: Vec<SceneAnnotation> = scenes
        .iter()
        .map(|s| {
            let mut p = s.clone();
            for i in &mut p.instances {
                i.confidence = Some(rng.gen_range(0.05..1.0));
                for k in &mut i.keypoints2d {
                    k[0] += rng.gen_range(-4.0..4.0);
                    k[1] += rng.gen_range(-4.0..4.0);
                }
                for k in &mut i.keypoints3d {
                    for c in k.iter_mut() {
                        *c += rng.gen_range(-0.02..0.02);
                    }
                }
            }
            p
        })
        .collect();
    let report = evaluate(&config, &scenes, &noisy).unwrap();

    let eval = config.eval.eval_config(26);
    let (mut pa, mut n_pa, mut pk, mut n_pk) = (0.0, 0, 0.0, 0);
    let mut ap_scenes = Vec::new();
    for (g, p) in scenes.iter().zip(&noisy) {
        let image = g.image();
        for (gi, pi) in g.instances.iter().zip(&p.instances) {
            pa += pa_mpjpe(&pi.keypoints3d(), &gi.keypoints3d()).unwrap();
            n_pa += 1;
            if let Some(v) = pck(
                &pi.keypoints_px(),
                &gi.keypoints_px(),
                &gi.visibility(),
                &gi.bbox(),
                image,
                &eval,
            ) {
                pk += v;
                n_pk += 1;
            }
        }
        let ignored = |i: usize| g.instances[i].visible_count() == 0;
        ap_scenes.push(ApScene {
            predictions: p
                .instances
                .iter()
                .enumerate()
                .filter(|(i, _)| !ignored(*i))
                .map(|(_, x)| ApPrediction {
                    keypoints2d: x.keypoints_px(),
                    confidence: x.confidence.unwrap(),
                })
                .collect(),
            ground_truths: g
                .instances
                .iter()
                .map(|x| ApGroundTruth {
                    keypoints2d: x.keypoints_px(),
                    visibility: x.visibility(),
                    area: x.bbox[2] * image.width as f64 * x.bbox[3] * image.height as f64,
                })
                .collect(),
        });
    }
    let ap = average_precision(&ap_scenes, &eval).unwrap();
    assert_eq!(report.overall.matched, n_pa);
    assert!((report.overall.pa_mpjpe.unwrap() - pa / n_pa as f64).abs() < 1e-12);
    assert!((report.overall.pck.unwrap() - pk / n_pk as f64).abs() < 1e-12);
    assert!((report.map().unwrap() - ap.map).abs() < 1e-12);
    assert!(report.map().unwrap() > 0.0 && report.map().unwrap() < 1.0);
}

#[test]
fn eval_rejects_mismatched_scenes() {
    let t = tempfile::tempdir().unwrap();
    let ann = synth(t.path(), "ann", &["--num-scenes", "3"]);
    let scenes = read_corpus(&ann).unwrap();
    let pred = t.path().join("pred");
    let mut shifted = with_confidence(&scenes);
    shifted[2].scene_index = 9;
    write_scenes(&pred, &shifted);
    let out = zoo3d(&["eval", "--annotations", s(&ann), "--predictions", s(&pred)]);
    assert_eq!(out.status.code(), Some(1));

    let missing = zoo3d(&[
        "eval",
        "--annotations",
        s(&ann),
        "--predictions",
        "/nonexistent/preds",
    ]);
    assert_eq!(missing.status.code(), Some(2));

    let bad = t.path().join("bad");
    fs::create_dir_all(&bad).unwrap();
    fs::write(bad.join("scene_000000.json"), "{\"schema_version\": 1}").unwrap();
    let out = zoo3d(&["eval", "--annotations", s(&ann), "--predictions", s(&bad)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn match_verifies_and_echoes_weights() {
    let t = tempfile::tempdir().unwrap();
    let ann = synth(t.path(), "ann", &["--num-scenes", "20"]);
    let pred = t.path().join("pred");
    ok(&["decode", "--annotations", s(&ann), "--out", s(&pred)]);
    let report = t.path().join("match.json");
    let text = ok(&[
        "match",
        "--annotations",
        s(&ann),
        "--predictions",
        s(&pred),
        "--verify",
        "--out",
        s(&report),
    ]);
    assert!(text.lines().next().unwrap().contains("= (1,1,1,10)"));
    let v: serde_json::Value = serde_json::from_slice(&fs::read(&report).unwrap()).unwrap();
    assert_eq!(v["weights"], "(1,1,1,10)");
    assert_eq!(v["disagreements"], 0);
    let verified = v["verified"].as_u64().unwrap();
    let small = read_corpus(&ann)
        .unwrap()
        .iter()
        .filter(|s| s.instances.len() <= 6)
        .count();
    assert_eq!(verified as usize, small);
    assert!(verified > 0);
}

#[test]
fn match_single_instance_and_too_few_predictions() {
    let t = tempfile::tempdir().unwrap();
    let ann = synth(
        t.path(),
        "ann",
        &["--num-scenes", "5", "--max-animals", "1"],
    );
    let pred = t.path().join("pred");
    write_scenes(&pred, &with_confidence(&read_corpus(&ann).unwrap()));
    let report = t.path().join("m.json");
    ok(&[
        "match",
        "--annotations",
        s(&ann),
        "--predictions",
        s(&pred),
        "--verify",
        "--out",
        s(&report),
    ]);
    let v: serde_json::Value = serde_json::from_slice(&fs::read(&report).unwrap()).unwrap();
    for scene in v["scenes"].as_array().unwrap() {
        let pairs = scene["pairs"].as_array().unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0]["prediction"], 0);
    }

    let many = synth(
        t.path(),
        "many",
        &["--num-scenes", "3", "--min-animals", "3"],
    );
    let few: Vec<SceneAnnotation> = with_confidence(&read_corpus(&many).unwrap())
        .into_iter()
        .map(|mut s| {
            s.instances.truncate(1);
            s
        })
        .collect();
    let fewdir = t.path().join("few");
    write_scenes(&fewdir, &few);
    let out = zoo3d(&[
        "match",
        "--annotations",
        s(&many),
        "--predictions",
        s(&fewdir),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("insufficient"));
}

#[test]
fn decode_is_deterministic_and_prompt_sensitive() {
    let t = tempfile::tempdir().unwrap();
    let ann = synth(t.path(), "ann", &["--num-scenes", "4"]);
    let run = |name: &str, extra: &[&str]| {
        let out = t.path().join(name);
        let mut args = vec![
            "decode",
            "--annotations",
            s(&ann),
            "--out",
            s(&out),
            "--seed",
            "5",
        ];
        args.extend_from_slice(extra);
        ok(&args);
        out
    };
    let a = run("a", &[]);
    let b = run("b", &[]);
    assert_eq!(dir_bytes(&a), dir_bytes(&b));
    let preds = read_corpus(&a).unwrap();
    assert!(preds
        .iter()
        .all(|s| s.instances.len() == 8 && s.is_prediction()));

    let g = run("g", &["--prompts", "gt-keypoints"]);
    let gp = read_corpus(&g).unwrap();
    assert_ne!(preds[0].instances[0], gp[0].instances[0]);

    let tm = run("tm", &["--prompts", "gt-keypoints", "--train-mode"]);
    let tm2 = run("tm2", &["--prompts", "gt-keypoints", "--train-mode"]);
    assert_eq!(dir_bytes(&tm), dir_bytes(&tm2));
    assert_ne!(read_corpus(&tm).unwrap(), gp);

    let four = run("four", &["--slots", "4"]);
    assert!(read_corpus(&four)
        .unwrap()
        .iter()
        .all(|s| s.instances.len() == 4));
}

#[test]
fn decode_prompts_from_file() {
    let t = tempfile::tempdir().unwrap();
    let ann = synth(t.path(), "ann", &["--num-scenes", "2"]);
    let scenes = read_corpus(&ann).unwrap();
    let entries: Vec<zoo3d_cli::decode::ScenePrompts> = scenes
        .iter()
        .map(|s| zoo3d_cli::decode::ScenePrompts {
            scene_index: s.scene_index,
            prompts: zoo3d_cli::decode::gt_keypoint_prompts(s, 8),
        })
        .collect();
    let file = t.path().join("prompts.json");
    fs::write(&file, serde_json::to_string(&entries).unwrap()).unwrap();
    let a = t.path().join("a");
    let b = t.path().join("b");
    ok(&[
        "decode",
        "--annotations",
        s(&ann),
        "--out",
        s(&a),
        "--prompts-file",
        s(&file),
    ]);
    ok(&[
        "decode",
        "--annotations",
        s(&ann),
        "--out",
        s(&b),
        "--prompts",
        "gt-keypoints",
    ]);
    assert_eq!(read_corpus(&a).unwrap(), read_corpus(&b).unwrap());
}

#[test]
fn decode_rejects_mismatched_weights() {
    let t = tempfile::tempdir().unwrap();
    let ann = synth(t.path(), "ann", &["--num-scenes", "2"]);
    let wrong = DecoderConfig {
        n_shape: 5,
        ..DecoderConfig::desk()
    };
    let wpath = t.path().join("w.txt");
    DecoderWeights::random(&wrong, 1)
        .unwrap()
        .save(&wpath)
        .unwrap();
    let out = zoo3d(&[
        "decode",
        "--annotations",
        s(&ann),
        "--out",
        s(&t.path().join("p")),
        "--weights",
        s(&wpath),
    ]);
    assert_eq!(out.status.code(), Some(1));

    let right = DecoderConfig::desk();
    DecoderWeights::random(&right, 1)
        .unwrap()
        .save(&wpath)
        .unwrap();
    ok(&[
        "decode",
        "--annotations",
        s(&ann),
        "--out",
        s(&t.path().join("p")),
        "--weights",
        s(&wpath),
    ]);
    assert!(read_corpus(&t.path().join("p"))
        .unwrap()
        .iter()
        .all(|s| s.instances.len() == 4));
}

#[test]
fn config_file_and_flags() {
    let t = tempfile::tempdir().unwrap();
    let cfg = t.path().join("run.json");
    fs::write(
        &cfg,
        r#"{"seed": 11, "num_scenes": 3, "scene": {"layout": {"max_animals": 3}}}"#,
    )
    .unwrap();
    let out = t.path().join("s");
    ok(&[
        "synth",
        "--config",
        s(&cfg),
        "--out",
        s(&out),
        "--num-scenes",
        "4",
    ]);
    let scenes = read_corpus(&out).unwrap();
    assert_eq!(scenes.len(), 4);
    assert!(scenes
        .iter()
        .all(|s| s.master_seed == 11 && s.instances.len() <= 3));

    fs::write(&cfg, r#"{"seed": "eleven"}"#).unwrap();
    assert_eq!(
        zoo3d(&["synth", "--config", s(&cfg), "--out", s(&out)])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        zoo3d(&[
            "synth",
            "--config",
            "/nonexistent/run.json",
            "--out",
            s(&out)
        ])
        .status
        .code(),
        Some(2)
    );
}

#[test]
fn selfcheck_passes_and_catches_mutations() {
    let text = ok(&["selfcheck"]);
    assert!(text.lines().filter(|l| l.starts_with("PASS")).count() >= 10);
    assert!(!text.contains("FAIL"));

    let out = Command::new(env!("CARGO_BIN_EXE_zoo3d"))
        .arg("selfcheck")
        .env("ZOO3D_SELFCHECK_MATCH_WEIGHTS", "0,1,0,0")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("FAIL matcher-optimality"));
    assert!(text.contains("PASS body-model"));

    let t = tempfile::tempdir().unwrap();
    let tpl = t.path().join("template.txt");
    let good = zoo3d::template::make_toy_template(&Default::default()).unwrap();
    good.save(&tpl).unwrap();
    ok(&["selfcheck", "--template", s(&tpl)]);
    let text = fs::read_to_string(&tpl).unwrap();
    fs::write(&tpl, text.replacen("skin_weights", "skin_weightz", 1)).unwrap();
    let out = zoo3d(&["selfcheck", "--template", s(&tpl)]);
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(
        text.contains("FAIL template-loader: schema error"),
        "{text}"
    );
}
