use rand::seq::SliceRandom;
use zoo3d::body_model::TemplateModel;
use zoo3d::decoder::{decode, stub_encode, DecoderConfig, DecoderWeights, PromptSet};
use zoo3d::losses::{total_loss, LossWeights};
use zoo3d::matcher::{match_and_reorder, InstancePrediction, MatchWeights};
use zoo3d::metrics::{
    average_precision, pa_mpjpe, pck, ApGroundTruth, ApPrediction, ApScene, EvalConfig,
};
use zoo3d::scene::{
    default_pose_pool, default_shape_pool, generate_corpus, rasterize_scene, read_corpus,
    write_corpus, SceneAnnotation, SceneConfig,
};
use zoo3d::seeds;
use zoo3d::template::{make_toy_template, TemplateConfig};

fn corpus(template: &TemplateModel, seed: u64, n: u64) -> Vec<SceneAnnotation> {
    let poses = default_pose_pool(template, 16, seed);
    let shapes = default_shape_pool(template, 2, seed);
    generate_corpus(template, &poses, &shapes, &SceneConfig::default(), seed, n).unwrap()
}

#[test]
fn saved_template_generates_identical_scenes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("template.txt");
    let template = make_toy_template(&TemplateConfig::default()).unwrap();
    template.save(&path).unwrap();
    let loaded = TemplateModel::load(&path).unwrap();
    let a = corpus(&template, 4, 5);
    let b = corpus(&loaded, 4, 5);
    assert_eq!(
        a.iter().map(SceneAnnotation::to_json).collect::<Vec<_>>(),
        b.iter().map(SceneAnnotation::to_json).collect::<Vec<_>>()
    );
}

#[test]
fn corpus_survives_disk_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let template = make_toy_template(&TemplateConfig::default()).unwrap();
    let scenes = corpus(&template, 9, 6);
    write_corpus(dir.path(), &scenes).unwrap();
    std::fs::write(dir.path().join("notes.json"), "{}").unwrap();
    let back = read_corpus(dir.path()).unwrap();
    assert_eq!(back, scenes);
    for s in &back {
        s.validate_for(&template).unwrap();
    }
}

#[test]
fn shuffled_ground_truth_is_matched_back_with_zero_loss() {
    let template = make_toy_template(&TemplateConfig::default()).unwrap();
    let mut rng = seeds::rng(31);
    for s in corpus(&template, 12, 10) {
        let gts = s.ground_truths();
        let mut preds: Vec<InstancePrediction> = s
            .instances
            .iter()
            .map(|i| InstancePrediction {
                confidence: 1.0,
                ..i.prediction(s.image())
            })
            .collect();
        let mut order: Vec<usize> = (0..preds.len()).collect();
        order.shuffle(&mut rng);
        preds = order.iter().map(|&i| preds[i].clone()).collect();

        let out = match_and_reorder(&preds, &gts, &MatchWeights::default()).unwrap();
        for (g, &p) in out.result.assignment.iter().enumerate() {
            assert_eq!(order[p], g);
        }
        assert!(out.unmatched.is_empty());
        let loss =
            total_loss(&out.reordered, &gts, &[], &[], &[], &LossWeights::default()).unwrap();
        assert_eq!(loss.total, 0.0);
    }
}

#[test]
fn ground_truth_scores_perfectly() {
    let template = make_toy_template(&TemplateConfig::default()).unwrap();
    let scenes = corpus(&template, 2, 5);
    let config = EvalConfig::with_keypoints(template.n_keypoints());
    let mut ap_scenes = Vec::new();
    for s in &scenes {
        let image = s.image();
        for i in &s.instances {
            assert!(pa_mpjpe(&i.keypoints3d(), &i.keypoints3d()).unwrap() < 1e-9);
            if let Some(v) = pck(
                &i.keypoints_px(),
                &i.keypoints_px(),
                &i.visibility(),
                &i.bbox(),
                image,
                &config,
            ) {
                assert_eq!(v, 1.0);
            }
        }
        ap_scenes.push(ApScene {
            predictions: s
                .instances
                .iter()
                .filter(|i| i.visible_count() > 0)
                .map(|i| ApPrediction {
                    keypoints2d: i.keypoints_px(),
                    confidence: 1.0,
                })
                .collect(),
            ground_truths: s
                .instances
                .iter()
                .map(|i| ApGroundTruth {
                    keypoints2d: i.keypoints_px(),
                    visibility: i.visibility(),
                    area: i.bbox[2] * image.width as f64 * i.bbox[3] * image.height as f64,
                })
                .collect(),
        });
    }
    assert_eq!(average_precision(&ap_scenes, &config).unwrap().map, 1.0);
}

#[test]
fn decoding_a_rendered_scene_is_reproducible_from_saved_weights() {
    let dir = tempfile::tempdir().unwrap();
    let template = make_toy_template(&TemplateConfig::default()).unwrap();
    let config = DecoderConfig::desk().for_template(&template);
    let weights = DecoderWeights::random(&config, 77).unwrap();
    let path = dir.path().join("weights.txt");
    weights.save(&path).unwrap();
    let loaded = DecoderWeights::load(&path).unwrap();

    let scene = &corpus(&template, 5, 1)[0];
    let image = rasterize_scene(scene, config.grid_h * 16, config.grid_w * 16);
    let features = stub_encode(&image, &config).unwrap();
    let camera = scene.camera().unwrap();
    let a = decode(&features, &PromptSet::empty(), &template, &camera, &weights).unwrap();
    let b = decode(&features, &PromptSet::empty(), &template, &camera, &loaded).unwrap();
    assert_eq!(a.instances, b.instances);
    assert_eq!(a.instances.len(), config.slots);
    for d in &a.instances {
        assert!((0.0..=1.0).contains(&d.confidence));
        assert_eq!(d.keypoints3d.len(), template.n_keypoints());
    }
}
