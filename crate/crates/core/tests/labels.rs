use footprints::evalkit::confusion;
use footprints::geometry::Pose;
use footprints::io::{write_flow, write_pfm, write_pgm, DatasetManifest, FrameEntry, FrameFiles};
use footprints::labelgen::{
    aggregate_traversable, build_training_target, forward_warp, median_hidden_depth, warp_sources, FlowEvidence, LabelParams,
};
use footprints::scene::{synthesize_sequence, SynthConfig};
use footprints::Error;

#[test]
fn static_scene_labels_are_sound() {
    let params = LabelParams::default();
    for seed in [3, 17, 29] {
        let seq = synthesize_sequence(&SynthConfig::default(), params.sources + 1, seed).unwrap();
        let target = build_training_target(&seq.renders[0], seq.window(1, params.sources), &params, None).unwrap();
        let (gt_s, _) = seq.ground_truth(0).unwrap();
        let everywhere = gt_s.map(|_| true);
        let scores = confusion(&target.traversable, &gt_s, &everywhere).unwrap();
        assert!(scores.precision() >= 0.98, "seed {seed}: precision {}", scores.precision());
        let wrong = target.untraversable.and(&gt_s).unwrap().count();
        assert!(wrong * 50 <= gt_s.count(), "seed {seed}: {wrong} traversable pixels flagged");
        target.validate().unwrap();
    }
}

#[test]
fn raising_k_never_grows_traversable_set() {
    let seq = synthesize_sequence(&SynthConfig::default(), 9, 5).unwrap();
    let set = warp_sources(&seq.renders[0], seq.window(1, 8)).unwrap();
    let mut previous = aggregate_traversable(&set, 0);
    for k in 1..=8 {
        let current = aggregate_traversable(&set, k);
        assert!(current.is_subset_of(&previous), "k = {k}");
        previous = current;
    }
    assert_eq!(previous.count(), 0, "k = N leaves nothing");
}

#[test]
fn median_lies_within_warped_range() {
    let seq = synthesize_sequence(&SynthConfig::default(), 9, 8).unwrap();
    let set = warp_sources(&seq.renders[0], seq.window(1, 8)).unwrap();
    let median = median_hidden_depth(&set);
    for (r, c, &m) in median.indexed() {
        let values: Vec<f64> = set.maps().iter().map(|d| *d.get(r, c)).filter(|&d| d > 0.0).collect();
        if values.is_empty() {
            assert_eq!(m, 0.0);
        } else {
            let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = values.iter().cloned().fold(0.0, f64::max);
            assert!(lo <= m && m <= hi, "({r}, {c}): {m} outside [{lo}, {hi}]");
        }
    }
}

#[test]
fn identity_warp_reproduces_masked_depth() {
    let seq = synthesize_sequence(&SynthConfig::default(), 1, 2).unwrap();
    let r = &seq.renders[0];
    let warped = forward_warp(r, &Pose::identity(), &r.camera.intrinsics);
    assert_eq!(warped, r.depth.masked(&r.seg).unwrap());
}

#[test]
fn moving_boxes_are_masked_in_labels() {
    let cfg = SynthConfig {
        moving_probability: 1.0,
        box_speed: 0.8,
        min_boxes: 3,
        max_boxes: 6,
        ..SynthConfig::default()
    };
    let params = LabelParams::default();
    let mut masked_scenes = 0;
    for seed in 0..6 {
        let seq = synthesize_sequence(&cfg, params.sources + 1, seed).unwrap();
        let evidence = FlowEvidence {
            relative_pose: Pose::relative(&seq.cameras[0].pose, &seq.cameras[1].pose),
            optical: seq.flow(0).unwrap(),
        };
        let sources = seq.window(1, params.sources);
        let with = build_training_target(&seq.renders[0], sources, &params, Some(&evidence)).unwrap();
        let without = build_training_target(&seq.renders[0], sources, &params, None).unwrap();
        assert_eq!(without.moving_mask.not().count(), 0, "no flow evidence leaves every weight at 1");
        // ground never moves, so visible ground keeps full weight
        assert_eq!(with.moving_mask.not().and(&seq.renders[0].seg).unwrap().count(), 0);
        masked_scenes += usize::from(with.moving_mask.not().count() > 0);
    }
    assert!(masked_scenes >= 3, "only {masked_scenes} of 6 scenes had moving pixels masked");
}

#[test]
fn manifest_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let frames = 3;
    let seq = synthesize_sequence(&SynthConfig::default(), frames, 4).unwrap();
    let mut entries = Vec::new();
    for (i, r) in seq.renders.iter().enumerate() {
        let id = format!("f{i}");
        let name = |s: &str| std::path::PathBuf::from(format!("{id}_{s}"));
        let (gt_s, gt_d) = seq.ground_truth(i).unwrap();
        write_pfm(&dir.path().join(name("depth.pfm")), &r.depth).unwrap();
        write_pgm(&dir.path().join(name("seg.pgm")), &r.seg).unwrap();
        write_pgm(&dir.path().join(name("s.pgm")), &gt_s).unwrap();
        write_pfm(&dir.path().join(name("d.pfm")), &gt_d).unwrap();
        let flow = (i + 1 < frames).then(|| {
            let f = seq.flow(i).unwrap();
            write_flow(&dir.path().join(name("flow.pfm")), &f.flow).unwrap();
            write_pgm(&dir.path().join(name("valid.pgm")), &f.valid).unwrap();
            (name("flow.pfm"), name("valid.pgm"))
        });
        entries.push(FrameEntry {
            id: id.clone(),
            frame_index: r.frame_index,
            intrinsics: r.camera.intrinsics,
            pose: r.camera.pose,
            files: FrameFiles {
                depth: name("depth.pfm"),
                seg: name("seg.pgm"),
                gt_s_star: name("s.pgm"),
                gt_d_star: name("d.pfm"),
                flow: flow.as_ref().map(|f| f.0.clone()),
                flow_valid: flow.map(|f| f.1),
            },
        });
    }
    let manifest = DatasetManifest {
        seed: 4,
        scene: seq.scene.clone(),
        synth: SynthConfig::default(),
        params: LabelParams::default(),
        frames: entries,
    };
    let path = dir.path().join(DatasetManifest::FILE_NAME);
    manifest.save(&path).unwrap();
    assert_eq!(DatasetManifest::load(&path).unwrap(), manifest);

    let mut duplicate = manifest.clone();
    duplicate.frames[1].id = "f0".into();
    assert!(duplicate.validate(dir.path()).is_err());
    manifest.validate(dir.path()).unwrap();

    std::fs::remove_file(dir.path().join("f1_seg.pgm")).unwrap();
    assert!(matches!(DatasetManifest::load(&path), Err(Error::Invalid { .. })));
}
