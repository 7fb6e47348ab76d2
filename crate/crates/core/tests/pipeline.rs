//! Synthetic sequence through triplets, training, tracking and scoring.

use seatrack_core::embednet::{train, Architecture, Model, NetConfig, TrainConfig};
use seatrack_core::evaluation::{evaluate, Matching};
use seatrack_core::io::{read_annotations, SequenceOnDisk};
use seatrack_core::synth::{generate, preset, Preset};
use seatrack_core::tracker::{run_sequence, TrackerConfig};
use seatrack_core::triplet::{
    build_triplet_dataset, decode_dataset, encode_dataset, AugmentConfig, JitterConfig, TripletSource,
};

fn small_net() -> NetConfig {
    NetConfig {
        architecture: Architecture::Conv,
        patch_resolution: 12,
        conv1_channels: 4,
        conv2_channels: 4,
        hidden_units: 16,
        embedding_dim: 8,
        margin: 1.0,
    }
}

#[test]
fn drift_sequence_end_to_end() {
    let mut scene = preset(Preset::Drift, 5);
    scene.frame_count = 20;
    let seq = generate("drift", &scene).unwrap();
    let net = small_net();
    let src = TripletSource {
        frames: &seq.images[..],
        annotations: &seq.ground_truth,
        water: &seq.water,
    };
    let ds = build_triplet_dataset(&src, &JitterConfig::default(), &AugmentConfig::default(), 12).unwrap();
    assert!(!ds.is_empty());
    let back = decode_dataset(&encode_dataset(&ds)).unwrap();
    assert_eq!(back.triplets, ds.triplets);

    let cfg = TrainConfig {
        epochs: 2,
        ..Default::default()
    };
    let (w1, log) = train(&net, &cfg, &ds.triplets).unwrap();
    let (w2, _) = train(&net, &cfg, &ds.triplets).unwrap();
    assert_eq!(w1, w2);
    let means = log.epoch_means();
    assert!(means.last() <= means.first());

    let model = Model::new(net, w1).unwrap();
    let tracker = TrackerConfig {
        n_init: 2,
        ..Default::default()
    };
    let run = run_sequence(
        &tracker,
        &model,
        &seq.images[..],
        &seq.detections_by_frame(),
        scene.image_diagonal(),
        "drift",
    )
    .unwrap();
    assert_eq!(run.timings.len(), 20);
    let report = evaluate(&seq.annotations(), &run.output, Matching::default()).unwrap();
    assert!(report.mota > 0.9, "{report:?}");
}

#[test]
fn written_sequence_reloads_identically() {
    let mut scene = preset(Preset::Clutter, 2);
    scene.frame_count = 5;
    let seq = generate("clutter", &scene).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = seq.write_to_dir(dir.path()).unwrap();
    let disk = SequenceOnDisk::load(&manifest).unwrap();
    assert_eq!(disk.manifest.frame_count, 5);
    let images = disk.load_images().unwrap();
    for (a, b) in images.iter().zip(&seq.images) {
        assert_eq!(a.data(), b.data());
    }
    let gt = read_annotations(disk.annotations_path().unwrap()).unwrap();
    assert_eq!(gt, seq.annotations());
}
