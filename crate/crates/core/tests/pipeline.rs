use std::f64::consts::TAU;

use msaug::metrics::diversity::{cloud_diversity, DiversityParams};
use msaug::pipeline::dataset::{encode_cifar_records, parse_cifar100};
use msaug::pipeline::{
    archive_digest, run_augment, stream_batches, subsample_balanced, Batch, EngineConfig, OutputFormat,
};
use msaug::rng::RngStream;
use msaug::{Augmenter, CombinatorConfig, ImageBuffer, Result, Sample, SoftLabel, TransformPolicy};

fn cifar_bytes(n: usize, seed: u64) -> Vec<u8> {
    let mut rng = RngStream::derive(seed, &[]);
    let mut out = Vec::with_capacity(n * 3074);
    for i in 0..n {
        out.push((i % 20) as u8);
        out.push((i % 100) as u8);
        out.extend((0..3072).map(|_| rng.below(256) as u8));
    }
    out
}

#[test]
fn packed_archive_is_readable_by_the_cifar_reader() {
    let dir = tempfile::tempdir().unwrap();
    let data = parse_cifar100(&cifar_bytes(300, 1), "train").unwrap();
    let mut cfg = EngineConfig {
        batch_size: 16,
        iterations: 4,
        workers: 2,
        ..EngineConfig::default()
    };
    cfg.output.dir = dir.path().to_path_buf();
    cfg.output.format = OutputFormat::Packed;
    let batches: Vec<Batch> = stream_batches(&cfg, &data).unwrap().collect::<Result<_>>().unwrap();
    let summary = run_augment(&cfg, &data).unwrap();
    assert_eq!(summary.samples, 64);
    assert_eq!(archive_digest(dir.path()).unwrap(), summary.digest);

    let bytes = std::fs::read(dir.path().join("data.bin")).unwrap();
    let back = parse_cifar100(&bytes, "augmented").unwrap();
    let records: Vec<&Sample> = batches.iter().flat_map(|b| b.records.iter().map(|r| &r.sample)).collect();
    assert_eq!(back.len(), records.len());
    for (b, r) in back.samples.iter().zip(&records) {
        assert_eq!(b.image.to_u8(), r.image.to_u8());
        assert_eq!(b.label.argmax(), r.label.argmax());
    }
    // re-encoding what was read reproduces the file byte for byte
    assert_eq!(encode_cifar_records(&back.samples).unwrap(), bytes);
}

#[test]
fn reading_unaugmented_data_round_trips_bitwise() {
    let bytes = cifar_bytes(50, 2);
    let data = parse_cifar100(&bytes, "train").unwrap();
    let mut recoded = encode_cifar_records(&data.samples).unwrap();
    // the packed writer zeroes the coarse label byte
    for (i, rec) in recoded.chunks_mut(3074).enumerate() {
        rec[0] = (i % 20) as u8;
    }
    assert_eq!(recoded, bytes);
}

#[test]
fn label_rows_are_distributions_and_ids_match_plans() {
    let dir = tempfile::tempdir().unwrap();
    let data = parse_cifar100(&cifar_bytes(120, 3), "train").unwrap();
    for aug in Augmenter::ALL {
        let mut cfg = EngineConfig {
            augmenter: aug,
            batch_size: 8,
            iterations: 2,
            ..EngineConfig::default()
        };
        cfg.output.dir = dir.path().join(aug.name());
        run_augment(&cfg, &data).unwrap();
        let labels = std::fs::read_to_string(cfg.output.dir.join("labels.jsonl")).unwrap();
        let plans = std::fs::read_to_string(cfg.output.dir.join("plans.jsonl")).unwrap();
        assert_eq!(labels.lines().count(), 16);
        for (l, p) in labels.lines().zip(plans.lines()) {
            let l: serde_json::Value = serde_json::from_str(l).unwrap();
            let p: serde_json::Value = serde_json::from_str(p).unwrap();
            assert_eq!(l["id"], p["id"]);
            let probs: Vec<f64> = serde_json::from_value(l["probs"].clone()).unwrap();
            SoftLabel::new(probs).unwrap();
        }
    }
}

#[test]
fn balanced_subsample_of_a_hundred_classes() {
    let data = parse_cifar100(&cifar_bytes(1000, 4), "train").unwrap();
    let s = subsample_balanced(&data, 4, 21).unwrap();
    assert_eq!(s.len(), 400);
    assert!(s.manifest.class_counts().iter().all(|&c| c == 4));
    let json = serde_json::to_string(&s.manifest).unwrap();
    let back: msaug::pipeline::DatasetManifest = serde_json::from_str(&json).unwrap();
    assert_eq!(back, s.manifest);
}

/// Smooth random image: a few low-frequency sinusoids per channel.
fn smooth_sample(rng: &mut RngStream, side: usize, id: u64) -> Sample {
    let waves: Vec<[f64; 4]> = (0..9)
        .map(|_| {
            [
                rng.uniform(-3.0, 3.0).unwrap(),
                rng.uniform(-3.0, 3.0).unwrap(),
                rng.uniform(0.0, TAU).unwrap(),
                rng.uniform(0.05, 0.2).unwrap(),
            ]
        })
        .collect();
    let mut data = Vec::with_capacity(side * side * 3);
    for y in 0..side {
        for x in 0..side {
            for c in 0..3 {
                let v: f64 = waves[c * 3..c * 3 + 3]
                    .iter()
                    .map(|w| w[3] * (w[0] * x as f64 / side as f64 * TAU + w[1] * y as f64 / side as f64 * TAU + w[2]).sin())
                    .sum();
                data.push((0.5 + v).clamp(0.0, 1.0) as f32);
            }
        }
    }
    Sample::new(ImageBuffer::new(side, side, 3, data).unwrap(), SoftLabel::one_hot(0, 2).unwrap(), id)
}

#[test]
fn cloud_diversity_is_stable_when_k_doubles() {
    let mut rng = RngStream::derive(40, &[]);
    let pool: Vec<Sample> = (0..50).map(|i| smooth_sample(&mut rng, 12, i)).collect();
    let cfg = CombinatorConfig::default();
    let policy = TransformPolicy::default();
    for aug in [Augmenter::PresetRandaugment, Augmenter::Randms, Augmenter::Mixup] {
        let at = |k: usize| {
            let params = DiversityParams {
                k,
                seed: 3,
                ..DiversityParams::default()
            };
            let vals: Vec<f64> = pool[..4]
                .iter()
                .map(|a| cloud_diversity(a, &pool, aug, &params, &cfg, &policy).unwrap())
                .collect();
            vals.iter().sum::<f64>() / vals.len() as f64
        };
        let (small, large) = (at(1000), at(2000));
        assert!((small - large).abs() <= 0.05 * large, "{aug}: k=1000 {small}, k=2000 {large}");
    }
}
