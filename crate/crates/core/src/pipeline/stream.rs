//! Parallel production of augmented batches.
//!
//! Sample `j` of iteration `t` draws everything from the stream at path `[t, j]`:
//! the partner from its `PARTNER` child and the augmentation from its `AUGMENT`
//! child. Anchors come from a per-epoch permutation keyed by the epoch number.
//! Output is therefore independent of the worker count.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mix::MixPlan;
use crate::pipeline::config::{AnchorOrder, EngineConfig};
use crate::pipeline::dataset::Dataset;
use crate::randms::{augment, Augmenter};
use crate::raster::Sample;
use crate::rng::{tags, RngStream};

#[derive(Debug, Clone)]
pub struct AugmentedRecord {
    pub iter: u64,
    pub index: usize,
    pub augmenter: Augmenter,
    /// Manifest ids of the anchor and the partner.
    pub anchor: u64,
    pub partner: u64,
    pub sample: Sample,
    pub plan: MixPlan,
}

impl AugmentedRecord {
    pub fn id(&self) -> String {
        format!("{}_{}", self.iter, self.index)
    }

    pub fn plan_row(&self) -> PlanRow {
        PlanRow {
            id: self.id(),
            iter: self.iter,
            index: self.index,
            augmenter: self.augmenter,
            anchor: self.anchor,
            partner: self.partner,
            plan: self.plan.clone(),
        }
    }
}

/// One line of `plans.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRow {
    pub id: String,
    pub iter: u64,
    pub index: usize,
    pub augmenter: Augmenter,
    pub anchor: u64,
    pub partner: u64,
    pub plan: MixPlan,
}

#[derive(Debug, Clone)]
pub struct Batch {
    pub iter: u64,
    pub records: Vec<AugmentedRecord>,
}

/// Iterator over the batches of a run. Batches are produced lazily, one iteration at a time.
pub struct BatchStream<'a> {
    cfg: &'a EngineConfig,
    data: &'a Dataset,
    pool: rayon::ThreadPool,
    next_iter: u64,
    epochs: HashMap<u64, Vec<usize>>,
}

impl<'a> BatchStream<'a> {
    /// Maps global sample position `g = t·B + j` to a manifest index.
    fn anchor_index(&mut self, g: u64) -> usize {
        let n = self.data.len() as u64;
        match self.cfg.anchor_order {
            AnchorOrder::Sequential => (g % n) as usize,
            AnchorOrder::Shuffled => {
                let epoch = g / n;
                let seed = self.cfg.seed;
                let len = self.data.len();
                let perm = self.epochs.entry(epoch).or_insert_with(|| {
                    let mut perm: Vec<usize> = (0..len).collect();
                    RngStream::derive(seed, &[tags::EPOCH, epoch]).shuffle(&mut perm);
                    perm
                });
                perm[(g % n) as usize]
            }
        }
    }

    fn produce(&mut self, t: u64) -> Result<Batch> {
        let b = self.cfg.batch_size;
        let anchors: Vec<usize> = (0..b).map(|j| self.anchor_index(t * b as u64 + j as u64)).collect();
        // only the epochs that the next batch can touch are worth keeping
        let first_epoch = (t * b as u64) / self.data.len() as u64;
        self.epochs.retain(|&e, _| e >= first_epoch);

        let aug = self.cfg.augmenter_at(t);
        let cfg = self.cfg;
        let samples = &self.data.samples;
        let records = self.pool.install(|| {
            anchors
                .par_iter()
                .enumerate()
                .map(|(j, &a)| {
                    let stream = RngStream::derive(cfg.seed, &[t, j as u64]);
                    let p = stream.child(tags::PARTNER).below(samples.len());
                    let (sample, plan) = augment(
                        aug,
                        &samples[a],
                        &samples[p],
                        &mut stream.child(tags::AUGMENT),
                        &cfg.combinator,
                        &cfg.policy,
                    )?;
                    Ok(AugmentedRecord {
                        iter: t,
                        index: j,
                        augmenter: aug,
                        anchor: samples[a].source_id,
                        partner: samples[p].source_id,
                        sample,
                        plan,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })?;
        Ok(Batch { iter: t, records })
    }
}

impl Iterator for BatchStream<'_> {
    type Item = Result<Batch>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next_iter >= self.cfg.iterations {
            return None;
        }
        let t = self.next_iter;
        self.next_iter += 1;
        Some(self.produce(t))
    }
}

/// Streams `cfg.iterations` batches of `cfg.batch_size` augmented samples drawn from `data`.
pub fn stream_batches<'a>(cfg: &'a EngineConfig, data: &'a Dataset) -> Result<BatchStream<'a>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::data("dataset is empty"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(BatchStream {
        cfg,
        data,
        pool,
        next_iter: 0,
        epochs: HashMap::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::dataset::{DatasetManifest, SampleRecord};
    use crate::randms::ScheduleConfig;
    use crate::raster::{ImageBuffer, SoftLabel};

    pub(crate) fn noise_dataset(n: usize, classes: usize) -> Dataset {
        let mut rng = RngStream::derive(1234, &[]);
        let mut samples = Vec::new();
        let mut records = Vec::new();
        for i in 0..n {
            let bytes: Vec<u8> = (0..8 * 8 * 3).map(|_| rng.below(256) as u8).collect();
            let class = i % classes;
            samples.push(Sample::new(
                ImageBuffer::from_u8(8, 8, 3, &bytes).unwrap(),
                SoftLabel::one_hot(class, classes).unwrap(),
                i as u64,
            ));
            records.push(SampleRecord {
                id: i as u64,
                location: String::new(),
                class,
            });
        }
        Dataset {
            manifest: DatasetManifest {
                source_format: "test".into(),
                dims: (8, 8, 3),
                num_classes: classes,
                class_names: Vec::new(),
                split: "train".into(),
                subsample: None,
                skipped: 0,
                records,
            },
            samples,
        }
    }

    fn collect(cfg: &EngineConfig, data: &Dataset) -> Vec<Batch> {
        stream_batches(cfg, data).unwrap().collect::<Result<Vec<_>>>().unwrap()
    }

    #[test]
    fn accounting_and_schedule() {
        let data = noise_dataset(20, 4);
        let cfg = EngineConfig {
            batch_size: 8,
            iterations: 4,
            schedule: Some(ScheduleConfig {
                warmup_iters: 2,
                ..ScheduleConfig::default()
            }),
            ..EngineConfig::default()
        };
        let batches = collect(&cfg, &data);
        assert_eq!(batches.len(), 4);
        for b in &batches {
            assert_eq!(b.records.len(), 8);
            let want = if b.iter < 2 { "basic" } else { "cutmix" };
            assert!(b.records.iter().all(|r| r.plan.branch.name() == want));
        }
    }

    #[test]
    fn worker_count_does_not_change_output() {
        let data = noise_dataset(10, 3);
        let one = EngineConfig {
            batch_size: 12,
            iterations: 3,
            workers: 1,
            ..EngineConfig::default()
        };
        let four = EngineConfig { workers: 4, ..one.clone() };
        for (a, b) in collect(&one, &data).iter().zip(collect(&four, &data).iter()) {
            for (x, y) in a.records.iter().zip(&b.records) {
                assert_eq!(x.sample, y.sample);
                assert_eq!(x.plan, y.plan);
                assert_eq!((x.anchor, x.partner), (y.anchor, y.partner));
            }
        }
    }

    #[test]
    fn each_epoch_visits_every_anchor_once() {
        let data = noise_dataset(10, 2);
        let cfg = EngineConfig {
            augmenter: Augmenter::Identity,
            batch_size: 4,
            iterations: 5,
            ..EngineConfig::default()
        };
        let anchors: Vec<u64> = collect(&cfg, &data)
            .iter()
            .flat_map(|b| b.records.iter().map(|r| r.anchor))
            .collect();
        for epoch in anchors.chunks(10) {
            let mut e = epoch.to_vec();
            e.sort_unstable();
            assert_eq!(e, (0..10).collect::<Vec<u64>>());
        }
        let seq = EngineConfig {
            anchor_order: AnchorOrder::Sequential,
            ..cfg
        };
        let first: Vec<u64> = collect(&seq, &data)[0].records.iter().map(|r| r.anchor).collect();
        assert_eq!(first, vec![0, 1, 2, 3]);
    }
}
