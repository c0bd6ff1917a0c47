//! Dataset ingestion, batch streaming and archive output.
//!
//! The engine emits intensities in [0,1] and never applies mean/std
//! normalization; that belongs to whichever trainer consumes the archive.

pub mod config;
pub mod dataset;
pub mod output;
pub mod stream;

pub use config::{AnchorOrder, EngineConfig, OutputFormat, OutputSpec};
pub use dataset::{
    load_cifar100, load_image_folder, parse_cifar100, subsample_balanced, Dataset, DatasetManifest,
    SampleRecord,
};
pub use output::{archive_digest, write_outputs, ArchiveSummary, ArchiveWriter};
pub use stream::{stream_batches, AugmentedRecord, Batch, PlanRow};

use crate::error::{Error, Result};
use crate::randms::Augmenter;
use crate::raster::ImageBuffer;

/// Runs the configured stream into the configured archive.
pub fn run_augment(cfg: &EngineConfig, data: &Dataset) -> Result<ArchiveSummary> {
    write_outputs(stream_batches(cfg, data)?, &cfg.output, cfg)
}

/// One augmented copy of every sample, in manifest order, for scoring by an external model.
/// Uses `base` for seed, combinator, policy, workers and output; the copy of sample `i`
/// is archived under id `0_i`.
pub fn export_validation(base: &EngineConfig, aug: Augmenter, data: &Dataset) -> Result<ArchiveSummary> {
    if data.is_empty() {
        return Err(Error::data("validation set is empty"));
    }
    let cfg = EngineConfig {
        augmenter: aug,
        schedule: None,
        batch_size: data.len(),
        iterations: 1,
        anchor_order: AnchorOrder::Sequential,
        ..base.clone()
    };
    run_augment(&cfg, data)
}

/// Tiles equally sized images into a grid with `gutter` white pixels between cells.
pub fn preview_grid(images: &[ImageBuffer], cols: usize, gutter: usize) -> Result<ImageBuffer> {
    let first = images.first().ok_or_else(|| Error::arg("preview needs at least one image"))?;
    if cols == 0 {
        return Err(Error::arg("preview needs at least one column"));
    }
    let (h, w, c) = first.dims();
    if let Some(bad) = images.iter().find(|i| i.dims() != (h, w, c)) {
        return Err(Error::arg(format!("image of dims {:?} in a {:?} grid", bad.dims(), (h, w, c))));
    }
    let cols = cols.min(images.len());
    let rows = images.len().div_ceil(cols);
    let gh = rows * h + (rows - 1) * gutter;
    let gw = cols * w + (cols - 1) * gutter;
    let mut data = vec![1.0f32; gh * gw * c];
    for (n, img) in images.iter().enumerate() {
        let (oy, ox) = ((n / cols) * (h + gutter), (n % cols) * (w + gutter));
        for y in 0..h {
            let src = &img.data()[y * w * c..(y + 1) * w * c];
            let start = ((oy + y) * gw + ox) * c;
            data[start..start + w * c].copy_from_slice(src);
        }
    }
    ImageBuffer::new(gh, gw, c, data)
}
