//! Deterministic image augmentation engine.
//!
//! The crate provides the low-level RandAugment-style transforms, the
//! mixed-sample operations (interpolation, resize-and-paste, cutmix), the
//! randomized combinator that draws pairs of those operations per sample,
//! diversity and cross-entropy measurements over augmented data, and a batch
//! pipeline that turns a dataset into a reproducible augmented archive.
//!
//! Every random decision is drawn from an [`RngStream`] addressed by a root
//! seed and a logical path, so outputs never depend on thread scheduling.

pub mod error;
pub mod metrics;
pub mod mix;
pub mod pipeline;
pub mod randms;
pub mod raster;
pub mod rng;
pub mod xforms;

pub use error::{Error, Result};
pub use mix::{MixMask, MixPlan};
pub use randms::{Augmenter, Branch, CombinatorConfig, ScheduleConfig};
pub use raster::{ImageBuffer, Sample, SoftLabel};
pub use rng::RngStream;
pub use xforms::{Op, TransformPolicy, TransformSpec};
