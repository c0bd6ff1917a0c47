//! Archive writer: images, label and plan sidecars, config echo and a content digest.
//!
//! Layout of an archive directory:
//!
//! ```text
//! images/{iter}_{idx}.png   (PNG mode)   or   data.bin   (packed mode)
//! labels.jsonl              {"id": "...", "probs": [...]}
//! plans.jsonl               one PlanRow per sample
//! config.json               resolved engine configuration and op table
//! SHA256SUMS                digests of every data file, sorted by name
//! ```
//!
//! The archive digest is the SHA-256 of `SHA256SUMS`. It covers the data files only,
//! so runs that differ just in worker count or output path hash identically.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::pipeline::config::{EngineConfig, OutputFormat, OutputSpec};
use crate::pipeline::dataset::encode_cifar_records;
use crate::pipeline::stream::{AugmentedRecord, Batch};
use crate::raster::{ImageBuffer, SoftLabel};

pub const SUMS_FILE: &str = "SHA256SUMS";

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// File sink that also hashes whatever goes through it.
struct HashedFile {
    name: String,
    path: PathBuf,
    out: BufWriter<File>,
    hasher: Sha256,
}

impl HashedFile {
    fn create(dir: &Path, name: &str) -> Result<Self> {
        let path = dir.join(name);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        Ok(Self {
            name: name.into(),
            path,
            out: BufWriter::new(file),
            hasher: Sha256::new(),
        })
    }

    fn write(&mut self, bytes: &[u8]) -> Result<()> {
        self.hasher.update(bytes);
        self.out.write_all(bytes).map_err(|e| Error::io(&self.path, e))
    }

    fn finish(mut self) -> Result<(String, String)> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))?;
        Ok((self.name, hex(&self.hasher.finalize())))
    }
}

#[derive(Serialize)]
struct LabelRow<'a> {
    id: &'a str,
    probs: &'a [f64],
}

/// Encodes an image as PNG (grayscale or RGB, 8 bits per channel).
pub fn encode_png(image: &ImageBuffer) -> Result<Vec<u8>> {
    use image::ImageEncoder;
    let (h, w, c) = image.dims();
    let color = if c == 1 {
        image::ExtendedColorType::L8
    } else {
        image::ExtendedColorType::Rgb8
    };
    let mut buf = Vec::new();
    image::codecs::png::PngEncoder::new(&mut buf)
        .write_image(&image.to_u8(), w as u32, h as u32, color)
        .map_err(|e| Error::data(format!("PNG encoding failed: {e}")))?;
    Ok(buf)
}

pub fn write_png(path: &Path, image: &ImageBuffer) -> Result<()> {
    std::fs::write(path, encode_png(image)?).map_err(|e| Error::io(path, e))
}

/// Summary returned when an archive is closed.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchiveSummary {
    pub dir: PathBuf,
    pub samples: u64,
    pub digest: String,
}

/// Serial sink receiving batches in iteration order.
pub struct ArchiveWriter {
    dir: PathBuf,
    format: OutputFormat,
    labels: HashedFile,
    plans: HashedFile,
    packed: Option<HashedFile>,
    image_sums: Vec<(String, String)>,
    samples: u64,
}

impl ArchiveWriter {
    /// Creates the archive directory and writes the config echo.
    pub fn create(spec: &OutputSpec, cfg: &EngineConfig) -> Result<Self> {
        let dir = spec.dir.clone();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        if spec.format == OutputFormat::Png {
            let images = dir.join("images");
            std::fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
        }
        let echo = serde_json::to_string_pretty(&cfg.echo()).expect("config serializes");
        let cfg_path = dir.join("config.json");
        std::fs::write(&cfg_path, echo + "\n").map_err(|e| Error::io(&cfg_path, e))?;
        Ok(Self {
            labels: HashedFile::create(&dir, "labels.jsonl")?,
            plans: HashedFile::create(&dir, "plans.jsonl")?,
            packed: match spec.format {
                OutputFormat::Packed => Some(HashedFile::create(&dir, "data.bin")?),
                OutputFormat::Png => None,
            },
            dir,
            format: spec.format,
            image_sums: Vec::new(),
            samples: 0,
        })
    }

    pub fn write_record(&mut self, rec: &AugmentedRecord) -> Result<()> {
        let id = rec.id();
        // the label must still be a distribution after everything upstream
        SoftLabel::new(rec.sample.label.probs().to_vec())
            .map_err(|e| Error::data(format!("sample {id}: {e}")))?;
        let mut line = serde_json::to_string(&LabelRow {
            id: &id,
            probs: rec.sample.label.probs(),
        })
        .expect("label row serializes");
        line.push('\n');
        self.labels.write(line.as_bytes())?;
        let mut line = serde_json::to_string(&rec.plan_row()).expect("plan row serializes");
        line.push('\n');
        self.plans.write(line.as_bytes())?;

        match self.format {
            OutputFormat::Png => {
                let name = format!("images/{id}.png");
                let bytes = encode_png(&rec.sample.image)?;
                let path = self.dir.join(&name);
                std::fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
                self.image_sums.push((name, hex(&Sha256::digest(&bytes))));
            }
            OutputFormat::Packed => {
                let bytes = encode_cifar_records([&rec.sample])?;
                self.packed.as_mut().expect("packed sink").write(&bytes)?;
            }
        }
        self.samples += 1;
        Ok(())
    }

    pub fn write_batch(&mut self, batch: &Batch) -> Result<()> {
        batch.records.iter().try_for_each(|r| self.write_record(r))
    }

    /// Flushes every file and writes `SHA256SUMS`.
    pub fn finish(self) -> Result<ArchiveSummary> {
        let mut sums = self.image_sums;
        sums.push(self.labels.finish()?);
        sums.push(self.plans.finish()?);
        if let Some(p) = self.packed {
            sums.push(p.finish()?);
        }
        sums.sort();
        let listing: String = sums.iter().map(|(name, h)| format!("{h}  {name}\n")).collect();
        let path = self.dir.join(SUMS_FILE);
        std::fs::write(&path, &listing).map_err(|e| Error::io(&path, e))?;
        Ok(ArchiveSummary {
            dir: self.dir,
            samples: self.samples,
            digest: hex(&Sha256::digest(listing.as_bytes())),
        })
    }
}

/// Writes every batch of a stream to the archive described by `spec`.
pub fn write_outputs(
    batches: impl IntoIterator<Item = Result<Batch>>,
    spec: &OutputSpec,
    cfg: &EngineConfig,
) -> Result<ArchiveSummary> {
    let mut writer = ArchiveWriter::create(spec, cfg)?;
    for batch in batches {
        writer.write_batch(&batch?)?;
    }
    writer.finish()
}

/// Recomputes the digest of an existing archive from its data files.
pub fn archive_digest(dir: &Path) -> Result<String> {
    let path = dir.join(SUMS_FILE);
    let listing = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    for line in listing.lines() {
        let (want, name) = line
            .split_once("  ")
            .ok_or_else(|| Error::data(format!("malformed {SUMS_FILE} line '{line}'")))?;
        let file = dir.join(name);
        let bytes = std::fs::read(&file).map_err(|e| Error::io(&file, e))?;
        if hex(&Sha256::digest(&bytes)) != want {
            return Err(Error::data(format!("{name} does not match its recorded digest")));
        }
    }
    Ok(hex(&Sha256::digest(listing.as_bytes())))
}
