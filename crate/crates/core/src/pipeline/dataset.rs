//! Dataset ingestion: CIFAR-100 binary files and class-per-directory PNG folders.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{ImageBuffer, Sample, SoftLabel};
use crate::rng::{tags, RngStream};

pub const CIFAR_SIDE: usize = 32;
pub const CIFAR_PIXELS: usize = CIFAR_SIDE * CIFAR_SIDE * 3;
/// Coarse label byte, fine label byte, then R, G and B planes.
pub const CIFAR_RECORD: usize = 2 + CIFAR_PIXELS;
pub const CIFAR100_CLASSES: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: u64,
    /// Byte offset (`offset:N`) or file path of the stored image.
    pub location: String,
    pub class: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsampleSpec {
    pub per_class: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub source_format: String,
    /// `(height, width, channels)`.
    pub dims: (usize, usize, usize),
    pub num_classes: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub class_names: Vec<String>,
    pub split: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subsample: Option<SubsampleSpec>,
    /// Files ignored during ingestion (not decodable as images).
    #[serde(default)]
    pub skipped: usize,
    pub records: Vec<SampleRecord>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::with_capacity(self.records.len());
        for r in &self.records {
            if !seen.insert(r.id) {
                return Err(Error::data(format!("duplicate sample id {}", r.id)));
            }
            if r.class >= self.num_classes {
                return Err(Error::data(format!(
                    "sample {} has class {} but the dataset has {} classes",
                    r.id, r.class, self.num_classes
                )));
            }
        }
        Ok(())
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for r in &self.records {
            counts[r.class] += 1;
        }
        counts
    }
}

/// A manifest together with its decoded samples, index-aligned with `manifest.records`.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Decodes CIFAR-100 records from memory.
pub fn parse_cifar100(bytes: &[u8], split: &str) -> Result<Dataset> {
    if !bytes.len().is_multiple_of(CIFAR_RECORD) {
        let offset = (bytes.len() / CIFAR_RECORD * CIFAR_RECORD) as u64;
        return Err(Error::Format {
            offset,
            message: format!(
                "file length {} is not a multiple of the {CIFAR_RECORD}-byte record; trailing partial record",
                bytes.len()
            ),
        });
    }
    let n = bytes.len() / CIFAR_RECORD;
    let mut records = Vec::with_capacity(n);
    let mut samples = Vec::with_capacity(n);
    let mut interleaved = vec![0u8; CIFAR_PIXELS];
    let plane = CIFAR_SIDE * CIFAR_SIDE;
    for (i, rec) in bytes.chunks_exact(CIFAR_RECORD).enumerate() {
        let base = (i * CIFAR_RECORD) as u64;
        for (pos, name) in [(0usize, "coarse"), (1, "fine")] {
            if rec[pos] as usize >= CIFAR100_CLASSES {
                return Err(Error::Format {
                    offset: base + pos as u64,
                    message: format!("{name} label byte {} out of range", rec[pos]),
                });
            }
        }
        let fine = rec[1] as usize;
        let pixels = &rec[2..];
        for p in 0..plane {
            for c in 0..3 {
                interleaved[p * 3 + c] = pixels[c * plane + p];
            }
        }
        let image = ImageBuffer::from_u8(CIFAR_SIDE, CIFAR_SIDE, 3, &interleaved)?;
        let id = i as u64;
        samples.push(Sample::new(image, SoftLabel::one_hot(fine, CIFAR100_CLASSES)?, id));
        records.push(SampleRecord {
            id,
            location: format!("offset:{base}"),
            class: fine,
        });
    }
    Ok(Dataset {
        manifest: DatasetManifest {
            source_format: "cifar100-binary".into(),
            dims: (CIFAR_SIDE, CIFAR_SIDE, 3),
            num_classes: CIFAR100_CLASSES,
            class_names: Vec::new(),
            split: split.into(),
            subsample: None,
            skipped: 0,
            records,
        },
        samples,
    })
}

/// Reads a CIFAR-100 binary file (`train.bin` or `test.bin`).
pub fn load_cifar100(path: &Path, split: &str) -> Result<Dataset> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_cifar100(&bytes, split)
}

/// Serializes images in the CIFAR record layout. Intensities are rounded to bytes;
/// the fine label byte holds the label's arg-max and the coarse byte is 0.
pub fn encode_cifar_records<'a>(samples: impl IntoIterator<Item = &'a Sample>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let plane = CIFAR_SIDE * CIFAR_SIDE;
    for s in samples {
        if s.image.dims() != (CIFAR_SIDE, CIFAR_SIDE, 3) {
            return Err(Error::arg(format!(
                "packed CIFAR layout needs 32x32x3 images, got {:?}",
                s.image.dims()
            )));
        }
        let fine = s.label.argmax();
        if fine > u8::MAX as usize {
            return Err(Error::arg(format!("class {fine} does not fit a label byte")));
        }
        out.push(0);
        out.push(fine as u8);
        let bytes = s.image.to_u8();
        for c in 0..3 {
            out.extend((0..plane).map(|p| bytes[p * 3 + c]));
        }
    }
    Ok(out)
}

fn is_png(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

fn decode_png(path: &Path) -> Result<ImageBuffer> {
    let img = image::open(path).map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    match img.color().channel_count() {
        1 | 2 => {
            let g = img.to_luma8();
            ImageBuffer::from_u8(g.height() as usize, g.width() as usize, 1, g.as_raw())
        }
        _ => {
            let rgb = img.to_rgb8();
            ImageBuffer::from_u8(rgb.height() as usize, rgb.width() as usize, 3, rgb.as_raw())
        }
    }
}

/// Loads `root/<class_name>/<image>.png`. Classes are indexed in sorted name order;
/// files that are not decodable PNGs are skipped and counted in `manifest.skipped`.
pub fn load_image_folder(root: &Path) -> Result<Dataset> {
    let mut classes: BTreeMap<String, Vec<PathBuf>> = BTreeMap::new();
    let entries = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let path = entry.path();
        if path.is_dir() {
            let name = entry.file_name().to_string_lossy().into_owned();
            let mut files: Vec<PathBuf> = std::fs::read_dir(&path)
                .map_err(|e| Error::io(&path, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file())
                .collect();
            files.sort();
            classes.insert(name, files);
        }
    }
    if classes.is_empty() {
        return Err(Error::data(format!("{}: no class directories", root.display())));
    }

    let num_classes = classes.len();
    let mut dims = None;
    let mut skipped = 0;
    let mut records = Vec::new();
    let mut samples = Vec::new();
    for (class, (name, files)) in classes.iter().enumerate() {
        let mut found = 0;
        for file in files {
            let image = if is_png(file) { decode_png(file).ok() } else { None };
            let Some(image) = image else {
                log::warn!("skipping non-image file {}", file.display());
                skipped += 1;
                continue;
            };
            match dims {
                None => dims = Some(image.dims()),
                Some(d) if d != image.dims() => {
                    return Err(Error::data(format!(
                        "{} has dimensions {:?}, expected {:?}",
                        file.display(),
                        image.dims(),
                        d
                    )));
                }
                Some(_) => {}
            }
            let id = records.len() as u64;
            samples.push(Sample::new(image, SoftLabel::one_hot(class, num_classes)?, id));
            records.push(SampleRecord {
                id,
                location: file.display().to_string(),
                class,
            });
            found += 1;
        }
        if found == 0 {
            return Err(Error::data(format!("class directory '{name}' contains no images")));
        }
    }
    if skipped > 0 {
        log::warn!("{skipped} non-image files skipped under {}", root.display());
    }
    Ok(Dataset {
        manifest: DatasetManifest {
            source_format: "image-folder".into(),
            dims: dims.expect("at least one image"),
            num_classes,
            class_names: classes.into_keys().collect(),
            split: "all".into(),
            subsample: None,
            skipped,
            records,
        },
        samples,
    })
}

/// Keeps exactly `per_class` samples of every class, drawn without replacement.
/// Surviving samples keep their original order.
pub fn subsample_balanced(data: &Dataset, per_class: usize, seed: u64) -> Result<Dataset> {
    let m = &data.manifest;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); m.num_classes];
    for (i, r) in m.records.iter().enumerate() {
        by_class[r.class].push(i);
    }
    let mut keep = Vec::with_capacity(per_class * m.num_classes);
    for (class, members) in by_class.iter().enumerate() {
        if members.len() < per_class {
            return Err(Error::arg(format!(
                "class {class} has {} samples, fewer than the {per_class} requested",
                members.len()
            )));
        }
        let mut rng = RngStream::derive(seed, &[tags::SUBSAMPLE, class as u64]);
        let picks = rng.choose_k(members.len(), per_class)?;
        keep.extend(picks.into_iter().map(|p| members[p]));
    }
    keep.sort_unstable();
    let mut manifest = m.clone();
    manifest.records = keep.iter().map(|&i| m.records[i].clone()).collect();
    manifest.subsample = Some(SubsampleSpec { per_class, seed });
    Ok(Dataset {
        manifest,
        samples: keep.iter().map(|&i| data.samples[i].clone()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(coarse: u8, fine: u8, fill: impl Fn(usize) -> u8) -> Vec<u8> {
        let mut r = vec![coarse, fine];
        r.extend((0..CIFAR_PIXELS).map(fill));
        r
    }

    #[test]
    fn cifar_planes_are_interleaved() {
        // R plane 255, G plane 0, B plane = pixel index mod 256
        let bytes = record(3, 42, |i| match i / 1024 {
            0 => 255,
            1 => 0,
            _ => (i % 1024 % 256) as u8,
        });
        let d = parse_cifar100(&bytes, "train").unwrap();
        assert_eq!(d.len(), 1);
        let img = &d.samples[0].image;
        assert_eq!(img.dims(), (32, 32, 3));
        assert_eq!(img.get(0, 0, 0), 1.0);
        assert_eq!(img.get(0, 0, 1), 0.0);
        assert_eq!(img.get(1, 3, 2), (35.0f32 / 255.0));
        assert_eq!(d.samples[0].label.argmax(), 42);
        assert_eq!(d.manifest.records[0].class, 42);
    }

    #[test]
    fn truncated_and_bad_labels_are_format_errors() {
        let mut bytes = record(0, 1, |_| 7);
        bytes.extend(record(0, 2, |_| 9));
        bytes.truncate(CIFAR_RECORD + 100);
        match parse_cifar100(&bytes, "train") {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, CIFAR_RECORD as u64),
            other => panic!("{other:?}"),
        }
        let mut bytes = record(0, 1, |_| 7);
        bytes.extend(record(5, 100, |_| 9));
        match parse_cifar100(&bytes, "train") {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, CIFAR_RECORD as u64 + 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn packed_records_round_trip() {
        let mut bytes = record(0, 9, |i| (i * 7 % 256) as u8);
        bytes.extend(record(0, 99, |i| (i * 13 % 256) as u8));
        let d = parse_cifar100(&bytes, "test").unwrap();
        assert_eq!(encode_cifar_records(&d.samples).unwrap(), bytes);
    }

    fn synthetic(classes: usize, per: usize) -> Dataset {
        let mut samples = Vec::new();
        let mut records = Vec::new();
        for i in 0..classes * per {
            let class = i % classes;
            samples.push(Sample::new(
                ImageBuffer::filled(2, 2, 1, 0.5).unwrap(),
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
                dims: (2, 2, 1),
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

    #[test]
    fn subsample_is_balanced_and_deterministic() {
        let d = synthetic(100, 7);
        let s = subsample_balanced(&d, 4, 11).unwrap();
        assert_eq!(s.len(), 400);
        assert!(s.manifest.class_counts().iter().all(|&c| c == 4));
        s.manifest.validate().unwrap();
        let again = subsample_balanced(&d, 4, 11).unwrap();
        assert_eq!(s.manifest.records, again.manifest.records);
        let other = subsample_balanced(&d, 4, 12).unwrap();
        assert_ne!(s.manifest.records, other.manifest.records);
        let full = subsample_balanced(&d, 7, 3).unwrap();
        assert_eq!(full.manifest.records, d.manifest.records);
        assert!(matches!(subsample_balanced(&d, 8, 0), Err(Error::Argument(_))));
    }

    fn write_png(path: &Path, w: u32, h: u32, v: u8) {
        image::RgbImage::from_pixel(w, h, image::Rgb([v, v, v])).save(path).unwrap();
    }

    #[test]
    fn image_folder_layout() {
        let dir = tempfile::tempdir().unwrap();
        for class in ["dog", "cat"] {
            std::fs::create_dir(dir.path().join(class)).unwrap();
            for i in 0..3 {
                write_png(&dir.path().join(class).join(format!("{i}.png")), 4, 5, 10 * i as u8);
            }
        }
        std::fs::write(dir.path().join("cat").join("notes.txt"), "x").unwrap();
        let d = load_image_folder(dir.path()).unwrap();
        assert_eq!(d.len(), 6);
        assert_eq!(d.manifest.num_classes, 2);
        assert_eq!(d.manifest.class_names, vec!["cat", "dog"]);
        assert_eq!(d.manifest.dims, (5, 4, 3));
        assert_eq!(d.manifest.skipped, 1);
        assert_eq!(d.manifest.records[0].class, 0);
        assert!(d.manifest.records[0].location.contains("cat"));
        assert_eq!(d.manifest.records[5].class, 1);

        write_png(&dir.path().join("dog").join("big.png"), 8, 8, 0);
        assert!(matches!(load_image_folder(dir.path()), Err(Error::Data(_))));
        std::fs::remove_file(dir.path().join("dog").join("big.png")).unwrap();
        std::fs::create_dir(dir.path().join("empty")).unwrap();
        assert!(matches!(load_image_folder(dir.path()), Err(Error::Data(_))));
    }
}
