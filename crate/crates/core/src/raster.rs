//! Image and label data model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the sum of a [`SoftLabel`]'s entries.
pub const SIMPLEX_TOL: f64 = 1e-6;

/// An `height × width × channels` raster with interleaved, row-major intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl ImageBuffer {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::arg(format!("empty image {height}x{width}")));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::arg(format!("unsupported channel count {channels}")));
        }
        if data.len() != height * width * channels {
            return Err(Error::arg(format!(
                "data length {} does not match {height}x{width}x{channels}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::arg(format!(
                "intensity {} at index {pos} outside [0, 1]",
                data[pos]
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// Constant-valued image.
    pub fn filled(height: usize, width: usize, channels: usize, value: f32) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    /// Builds an image from 8-bit intensities (`byte / 255`).
    pub fn from_u8(height: usize, width: usize, channels: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(
            height,
            width,
            channels,
            bytes.iter().map(|&b| u8_to_unit(b)).collect(),
        )
    }

    /// Internal constructor for buffers produced by transforms; clamps into `[0, 1]`.
    pub(crate) fn from_raw_clamped(
        height: usize,
        width: usize,
        channels: usize,
        mut data: Vec<f32>,
    ) -> Self {
        debug_assert_eq!(data.len(), height * width * channels);
        for v in &mut data {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn index(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[self.index(y, x, c)]
    }

    /// Quantizes every intensity to 8 bits (`round(v * 255)`).
    pub fn to_u8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| unit_to_u8(v)).collect()
    }

    pub fn same_dims(&self, other: &ImageBuffer) -> bool {
        self.dims() == other.dims()
    }
}

#[inline]
pub fn u8_to_unit(b: u8) -> f32 {
    b as f32 / 255.0
}

#[inline]
pub fn unit_to_u8(v: f32) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Probability vector over classes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SoftLabel {
    probs: Vec<f64>,
}

impl SoftLabel {
    /// Validates non-negativity and unit sum (within [`SIMPLEX_TOL`]).
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::arg("label with zero classes"));
        }
        if let Some(pos) = probs.iter().position(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::arg(format!(
                "label entry {} at class {pos} is not a non-negative number",
                probs[pos]
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::arg(format!("label entries sum to {sum}, expected 1")));
        }
        Ok(Self { probs })
    }

    pub fn one_hot(class: usize, num_classes: usize) -> Result<Self> {
        if class >= num_classes {
            return Err(Error::arg(format!(
                "class {class} out of range for {num_classes} classes"
            )));
        }
        let mut probs = vec![0.0; num_classes];
        probs[class] = 1.0;
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn num_classes(&self) -> usize {
        self.probs.len()
    }

    /// Index of the largest entry (lowest index on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    /// `weight · self + (1 − weight) · other`.
    pub fn mix(&self, other: &SoftLabel, weight: f64) -> Result<SoftLabel> {
        if self.num_classes() != other.num_classes() {
            return Err(Error::arg(format!(
                "label class counts differ: {} vs {}",
                self.num_classes(),
                other.num_classes()
            )));
        }
        if !(0.0..=1.0).contains(&weight) {
            return Err(Error::arg(format!("mixing weight {weight} outside [0, 1]")));
        }
        let rest = 1.0 - weight;
        let probs = self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| weight * a + rest * b)
            .collect();
        SoftLabel::new(probs)
    }
}

impl<'de> Deserialize<'de> for SoftLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            probs: Vec<f64>,
        }
        let raw = Raw::deserialize(d)?;
        SoftLabel::new(raw.probs).map_err(serde::de::Error::custom)
    }
}

/// One (image, label) pair plus the dataset index it originated from.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: ImageBuffer,
    pub label: SoftLabel,
    pub source_id: u64,
}

impl Sample {
    pub fn new(image: ImageBuffer, label: SoftLabel, source_id: u64) -> Self {
        Self {
            image,
            label,
            source_id,
        }
    }

    /// Checks that two samples can be mixed.
    pub fn check_compatible(&self, other: &Sample) -> Result<()> {
        if !self.image.same_dims(&other.image) {
            return Err(Error::arg(format!(
                "image dimensions differ: {:?} vs {:?}",
                self.image.dims(),
                other.image.dims()
            )));
        }
        if self.label.num_classes() != other.label.num_classes() {
            return Err(Error::arg(format!(
                "label class counts differ: {} vs {}",
                self.label.num_classes(),
                other.label.num_classes()
            )));
        }
        Ok(())
    }
}
