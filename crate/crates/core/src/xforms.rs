//! The fourteen low-level RandAugment transforms and the `FeatXform` step that
//! applies a random pair of them.
//!
//! Histogram-style operations (AutoContrast, Equalize, Posterize, Solarize)
//! quantize to 8 bits, run through a lookup table and rescale. Photometric
//! enhancements work on the real-valued buffer, and geometric operations use
//! bilinear resampling with a mid-gray fill for uncovered pixels.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{u8_to_unit, ImageBuffer};
use crate::rng::RngStream;

/// Intensity written into regions a geometric transform uncovers.
pub const GEOMETRIC_FILL: f32 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Op {
    Identity,
    AutoContrast,
    Equalize,
    Rotate,
    Solarize,
    Color,
    Posterize,
    Contrast,
    Brightness,
    Sharpness,
    ShearX,
    ShearY,
    TranslateX,
    TranslateY,
}

impl Op {
    pub const ALL: [Op; 14] = [
        Op::Identity,
        Op::AutoContrast,
        Op::Equalize,
        Op::Rotate,
        Op::Solarize,
        Op::Color,
        Op::Posterize,
        Op::Contrast,
        Op::Brightness,
        Op::Sharpness,
        Op::ShearX,
        Op::ShearY,
        Op::TranslateX,
        Op::TranslateY,
    ];

    /// Geometric ops whose magnitude carries a direction.
    pub fn is_directional(self) -> bool {
        matches!(
            self,
            Op::Rotate | Op::ShearX | Op::ShearY | Op::TranslateX | Op::TranslateY
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            Op::Identity => "Identity",
            Op::AutoContrast => "AutoContrast",
            Op::Equalize => "Equalize",
            Op::Rotate => "Rotate",
            Op::Solarize => "Solarize",
            Op::Color => "Color",
            Op::Posterize => "Posterize",
            Op::Contrast => "Contrast",
            Op::Brightness => "Brightness",
            Op::Sharpness => "Sharpness",
            Op::ShearX => "ShearX",
            Op::ShearY => "ShearY",
            Op::TranslateX => "TranslateX",
            Op::TranslateY => "TranslateY",
        }
    }

    /// Values for which the op is mathematically defined, independent of any policy.
    fn domain(self) -> (f64, f64) {
        match self {
            Op::Identity | Op::AutoContrast | Op::Equalize => (0.0, 0.0),
            Op::Rotate => (0.0, 180.0),
            Op::Solarize => (0.0, 1.0),
            Op::Posterize => (0.0, 8.0),
            Op::Color | Op::Contrast | Op::Brightness | Op::Sharpness => (0.0, f64::MAX),
            Op::ShearX | Op::ShearY => (0.0, 10.0),
            Op::TranslateX | Op::TranslateY => (0.0, 1.0),
        }
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Op {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Op::ALL
            .iter()
            .copied()
            .find(|op| op.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::arg(format!("unknown transform op '{s}'")))
    }
}

/// Direction of a directional op, serialized as `1` / `-1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum Sign {
    Positive,
    Negative,
}

impl Sign {
    pub fn factor(self) -> f64 {
        match self {
            Sign::Positive => 1.0,
            Sign::Negative => -1.0,
        }
    }
}

impl TryFrom<i8> for Sign {
    type Error = String;

    fn try_from(v: i8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Sign::Positive),
            -1 => Ok(Sign::Negative),
            other => Err(format!("sign must be 1 or -1, got {other}")),
        }
    }
}

impl From<Sign> for i8 {
    fn from(s: Sign) -> i8 {
        match s {
            Sign::Positive => 1,
            Sign::Negative => -1,
        }
    }
}

/// One low-level operation with its magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformSpec {
    pub op: Op,
    pub magnitude: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sign: Option<Sign>,
}

impl TransformSpec {
    pub fn new(op: Op, magnitude: f64, sign: Option<Sign>) -> Self {
        Self {
            op,
            magnitude,
            sign,
        }
    }

    /// Parameterless spec (`Identity`, `AutoContrast`, `Equalize`).
    pub fn plain(op: Op) -> Self {
        Self::new(op, 0.0, None)
    }

    /// Magnitude with the sign applied.
    pub fn signed_magnitude(&self) -> f64 {
        self.magnitude * self.sign.map_or(1.0, Sign::factor)
    }

    pub fn validate(&self) -> Result<()> {
        if self.op.is_directional() != self.sign.is_some() {
            return Err(Error::arg(format!(
                "{}: sign must be present exactly for directional ops",
                self.op
            )));
        }
        let (lo, hi) = self.op.domain();
        if !(self.magnitude.is_finite() && self.magnitude >= lo && self.magnitude <= hi) {
            return Err(Error::arg(format!(
                "{}: magnitude {} outside [{lo}, {hi}]",
                self.op, self.magnitude
            )));
        }
        Ok(())
    }
}

/// Magnitude range of one op inside a policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpRange {
    pub op: Op,
    pub lo: f64,
    pub hi: f64,
    pub directional: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MagnitudeMode {
    /// Magnitude drawn uniformly from the op's full range on every call.
    #[default]
    UniformFullRange,
}

/// Which ops `feat_xform` may draw, how many, and their magnitude ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransformPolicy {
    pub n_ops: usize,
    pub magnitude_mode: MagnitudeMode,
    pub ranges: Vec<OpRange>,
}

impl Default for TransformPolicy {
    fn default() -> Self {
        let enhance = (0.05, 1.95);
        let ranges = Op::ALL
            .iter()
            .map(|&op| {
                let (lo, hi) = match op {
                    Op::Identity | Op::AutoContrast | Op::Equalize => (0.0, 0.0),
                    Op::Rotate => (0.0, 30.0),
                    Op::Solarize => (0.0, 1.0),
                    Op::Posterize => (4.0, 8.0),
                    Op::Color | Op::Contrast | Op::Brightness | Op::Sharpness => enhance,
                    Op::ShearX | Op::ShearY | Op::TranslateX | Op::TranslateY => (0.0, 0.3),
                };
                OpRange {
                    op,
                    lo,
                    hi,
                    directional: op.is_directional(),
                }
            })
            .collect();
        Self {
            n_ops: 2,
            magnitude_mode: MagnitudeMode::UniformFullRange,
            ranges,
        }
    }
}

impl TransformPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.n_ops == 0 {
            return Err(Error::Config("policy n_ops must be at least 1".into()));
        }
        if self.n_ops > self.ranges.len() {
            return Err(Error::Config(format!(
                "policy draws {} ops from a table of {}",
                self.n_ops,
                self.ranges.len()
            )));
        }
        for (i, r) in self.ranges.iter().enumerate() {
            if self.ranges[..i].iter().any(|o| o.op == r.op) {
                return Err(Error::Config(format!("op {} listed twice", r.op)));
            }
            let (lo, hi) = r.op.domain();
            if !(r.lo.is_finite() && r.hi.is_finite() && r.lo <= r.hi && r.lo >= lo && r.hi <= hi)
            {
                return Err(Error::Config(format!(
                    "range [{}, {}] for {} is empty or outside [{lo}, {hi}]",
                    r.lo, r.hi, r.op
                )));
            }
            if r.directional != r.op.is_directional() {
                return Err(Error::Config(format!(
                    "directional flag for {} must be {}",
                    r.op,
                    r.op.is_directional()
                )));
            }
        }
        Ok(())
    }

    /// Draws `n_ops` distinct ops with magnitudes uniform over each op's range.
    pub fn sample_specs(&self, rng: &mut RngStream) -> Result<Vec<TransformSpec>> {
        let picks = rng.choose_k(self.ranges.len(), self.n_ops)?;
        picks
            .into_iter()
            .map(|i| {
                let r = self.ranges[i];
                let magnitude = match self.magnitude_mode {
                    MagnitudeMode::UniformFullRange if r.lo < r.hi => rng.uniform(r.lo, r.hi)?,
                    MagnitudeMode::UniformFullRange => r.lo,
                };
                let sign = r.directional.then(|| {
                    if rng.coin() {
                        Sign::Positive
                    } else {
                        Sign::Negative
                    }
                });
                Ok(TransformSpec::new(r.op, magnitude, sign))
            })
            .collect()
    }
}

/// Applies one low-level transform. Labels are never involved.
pub fn apply_transform(image: &ImageBuffer, spec: &TransformSpec) -> Result<ImageBuffer> {
    spec.validate()?;
    let m = spec.signed_magnitude();
    Ok(match spec.op {
        Op::Identity => image.clone(),
        Op::AutoContrast => map_u8_channels(image, autocontrast_lut),
        Op::Equalize => map_u8_channels(image, equalize_lut),
        Op::Posterize => {
            let lut = posterize_lut(posterize_bits(m));
            map_u8_channels(image, |_| lut)
        }
        Op::Solarize => {
            let lut = solarize_lut(solarize_threshold(m));
            map_u8_channels(image, |_| lut)
        }
        Op::Brightness => map_real(image, |v| v * m as f32),
        Op::Color => color(image, m as f32),
        Op::Contrast => contrast(image, m as f32),
        Op::Sharpness => sharpness(image, m as f32),
        Op::Rotate => rotate(image, m),
        Op::ShearX => shear(image, m, true),
        Op::ShearY => shear(image, m, false),
        Op::TranslateX => translate(image, m * image.width() as f64, 0.0),
        Op::TranslateY => translate(image, 0.0, m * image.height() as f64),
    })
}

/// Applies `specs` in order.
pub fn apply_sequence(image: &ImageBuffer, specs: &[TransformSpec]) -> Result<ImageBuffer> {
    let mut out = image.clone();
    for spec in specs {
        out = apply_transform(&out, spec)?;
    }
    Ok(out)
}

/// `FeatXform`: draws `policy.n_ops` transforms and applies them in sequence,
/// or replays `fixed` without touching `rng`. Returns the specs used.
pub fn feat_xform(
    image: &ImageBuffer,
    rng: &mut RngStream,
    policy: &TransformPolicy,
    fixed: Option<&[TransformSpec]>,
) -> Result<(ImageBuffer, Vec<TransformSpec>)> {
    let specs = match fixed {
        Some(specs) => specs.to_vec(),
        None => policy.sample_specs(rng)?,
    };
    let out = apply_sequence(image, &specs)?;
    Ok((out, specs))
}

pub(crate) fn posterize_bits(m: f64) -> u32 {
    m.round().clamp(0.0, 8.0) as u32
}

pub(crate) fn solarize_threshold(m: f64) -> u16 {
    (m * 255.0).round().clamp(0.0, 255.0) as u16
}

fn map_u8_channels(image: &ImageBuffer, make_lut: impl Fn(&[u32; 256]) -> [u8; 256]) -> ImageBuffer {
    let (h, w, c) = image.dims();
    let bytes = image.to_u8();
    let mut out = vec![0f32; bytes.len()];
    for ch in 0..c {
        let mut hist = [0u32; 256];
        for px in bytes.iter().skip(ch).step_by(c) {
            hist[*px as usize] += 1;
        }
        let lut = make_lut(&hist);
        for i in (ch..bytes.len()).step_by(c) {
            out[i] = u8_to_unit(lut[bytes[i] as usize]);
        }
    }
    ImageBuffer::from_raw_clamped(h, w, c, out)
}

fn identity_lut() -> [u8; 256] {
    std::array::from_fn(|i| i as u8)
}

fn autocontrast_lut(hist: &[u32; 256]) -> [u8; 256] {
    let lo = hist.iter().position(|&n| n > 0);
    let hi = hist.iter().rposition(|&n| n > 0);
    match (lo, hi) {
        (Some(lo), Some(hi)) if hi > lo => {
            let span = (hi - lo) as u32;
            std::array::from_fn(|i| {
                let shifted = (i as u32).saturating_sub(lo as u32);
                (shifted * 255 / span).min(255) as u8
            })
        }
        _ => identity_lut(),
    }
}

fn equalize_lut(hist: &[u32; 256]) -> [u8; 256] {
    let nonzero: Vec<u32> = hist.iter().copied().filter(|&n| n > 0).collect();
    if nonzero.len() <= 1 {
        return identity_lut();
    }
    let total: u32 = nonzero.iter().sum();
    let step = (total - nonzero[nonzero.len() - 1]) / 255;
    if step == 0 {
        return identity_lut();
    }
    let mut lut = [0u8; 256];
    let mut n = step / 2;
    for (i, slot) in lut.iter_mut().enumerate() {
        *slot = (n / step).min(255) as u8;
        n += hist[i];
    }
    lut
}

fn posterize_lut(bits: u32) -> [u8; 256] {
    let mask: u8 = if bits == 0 { 0 } else { !((1u16 << (8 - bits)) - 1) as u8 };
    std::array::from_fn(|i| i as u8 & mask)
}

fn solarize_lut(threshold: u16) -> [u8; 256] {
    std::array::from_fn(|i| if i as u16 >= threshold { 255 - i as u8 } else { i as u8 })
}

fn map_real(image: &ImageBuffer, f: impl Fn(f32) -> f32) -> ImageBuffer {
    let (h, w, c) = image.dims();
    ImageBuffer::from_raw_clamped(h, w, c, image.data().iter().map(|&v| f(v)).collect())
}

/// `degenerate + factor · (image − degenerate)`, clamped.
fn blend(image: &ImageBuffer, degenerate: &[f32], factor: f32) -> ImageBuffer {
    let (h, w, c) = image.dims();
    let data = image
        .data()
        .iter()
        .zip(degenerate)
        .map(|(&v, &d)| d + factor * (v - d))
        .collect();
    ImageBuffer::from_raw_clamped(h, w, c, data)
}

fn luma(image: &ImageBuffer) -> Vec<f32> {
    match image.channels() {
        1 => image.data().to_vec(),
        _ => image
            .data()
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
            .collect(),
    }
}

fn color(image: &ImageBuffer, factor: f32) -> ImageBuffer {
    if image.channels() == 1 {
        return image.clone();
    }
    let gray: Vec<f32> = luma(image).into_iter().flat_map(|g| [g; 3]).collect();
    blend(image, &gray, factor)
}

fn contrast(image: &ImageBuffer, factor: f32) -> ImageBuffer {
    let gray = luma(image);
    let mean = (gray.iter().map(|&g| g as f64).sum::<f64>() / gray.len() as f64) as f32;
    blend(image, &vec![mean; image.data().len()], factor)
}

fn sharpness(image: &ImageBuffer, factor: f32) -> ImageBuffer {
    let (h, w, c) = image.dims();
    let mut smooth = image.data().to_vec();
    if h >= 3 && w >= 3 {
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                for ch in 0..c {
                    let mut acc = 4.0 * image.get(y, x, ch);
                    for dy in 0..3 {
                        for dx in 0..3 {
                            acc += image.get(y + dy - 1, x + dx - 1, ch);
                        }
                    }
                    smooth[image.index(y, x, ch)] = acc / 13.0;
                }
            }
        }
    }
    blend(image, &smooth, factor)
}

/// Bilinear sample at pixel-index coordinates; neighbours outside the image read as the fill.
#[inline]
fn bilinear(image: &ImageBuffer, sx: f64, sy: f64, ch: usize) -> f32 {
    let (h, w, _) = image.dims();
    let x0 = sx.floor();
    let y0 = sy.floor();
    let fx = (sx - x0) as f32;
    let fy = (sy - y0) as f32;
    let fetch = |xi: f64, yi: f64| -> f32 {
        if xi >= 0.0 && yi >= 0.0 && (xi as usize) < w && (yi as usize) < h {
            image.get(yi as usize, xi as usize, ch)
        } else {
            GEOMETRIC_FILL
        }
    };
    let top = fetch(x0, y0) * (1.0 - fx) + fetch(x0 + 1.0, y0) * fx;
    let bottom = fetch(x0, y0 + 1.0) * (1.0 - fx) + fetch(x0 + 1.0, y0 + 1.0) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Inverse-maps every output pixel centre through `source`.
fn warp(image: &ImageBuffer, source: impl Fn(f64, f64) -> (f64, f64)) -> ImageBuffer {
    let (h, w, c) = image.dims();
    let mut out = Vec::with_capacity(h * w * c);
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = source(x as f64, y as f64);
            for ch in 0..c {
                out.push(bilinear(image, sx, sy, ch));
            }
        }
    }
    ImageBuffer::from_raw_clamped(h, w, c, out)
}

/// Counter-clockwise rotation about the image centre, in degrees.
fn rotate(image: &ImageBuffer, degrees: f64) -> ImageBuffer {
    if degrees == 0.0 {
        return image.clone();
    }
    let (sin, cos) = degrees.to_radians().sin_cos();
    let cx = image.width() as f64 / 2.0;
    let cy = image.height() as f64 / 2.0;
    warp(image, |x, y| {
        let u = x + 0.5 - cx;
        let v = y + 0.5 - cy;
        (cos * u - sin * v + cx - 0.5, sin * u + cos * v + cy - 0.5)
    })
}

fn shear(image: &ImageBuffer, amount: f64, horizontal: bool) -> ImageBuffer {
    if amount == 0.0 {
        return image.clone();
    }
    warp(image, |x, y| {
        if horizontal {
            (x + amount * (y + 0.5), y)
        } else {
            (x, y + amount * (x + 0.5))
        }
    })
}

fn translate(image: &ImageBuffer, dx: f64, dy: f64) -> ImageBuffer {
    if dx == 0.0 && dy == 0.0 {
        return image.clone();
    }
    warp(image, |x, y| (x + dx, y + dy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn img_from_bytes(h: usize, w: usize, c: usize, bytes: &[u8]) -> ImageBuffer {
        ImageBuffer::from_u8(h, w, c, bytes).unwrap()
    }

    fn random_bytes(rng: &mut RngStream, n: usize) -> Vec<u8> {
        (0..n).map(|_| rng.below(256) as u8).collect()
    }

    // 8-bit reference implementations, written per pixel from the textbook definitions.
    mod oracle {
        pub fn posterize(v: u8, bits: u32) -> u8 {
            let drop = 8 - bits;
            ((v as u32 >> drop) << drop) as u8
        }

        pub fn solarize(v: u8, threshold: u16) -> u8 {
            if (v as u16) < threshold {
                v
            } else {
                255 - v
            }
        }

        pub fn autocontrast(channel: &[u8]) -> Vec<u8> {
            let lo = *channel.iter().min().unwrap() as f64;
            let hi = *channel.iter().max().unwrap() as f64;
            if hi <= lo {
                return channel.to_vec();
            }
            channel
                .iter()
                .map(|&v| {
                    let t = (v as f64 - lo) * 255.0 / (hi - lo);
                    let t = t.trunc();
                    t.clamp(0.0, 255.0) as u8
                })
                .collect()
        }

        /// Cumulative-count equalization with half-step rounding offset.
        pub fn equalize(channel: &[u8]) -> Vec<u8> {
            let mut counts = vec![0u64; 256];
            for &v in channel {
                counts[v as usize] += 1;
            }
            let distinct: Vec<usize> = (0..256).filter(|&i| counts[i] > 0).collect();
            if distinct.len() < 2 {
                return channel.to_vec();
            }
            let brightest = *distinct.last().unwrap();
            let step = (channel.len() as u64 - counts[brightest]) / 255;
            if step == 0 {
                return channel.to_vec();
            }
            channel
                .iter()
                .map(|&v| {
                    let below: u64 = channel.iter().filter(|&&u| u < v).count() as u64;
                    ((step / 2 + below) / step).min(255) as u8
                })
                .collect()
        }
    }

    fn per_channel(bytes: &[u8], c: usize, f: impl Fn(&[u8]) -> Vec<u8>) -> Vec<u8> {
        let mut out = vec![0u8; bytes.len()];
        for ch in 0..c {
            let chan: Vec<u8> = bytes.iter().skip(ch).step_by(c).copied().collect();
            for (k, v) in f(&chan).into_iter().enumerate() {
                out[k * c + ch] = v;
            }
        }
        out
    }

    #[test]
    fn identity_is_exact() {
        let mut rng = RngStream::derive(1, &[]);
        let img = img_from_bytes(8, 8, 3, &random_bytes(&mut rng, 192));
        assert_eq!(apply_transform(&img, &TransformSpec::plain(Op::Identity)).unwrap(), img);
    }

    #[test]
    fn zero_magnitude_geometric_is_exact() {
        let mut rng = RngStream::derive(2, &[]);
        let img = img_from_bytes(8, 8, 3, &random_bytes(&mut rng, 192));
        for op in [Op::Rotate, Op::ShearX, Op::ShearY, Op::TranslateX, Op::TranslateY] {
            for sign in [Sign::Positive, Sign::Negative] {
                let out = apply_transform(&img, &TransformSpec::new(op, 0.0, Some(sign))).unwrap();
                assert_eq!(out, img, "{op}");
            }
        }
    }

    #[test]
    fn posterize_example() {
        let img = img_from_bytes(1, 1, 1, &[135]);
        let out = apply_transform(&img, &TransformSpec::new(Op::Posterize, 4.0, None)).unwrap();
        assert_eq!(out.to_u8(), vec![128]);
    }

    #[test]
    fn solarize_example() {
        let img = img_from_bytes(1, 2, 1, &[200, 100]);
        let spec = TransformSpec::new(Op::Solarize, 128.0 / 255.0, None);
        assert_eq!(apply_transform(&img, &spec).unwrap().to_u8(), vec![55, 100]);
    }

    #[test]
    fn equalize_constant_is_constant() {
        let img = img_from_bytes(8, 8, 3, &[77; 192]);
        let out = apply_transform(&img, &TransformSpec::plain(Op::Equalize)).unwrap();
        assert_eq!(out, img);
        assert_eq!(per_channel(&[77; 192], 3, oracle::equalize), vec![77; 192]);
    }

    #[test]
    fn integer_ops_match_oracle() {
        let mut rng = RngStream::derive(3, &[]);
        for trial in 0..100 {
            let c = if trial % 4 == 0 { 1 } else { 3 };
            let bytes = random_bytes(&mut rng, 64 * c);
            let img = img_from_bytes(8, 8, c, &bytes);
            let run = |spec: TransformSpec| apply_transform(&img, &spec).unwrap().to_u8();

            let bits = rng.between(4, 8) as u32;
            let expect: Vec<u8> = bytes.iter().map(|&v| oracle::posterize(v, bits)).collect();
            assert_eq!(run(TransformSpec::new(Op::Posterize, bits as f64, None)), expect);

            let t = rng.uniform(0.0, 1.0).unwrap();
            let thr = (t * 255.0).round() as u16;
            let expect: Vec<u8> = bytes.iter().map(|&v| oracle::solarize(v, thr)).collect();
            assert_eq!(run(TransformSpec::new(Op::Solarize, t, None)), expect);

            let expect = per_channel(&bytes, c, oracle::autocontrast);
            assert_eq!(run(TransformSpec::plain(Op::AutoContrast)), expect);

            let expect = per_channel(&bytes, c, oracle::equalize);
            assert_eq!(run(TransformSpec::plain(Op::Equalize)), expect);
        }
    }

    #[test]
    fn color_on_grayscale_is_identity() {
        let img = img_from_bytes(2, 2, 1, &[0, 50, 100, 200]);
        let out = apply_transform(&img, &TransformSpec::new(Op::Color, 1.7, None)).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn enhancement_factor_one_is_identity() {
        let mut rng = RngStream::derive(4, &[]);
        let img = img_from_bytes(6, 6, 3, &random_bytes(&mut rng, 108));
        for op in [Op::Color, Op::Contrast, Op::Brightness, Op::Sharpness] {
            let out = apply_transform(&img, &TransformSpec::new(op, 1.0, None)).unwrap();
            for (a, b) in out.data().iter().zip(img.data()) {
                assert!((a - b).abs() < 1e-6, "{op}");
            }
        }
    }

    #[test]
    fn brightness_zero_is_black() {
        let img = ImageBuffer::filled(3, 3, 3, 0.7).unwrap();
        let out = apply_transform(&img, &TransformSpec::new(Op::Brightness, 0.0, None)).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn translate_by_full_width_fills() {
        let img = ImageBuffer::filled(4, 4, 1, 1.0).unwrap();
        let spec = TransformSpec::new(Op::TranslateX, 1.0, Some(Sign::Positive));
        let out = apply_transform(&img, &spec).unwrap();
        assert!(out.data().iter().all(|&v| v == GEOMETRIC_FILL));
        let spec = TransformSpec::new(Op::TranslateX, 0.25, Some(Sign::Negative));
        let out = apply_transform(&img, &spec).unwrap();
        // content moves right by one column
        assert_eq!(out.get(0, 0, 0), GEOMETRIC_FILL);
        assert_eq!(out.get(0, 1, 0), 1.0);
    }

    #[test]
    fn spec_validation() {
        assert!(TransformSpec::new(Op::Rotate, 10.0, None).validate().is_err());
        assert!(TransformSpec::new(Op::Color, 1.0, Some(Sign::Positive))
            .validate()
            .is_err());
        assert!(TransformSpec::new(Op::Solarize, 1.5, None).validate().is_err());
        assert!(TransformSpec::new(Op::Brightness, f64::NAN, None).validate().is_err());
        assert!("Sharpness".parse::<Op>().is_ok());
        assert!(matches!("Blur".parse::<Op>(), Err(Error::Argument(_))));
        assert!(serde_json::from_str::<TransformSpec>(r#"{"op":"Blur","magnitude":0}"#).is_err());
    }

    #[test]
    fn default_policy_is_valid_and_auditable() {
        let p = TransformPolicy::default();
        p.validate().unwrap();
        assert_eq!(p.ranges.len(), 14);
        assert_eq!(p.n_ops, 2);
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(serde_json::from_str::<TransformPolicy>(&json).unwrap(), p);
        let mut bad = p.clone();
        bad.ranges[3].lo = 40.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn feat_xform_draws_distinct_ops_in_range() {
        let policy = TransformPolicy::default();
        let img = ImageBuffer::filled(8, 8, 3, 0.3).unwrap();
        let mut rng = RngStream::derive(9, &[]);
        for _ in 0..500 {
            let (_, specs) = feat_xform(&img, &mut rng, &policy, None).unwrap();
            assert_eq!(specs.len(), 2);
            assert_ne!(specs[0].op, specs[1].op);
            for s in &specs {
                let r = policy.ranges.iter().find(|r| r.op == s.op).unwrap();
                assert!(s.magnitude >= r.lo && s.magnitude <= r.hi);
                assert_eq!(s.sign.is_some(), r.directional);
            }
        }
    }

    #[test]
    fn feat_xform_replay_ignores_rng() {
        let policy = TransformPolicy::default();
        let mut rng = RngStream::derive(10, &[]);
        let a = img_from_bytes(8, 8, 3, &random_bytes(&mut rng, 192));
        let b = img_from_bytes(8, 8, 3, &random_bytes(&mut rng, 192));
        let (xa, specs) = feat_xform(&a, &mut RngStream::derive(5, &[1]), &policy, None).unwrap();
        let (xa2, specs2) =
            feat_xform(&a, &mut RngStream::derive(5, &[1]), &policy, None).unwrap();
        assert_eq!((xa, specs.clone()), (xa2, specs2));

        let (xb1, s1) =
            feat_xform(&b, &mut RngStream::derive(1, &[]), &policy, Some(&specs)).unwrap();
        let (xb2, s2) =
            feat_xform(&b, &mut RngStream::derive(2, &[]), &policy, Some(&specs)).unwrap();
        assert_eq!(s1, specs);
        assert_eq!(s2, specs);
        assert_eq!(xb1, xb2);

        let ids = [TransformSpec::plain(Op::Identity); 2];
        let (out, _) = feat_xform(&b, &mut rng, &policy, Some(&ids)).unwrap();
        assert_eq!(out, b);
    }

    proptest! {
        #[test]
        fn every_op_preserves_shape_and_range(
            seed in any::<u64>(),
            h in 1usize..10,
            w in 1usize..10,
            gray in any::<bool>(),
        ) {
            let c = if gray { 1 } else { 3 };
            let mut rng = RngStream::derive(seed, &[]);
            let img = img_from_bytes(h, w, c, &random_bytes(&mut rng, h * w * c));
            let policy = TransformPolicy { n_ops: 1, ..TransformPolicy::default() };
            for r in &policy.ranges {
                let magnitude = if r.lo < r.hi { rng.uniform(r.lo, r.hi).unwrap() } else { r.lo };
                let sign = r.directional.then_some(if rng.coin() { Sign::Positive } else { Sign::Negative });
                let out = apply_transform(&img, &TransformSpec::new(r.op, magnitude, sign)).unwrap();
                prop_assert_eq!(out.dims(), img.dims());
                prop_assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }
}
