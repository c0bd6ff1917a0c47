//! Mixed-sample operations: interpolation (Mixup), resize-and-paste
//! (ResizeMix), and the Cutmix and Basic (flip + crop) baselines.
//!
//! Every paste box lies fully inside the canvas, and the label weight of a
//! paste is the realized pixel fraction `w·h / (W·H)`, never the requested one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{ImageBuffer, Sample};
use crate::rng::RngStream;
use crate::xforms::TransformSpec;

/// Rectangular paste region inside a `canvas` of `(W, H)` pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixMask {
    /// `(p, q)`: column and row of the top-left corner.
    pub origin: (usize, usize),
    /// `(w, h)`.
    pub size: (usize, usize),
    /// `(W, H)`.
    pub canvas: (usize, usize),
}

impl MixMask {
    pub fn new(origin: (usize, usize), size: (usize, usize), canvas: (usize, usize)) -> Result<Self> {
        let mask = Self {
            origin,
            size,
            canvas,
        };
        mask.validate()?;
        Ok(mask)
    }

    pub fn validate(&self) -> Result<()> {
        let (p, q) = self.origin;
        let (w, h) = self.size;
        let (cw, ch) = self.canvas;
        if w == 0 || h == 0 || w > cw || h > ch || p > cw - w || q > ch - h {
            return Err(Error::arg(format!("paste box {self:?} not inside its canvas")));
        }
        Ok(())
    }

    pub fn area(&self) -> usize {
        self.size.0 * self.size.1
    }

    pub fn canvas_area(&self) -> usize {
        self.canvas.0 * self.canvas.1
    }

    /// Fraction of canvas pixels covered by the box.
    pub fn area_fraction(&self) -> f64 {
        self.area() as f64 / self.canvas_area() as f64
    }

    /// Fraction of canvas pixels outside the box.
    pub fn complement_fraction(&self) -> f64 {
        (self.canvas_area() - self.area()) as f64 / self.canvas_area() as f64
    }

    #[inline]
    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.origin.0
            && x < self.origin.0 + self.size.0
            && y >= self.origin.1
            && y < self.origin.1 + self.size.1
    }
}

/// Which execution path produced a mixed sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    Identity,
    Basic,
    Mixup,
    Cutmix,
    Resizemix,
    PresetRandaugment,
    /// FeatXform with shared parameters, then Interp.
    FtIp,
    /// Independent FeatXform per image with per-image keep/replace coins, then ReszPst.
    FtRp,
    /// Interp, then ReszPst choosing the paste order from the paste fraction.
    IpRp,
    /// Interp, per-image coins between interpolated and original, then ReszPst.
    IpRpAlt,
}

impl Branch {
    pub fn name(self) -> &'static str {
        match self {
            Branch::Identity => "identity",
            Branch::Basic => "basic",
            Branch::Mixup => "mixup",
            Branch::Cutmix => "cutmix",
            Branch::Resizemix => "resizemix",
            Branch::PresetRandaugment => "preset-randaugment",
            Branch::FtIp => "ft-ip",
            Branch::FtRp => "ft-rp",
            Branch::IpRp => "ip-rp",
            Branch::IpRpAlt => "ip-rp-alt",
        }
    }
}

/// Binary decisions recorded by a branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Coins {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flip: Option<bool>,
    /// Per input image: was the transformed version kept (`[FT, RP]`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub use_transformed: Option<[bool; 2]>,
    /// Per input image: was the interpolated image selected (alternate `[IP, RP]`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub use_interp: Option<[bool; 2]>,
    /// `[IP, RP]`: the interpolated image was pasted into `x2` (else `x1` into it).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interp_pasted: Option<bool>,
}

impl Coins {
    fn is_empty(&self) -> bool {
        *self == Coins::default()
    }
}

/// Complete record of the random decisions behind one augmented sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixPlan {
    pub branch: Branch,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Requested paste area fraction; the realized one is `mask.area_fraction()`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<MixMask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub specs1: Option<Vec<TransformSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub specs2: Option<Vec<TransformSpec>>,
    /// Crop offset `(x, y)` into the padded image (Basic).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crop: Option<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Coins::is_empty")]
    pub coins: Coins,
}

impl MixPlan {
    pub fn new(branch: Branch) -> Self {
        Self {
            branch,
            lambda: None,
            lambda_s: None,
            mask: None,
            specs1: None,
            specs2: None,
            crop: None,
            coins: Coins::default(),
        }
    }

    /// Checks that exactly the fields used by `branch` are present.
    pub fn validate(&self) -> Result<()> {
        use Branch::*;
        let b = self.branch;
        let expect = |name: &str, present: bool, wanted: bool| -> Result<()> {
            if present != wanted {
                Err(Error::arg(format!(
                    "plan for branch {}: field {name} {}",
                    b.name(),
                    if wanted { "missing" } else { "unexpected" }
                )))
            } else {
                Ok(())
            }
        };
        expect("lambda", self.lambda.is_some(), matches!(b, Mixup | Cutmix | FtIp | IpRp | IpRpAlt))?;
        expect("lambda_s", self.lambda_s.is_some(), matches!(b, Resizemix | FtRp | IpRp | IpRpAlt))?;
        expect("mask", self.mask.is_some(), matches!(b, Cutmix | Resizemix | FtRp | IpRp | IpRpAlt))?;
        expect("specs1", self.specs1.is_some(), matches!(b, PresetRandaugment | FtIp | FtRp))?;
        expect("specs2", self.specs2.is_some(), matches!(b, FtIp | FtRp))?;
        expect("crop", self.crop.is_some(), b == Basic)?;
        expect("coins.flip", self.coins.flip.is_some(), b == Basic)?;
        expect("coins.use_transformed", self.coins.use_transformed.is_some(), b == FtRp)?;
        expect("coins.use_interp", self.coins.use_interp.is_some(), b == IpRpAlt)?;
        expect("coins.interp_pasted", self.coins.interp_pasted.is_some(), b == IpRp)?;
        if let Some(mask) = &self.mask {
            mask.validate()?;
        }
        Ok(())
    }
}

/// `Interp`: pixelwise and labelwise convex combination `λ·x1 + (1−λ)·x2`.
pub fn interp(x1: &Sample, x2: &Sample, lambda: f64) -> Result<Sample> {
    x1.check_compatible(x2)?;
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::arg(format!("interpolation weight {lambda} outside [0, 1]")));
    }
    let rest = 1.0 - lambda;
    let data = x1
        .image
        .data()
        .iter()
        .zip(x2.image.data())
        .map(|(&a, &b)| (lambda * a as f64 + rest * b as f64) as f32)
        .collect();
    let (h, w, c) = x1.image.dims();
    Ok(Sample::new(
        ImageBuffer::from_raw_clamped(h, w, c, data),
        x1.label.mix(&x2.label, lambda)?,
        x1.source_id,
    ))
}

/// Box extents for a paste of area fraction `fraction`: `round(√fraction · dim)`, at least 1.
pub fn box_for_fraction(fraction: f64, canvas: (usize, usize)) -> (usize, usize) {
    let scale = fraction.max(0.0).sqrt();
    let side = |dim: usize| ((scale * dim as f64).round() as usize).clamp(1, dim);
    (side(canvas.0), side(canvas.1))
}

fn place_box(rng: &mut RngStream, size: (usize, usize), canvas: (usize, usize)) -> Result<MixMask> {
    let p = rng.between(0, canvas.0 - size.0);
    let q = rng.between(0, canvas.1 - size.1);
    MixMask::new((p, q), size, canvas)
}

/// `ReszPst`: shrinks `x1` to a box of area fraction `lambda_s`, pastes it at a uniformly
/// random interior location of `x2`, and weights labels by the realized box area.
pub fn resize_paste(
    x1: &Sample,
    x2: &Sample,
    lambda_s: f64,
    rng: &mut RngStream,
) -> Result<(Sample, MixMask)> {
    x1.check_compatible(x2)?;
    if !(lambda_s > 0.0 && lambda_s <= 1.0) {
        return Err(Error::arg(format!("paste fraction {lambda_s} outside (0, 1]")));
    }
    let canvas = (x2.image.width(), x2.image.height());
    let mask = place_box(rng, box_for_fraction(lambda_s, canvas), canvas)?;
    Ok((resize_paste_at(x1, x2, &mask)?, mask))
}

/// Deterministic core of [`resize_paste`] for a known mask.
pub fn resize_paste_at(x1: &Sample, x2: &Sample, mask: &MixMask) -> Result<Sample> {
    x1.check_compatible(x2)?;
    check_canvas(mask, &x2.image)?;
    let (w, h) = mask.size;
    let patch = resize_bilinear(&x1.image, h, w);
    let image = paste(&x2.image, &patch, mask);
    let label = x1.label.mix(&x2.label, mask.area_fraction())?;
    Ok(Sample::new(image, label, x1.source_id))
}

fn check_canvas(mask: &MixMask, image: &ImageBuffer) -> Result<()> {
    mask.validate()?;
    if mask.canvas != (image.width(), image.height()) {
        return Err(Error::arg(format!(
            "mask canvas {:?} does not match image {}x{}",
            mask.canvas,
            image.width(),
            image.height()
        )));
    }
    Ok(())
}

/// Copies `patch` (exactly `mask.size`) into a copy of `base` at `mask.origin`.
fn paste(base: &ImageBuffer, patch: &ImageBuffer, mask: &MixMask) -> ImageBuffer {
    let (h, w, c) = base.dims();
    let mut data = base.data().to_vec();
    let (p, q) = mask.origin;
    let (bw, bh) = mask.size;
    for y in 0..bh {
        let dst = base.index(q + y, p, 0);
        let src = patch.index(y, 0, 0);
        data[dst..dst + bw * c].copy_from_slice(&patch.data()[src..src + bw * c]);
    }
    ImageBuffer::from_raw_clamped(h, w, c, data)
}

/// Bilinear resize with half-pixel centres and edge clamping.
pub fn resize_bilinear(image: &ImageBuffer, out_h: usize, out_w: usize) -> ImageBuffer {
    let (h, w, c) = image.dims();
    if (out_h, out_w) == (h, w) {
        return image.clone();
    }
    let axis = |out: usize, src: usize| -> Vec<(usize, usize, f32)> {
        let scale = src as f64 / out as f64;
        (0..out)
            .map(|i| {
                let s = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
                let i0 = s.floor() as usize;
                let i1 = (i0 + 1).min(src - 1);
                (i0, i1, (s - i0 as f64) as f32)
            })
            .collect()
    };
    let ys = axis(out_h, h);
    let xs = axis(out_w, w);
    let mut data = Vec::with_capacity(out_h * out_w * c);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            for ch in 0..c {
                let top = image.get(y0, x0, ch) * (1.0 - fx) + image.get(y0, x1, ch) * fx;
                let bot = image.get(y1, x0, ch) * (1.0 - fx) + image.get(y1, x1, ch) * fx;
                data.push(top * (1.0 - fy) + bot * fy);
            }
        }
    }
    ImageBuffer::from_raw_clamped(out_h, out_w, c, data)
}

/// How the configured resize range maps to a paste area fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ResizeRangeMode {
    /// The range bounds the linear scale `τ`; the area fraction is `τ²`.
    #[default]
    Linear,
    /// The range bounds the area fraction directly.
    Area,
}

/// Draws a paste area fraction from the open `range`.
pub fn sample_resize_fraction(
    rng: &mut RngStream,
    range: (f64, f64),
    mode: ResizeRangeMode,
) -> Result<f64> {
    let v = rng.uniform_open(range.0, range.1)?;
    Ok(match mode {
        ResizeRangeMode::Linear => v * v,
        ResizeRangeMode::Area => v,
    })
}

/// Cutmix baseline: `λ ~ Beta(α, α)`; a box of area `(1 − λ)` taken from `x2` overwrites the
/// same region of `x1`. Returns the sampled `λ`; the label uses the realized complement.
pub fn cutmix(
    x1: &Sample,
    x2: &Sample,
    rng: &mut RngStream,
    alpha: f64,
) -> Result<(Sample, MixMask, f64)> {
    x1.check_compatible(x2)?;
    let lambda = rng.beta(alpha)?;
    let canvas = (x1.image.width(), x1.image.height());
    let mask = place_box(rng, box_for_fraction(1.0 - lambda, canvas), canvas)?;
    Ok((cutmix_at(x1, x2, &mask)?, mask, lambda))
}

pub fn cutmix_at(x1: &Sample, x2: &Sample, mask: &MixMask) -> Result<Sample> {
    x1.check_compatible(x2)?;
    check_canvas(mask, &x1.image)?;
    let (p, q) = mask.origin;
    let (bw, bh) = mask.size;
    let c = x2.image.channels();
    let mut patch = Vec::with_capacity(bw * bh * c);
    for y in q..q + bh {
        let start = x2.image.index(y, p, 0);
        patch.extend_from_slice(&x2.image.data()[start..start + bw * c]);
    }
    let patch = ImageBuffer::from_raw_clamped(bh, bw, c, patch);
    let image = paste(&x1.image, &patch, mask);
    let label = x1.label.mix(&x2.label, mask.complement_fraction())?;
    Ok(Sample::new(image, label, x1.source_id))
}

/// Default reflect padding for the Basic crop.
pub const BASIC_PAD: usize = 4;

/// Random parameters of one Basic augmentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BasicParams {
    pub flip: bool,
    /// `(x, y)` offset into the padded image; `(pad, pad)` is the centred crop.
    pub crop: (usize, usize),
}

/// Basic baseline: horizontal flip with probability 1/2, then reflect-pad by `pad` and crop
/// back to the original size at a uniform offset. The label is untouched.
pub fn basic(x: &Sample, rng: &mut RngStream, pad: usize) -> Result<(Sample, BasicParams)> {
    let params = BasicParams {
        flip: rng.coin(),
        crop: (rng.between(0, 2 * pad), rng.between(0, 2 * pad)),
    };
    Ok((basic_at(x, &params, pad)?, params))
}

pub fn basic_at(x: &Sample, params: &BasicParams, pad: usize) -> Result<Sample> {
    let (ox, oy) = params.crop;
    if ox > 2 * pad || oy > 2 * pad {
        return Err(Error::arg(format!(
            "crop offset {:?} exceeds padding {pad}",
            params.crop
        )));
    }
    let img = &x.image;
    let (h, w, c) = img.dims();
    let mut data = Vec::with_capacity(h * w * c);
    for y in 0..h {
        let sy = reflect(y as isize + oy as isize - pad as isize, h);
        for x_out in 0..w {
            let mut sx = reflect(x_out as isize + ox as isize - pad as isize, w);
            if params.flip {
                sx = w - 1 - sx;
            }
            let start = img.index(sy, sx, 0);
            data.extend_from_slice(&img.data()[start..start + c]);
        }
    }
    Ok(Sample::new(
        ImageBuffer::from_raw_clamped(h, w, c, data),
        x.label.clone(),
        x.source_id,
    ))
}

/// Mirror index without repeating the edge pixel (`dcb|abcd|cba`).
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}
