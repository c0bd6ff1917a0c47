//! RandMSAugment: per sample, draw two of the three component functions
//! (FeatXform, Interp, ReszPst) and run the branch for that pair.
//!
//! Also hosts the augmenter registry used by the pipeline and the CLI, the
//! reduced variant that only draws FeatXform pairs, the alternate
//! `[Interp, ReszPst]` combination, plan replay, and the warmup schedule.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mix::{
    basic, basic_at, cutmix, cutmix_at, interp, resize_paste, resize_paste_at,
    sample_resize_fraction, BasicParams, ResizeRangeMode, BASIC_PAD,
};
pub use crate::mix::{Branch, Coins, MixPlan};
use crate::raster::Sample;
use crate::rng::{tags, RngStream};
use crate::xforms::{apply_sequence, feat_xform, TransformPolicy, TransformSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// All three pairs, each with probability 1/3.
    #[default]
    Full,
    /// Only `[FT, RP]` and `[FT, IP]`, each with probability 1/2.
    Minus,
    /// As `Full`, with `[IP, RP]` replaced by the alternate combination.
    AlternateIpRp,
}

/// Distribution of the paste fraction inside the `[IP, RP]` branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum IpRpLambdaMode {
    /// Uniform on (0, 1).
    #[default]
    Uniform01,
    /// Same draw as the other paste branches (`resize_range`, `resize_range_mode`).
    ResizeRange,
}

/// Distribution of the interpolation weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InterpLambdaMode {
    /// `Beta(alpha, alpha)`.
    #[default]
    Beta,
    /// Uniform on [0, 1).
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CombinatorConfig {
    pub variant: Variant,
    pub alpha: f64,
    pub resize_range: (f64, f64),
    pub resize_range_mode: ResizeRangeMode,
    pub ip_rp_lambda_s_mode: IpRpLambdaMode,
    pub interp_lambda: InterpLambdaMode,
    /// Optional weights for the pair draw, ordered `[FT,IP]`, `[FT,RP]`, `[IP,RP]`.
    pub pair_weights: Option<[f64; 3]>,
    /// Reflect padding of the Basic crop.
    pub basic_pad: usize,
}

impl Default for CombinatorConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Full,
            alpha: 1.0,
            resize_range: (0.2, 0.8),
            resize_range_mode: ResizeRangeMode::Linear,
            ip_rp_lambda_s_mode: IpRpLambdaMode::Uniform01,
            interp_lambda: InterpLambdaMode::Beta,
            pair_weights: None,
            basic_pad: BASIC_PAD,
        }
    }
}

impl CombinatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::Config(format!("alpha must be positive, got {}", self.alpha)));
        }
        let (lo, hi) = self.resize_range;
        if !(lo > 0.0 && lo < hi && hi <= 1.0) {
            return Err(Error::Config(format!(
                "resize_range ({lo}, {hi}) must satisfy 0 < lo < hi <= 1"
            )));
        }
        if let Some(w) = self.pair_weights {
            if w.iter().any(|x| !x.is_finite() || *x < 0.0) || w.iter().sum::<f64>() <= 0.0 {
                return Err(Error::Config(format!("invalid pair weights {w:?}")));
            }
            if self.variant == Variant::Minus && w[0] + w[1] <= 0.0 {
                return Err(Error::Config(
                    "minus variant needs positive weight on [FT,IP] or [FT,RP]".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Named augmentation methods selectable from configuration and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Augmenter {
    Identity,
    Basic,
    Mixup,
    Cutmix,
    Resizemix,
    PresetRandaugment,
    Randms,
    RandmsMinus,
    FtRp,
    FtIp,
    IpRp,
    IpRpAlt,
}

impl Augmenter {
    pub const ALL: [Augmenter; 12] = [
        Augmenter::Identity,
        Augmenter::Basic,
        Augmenter::Mixup,
        Augmenter::Cutmix,
        Augmenter::Resizemix,
        Augmenter::PresetRandaugment,
        Augmenter::Randms,
        Augmenter::RandmsMinus,
        Augmenter::FtRp,
        Augmenter::FtIp,
        Augmenter::IpRp,
        Augmenter::IpRpAlt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Augmenter::Identity => "identity",
            Augmenter::Basic => "basic",
            Augmenter::Mixup => "mixup",
            Augmenter::Cutmix => "cutmix",
            Augmenter::Resizemix => "resizemix",
            Augmenter::PresetRandaugment => "preset-randaugment",
            Augmenter::Randms => "randms",
            Augmenter::RandmsMinus => "randms-minus",
            Augmenter::FtRp => "ft-rp",
            Augmenter::FtIp => "ft-ip",
            Augmenter::IpRp => "ip-rp",
            Augmenter::IpRpAlt => "ip-rp-alt",
        }
    }

    /// Whether the augmenter combines two samples.
    pub fn is_mixing(self) -> bool {
        !matches!(
            self,
            Augmenter::Identity | Augmenter::Basic | Augmenter::PresetRandaugment
        )
    }
}

impl fmt::Display for Augmenter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Augmenter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Augmenter::ALL
            .iter()
            .copied()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::arg(format!("unknown augmenter '{s}'")))
    }
}

/// Parameters pinned by the caller instead of drawn; used for audits and tests.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Forced {
    pub lambda: Option<f64>,
    pub lambda_s: Option<f64>,
}

/// Runs one augmenter on `x1` (and `x2` when it mixes).
pub fn augment(
    aug: Augmenter,
    x1: &Sample,
    x2: &Sample,
    rng: &mut RngStream,
    cfg: &CombinatorConfig,
    policy: &TransformPolicy,
) -> Result<(Sample, MixPlan)> {
    if aug.is_mixing() {
        x1.check_compatible(x2)?;
    }
    match aug {
        Augmenter::Randms => rand_ms_augment(x1, x2, rng, cfg, policy),
        Augmenter::RandmsMinus => rand_ms_minus(x1, x2, rng, cfg, policy),
        Augmenter::Identity => run_branch(Branch::Identity, x1, x2, rng, cfg, policy),
        Augmenter::Basic => run_branch(Branch::Basic, x1, x2, rng, cfg, policy),
        Augmenter::Mixup => run_branch(Branch::Mixup, x1, x2, rng, cfg, policy),
        Augmenter::Cutmix => run_branch(Branch::Cutmix, x1, x2, rng, cfg, policy),
        Augmenter::Resizemix => run_branch(Branch::Resizemix, x1, x2, rng, cfg, policy),
        Augmenter::PresetRandaugment => {
            run_branch(Branch::PresetRandaugment, x1, x2, rng, cfg, policy)
        }
        Augmenter::FtRp => run_branch(Branch::FtRp, x1, x2, rng, cfg, policy),
        Augmenter::FtIp => run_branch(Branch::FtIp, x1, x2, rng, cfg, policy),
        Augmenter::IpRp => run_branch(Branch::IpRp, x1, x2, rng, cfg, policy),
        Augmenter::IpRpAlt => run_branch(Branch::IpRpAlt, x1, x2, rng, cfg, policy),
    }
}

/// Draws the component pair according to `cfg.variant` and runs its branch.
pub fn rand_ms_augment(
    x1: &Sample,
    x2: &Sample,
    rng: &mut RngStream,
    cfg: &CombinatorConfig,
    policy: &TransformPolicy,
) -> Result<(Sample, MixPlan)> {
    let branch = draw_branch(&mut rng.child(tags::PAIR), cfg, cfg.variant)?;
    run_branch(branch, x1, x2, &mut rng.child(tags::BRANCH), cfg, policy)
}

/// The reduced variant: `[FT, RP]` or `[FT, IP]` with equal probability.
pub fn rand_ms_minus(
    x1: &Sample,
    x2: &Sample,
    rng: &mut RngStream,
    cfg: &CombinatorConfig,
    policy: &TransformPolicy,
) -> Result<(Sample, MixPlan)> {
    let branch = draw_branch(&mut rng.child(tags::PAIR), cfg, Variant::Minus)?;
    run_branch(branch, x1, x2, &mut rng.child(tags::BRANCH), cfg, policy)
}

/// Interp, then per-image coins between the interpolated image and the original,
/// then ReszPst of the two selections.
pub fn alternate_ip_rp(
    x1: &Sample,
    x2: &Sample,
    rng: &mut RngStream,
    cfg: &CombinatorConfig,
    policy: &TransformPolicy,
) -> Result<(Sample, MixPlan)> {
    run_branch(Branch::IpRpAlt, x1, x2, rng, cfg, policy)
}

/// Draws which branch a combinator variant executes.
pub fn draw_branch(rng: &mut RngStream, cfg: &CombinatorConfig, variant: Variant) -> Result<Branch> {
    let ip_rp = match variant {
        Variant::AlternateIpRp => Branch::IpRpAlt,
        _ => Branch::IpRp,
    };
    if variant == Variant::Minus {
        return Ok(match cfg.pair_weights {
            Some(w) => [Branch::FtIp, Branch::FtRp][rng.weighted_index(&w[..2])?],
            None if rng.coin() => Branch::FtRp,
            None => Branch::FtIp,
        });
    }
    if let Some(w) = cfg.pair_weights {
        return Ok([Branch::FtIp, Branch::FtRp, ip_rp][rng.weighted_index(&w)?]);
    }
    // components: 0 = FeatXform, 1 = Interp, 2 = ReszPst
    let mut pair = rng.choose_k(3, 2)?;
    pair.sort_unstable();
    Ok(match (pair[0], pair[1]) {
        (0, 1) => Branch::FtIp,
        (0, 2) => Branch::FtRp,
        _ => ip_rp,
    })
}

pub fn run_branch(
    branch: Branch,
    x1: &Sample,
    x2: &Sample,
    rng: &mut RngStream,
    cfg: &CombinatorConfig,
    policy: &TransformPolicy,
) -> Result<(Sample, MixPlan)> {
    run_branch_with(branch, x1, x2, rng, cfg, policy, Forced::default())
}

/// [`run_branch`] with optionally pinned `lambda` / `lambda_s`. Pinned values are not drawn,
/// so the remaining draws shift relative to an unforced run.
pub fn run_branch_with(
    branch: Branch,
    x1: &Sample,
    x2: &Sample,
    rng: &mut RngStream,
    cfg: &CombinatorConfig,
    policy: &TransformPolicy,
    forced: Forced,
) -> Result<(Sample, MixPlan)> {
    let mut plan = MixPlan::new(branch);
    let lambda = |rng: &mut RngStream| -> Result<f64> {
        match forced.lambda {
            Some(l) => Ok(l),
            None => match cfg.interp_lambda {
                InterpLambdaMode::Beta => rng.beta(cfg.alpha),
                InterpLambdaMode::Uniform => rng.uniform(0.0, 1.0),
            },
        }
    };
    let paste_fraction = |rng: &mut RngStream| -> Result<f64> {
        match forced.lambda_s {
            Some(l) => Ok(l),
            None => sample_resize_fraction(rng, cfg.resize_range, cfg.resize_range_mode),
        }
    };

    let out = match branch {
        Branch::Identity => x1.clone(),
        Branch::Basic => {
            let (out, params) = basic(x1, rng, cfg.basic_pad)?;
            plan.coins.flip = Some(params.flip);
            plan.crop = Some(params.crop);
            out
        }
        Branch::Mixup => {
            let l = lambda(rng)?;
            plan.lambda = Some(l);
            interp(x1, x2, l)?
        }
        Branch::Cutmix => {
            let (out, mask, l) = cutmix(x1, x2, rng, cfg.alpha)?;
            plan.lambda = Some(l);
            plan.mask = Some(mask);
            out
        }
        Branch::Resizemix => {
            let ls = paste_fraction(rng)?;
            let (out, mask) = resize_paste(x1, x2, ls, rng)?;
            plan.lambda_s = Some(ls);
            plan.mask = Some(mask);
            out
        }
        Branch::PresetRandaugment => {
            let (image, specs) = feat_xform(&x1.image, rng, policy, None)?;
            plan.specs1 = Some(specs);
            Sample::new(image, x1.label.clone(), x1.source_id)
        }
        Branch::FtIp => {
            let (img1, specs) = feat_xform(&x1.image, rng, policy, None)?;
            let (img2, _) = feat_xform(&x2.image, rng, policy, Some(&specs))?;
            let l = lambda(rng)?;
            let out = interp(
                &Sample::new(img1, x1.label.clone(), x1.source_id),
                &Sample::new(img2, x2.label.clone(), x2.source_id),
                l,
            )?;
            plan.lambda = Some(l);
            plan.specs1 = Some(specs.clone());
            plan.specs2 = Some(specs);
            out
        }
        Branch::FtRp => {
            let (img1, specs1) = feat_xform(&x1.image, rng, policy, None)?;
            let keep1 = rng.coin();
            let (img2, specs2) = feat_xform(&x2.image, rng, policy, None)?;
            let keep2 = rng.coin();
            let pick = |keep: bool, img, x: &Sample| {
                if keep {
                    Sample::new(img, x.label.clone(), x.source_id)
                } else {
                    x.clone()
                }
            };
            let s1 = pick(keep1, img1, x1);
            let s2 = pick(keep2, img2, x2);
            let ls = paste_fraction(rng)?;
            let (out, mask) = resize_paste(&s1, &s2, ls, rng)?;
            plan.specs1 = Some(specs1);
            plan.specs2 = Some(specs2);
            plan.coins.use_transformed = Some([keep1, keep2]);
            plan.lambda_s = Some(ls);
            plan.mask = Some(mask);
            out
        }
        Branch::IpRp => {
            let l = lambda(rng)?;
            let mixed = interp(x1, x2, l)?;
            let ls = match forced.lambda_s {
                Some(ls) => ls,
                None => match cfg.ip_rp_lambda_s_mode {
                    IpRpLambdaMode::Uniform01 => rng.uniform_open(0.0, 1.0)?,
                    IpRpLambdaMode::ResizeRange => {
                        sample_resize_fraction(rng, cfg.resize_range, cfg.resize_range_mode)?
                    }
                },
            };
            // ties go to pasting x1 into the interpolated image
            let interp_pasted = ls > 0.5;
            let (out, mask) = if interp_pasted {
                resize_paste(&mixed, x2, ls, rng)?
            } else {
                resize_paste(x1, &mixed, ls, rng)?
            };
            plan.lambda = Some(l);
            plan.lambda_s = Some(ls);
            plan.mask = Some(mask);
            plan.coins.interp_pasted = Some(interp_pasted);
            out
        }
        Branch::IpRpAlt => {
            let l = lambda(rng)?;
            let mixed = interp(x1, x2, l)?;
            let use1 = rng.coin();
            let use2 = rng.coin();
            let s1 = if use1 { &mixed } else { x1 };
            let s2 = if use2 { &mixed } else { x2 };
            let ls = paste_fraction(rng)?;
            let (out, mask) = resize_paste(s1, s2, ls, rng)?;
            plan.lambda = Some(l);
            plan.lambda_s = Some(ls);
            plan.mask = Some(mask);
            plan.coins.use_interp = Some([use1, use2]);
            out
        }
    };
    Ok((out, plan))
}

/// Re-executes a recorded plan without any randomness.
pub fn replay(plan: &MixPlan, x1: &Sample, x2: &Sample, cfg: &CombinatorConfig) -> Result<Sample> {
    plan.validate()?;
    let missing = || Error::arg(format!("incomplete plan for branch {}", plan.branch.name()));
    let lambda = || plan.lambda.ok_or_else(missing);
    let mask = || plan.mask.ok_or_else(missing);
    let specs = |s: &Option<Vec<TransformSpec>>| s.clone().ok_or_else(missing);
    let transformed = |x: &Sample, specs: &[TransformSpec]| -> Result<Sample> {
        Ok(Sample::new(apply_sequence(&x.image, specs)?, x.label.clone(), x.source_id))
    };
    match plan.branch {
        Branch::Identity => Ok(x1.clone()),
        Branch::Basic => {
            let params = BasicParams {
                flip: plan.coins.flip.ok_or_else(missing)?,
                crop: plan.crop.ok_or_else(missing)?,
            };
            basic_at(x1, &params, cfg.basic_pad)
        }
        Branch::Mixup => interp(x1, x2, lambda()?),
        Branch::Cutmix => cutmix_at(x1, x2, &mask()?),
        Branch::Resizemix => resize_paste_at(x1, x2, &mask()?),
        Branch::PresetRandaugment => transformed(x1, &specs(&plan.specs1)?),
        Branch::FtIp => interp(
            &transformed(x1, &specs(&plan.specs1)?)?,
            &transformed(x2, &specs(&plan.specs2)?)?,
            lambda()?,
        ),
        Branch::FtRp => {
            let [keep1, keep2] = plan.coins.use_transformed.ok_or_else(missing)?;
            let s1 = if keep1 { transformed(x1, &specs(&plan.specs1)?)? } else { x1.clone() };
            let s2 = if keep2 { transformed(x2, &specs(&plan.specs2)?)? } else { x2.clone() };
            resize_paste_at(&s1, &s2, &mask()?)
        }
        Branch::IpRp => {
            let mixed = interp(x1, x2, lambda()?)?;
            if plan.coins.interp_pasted.ok_or_else(missing)? {
                resize_paste_at(&mixed, x2, &mask()?)
            } else {
                resize_paste_at(x1, &mixed, &mask()?)
            }
        }
        Branch::IpRpAlt => {
            let mixed = interp(x1, x2, lambda()?)?;
            let [use1, use2] = plan.coins.use_interp.ok_or_else(missing)?;
            let s1 = if use1 { &mixed } else { x1 };
            let s2 = if use2 { &mixed } else { x2 };
            resize_paste_at(s1, s2, &mask()?)
        }
    }
}

/// Warmup curriculum: `warmup_aug` for the first `warmup_iters` iterations, then `main_aug`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleConfig {
    pub warmup_iters: u64,
    pub warmup_aug: Augmenter,
    pub main_aug: Augmenter,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            warmup_iters: 10_000,
            warmup_aug: Augmenter::Basic,
            main_aug: Augmenter::Cutmix,
        }
    }
}

pub fn curriculum_schedule(iter: u64, cfg: &ScheduleConfig) -> Augmenter {
    if iter < cfg.warmup_iters {
        cfg.warmup_aug
    } else {
        cfg.main_aug
    }
}
