//! Engine configuration, loadable from TOML or JSON.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::randms::{Augmenter, CombinatorConfig, ScheduleConfig};
use crate::xforms::TransformPolicy;

/// How partners are chosen for mixing augmenters.
pub const PAIRING_NOTE: &str = "partner drawn uniformly with replacement from the whole manifest, \
independently per sample and iteration (batch composition does not affect pairing)";

/// Intensity convention of everything the engine writes.
pub const INTENSITY_NOTE: &str =
    "intensities in [0,1], no mean/std normalization applied; image files store round(255*v)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    /// One PNG per sample, named `{iter}_{idx}.png`.
    #[default]
    Png,
    /// All images in one `data.bin` using the CIFAR record layout.
    Packed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputSpec {
    pub dir: PathBuf,
    pub format: OutputFormat,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            format: OutputFormat::Png,
        }
    }
}

/// Order in which anchors are visited across iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum AnchorOrder {
    /// A fresh seeded permutation of the manifest per epoch.
    #[default]
    Shuffled,
    /// Manifest order, wrapping around.
    Sequential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    /// Augmenter used on every iteration unless `schedule` is set.
    pub augmenter: Augmenter,
    pub combinator: CombinatorConfig,
    pub policy: TransformPolicy,
    /// When present, picks the augmenter per iteration and overrides `augmenter`.
    pub schedule: Option<ScheduleConfig>,
    pub seed: u64,
    pub batch_size: usize,
    pub iterations: u64,
    pub workers: usize,
    pub anchor_order: AnchorOrder,
    pub output: OutputSpec,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            augmenter: Augmenter::Randms,
            combinator: CombinatorConfig::default(),
            policy: TransformPolicy::default(),
            schedule: None,
            seed: 0,
            batch_size: 64,
            iterations: 100,
            workers: 1,
            anchor_order: AnchorOrder::Shuffled,
            output: OutputSpec::default(),
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        self.combinator.validate()?;
        self.policy.validate()?;
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        Ok(())
    }

    pub fn augmenter_at(&self, iter: u64) -> Augmenter {
        match &self.schedule {
            Some(s) => crate::randms::curriculum_schedule(iter, s),
            None => self.augmenter,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a `.json` file as JSON and anything else as TOML. A config echo written by
    /// the archive writer is also accepted.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            let value: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
            match value.get("engine") {
                Some(engine) => {
                    let cfg: Self = serde_json::from_value(engine.clone())
                        .map_err(|e| Error::Config(e.to_string()))?;
                    cfg.validate()?;
                    Ok(cfg)
                }
                None => Self::from_json_str(&text),
            }
        } else {
            Self::from_toml_str(&text)
        }
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Full configuration with resolved defaults, the op/magnitude table and pairing notes.
    pub fn echo(&self) -> serde_json::Value {
        serde_json::json!({
            "engine": self,
            "op_table": self.policy.ranges,
            "pairing": PAIRING_NOTE,
            "intensities": INTENSITY_NOTE,
            "version": env!("CARGO_PKG_VERSION"),
        })
    }

    /// Parses the `engine` part of a config echo.
    pub fn from_echo(echo: &serde_json::Value) -> Result<Self> {
        let engine = echo
            .get("engine")
            .ok_or_else(|| Error::Config("config echo has no 'engine' entry".into()))?;
        let cfg: Self =
            serde_json::from_value(engine.clone()).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randms::Variant;

    fn custom() -> EngineConfig {
        let mut cfg = EngineConfig {
            augmenter: Augmenter::RandmsMinus,
            seed: 7,
            batch_size: 16,
            iterations: 3,
            workers: 4,
            schedule: Some(ScheduleConfig {
                warmup_iters: 2,
                ..ScheduleConfig::default()
            }),
            ..EngineConfig::default()
        };
        cfg.combinator.variant = Variant::AlternateIpRp;
        cfg.combinator.pair_weights = Some([1.0, 2.0, 0.5]);
        cfg.output.format = OutputFormat::Packed;
        cfg
    }

    #[test]
    fn toml_and_json_round_trip() {
        let cfg = custom();
        assert_eq!(EngineConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap(), cfg);
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(EngineConfig::from_json_str(&json).unwrap(), cfg);
        assert_eq!(EngineConfig::from_echo(&cfg.echo()).unwrap(), cfg);
        let d = EngineConfig::default();
        assert_eq!(EngineConfig::from_toml_str(&d.to_toml_string().unwrap()).unwrap(), d);
    }

    #[test]
    fn partial_files_take_defaults() {
        let cfg = EngineConfig::from_toml_str("augmenter = \"cutmix\"\nseed = 3\n[combinator]\nalpha = 0.2\n").unwrap();
        assert_eq!(cfg.augmenter, Augmenter::Cutmix);
        assert_eq!(cfg.combinator.alpha, 0.2);
        assert_eq!(cfg.combinator.resize_range, (0.2, 0.8));
        assert_eq!(cfg.batch_size, 64);
        assert_eq!(cfg.policy, TransformPolicy::default());
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for text in ["workers = 0", "batch_size = 0", "augmenter = \"warp\"", "[combinator]\nalpha = -1.0"] {
            let err = EngineConfig::from_toml_str(text).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{text}: {err}");
        }
    }

    #[test]
    fn schedule_overrides_augmenter() {
        let cfg = custom();
        assert_eq!(cfg.augmenter_at(1), Augmenter::Basic);
        assert_eq!(cfg.augmenter_at(2), Augmenter::Cutmix);
        let plain = EngineConfig::default();
        assert_eq!(plain.augmenter_at(50_000), Augmenter::Randms);
    }
}
