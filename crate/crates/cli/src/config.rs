//! The single JSON document that drives every command.

use std::fs;
use std::path::Path;

use esvit_core::dataset::SplitSpec;
use esvit_core::image::ImageSpec;
use esvit_core::signal::{BandpassSpec, BaselineSpec, SEGMENT_LEN};
use esvit_core::timefreq::{MorletSpec, WelchSpec};
use esvit_nn::model::ModelConfig;
use esvit_nn::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const CONFIG_ENV: &str = "ESVIT_CONFIG";
pub const CONFIG_FILE: &str = "run_config.json";
pub const VERSION_FILE: &str = "VERSION";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PeakSpec {
    pub relative_threshold: f64,
    /// `None` uses `round(0.4 * fs)`.
    pub min_distance_samples: Option<usize>,
}

impl Default for PeakSpec {
    fn default() -> Self {
        Self {
            relative_threshold: 0.5,
            min_distance_samples: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentSpec {
    pub left: usize,
    pub right: usize,
}

impl Default for SegmentSpec {
    fn default() -> Self {
        Self {
            left: SEGMENT_LEN / 2,
            right: SEGMENT_LEN / 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Model initialisation and train/test split.
    pub seed: u64,
    pub baseline: BaselineSpec,
    pub bandpass: BandpassSpec,
    pub peaks: PeakSpec,
    pub segment: SegmentSpec,
    pub morlet: MorletSpec,
    pub welch: WelchSpec,
    pub image: ImageSpec,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub split: SplitSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        Self {
            seed: 0,
            baseline: BaselineSpec::default(),
            bandpass: BandpassSpec::default(),
            peaks: PeakSpec::default(),
            segment: SegmentSpec::default(),
            morlet: MorletSpec::default(),
            welch: WelchSpec::default(),
            image: ImageSpec::default(),
            model: ModelConfig::desk(train.task.num_classes()),
            train,
            split: SplitSpec::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path`, or returns the defaults when `path` is `None`.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            let cfg = Self::default();
            cfg.validate()?;
            return Ok(cfg);
        };
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::MissingInput(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises") + "\n"
    }

    /// Checks every section and their mutual consistency, reporting all
    /// problems at once with the offending field path.
    pub fn validate(&self) -> Result<()> {
        let mut problems: Vec<String> = Vec::new();
        let mut check = |field: &str, r: std::result::Result<(), String>| {
            if let Err(m) = r {
                problems.push(format!("{field}: {m}"));
            }
        };
        check(
            "baseline",
            self.baseline.validate().map_err(|e| e.to_string()),
        );
        check(
            "bandpass",
            self.bandpass.validate(None).map_err(|e| e.to_string()),
        );
        check(
            "morlet",
            self.morlet.validate(None).map_err(|e| e.to_string()),
        );
        check("welch", self.welch.validate().map_err(|e| e.to_string()));
        check("image", self.image.validate().map_err(|e| e.to_string()));
        check("model", self.model.validate().map_err(|e| e.to_string()));
        check("train", self.train.validate().map_err(|e| e.to_string()));
        check("split", self.split.validate().map_err(|e| e.to_string()));
        let t = self.peaks.relative_threshold;
        check(
            "peaks.relative_threshold",
            (t > 0.0 && t <= 1.0)
                .then_some(())
                .ok_or(format!("must lie in (0, 1], got {t}")),
        );
        check(
            "peaks.min_distance_samples",
            (self.peaks.min_distance_samples != Some(0))
                .then_some(())
                .ok_or("must be at least 1".to_string()),
        );
        let width = self.segment.left + self.segment.right;
        check(
            "segment",
            (width >= 8)
                .then_some(())
                .ok_or(format!("left + right must be at least 8, got {width}")),
        );
        check(
            "image",
            (self.image.height == self.model.image_hw && self.image.width == self.model.image_hw)
                .then_some(())
                .ok_or(format!(
                    "{}x{} images do not match model.image_hw {}",
                    self.image.height, self.image.width, self.model.image_hw
                )),
        );
        check(
            "model.in_channels",
            (self.model.in_channels == 3).then_some(()).ok_or(format!(
                "encoded images have 3 channels, got {}",
                self.model.in_channels
            )),
        );
        let classes = self.train.task.num_classes();
        check(
            "model.num_classes",
            (self.model.num_classes == classes)
                .then_some(())
                .ok_or(format!(
                    "task {:?} has {classes} classes, model has {}",
                    self.train.task, self.model.num_classes
                )),
        );
        if problems.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(problems.join("; ")))
        }
    }
}

pub fn version_stamp() -> String {
    format!("esvit {}\n", env!("CARGO_PKG_VERSION"))
}

/// Creates `dir` and writes the resolved config and version stamp into it.
pub fn stamp_run_dir(dir: &Path, cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    write_file(&dir.join(CONFIG_FILE), cfg.to_json().as_bytes())?;
    write_file(&dir.join(VERSION_FILE), version_stamp().as_bytes())
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}
