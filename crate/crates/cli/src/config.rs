//! Experiment configuration files (JSON).

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use ssfl_core::data::SyntheticSpec;
use ssfl_core::fl::{FlConfig, StudyCount, Variant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// Gaussian clusters. Generated from the run seed unless `seed` pins it.
    Synthetic {
        classes: usize,
        features: usize,
        per_class: usize,
        #[serde(default = "default_test_per_class")]
        test_per_class: usize,
        spread: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    /// Files with header `f0,...,f{F-1},label`.
    Csv {
        train: PathBuf,
        test: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        num_classes: Option<usize>,
    },
}

fn default_test_per_class() -> usize {
    100
}

impl DatasetConfig {
    pub fn synthetic_spec(&self) -> Option<SyntheticSpec> {
        match *self {
            DatasetConfig::Synthetic {
                classes,
                features,
                per_class,
                test_per_class,
                spread,
                ..
            } => Some(SyntheticSpec {
                classes,
                features,
                per_class,
                test_per_class,
                spread,
            }),
            DatasetConfig::Csv { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("results"),
            formats: vec![Format::Csv, Format::Json],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskStudyConfig {
    /// Minibatch counts to sweep; `"all"` means the whole training set.
    pub counts: Vec<StudyCount>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub fl: FlConfig,
    /// Variants to compare; defaults to `[fl.variant]`.
    #[serde(default)]
    pub variants: Vec<Variant>,
    /// Seeds to run; defaults to `[fl.seed]`.
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub precision: Precision,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_study: Option<MaskStudyConfig>,
}

impl ExperimentConfig {
    /// Reads, parses and validates a config file. Parse errors carry the
    /// file name, line and column. Relative CSV paths are taken relative to
    /// the config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        let mut cfg = Self::parse(&text).with_context(|| format!("{}", path.display()))?;
        if let DatasetConfig::Csv { train, test, .. } = &mut cfg.dataset {
            let base = path.parent().unwrap_or(Path::new(""));
            for p in [train, test] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| {
            anyhow::anyhow!("line {} column {}: {}", e.line(), e.column(), strip_position(&e.to_string()))
        })?;
        let cfg = cfg.resolved();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Fills the variant and seed lists from `fl` when absent.
    pub fn resolved(mut self) -> Self {
        if self.variants.is_empty() {
            self.variants.push(self.fl.variant);
        }
        if self.seeds.is_empty() {
            self.seeds.push(self.fl.seed);
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.fl.validate().map_err(|e| match e {
            ssfl_core::Error::InvalidArgument(msg) => anyhow::anyhow!("fl.{msg}"),
            other => anyhow::anyhow!("fl: {other}"),
        })?;
        if self.variants.is_empty() {
            bail!("variants: must not be empty");
        }
        for (i, v) in self.variants.iter().enumerate() {
            if self.variants[..i].contains(v) {
                bail!("variants: {v} is listed twice");
            }
        }
        if self.seeds.is_empty() {
            bail!("seeds: must not be empty");
        }
        for (i, s) in self.seeds.iter().enumerate() {
            if self.seeds[..i].contains(s) {
                bail!("seeds: {s} is listed twice");
            }
        }
        if self.output.formats.is_empty() {
            bail!("output.formats: must not be empty");
        }
        if self.output.dir.as_os_str().is_empty() {
            bail!("output.dir: must not be empty");
        }
        match &self.dataset {
            DatasetConfig::Synthetic {
                classes,
                features,
                per_class,
                test_per_class,
                spread,
                ..
            } => {
                if *classes < 2 {
                    bail!("dataset.classes: must be at least 2, got {classes}");
                }
                if *features < 2 {
                    bail!("dataset.features: must be at least 2, got {features}");
                }
                if *per_class < 10 {
                    bail!("dataset.per_class: must be at least 10, got {per_class}");
                }
                if *test_per_class == 0 {
                    bail!("dataset.test_per_class: must be at least 1");
                }
                if !(spread.is_finite() && *spread >= 0.0) {
                    bail!("dataset.spread: must be finite and non-negative, got {spread}");
                }
                if let Some(ood) = &self.fl.ood {
                    if let Some(c) = ood.holdout_classes.iter().find(|&&c| c >= *classes) {
                        bail!("fl.ood.holdout_classes: class {c} is out of range for {classes} classes");
                    }
                }
            }
            DatasetConfig::Csv { num_classes, .. } => {
                if *num_classes == Some(0) {
                    bail!("dataset.num_classes: must be positive");
                }
            }
        }
        if let Some(study) = &self.mask_study {
            if study.counts.is_empty() {
                bail!("mask_study.counts: must not be empty");
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }
}

fn strip_position(msg: &str) -> String {
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg.to_string(),
    }
}
