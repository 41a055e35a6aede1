//! Run configuration: one JSON document for a complete training/evaluation run.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::augmentation::AugmentConfig;
use crate::error::{Error, Result};
use crate::geometry::DEFAULT_CUBE_SIZE;
use crate::localization::DEFAULT_SEGMENT_EXTENT;
use crate::nn::{AdamConfig, ArchPreset, NetScale, TrainConfig, DEFAULT_PRIOR_DIM};
use crate::prior::DESK_ROBUST_PRIOR_SAMPLES;

/// Threshold grid for the fraction-of-frames curves, mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalGrid {
    pub max_mm: f64,
    pub step_mm: f64,
}

impl Default for EvalGrid {
    fn default() -> Self {
        Self { max_mm: 80.0, step_mm: 1.0 }
    }
}

impl EvalGrid {
    /// `0, step, 2·step, …` up to and including `max_mm`.
    pub fn thresholds(&self) -> Result<Vec<f64>> {
        if !(self.step_mm > 0.0) || !(self.max_mm >= 0.0) || !self.max_mm.is_finite() {
            return Err(Error::Config("threshold grid needs a positive step and a finite maximum".into()));
        }
        let n = (self.max_mm / self.step_mm + 1e-9).floor() as usize;
        Ok((0..=n).map(|i| i as f64 * self.step_mm).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub scale: NetScale,
    pub architecture: ArchPreset,
    pub prior_dim: usize,
    pub freeze_prior: bool,
    /// Fit the prior on pose-only augmented samples.
    pub prior_augmentation: bool,
    pub prior_samples: usize,
    pub cube_size: f64,
    pub segment_extent: f64,
    pub augmentation: AugmentConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdamConfig,
    pub evaluation: EvalGrid,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            scale: NetScale::Desk,
            architecture: ArchPreset::ResNet,
            prior_dim: DEFAULT_PRIOR_DIM,
            freeze_prior: false,
            prior_augmentation: true,
            prior_samples: DESK_ROBUST_PRIOR_SAMPLES,
            cube_size: DEFAULT_CUBE_SIZE,
            segment_extent: DEFAULT_SEGMENT_EXTENT,
            augmentation: AugmentConfig::default(),
            epochs: 100,
            batch_size: 16,
            optimizer: AdamConfig::default(),
            evaluation: EvalGrid::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_slice(&fs::read(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.augmentation.validate()?;
        self.evaluation.thresholds()?;
        if self.prior_dim == 0 {
            return Err(Error::Config("prior dimension must be positive".into()));
        }
        if !(self.cube_size > 0.0) || !(self.segment_extent > 0.0) {
            return Err(Error::Config("cube size and segmentation extent must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { epochs: self.epochs, batch_size: self.batch_size, adam: self.optimizer, seed: self.seed }
    }

    /// Augmentation settings with the run seed folded in.
    pub fn augment_config(&self) -> AugmentConfig {
        AugmentConfig { seed: self.seed, ..self.augmentation }
    }

    /// CRC-32 of the canonical JSON encoding, as eight hex digits.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        format!("{:08x}", crc32fast::hash(&json))
    }
}
