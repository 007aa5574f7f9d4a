//! Optimizer, schedules, the synthetic corpus and the two-phase trainer.

pub mod optim;
pub mod synth;
pub mod trainer;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use optim::{adamw_update, clip_gradients, global_norm, AdamW, AdamWConfig, GroupRates};
pub use synth::{make_synthetic_corpus, pose_features, SynthConfig, SyntheticSample};
pub use trainer::{
    calibrate_latent_scale, codec_relative_l2, draw_dropout, moving_average, prepare_audio, train, LossRecord, TrainExample,
    TrainOutputs, TrainReport,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Augment {
    None,
    /// Multiply each clip by a gain drawn from `augment_gain_range`.
    Gain,
    /// Add a constant drawn from `augment_dc_range` to each clip.
    DcOffset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    /// Post-warm-up rate of the backbone (pretrained tier).
    pub lr_pretrained: f64,
    /// Post-warm-up rate of the conditioning encoders and cross-attention.
    pub lr_fresh: f64,
    pub warmup_lr: f64,
    pub warmup_iters: usize,
    /// Give the backbone the fresh-tier rate after warm-up. Meant for models
    /// whose backbone was not pretrained.
    pub alias_tiers: bool,
    pub grad_clip_max_norm: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Diffusion steps; when unset, `epochs` passes over the corpus.
    pub steps: Option<usize>,
    pub cond_dropout: f64,
    /// Drop conditioning per clip instead of per batch.
    pub per_sample_dropout: bool,
    /// Clips are peak-normalized and then multiplied by this.
    pub normalization_factor: f64,
    pub augment: Augment,
    pub augment_gain_range: [f64; 2],
    pub augment_dc_range: [f64; 2],
    /// Reconstruction steps of the codec phase.
    pub codec_steps: usize,
    pub codec_lr: f64,
    pub checkpoint_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            beta1: 0.9,
            beta2: 0.96,
            weight_decay: 4.5e-2,
            lr_pretrained: 3e-6,
            lr_fresh: 3e-3,
            warmup_lr: 2e-4,
            warmup_iters: 1000,
            alias_tiers: false,
            grad_clip_max_norm: 0.5,
            batch_size: 10,
            epochs: 100,
            steps: None,
            cond_dropout: 0.1,
            per_sample_dropout: false,
            normalization_factor: 0.95,
            augment: Augment::Gain,
            augment_gain_range: [0.8, 1.1],
            augment_dc_range: [-0.05, 0.05],
            codec_steps: 500,
            codec_lr: 2e-3,
            checkpoint_every: 500,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Step-counted settings for the toy model on the synthetic corpus. The
    /// codec and U-Net start from scratch, so both tiers use the fresh rate.
    pub fn toy() -> Self {
        TrainConfig {
            lr_fresh: 1e-3,
            warmup_iters: 100,
            alias_tiers: true,
            batch_size: 8,
            steps: Some(2000),
            codec_steps: 400,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("train: {m}")));
        for (name, v) in [
            ("lr_pretrained", self.lr_pretrained),
            ("lr_fresh", self.lr_fresh),
            ("warmup_lr", self.warmup_lr),
            ("codec_lr", self.codec_lr),
            ("grad_clip_max_norm", self.grad_clip_max_norm),
            ("normalization_factor", self.normalization_factor),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad(format!("betas must lie in [0, 1), got ({}, {})", self.beta1, self.beta2));
        }
        if !(self.weight_decay >= 0.0) {
            return bad(format!("weight_decay must be >= 0, got {}", self.weight_decay));
        }
        if !(0.0..=1.0).contains(&self.cond_dropout) {
            return bad(format!("cond_dropout must lie in [0, 1], got {}", self.cond_dropout));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        let [lo, hi] = self.augment_gain_range;
        if !(lo > 0.0 && lo <= hi) {
            return bad(format!("augment_gain_range must satisfy 0 < lo <= hi, got [{lo}, {hi}]"));
        }
        let [lo, hi] = self.augment_dc_range;
        if !(lo <= hi) {
            return bad(format!("augment_dc_range must satisfy lo <= hi, got [{lo}, {hi}]"));
        }
        Ok(())
    }

    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            weight_decay: self.weight_decay,
            ..AdamWConfig::default()
        }
    }
}

/// Both groups share the warm-up rate for the first `warmup_iters`
/// iterations, then split into the pretrained and fresh rates.
pub fn lr_schedule(iter: usize, cfg: &TrainConfig) -> GroupRates {
    if iter < cfg.warmup_iters {
        GroupRates {
            pretrained: cfg.warmup_lr,
            fresh: cfg.warmup_lr,
        }
    } else {
        GroupRates {
            pretrained: if cfg.alias_tiers { cfg.lr_fresh } else { cfg.lr_pretrained },
            fresh: cfg.lr_fresh,
        }
    }
}
