//! Latent codec and the conditional 1D U-Net denoiser.

pub mod blocks;
pub mod codec;
pub mod unet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conditioning::{CondBatch, Conditioner, ConditioningConfig};
use crate::diffusion::Network;
use crate::error::{Error, Result};
use crate::nn::{Bound, Builder, ParamId, ParamStore, Tier};
use crate::tensor::Tensor;

pub use blocks::{time_encoding, CrossAttention, ResnetBlock1d, TimeAlignment};
pub use codec::{stage_factors, Codec};
pub use unet::{UNet, UnetBlock, UnetSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Waveform sample rate the model operates at.
    pub sample_rate: u32,
    pub audio_channels: usize,
    pub latent_channels: usize,
    pub patch_factor: usize,
    pub codec_channels: usize,
    /// Base U-Net width; level i has `channels * multipliers[i]`.
    pub channels: usize,
    pub multipliers: Vec<usize>,
    pub factors: Vec<usize>,
    pub num_blocks: Vec<usize>,
    pub heads: usize,
    /// Conditioning width C.
    pub cond_width: usize,
    /// Width of the σ embedding.
    pub embed_width: usize,
    pub visual_dim: usize,
    pub lstm_hidden: usize,
    pub genres: usize,
    /// Conditioning time units per second.
    pub time_rate: f64,
    /// Amplitude of the time encoding in cross-attention; 0 disables it.
    pub time_encoding_scale: f64,
    pub time_encoding_period: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::toy()
    }
}

impl ModelConfig {
    /// Small enough to train on one CPU core in minutes.
    pub fn toy() -> Self {
        ModelConfig {
            sample_rate: 256,
            audio_channels: 2,
            latent_channels: 8,
            patch_factor: 4,
            codec_channels: 16,
            channels: 32,
            multipliers: vec![1, 2, 2],
            factors: vec![2, 2],
            num_blocks: vec![1, 1],
            heads: 4,
            cond_width: 64,
            embed_width: 64,
            visual_dim: 34,
            lstm_hidden: 32,
            genres: 3,
            time_rate: 30.0,
            time_encoding_scale: 4.0,
            time_encoding_period: 256.0,
        }
    }

    /// Full-size backbone layout. Constructed and validated, never trained
    /// here.
    pub fn canonical() -> Self {
        ModelConfig {
            sample_rate: 22050,
            audio_channels: 2,
            latent_channels: 32,
            patch_factor: 32,
            codec_channels: 64,
            channels: 128,
            multipliers: vec![1, 2, 4, 4, 4, 4, 4],
            factors: vec![4, 4, 4, 2, 2, 2],
            num_blocks: vec![2, 2, 2, 2, 2, 2],
            heads: 16,
            cond_width: 1024,
            embed_width: 256,
            visual_dim: 1024,
            lstm_hidden: 512,
            genres: 10,
            time_rate: 30.0,
            time_encoding_scale: 4.0,
            time_encoding_period: 256.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let levels = self.factors.len();
        if levels == 0 {
            return bad("the U-Net needs at least one level".into());
        }
        if self.multipliers.len() != levels + 1 || self.num_blocks.len() != levels {
            return bad(format!(
                "inconsistent U-Net lists: {} multipliers, {} factors, {} block counts (need n+1, n, n)",
                self.multipliers.len(),
                levels,
                self.num_blocks.len()
            ));
        }
        if self.factors.iter().chain(&self.multipliers).chain(&self.num_blocks).any(|&v| v == 0) {
            return bad("U-Net factors, multipliers and block counts must be positive".into());
        }
        for (name, v) in [
            ("sample_rate", self.sample_rate as usize),
            ("audio_channels", self.audio_channels),
            ("latent_channels", self.latent_channels),
            ("patch_factor", self.patch_factor),
            ("codec_channels", self.codec_channels),
            ("channels", self.channels),
            ("heads", self.heads),
            ("cond_width", self.cond_width),
            ("embed_width", self.embed_width),
            ("lstm_hidden", self.lstm_hidden),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.cond_width % self.heads != 0 {
            return bad(format!("cond_width {} not divisible by {} heads", self.cond_width, self.heads));
        }
        for m in &self.multipliers {
            if (self.channels * m) % self.heads != 0 {
                return bad(format!(
                    "U-Net width {} not divisible by {} heads",
                    self.channels * m,
                    self.heads
                ));
            }
        }
        if !(self.time_rate > 0.0) || !(self.time_encoding_scale >= 0.0) || !(self.time_encoding_period > 1.0) {
            return bad("time_rate > 0, time_encoding_scale >= 0 and time_encoding_period > 1 are required".into());
        }
        Ok(())
    }

    pub fn conditioning(&self) -> ConditioningConfig {
        ConditioningConfig {
            width: self.cond_width,
            visual_dim: self.visual_dim,
            lstm_hidden: self.lstm_hidden,
            heads: self.heads,
            genres: self.genres,
            time_rate: self.time_rate,
        }
    }

    /// Waveform lengths must be multiples of this.
    pub fn length_multiple(&self) -> usize {
        self.patch_factor * self.factors.iter().product::<usize>()
    }

    /// Latent frames per second.
    pub fn latent_rate(&self) -> f64 {
        self.sample_rate as f64 / self.patch_factor as f64
    }
}

/// The complete network: codec, U-Net and conditioning encoders, with their
/// parameters.
#[derive(Debug, Clone)]
pub struct Model {
    pub cfg: ModelConfig,
    pub store: ParamStore,
    pub codec: Codec,
    pub unet: UNet,
    pub cond: Conditioner,
    /// Multiplies raw codec latents so they have the diffusion data scale.
    pub latent_scale: ParamId,
}

impl Model {
    /// Builds the model with seeded random initialization. Codec and U-Net
    /// backbone weights are in the pretrained tier; conditioning encoders and
    /// cross-attention in the fresh tier.
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut bd = Builder::new(&mut store, &mut rng, Tier::Pretrained);
        let codec = Codec::new(&mut bd, cfg.audio_channels, cfg.codec_channels, cfg.latent_channels, cfg.patch_factor);
        let unet = UNet::new(
            &mut bd,
            UnetSpec {
                latent_channels: cfg.latent_channels,
                channels: cfg.channels,
                multipliers: cfg.multipliers.clone(),
                factors: cfg.factors.clone(),
                num_blocks: cfg.num_blocks.clone(),
                heads: cfg.heads,
                cond_width: cfg.cond_width,
                emb_width: cfg.embed_width,
            },
        );
        let cond = Conditioner::new(&mut bd, cfg.conditioning());
        let latent_scale = bd.with_tier(Tier::Frozen, |bd| bd.constant("latent_scale", &[1], 1.0));
        Ok(Model {
            cfg,
            store,
            codec,
            unet,
            cond,
            latent_scale,
        })
    }

    pub fn num_params(&self) -> usize {
        self.store.num_scalars()
    }

    pub fn alignment(&self) -> Option<TimeAlignment> {
        (self.cfg.time_encoding_scale > 0.0).then_some(TimeAlignment {
            scale: self.cfg.time_encoding_scale,
            max_period: self.cfg.time_encoding_period,
            rate: self.cfg.time_rate,
        })
    }

    /// Waveforms `[B, A, L]` → scaled latents `[B, Z, L / patch]`.
    pub fn encode_audio(&self, p: &Bound, x: &Tensor) -> Result<Tensor> {
        self.codec.encode(p, x)?.mul(p.get(self.latent_scale))
    }

    /// Scaled latents → waveforms.
    pub fn decode_latents(&self, p: &Bound, z: &Tensor) -> Result<Tensor> {
        self.codec.decode(p, &z.div(p.get(self.latent_scale))?)
    }

    /// The U-Net as a diffusion network over these parameters.
    pub fn net<'a>(&'a self, p: &'a Bound) -> ModelNet<'a> {
        ModelNet { model: self, p }
    }
}

pub struct ModelNet<'a> {
    pub model: &'a Model,
    pub p: &'a Bound,
}

impl Network for ModelNet<'_> {
    type Cond = CondBatch;

    fn raw(&self, x_in: &Tensor, c_noise: &[f64], cond: Option<&CondBatch>) -> Result<Tensor> {
        let m = self.model;
        let null;
        let cond = match cond {
            Some(c) => c,
            None => {
                null = m.cond.null_batch(self.p, x_in.shape()[0])?;
                &null
            }
        };
        let align = m.alignment();
        m.unet.forward(
            self.p,
            x_in,
            c_noise,
            cond,
            1.0 / m.cfg.latent_rate(),
            align.as_ref(),
        )
    }
}
