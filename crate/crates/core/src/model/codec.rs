use rand::Rng;

use super::blocks::ResnetBlock1d;
use crate::error::{Error, Result};
use crate::nn::{Bound, Builder, Conv1d, ConvTranspose1d, GroupNorm};
use crate::tensor::Tensor;

/// Splits a patch factor into per-stage prime factors, largest first.
pub fn stage_factors(mut patch: usize) -> Vec<usize> {
    let mut out = vec![];
    let mut f = 2;
    while patch > 1 {
        while patch % f == 0 {
            out.push(f);
            patch /= f;
        }
        f += 1;
    }
    out.reverse();
    out
}

/// Strided conv that divides the length by `f` exactly when `f` divides it.
pub fn downsample<R: Rng>(bd: &mut Builder<'_, R>, name: &str, inp: usize, out: usize, f: usize) -> Conv1d {
    Conv1d::new(bd, name, inp, out, 2 * f + 1, f, f, false)
}

/// Transposed conv that multiplies the length by `f` exactly.
pub fn upsample<R: Rng>(bd: &mut Builder<'_, R>, name: &str, inp: usize, out: usize, f: usize) -> ConvTranspose1d {
    let pad = f.div_ceil(2);
    ConvTranspose1d::new(bd, name, inp, out, f + 2 * pad, f, pad)
}

/// Waveform ↔ latent autoencoder. No block here sees the conditioning.
#[derive(Debug, Clone)]
pub struct Codec {
    pub enc_in: Conv1d,
    pub enc_stages: Vec<(ResnetBlock1d, Conv1d)>,
    pub enc_out: Conv1d,
    pub dec_in: Conv1d,
    pub dec_stages: Vec<(ConvTranspose1d, ResnetBlock1d)>,
    pub dec_norm: GroupNorm,
    pub dec_out: Conv1d,
    pub patch: usize,
}

impl Codec {
    pub fn new<R: Rng>(bd: &mut Builder<'_, R>, audio_channels: usize, channels: usize, latent_channels: usize, patch: usize) -> Self {
        let factors = stage_factors(patch);
        bd.scope("codec", |bd| Codec {
            enc_in: Conv1d::new(bd, "enc_in", audio_channels, channels, 3, 1, 1, false),
            enc_stages: factors
                .iter()
                .enumerate()
                .map(|(i, &f)| {
                    (
                        ResnetBlock1d::new(bd, &format!("enc{i}.block"), channels, channels, None),
                        downsample(bd, &format!("enc{i}.down"), channels, channels, f),
                    )
                })
                .collect(),
            enc_out: Conv1d::new(bd, "enc_out", channels, latent_channels, 3, 1, 1, false),
            dec_in: Conv1d::new(bd, "dec_in", latent_channels, channels, 3, 1, 1, false),
            dec_stages: factors
                .iter()
                .rev()
                .enumerate()
                .map(|(i, &f)| {
                    (
                        upsample(bd, &format!("dec{i}.up"), channels, channels, f),
                        ResnetBlock1d::new(bd, &format!("dec{i}.block"), channels, channels, None),
                    )
                })
                .collect(),
            dec_norm: GroupNorm::new(bd, "dec_norm", channels),
            dec_out: Conv1d::new(bd, "dec_out", channels, audio_channels, 3, 1, 1, false),
            patch,
        })
    }

    /// `[B, A, L]` → unscaled latents `[B, Z, L / patch]`.
    pub fn encode(&self, p: &Bound, x: &Tensor) -> Result<Tensor> {
        let len = x.shape()[2];
        if len == 0 {
            return Err(Error::InputTooShort {
                what: "codec input samples",
                need: self.patch,
                got: 0,
            });
        }
        if len % self.patch != 0 {
            return Err(Error::Config(format!(
                "codec input length {len} is not a multiple of the patch factor {}",
                self.patch
            )));
        }
        let mut h = self.enc_in.forward(p, x)?;
        for (block, down) in &self.enc_stages {
            h = down.forward(p, &block.forward(p, &h, None)?)?;
        }
        self.enc_out.forward(p, &h)
    }

    /// Unscaled latents `[B, Z, N]` → `[B, A, N * patch]`.
    pub fn decode(&self, p: &Bound, z: &Tensor) -> Result<Tensor> {
        let mut h = self.dec_in.forward(p, z)?;
        for (up, block) in &self.dec_stages {
            h = block.forward(p, &up.forward(p, &h)?, None)?;
        }
        self.dec_out.forward(p, &self.dec_norm.forward(p, &h)?.silu())
    }
}
