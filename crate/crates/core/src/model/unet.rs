use rand::Rng;

use super::blocks::{CrossAttention, ResnetBlock1d, TimeAlignment};
use super::codec::{downsample, upsample};
use crate::conditioning::CondBatch;
use crate::error::{Error, Result};
use crate::nn::{sinusoidal_embedding, Bound, Builder, Conv1d, ConvTranspose1d, GroupNorm, Linear, Tier};
use crate::tensor::{concat, Tensor};

/// c_noise is multiplied by this before the sinusoidal embedding so its
/// working range (about −3..1) spans many periods of the fast channels.
const NOISE_EMBED_GAIN: f64 = 100.0;
const NOISE_EMBED_PERIOD: f64 = 10000.0;

/// A residual block followed by its cross-attention site.
#[derive(Debug, Clone)]
pub struct UnetBlock {
    pub res: ResnetBlock1d,
    pub attn: CrossAttention,
}

impl UnetBlock {
    fn new<R: Rng>(bd: &mut Builder<'_, R>, name: &str, inp: usize, out: usize, spec: &UnetSpec) -> Self {
        bd.scope(name, |bd| UnetBlock {
            res: ResnetBlock1d::new(bd, "res", inp, out, Some(spec.emb_width)),
            attn: bd.with_tier(Tier::Fresh, |bd| CrossAttention::new(bd, "xattn", out, spec.cond_width, spec.heads)),
        })
    }

    fn forward(&self, p: &Bound, x: &Tensor, ctx: &Ctx<'_>, level: usize) -> Result<Tensor> {
        let h = self.res.forward(p, x, Some(ctx.emb))?;
        self.attn
            .forward(p, &h, ctx.cond, ctx.seconds_per_step[level], ctx.align)
    }
}

/// Structural settings of a U-Net.
#[derive(Debug, Clone, PartialEq)]
pub struct UnetSpec {
    pub latent_channels: usize,
    pub channels: usize,
    pub multipliers: Vec<usize>,
    pub factors: Vec<usize>,
    pub num_blocks: Vec<usize>,
    pub heads: usize,
    pub cond_width: usize,
    pub emb_width: usize,
}

struct Ctx<'a> {
    emb: &'a Tensor,
    cond: &'a CondBatch,
    align: Option<&'a TimeAlignment>,
    seconds_per_step: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct UNet {
    pub spec: UnetSpec,
    pub in_conv: Conv1d,
    pub emb1: Linear,
    pub emb2: Linear,
    pub down: Vec<(Vec<UnetBlock>, Conv1d)>,
    pub mid: UnetBlock,
    pub up: Vec<(ConvTranspose1d, Vec<UnetBlock>)>,
    pub out_norm: GroupNorm,
    pub out_conv: Conv1d,
}

impl UNet {
    pub fn new<R: Rng>(bd: &mut Builder<'_, R>, spec: UnetSpec) -> Self {
        let widths: Vec<usize> = spec.multipliers.iter().map(|m| spec.channels * m).collect();
        let ch = |i: usize| widths[i];
        let levels = spec.factors.len();
        bd.scope("unet", |bd| {
            let in_conv = Conv1d::new(bd, "in_conv", spec.latent_channels, ch(0), 3, 1, 1, false);
            let emb1 = Linear::new(bd, "emb1", spec.emb_width, spec.emb_width, false);
            let emb2 = Linear::new(bd, "emb2", spec.emb_width, spec.emb_width, false);
            let down = (0..levels)
                .map(|i| {
                    let blocks = (0..spec.num_blocks[i])
                        .map(|j| UnetBlock::new(bd, &format!("down{i}.block{j}"), ch(i), ch(i), &spec))
                        .collect();
                    (blocks, downsample(bd, &format!("down{i}.down"), ch(i), ch(i + 1), spec.factors[i]))
                })
                .collect();
            let mid = UnetBlock::new(bd, "mid", ch(levels), ch(levels), &spec);
            let up = (0..levels)
                .rev()
                .map(|i| {
                    let upconv = upsample(bd, &format!("up{i}.up"), ch(i + 1), ch(i), spec.factors[i]);
                    let blocks = (0..spec.num_blocks[i])
                        .map(|j| {
                            let inp = if j == 0 { 2 * ch(i) } else { ch(i) };
                            UnetBlock::new(bd, &format!("up{i}.block{j}"), inp, ch(i), &spec)
                        })
                        .collect();
                    (upconv, blocks)
                })
                .collect();
            UNet {
                in_conv,
                emb1,
                emb2,
                down,
                mid,
                up,
                out_norm: GroupNorm::new(bd, "out_norm", ch(0)),
                out_conv: Conv1d::new(bd, "out_conv", ch(0), spec.latent_channels, 3, 1, 1, true),
                spec,
            }
        })
    }

    /// Product of the per-level factors; latent lengths must be multiples.
    pub fn divisor(&self) -> usize {
        self.spec.factors.iter().product()
    }

    /// Every residual block on the down, bottleneck and up paths.
    pub fn blocks(&self) -> Vec<&UnetBlock> {
        let mut out: Vec<&UnetBlock> = self.down.iter().flat_map(|(b, _)| b).collect();
        out.push(&self.mid);
        out.extend(self.up.iter().flat_map(|(_, b)| b));
        out
    }

    /// σ embedding `[B, E]` after the MLP and final activation.
    pub fn noise_embedding(&self, p: &Bound, c_noise: &[f64]) -> Result<Tensor> {
        let scaled: Vec<f64> = c_noise.iter().map(|c| c * NOISE_EMBED_GAIN).collect();
        let e = sinusoidal_embedding(&scaled, self.spec.emb_width, NOISE_EMBED_PERIOD);
        let e = self.emb1.forward(p, &e)?.silu();
        Ok(self.emb2.forward(p, &e)?.silu())
    }

    /// `x` is `[B, Z, N]` with N divisible by [`UNet::divisor`]. The first
    /// level's step is `latent_seconds` per latent frame.
    pub fn forward(
        &self,
        p: &Bound,
        x: &Tensor,
        c_noise: &[f64],
        cond: &CondBatch,
        latent_seconds: f64,
        align: Option<&TimeAlignment>,
    ) -> Result<Tensor> {
        if x.rank() != 3 || x.shape()[1] != self.spec.latent_channels {
            return Err(Error::dim("unet input", x.shape(), &[0, self.spec.latent_channels, 0]));
        }
        let n = x.shape()[2];
        if n == 0 || n % self.divisor() != 0 {
            return Err(Error::Config(format!(
                "latent length {n} must be a positive multiple of {} (the product of the U-Net factors)",
                self.divisor()
            )));
        }
        if c_noise.len() != x.shape()[0] {
            return Err(Error::dim("unet noise levels", &[c_noise.len()], x.shape()));
        }
        let emb = self.noise_embedding(p, c_noise)?;
        let mut seconds_per_step = vec![latent_seconds];
        for f in &self.spec.factors {
            seconds_per_step.push(seconds_per_step.last().unwrap() * *f as f64);
        }
        let ctx = Ctx {
            emb: &emb,
            cond,
            align,
            seconds_per_step,
        };
        let mut h = self.in_conv.forward(p, x)?;
        let mut skips = vec![];
        for (level, (blocks, down)) in self.down.iter().enumerate() {
            for b in blocks {
                h = b.forward(p, &h, &ctx, level)?;
            }
            skips.push(h.clone());
            h = down.forward(p, &h)?;
        }
        h = self.mid.forward(p, &h, &ctx, self.down.len())?;
        for (k, (upconv, blocks)) in self.up.iter().enumerate() {
            let level = self.down.len() - 1 - k;
            h = upconv.forward(p, &h)?;
            let skip = skips.pop().expect("one skip per level");
            h = concat(&[&h, &skip], 1)?;
            for b in blocks {
                h = b.forward(p, &h, &ctx, level)?;
            }
        }
        self.out_conv.forward(p, &self.out_norm.forward(p, &h)?.silu())
    }
}
