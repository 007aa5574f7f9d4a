use rand::Rng;

use crate::attention::{key_mask_bias, AttnInputs, MultiHeadAttention};
use crate::conditioning::CondBatch;
use crate::error::{Error, Result};
use crate::nn::{Bound, Builder, Conv1d, GroupNorm, LayerNorm, Linear};
use crate::tensor::Tensor;

/// Three GroupNorm → SiLU → conv stages with a residual path. The noise
/// embedding, when present, is projected to a per-channel scale and shift
/// applied after the second norm; an additive term before that norm would be
/// partly or wholly normalized away. The last conv starts at zero so a fresh
/// block reduces to its skip path.
#[derive(Debug, Clone)]
pub struct ResnetBlock1d {
    pub norms: [GroupNorm; 3],
    pub convs: [Conv1d; 3],
    pub emb: Option<Linear>,
    pub skip: Option<Conv1d>,
}

impl ResnetBlock1d {
    pub fn new<R: Rng>(bd: &mut Builder<'_, R>, name: &str, inp: usize, out: usize, emb_width: Option<usize>) -> Self {
        bd.scope(name, |bd| ResnetBlock1d {
            norms: [
                GroupNorm::new(bd, "norm1", inp),
                GroupNorm::new(bd, "norm2", out),
                GroupNorm::new(bd, "norm3", out),
            ],
            convs: [
                Conv1d::new(bd, "conv1", inp, out, 3, 1, 1, false),
                Conv1d::new(bd, "conv2", out, out, 3, 1, 1, false),
                Conv1d::new(bd, "conv3", out, out, 3, 1, 1, true),
            ],
            emb: emb_width.map(|w| Linear::new(bd, "emb", w, 2 * out, false)),
            skip: (inp != out).then(|| Conv1d::new(bd, "skip", inp, out, 1, 1, 0, false)),
        })
    }

    /// `x` is `[B, C_in, L]`; `emb` is `[B, E]` (already activated).
    pub fn forward(&self, p: &Bound, x: &Tensor, emb: Option<&Tensor>) -> Result<Tensor> {
        let h = self.convs[0].forward(p, &self.norms[0].forward(p, x)?.silu())?;
        let mut n = self.norms[1].forward(p, &h)?;
        if let (Some(lin), Some(e)) = (&self.emb, emb) {
            let proj = lin.forward(p, e)?;
            let (b, c) = (proj.shape()[0], proj.shape()[1] / 2);
            let scale = proj.slice(1, 0, c)?.reshape(&[b, c, 1])?;
            let shift = proj.slice(1, c, 2 * c)?.reshape(&[b, c, 1])?;
            n = n.mul(&scale.add_scalar(1.0))?.add(&shift)?;
        }
        let h = self.convs[1].forward(p, &n.silu())?;
        let h = self.convs[2].forward(p, &self.norms[2].forward(p, &h)?.silu())?;
        let res = match &self.skip {
            Some(s) => s.forward(p, x)?,
            None => x.clone(),
        };
        res.add(&h)
    }
}

/// Positional features of times for the cross-attention heads: channel pairs
/// `(sin ω_k t, cos ω_k t)` with `ω_k = max_period^(-2k/d)`, so the dot
/// product of two encodings is `Σ_k cos(ω_k (t₁ − t₂))`.
pub fn time_encoding(times: &[f64], d: usize, max_period: f64) -> Vec<f32> {
    let half = d / 2;
    let mut out = Vec::with_capacity(times.len() * d);
    for &t in times {
        for k in 0..half {
            let w = max_period.powf(-(k as f64) / half as f64);
            out.push((w * t).sin() as f32);
            out.push((w * t).cos() as f32);
        }
        if d % 2 == 1 {
            out.push(0.0);
        }
    }
    out
}

/// Settings shared by every cross-attention site.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeAlignment {
    /// Amplitude α of the time encoding added to queries and keys.
    pub scale: f64,
    pub max_period: f64,
    /// Conditioning time units per second.
    pub rate: f64,
}

/// Cross-modal attention: queries from feature-map positions, keys and
/// values from the serial conditioning sequence, residual add.
#[derive(Debug, Clone)]
pub struct CrossAttention {
    pub norm: LayerNorm,
    pub mha: MultiHeadAttention,
}

impl CrossAttention {
    pub fn new<R: Rng>(bd: &mut Builder<'_, R>, name: &str, channels: usize, cond_width: usize, heads: usize) -> Self {
        bd.scope(name, |bd| CrossAttention {
            norm: LayerNorm::new(bd, "norm", channels),
            mha: MultiHeadAttention::new(bd, "attn", channels, cond_width, channels, heads, true),
        })
    }

    /// Encodings added to queries `[1, L, width]` and keys `[B, S, width]`.
    /// Query `i` sits at `i * seconds_per_step` seconds; keys without a time
    /// get nothing.
    fn time_extras(&self, len: usize, seconds_per_step: f64, cond: &CondBatch, align: &TimeAlignment) -> (Tensor, Tensor) {
        let heads = self.mha.heads;
        let d = self.mha.width / heads;
        let a = align.scale as f32;
        let tile = |enc: &[f32]| -> Vec<f32> {
            let mut v = Vec::with_capacity(enc.len() * heads);
            for row in enc.chunks(d) {
                for _ in 0..heads {
                    v.extend(row.iter().map(|x| a * x));
                }
            }
            v
        };
        let qt: Vec<f64> = (0..len).map(|i| i as f64 * seconds_per_step * align.rate).collect();
        let q = Tensor::new(tile(&time_encoding(&qt, d, align.max_period)), &[1, len, self.mha.width]);
        let kt: Vec<f64> = cond.times.iter().map(|t| t.unwrap_or(0.0) * align.rate).collect();
        let mut enc = time_encoding(&kt, d, align.max_period);
        for (row, t) in enc.chunks_mut(d).zip(&cond.times) {
            if t.is_none() {
                row.fill(0.0);
            }
        }
        let k = Tensor::new(tile(&enc), &[cond.batch(), cond.len(), self.mha.width]);
        (q, k)
    }

    /// `x` is `[B, C, L]`. With `align` unset, no time encoding is used.
    pub fn forward(&self, p: &Bound, x: &Tensor, cond: &CondBatch, seconds_per_step: f64, align: Option<&TimeAlignment>) -> Result<Tensor> {
        let (b, c, l) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        if cond.batch() != b {
            return Err(Error::dim("cross-attention batch", x.shape(), cond.seq.shape()));
        }
        let h = self.norm.forward(p, &x.transpose(1, 2)?)?;
        let bias = key_mask_bias(&cond.valid, b);
        let extras = align.map(|a| self.time_extras(l, seconds_per_step, cond, a));
        let inputs = AttnInputs {
            q_extra: extras.as_ref().map(|e| &e.0),
            k_extra: extras.as_ref().map(|e| &e.1),
            bias: Some(&bias),
        };
        let out = self.mha.forward(p, &h, &cond.seq, &inputs)?;
        debug_assert_eq!(out.shape(), &[b, l, c]);
        x.add(&out.transpose(1, 2)?)
    }
}
