//! Multi-head scaled dot-product attention.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{Bound, Builder, Linear};
use crate::tensor::Tensor;

/// Added to masked logits; large enough that exp underflows to exactly 0.
pub const MASKED: f32 = -1e9;

#[derive(Debug, Clone, Copy)]
pub struct MultiHeadAttention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub heads: usize,
    pub width: usize,
}

/// Optional extras for one attention call.
#[derive(Default)]
pub struct AttnInputs<'a> {
    /// Added to the projected queries, `[B|1, Lq, width]`.
    pub q_extra: Option<&'a Tensor>,
    /// Added to the projected keys, `[B|1, Lk, width]`.
    pub k_extra: Option<&'a Tensor>,
    /// Added to the logits, `[B|1, 1, Lq, Lk]`.
    pub bias: Option<&'a Tensor>,
}

impl MultiHeadAttention {
    /// `zero_out` zero-initializes the output projection so the block starts
    /// as an identity inside a residual connection.
    pub fn new<R: Rng>(bd: &mut Builder<'_, R>, name: &str, q_in: usize, kv_in: usize, width: usize, heads: usize, zero_out: bool) -> Self {
        assert!(width % heads == 0, "attention width {width} not divisible by {heads} heads");
        bd.scope(name, |bd| MultiHeadAttention {
            q: Linear::without_bias(bd, "q", q_in, width),
            k: Linear::without_bias(bd, "k", kv_in, width),
            v: Linear::without_bias(bd, "v", kv_in, width),
            o: Linear::new(bd, "o", width, q_in, zero_out),
            heads,
            width,
        })
    }

    fn split_heads(&self, x: &Tensor) -> Result<Tensor> {
        let (b, l) = (x.shape()[0], x.shape()[1]);
        x.reshape(&[b, l, self.heads, self.width / self.heads])?
            .permute(&[0, 2, 1, 3])
    }

    /// Attention output before the output projection, `[B, Lq, width]`.
    pub fn attend(&self, p: &Bound, x_q: &Tensor, x_kv: &Tensor, extra: &AttnInputs<'_>) -> Result<Tensor> {
        if x_q.rank() != 3 || x_kv.rank() != 3 || x_q.shape()[0] != x_kv.shape()[0] {
            return Err(Error::dim("attention", x_q.shape(), x_kv.shape()));
        }
        let (b, lq) = (x_q.shape()[0], x_q.shape()[1]);
        let mut q = self.q.forward(p, x_q)?;
        let mut k = self.k.forward(p, x_kv)?;
        let v = self.v.forward(p, x_kv)?;
        if let Some(e) = extra.q_extra {
            q = q.add(e)?;
        }
        if let Some(e) = extra.k_extra {
            k = k.add(e)?;
        }
        let d = self.width / self.heads;
        let q = self.split_heads(&q)?;
        let k = self.split_heads(&k)?.transpose(2, 3)?;
        let v = self.split_heads(&v)?;
        let mut logits = q.matmul(&k)?.scale(1.0 / (d as f32).sqrt());
        if let Some(bias) = extra.bias {
            logits = logits.add(bias)?;
        }
        let weights = logits.softmax(3)?;
        weights
            .matmul(&v)?
            .permute(&[0, 2, 1, 3])?
            .reshape(&[b, lq, self.width])
    }

    pub fn forward(&self, p: &Bound, x_q: &Tensor, x_kv: &Tensor, extra: &AttnInputs<'_>) -> Result<Tensor> {
        self.o.forward(p, &self.attend(p, x_q, x_kv, extra)?)
    }
}

/// Additive logit bias `[B, 1, 1, Lk]` from a key validity mask.
pub fn key_mask_bias(valid: &[bool], batch: usize) -> Tensor {
    let lk = valid.len() / batch;
    Tensor::new(
        valid.iter().map(|&ok| if ok { 0.0 } else { MASKED }).collect(),
        &[batch, 1, 1, lk],
    )
}

/// Causal logit bias `[1, 1, L, L]`: position i sees keys 0..=i.
pub fn causal_bias(len: usize) -> Tensor {
    let mut v = vec![0.0; len * len];
    for i in 0..len {
        for j in i + 1..len {
            v[i * len + j] = MASKED;
        }
    }
    Tensor::new(v, &[1, 1, len, len])
}
