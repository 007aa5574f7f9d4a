use rand::Rng;

use crate::attention::{AttnInputs, MultiHeadAttention};
use crate::error::Result;
use crate::nn::{Bound, Builder, LayerNorm, Linear};
use crate::tensor::Tensor;

/// Pre-norm transformer decoder block: causal self-attention followed by a
/// feed-forward layer, each inside a residual connection. Both residual
/// branches start at zero.
#[derive(Debug, Clone, Copy)]
pub struct DecoderBlock {
    pub ln1: LayerNorm,
    pub attn: MultiHeadAttention,
    pub ln2: LayerNorm,
    pub ff1: Linear,
    pub ff2: Linear,
}

impl DecoderBlock {
    pub fn new<R: Rng>(bd: &mut Builder<'_, R>, name: &str, width: usize, heads: usize) -> Self {
        bd.scope(name, |bd| DecoderBlock {
            ln1: LayerNorm::new(bd, "ln1", width),
            attn: MultiHeadAttention::new(bd, "attn", width, width, width, heads, true),
            ln2: LayerNorm::new(bd, "ln2", width),
            ff1: Linear::new(bd, "ff1", width, 4 * width, false),
            ff2: Linear::new(bd, "ff2", 4 * width, width, true),
        })
    }

    /// `x` is `[B, T, C]`; `bias` is the combined causal and padding bias.
    pub fn forward(&self, p: &Bound, x: &Tensor, bias: &Tensor) -> Result<Tensor> {
        let h = self.ln1.forward(p, x)?;
        let extra = AttnInputs {
            bias: Some(bias),
            ..Default::default()
        };
        let x = x.add(&self.attn.forward(p, &h, &h, &extra)?)?;
        let h = self.ln2.forward(p, &x)?;
        let ff = self.ff2.forward(p, &self.ff1.forward(p, &h)?.silu())?;
        x.add(&ff)
    }
}
