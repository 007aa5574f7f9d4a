//! Conditioning encoders and the serial conditioning sequence attended by
//! the U-Net: `[genre; visual; rhythm]`.

pub mod decoder;
pub mod hawkes;
pub mod lstm;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{causal_bias, key_mask_bias};
use crate::error::{Error, Result};
use crate::nn::{Bound, Builder, ParamId, Tier};
use crate::tensor::{concat, embedding, Tensor};

pub use decoder::DecoderBlock;
pub use hawkes::{hawkes_encoding, positional_encoding, HawkesLayer, HawkesParams};
pub use lstm::{BiLstm, LstmCell};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConditioningConfig {
    /// Channel width C shared by every conditioning embedding.
    pub width: usize,
    /// Per-frame visual feature size D_in; 0 disables the visual encoder.
    pub visual_dim: usize,
    pub lstm_hidden: usize,
    pub heads: usize,
    /// Number of genre labels; 0 disables the genre embedding.
    pub genres: usize,
    /// Conditioning time units per second (peak and frame times are
    /// multiplied by this before positional encoding).
    pub time_rate: f64,
}

impl Default for ConditioningConfig {
    fn default() -> Self {
        ConditioningConfig {
            width: 64,
            visual_dim: 34,
            lstm_hidden: 32,
            heads: 4,
            genres: 3,
            time_rate: 30.0,
        }
    }
}

/// Precomputed per-frame visual embeddings, `frames × dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct VisualFeatures {
    pub frame_rate: f64,
    pub dim: usize,
    pub values: Vec<f32>,
}

impl VisualFeatures {
    pub fn new(frame_rate: f64, dim: usize, values: Vec<f32>) -> Result<Self> {
        if dim == 0 || values.len() % dim != 0 || values.is_empty() {
            return Err(Error::Contract(format!(
                "visual features: {} values do not form rows of {dim}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("visual features", "non-finite value"));
        }
        Ok(VisualFeatures {
            frame_rate,
            dim,
            values,
        })
    }

    pub fn frames(&self) -> usize {
        self.values.len() / self.dim
    }
}

/// Everything one clip is conditioned on.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CondInput {
    pub visual: Option<VisualFeatures>,
    /// Rhythm peak times in seconds, increasing.
    pub peak_times: Vec<f64>,
    pub genre: Option<usize>,
}

/// A padded batch of serial conditioning sequences.
#[derive(Debug, Clone)]
pub struct CondBatch {
    /// `[B, S, C]`.
    pub seq: Tensor,
    /// `B * S` key validity flags.
    pub valid: Vec<bool>,
    /// `B * S` token times in seconds; `None` for tokens without a time.
    pub times: Vec<Option<f64>>,
}

impl CondBatch {
    pub fn batch(&self) -> usize {
        self.seq.shape()[0]
    }

    pub fn len(&self) -> usize {
        self.seq.shape()[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Serial concatenation `[c_g; c_v; c_r]` of single-clip embeddings, each
/// `[n, C]`. When `drop` is set the result is the null token alone.
pub fn assemble(c_v: Option<&Tensor>, c_r: &Tensor, c_g: Option<&Tensor>, null: &Tensor, drop: bool) -> Result<Tensor> {
    if drop {
        return Ok(null.clone());
    }
    let width = c_r.shape()[1];
    let mut parts = vec![];
    parts.extend(c_g);
    parts.extend(c_v);
    parts.push(c_r);
    for p in &parts {
        if p.rank() != 2 || p.shape()[1] != width {
            return Err(Error::dim("assemble", p.shape(), c_r.shape()));
        }
    }
    concat(&parts, 0)
}

#[derive(Debug, Clone)]
pub struct Conditioner {
    pub cfg: ConditioningConfig,
    pub lstm: Option<BiLstm>,
    pub peak_token: ParamId,
    pub hawkes: HawkesLayer,
    pub decoder: DecoderBlock,
    pub genre_table: Option<ParamId>,
    pub null_token: ParamId,
}

impl Conditioner {
    pub fn new<R: Rng>(bd: &mut Builder<'_, R>, cfg: ConditioningConfig) -> Self {
        let c = cfg.width;
        bd.scope_tier("cond", Tier::Fresh, |bd| Conditioner {
            cfg,
            lstm: (cfg.visual_dim > 0).then(|| BiLstm::new(bd, "visual", cfg.visual_dim, cfg.lstm_hidden, c)),
            peak_token: bd.normal("rhythm.peak_token", &[c], 1.0),
            hawkes: HawkesLayer::new(bd, "rhythm.hawkes", c),
            decoder: DecoderBlock::new(bd, "rhythm.decoder", c, cfg.heads),
            genre_table: (cfg.genres > 0).then(|| bd.normal("genre", &[cfg.genres, c], 1.0)),
            null_token: bd.normal("null", &[1, c], 1.0),
        })
    }

    /// `B` clips of equal length → `[B, T_v, C]`.
    pub fn encode_visual(&self, p: &Bound, feats: &[&VisualFeatures]) -> Result<Tensor> {
        let lstm = self
            .lstm
            .as_ref()
            .ok_or_else(|| Error::Config("model has no visual encoder".into()))?;
        let (t, d) = (feats[0].frames(), feats[0].dim);
        if let Some(f) = feats.iter().find(|f| f.frames() != t || f.dim != d) {
            return Err(Error::dim("visual batch", &[t, d], &[f.frames(), f.dim]));
        }
        let data: Vec<f32> = feats.iter().flat_map(|f| f.values.iter().copied()).collect();
        lstm.forward(p, &Tensor::new(data, &[feats.len(), t, d]))
    }

    /// Rhythm tokens for a batch of peak-time lists (seconds), padded to the
    /// longest list. Returns `[B, R, C]` and the `B * R` validity mask.
    pub fn encode_rhythm(&self, p: &Bound, peak_times: &[&[f64]]) -> Result<(Tensor, Vec<bool>)> {
        let b = peak_times.len();
        let r = peak_times.iter().map(|t| t.len()).max().unwrap_or(0);
        let c = self.cfg.width;
        if r == 0 {
            return Ok((Tensor::zeros(&[b, 0, c]), vec![]));
        }
        let mut times = vec![0.0; b * r];
        let mut valid = vec![false; b * r];
        for (bi, ts) in peak_times.iter().enumerate() {
            for (i, &t) in ts.iter().enumerate() {
                times[bi * r + i] = t * self.cfg.time_rate;
                valid[bi * r + i] = true;
            }
        }
        let tokens = self.hawkes.forward(p, &times, b)?.add(p.get(self.peak_token))?;
        let bias = causal_bias(r).add(&key_mask_bias(&valid, b))?;
        Ok((self.decoder.forward(p, &tokens, &bias)?, valid))
    }

    pub fn encode_genre(&self, p: &Bound, labels: &[usize]) -> Result<Tensor> {
        let table = self
            .genre_table
            .ok_or_else(|| Error::Config("model has no genre embedding".into()))?;
        let rows = embedding(p.get(table), labels)?;
        rows.reshape(&[labels.len(), 1, self.cfg.width])
    }

    /// The null conditioning for `batch` clips: one learned token each.
    pub fn null_batch(&self, p: &Bound, batch: usize) -> Result<CondBatch> {
        let null = p.get(self.null_token);
        let seq = concat(&vec![null; batch], 0)?.reshape(&[batch, 1, self.cfg.width])?;
        Ok(CondBatch {
            seq,
            valid: vec![true; batch],
            times: vec![None; batch],
        })
    }

    /// Encodes and serially assembles a batch. All clips must agree on
    /// which parts are present. Clips with `drop[b]` set see only the null
    /// token.
    pub fn encode_batch(&self, p: &Bound, inputs: &[CondInput], drop: &[bool]) -> Result<CondBatch> {
        let b = inputs.len();
        if b == 0 || drop.len() != b {
            return Err(Error::Contract("conditioning batch needs one drop flag per clip".into()));
        }
        let has_genre = inputs[0].genre.is_some();
        let has_visual = inputs[0].visual.is_some();
        if inputs.iter().any(|i| i.genre.is_some() != has_genre || i.visual.is_some() != has_visual) {
            return Err(Error::Contract("clips in a batch must carry the same conditioning parts".into()));
        }
        if drop.iter().all(|&d| d) {
            return self.null_batch(p, b);
        }
        let c = self.cfg.width;
        let mut parts: Vec<Tensor> = vec![];
        // Per-part (length, validity, times) for building the flat masks.
        let mut layout: Vec<(usize, Vec<bool>, Vec<Option<f64>>)> = vec![];
        if has_genre {
            let labels: Vec<usize> = inputs.iter().map(|i| i.genre.unwrap_or(0)).collect();
            parts.push(self.encode_genre(p, &labels)?);
            layout.push((1, vec![true; b], vec![None; b]));
        }
        if has_visual {
            let feats: Vec<&VisualFeatures> = inputs.iter().filter_map(|i| i.visual.as_ref()).collect();
            let cv = self.encode_visual(p, &feats)?;
            let t = cv.shape()[1];
            let fr = feats[0].frame_rate;
            let times = (0..b).flat_map(|_| (0..t).map(move |i| Some(i as f64 / fr))).collect();
            parts.push(cv);
            layout.push((t, vec![true; b * t], times));
        }
        let peak_lists: Vec<&[f64]> = inputs.iter().map(|i| i.peak_times.as_slice()).collect();
        let (cr, rvalid) = self.encode_rhythm(p, &peak_lists)?;
        let r = cr.shape()[1];
        if r > 0 {
            let mut times = vec![None; b * r];
            for (bi, ts) in peak_lists.iter().enumerate() {
                for (i, &t) in ts.iter().enumerate() {
                    times[bi * r + i] = Some(t);
                }
            }
            parts.push(cr);
            layout.push((r, rvalid, times));
        }
        if parts.is_empty() {
            // No usable conditioning at all: fall back to the null token.
            return self.null_batch(p, b);
        }
        let refs: Vec<&Tensor> = parts.iter().collect();
        let mut seq = concat(&refs, 1)?;
        let s = seq.shape()[1];
        let mut valid = Vec::with_capacity(b * s);
        let mut times = Vec::with_capacity(b * s);
        let mut to_null = drop.to_vec();
        for (bi, null_row) in to_null.iter_mut().enumerate() {
            for (len, v, t) in &layout {
                valid.extend_from_slice(&v[bi * len..(bi + 1) * len]);
                times.extend_from_slice(&t[bi * len..(bi + 1) * len]);
            }
            // A clip with no valid key (only rhythm, and no peaks) is
            // conditioned on the null token like a dropped one.
            if !valid[bi * s..].iter().any(|&v| v) {
                *null_row = true;
            }
        }
        if to_null.iter().any(|&d| d) {
            let mut keep = vec![1.0f32; b * s];
            let mut null_at = vec![0.0f32; b * s];
            for bi in 0..b {
                if to_null[bi] {
                    keep[bi * s..(bi + 1) * s].fill(0.0);
                    null_at[bi * s] = 1.0;
                    for j in 0..s {
                        valid[bi * s + j] = j == 0;
                        times[bi * s + j] = None;
                    }
                }
            }
            let null = p.get(self.null_token).reshape(&[1, 1, c])?;
            seq = seq
                .mul(&Tensor::new(keep, &[b, s, 1]))?
                .add(&null.mul(&Tensor::new(null_at, &[b, s, 1]))?)?;
        }
        Ok(CondBatch { seq, valid, times })
    }
}
