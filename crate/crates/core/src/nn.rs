//! Named parameter storage and the basic layers built on it.
//!
//! Layers hold [`ParamId`]s only. A forward pass receives a [`Bound`] view in
//! which every parameter is either a constant or a leaf on a training tape.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{self, Tape, Tensor};

/// Learning-rate group of a parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    /// Backbone weights; they get the small post-warm-up rate.
    Pretrained,
    /// Newly introduced weights (conditioning encoders, cross-attention).
    Fresh,
    /// Calibrated constants that the optimizer never touches.
    Frozen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
pub struct ParamEntry {
    pub name: String,
    pub value: Tensor,
    pub tier: Tier,
}

#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor, tier: Tier) -> ParamId {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter name {name}");
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push(ParamEntry {
            name,
            value: value.detach(),
            tier,
        });
        ParamId(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    /// Replaces a parameter's values; the shape must not change.
    pub fn set(&mut self, id: ParamId, value: Tensor) -> Result<()> {
        let e = &mut self.entries[id.0];
        if e.value.shape() != value.shape() {
            return Err(Error::dim("parameter update", e.value.shape(), value.shape()));
        }
        e.value = value.detach();
        Ok(())
    }

    pub fn set_index(&mut self, index: usize, value: Tensor) -> Result<()> {
        self.set(ParamId(index), value)
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|e| e.value.numel()).sum()
    }

    /// All parameters as constants.
    pub fn constants(&self) -> Bound {
        Bound {
            tensors: self.entries.iter().map(|e| e.value.clone()).collect(),
            trainable: vec![false; self.entries.len()],
        }
    }

    /// Parameters selected by `trainable` become leaves on `tape`; the rest
    /// stay constant.
    pub fn bind(&self, tape: &Tape, trainable: impl Fn(&ParamEntry) -> bool) -> Bound {
        let mut tensors = Vec::with_capacity(self.entries.len());
        let mut flags = Vec::with_capacity(self.entries.len());
        for e in &self.entries {
            let t = trainable(e);
            tensors.push(if t { tape.watch(&e.value) } else { e.value.clone() });
            flags.push(t);
        }
        Bound {
            tensors,
            trainable: flags,
        }
    }
}

/// Parameter values as seen by one forward pass.
#[derive(Clone)]
pub struct Bound {
    tensors: Vec<Tensor>,
    trainable: Vec<bool>,
}

impl Bound {
    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.trainable[id.0]
    }

    /// Gradient per parameter; `None` for constants, zeros for trainable
    /// parameters the loss did not reach.
    pub fn grads(&self) -> Vec<Option<Vec<f32>>> {
        self.tensors
            .iter()
            .zip(&self.trainable)
            .map(|(t, &tr)| {
                if tr {
                    Some(t.grad().unwrap_or_else(|| vec![0.0; t.numel()]))
                } else {
                    None
                }
            })
            .collect()
    }

    /// Like `grads`, but `None` also for trainable parameters the loss did
    /// not reach, so an optimizer leaves them untouched.
    pub fn reached_grads(&self) -> Vec<Option<Vec<f32>>> {
        self.tensors
            .iter()
            .zip(&self.trainable)
            .map(|(t, &tr)| if tr { t.grad() } else { None })
            .collect()
    }
}

/// Creates parameters under a name prefix.
pub struct Builder<'a, R: Rng> {
    pub store: &'a mut ParamStore,
    pub rng: &'a mut R,
    prefix: String,
    tier: Tier,
}

impl<'a, R: Rng> Builder<'a, R> {
    pub fn new(store: &'a mut ParamStore, rng: &'a mut R, tier: Tier) -> Self {
        Builder {
            store,
            rng,
            prefix: String::new(),
            tier,
        }
    }

    /// Runs `f` with `name` appended to the prefix and optionally a new tier.
    pub fn scope<T>(&mut self, name: &str, f: impl FnOnce(&mut Builder<'_, R>) -> T) -> T {
        self.scope_tier(name, self.tier, f)
    }

    pub fn scope_tier<T>(&mut self, name: &str, tier: Tier, f: impl FnOnce(&mut Builder<'_, R>) -> T) -> T {
        let prefix = if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        };
        let mut inner = Builder {
            store: self.store,
            rng: self.rng,
            prefix,
            tier,
        };
        f(&mut inner)
    }

    /// Runs `f` with the same prefix and a different tier.
    pub fn with_tier<T>(&mut self, tier: Tier, f: impl FnOnce(&mut Builder<'_, R>) -> T) -> T {
        let mut inner = Builder {
            store: self.store,
            rng: self.rng,
            prefix: self.prefix.clone(),
            tier,
        };
        f(&mut inner)
    }

    fn full_name(&self, name: &str) -> String {
        if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        }
    }

    pub fn normal(&mut self, name: &str, shape: &[usize], std: f32) -> ParamId {
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| std * Distribution::<f64>::sample(&StandardNormal, &mut *self.rng) as f32)
            .collect();
        let name = self.full_name(name);
        self.store.add(name, Tensor::new(data, shape), self.tier)
    }

    pub fn constant(&mut self, name: &str, shape: &[usize], value: f32) -> ParamId {
        let name = self.full_name(name);
        self.store.add(name, Tensor::full(shape, value), self.tier)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
}

impl Linear {
    pub fn new<R: Rng>(bd: &mut Builder<'_, R>, name: &str, inp: usize, out: usize, zero: bool) -> Self {
        bd.scope(name, |bd| {
            let std = if zero { 0.0 } else { 1.0 / (inp as f32).sqrt() };
            Linear {
                w: bd.normal("w", &[inp, out], std),
                b: Some(bd.constant("b", &[out], 0.0)),
            }
        })
    }

    pub fn without_bias<R: Rng>(bd: &mut Builder<'_, R>, name: &str, inp: usize, out: usize) -> Self {
        bd.scope(name, |bd| Linear {
            w: bd.normal("w", &[inp, out], 1.0 / (inp as f32).sqrt()),
            b: None,
        })
    }

    /// Applies to the last axis of `x`.
    pub fn forward(&self, p: &Bound, x: &Tensor) -> Result<Tensor> {
        let y = x.matmul(p.get(self.w))?;
        match self.b {
            Some(b) => y.add(p.get(b)),
            None => Ok(y),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Conv1d {
    pub w: ParamId,
    pub b: ParamId,
    pub stride: usize,
    pub padding: usize,
}

impl Conv1d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(bd: &mut Builder<'_, R>, name: &str, inp: usize, out: usize, kernel: usize, stride: usize, padding: usize, zero: bool) -> Self {
        bd.scope(name, |bd| {
            let std = if zero { 0.0 } else { 1.0 / ((inp * kernel) as f32).sqrt() };
            Conv1d {
                w: bd.normal("w", &[out, inp, kernel], std),
                b: bd.constant("b", &[out], 0.0),
                stride,
                padding,
            }
        })
    }

    pub fn forward(&self, p: &Bound, x: &Tensor) -> Result<Tensor> {
        tensor::conv1d(x, p.get(self.w), Some(p.get(self.b)), self.stride, self.padding)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConvTranspose1d {
    pub w: ParamId,
    pub b: ParamId,
    pub stride: usize,
    pub padding: usize,
}

impl ConvTranspose1d {
    pub fn new<R: Rng>(bd: &mut Builder<'_, R>, name: &str, inp: usize, out: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        bd.scope(name, |bd| ConvTranspose1d {
            // Each output sees about kernel/stride taps per input channel.
            w: bd.normal("w", &[inp, out, kernel], 1.0 / ((inp * kernel / stride.max(1)) as f32).sqrt()),
            b: bd.constant("b", &[out], 0.0),
            stride,
            padding,
        })
    }

    pub fn forward(&self, p: &Bound, x: &Tensor) -> Result<Tensor> {
        tensor::conv_transpose1d(x, p.get(self.w), Some(p.get(self.b)), self.stride, self.padding)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GroupNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub groups: usize,
}

impl GroupNorm {
    /// Uses min(8, channels) groups, reduced until it divides `channels`.
    pub fn new<R: Rng>(bd: &mut Builder<'_, R>, name: &str, channels: usize) -> Self {
        let mut groups = channels.min(8);
        while channels % groups != 0 {
            groups -= 1;
        }
        bd.scope(name, |bd| GroupNorm {
            gamma: bd.constant("gamma", &[channels], 1.0),
            beta: bd.constant("beta", &[channels], 0.0),
            groups,
        })
    }

    pub fn forward(&self, p: &Bound, x: &Tensor) -> Result<Tensor> {
        tensor::group_norm(x, self.groups, p.get(self.gamma), p.get(self.beta), 1e-5)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new<R: Rng>(bd: &mut Builder<'_, R>, name: &str, width: usize) -> Self {
        bd.scope(name, |bd| LayerNorm {
            gamma: bd.constant("gamma", &[width], 1.0),
            beta: bd.constant("beta", &[width], 0.0),
        })
    }

    pub fn forward(&self, p: &Bound, x: &Tensor) -> Result<Tensor> {
        tensor::layer_norm(x, p.get(self.gamma), p.get(self.beta), 1e-5)
    }
}

/// Sinusoidal features of a scalar per batch element: `[B, width]`, with
/// sines in the first half and cosines in the second.
pub fn sinusoidal_embedding(values: &[f64], width: usize, max_period: f64) -> Tensor {
    let half = width / 2;
    let mut out = Vec::with_capacity(values.len() * width);
    for &v in values {
        let freqs = (0..half).map(|k| (-(max_period.ln()) * k as f64 / half as f64).exp());
        let args: Vec<f64> = freqs.map(|f| v * f).collect();
        out.extend(args.iter().map(|a| a.sin() as f32));
        out.extend(args.iter().map(|a| a.cos() as f32));
        out.extend(std::iter::repeat_n(0.0, width - 2 * half));
    }
    Tensor::new(out, &[values.len(), width])
}
