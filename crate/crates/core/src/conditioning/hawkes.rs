//! Positional encoding of rhythm peaks with learnable time offsets:
//! channel c of peak i is Tri(ω_c · i + w_c · t_i), sine on even channels and
//! cosine on odd ones. Pairs of channels share one frequency.

use rand::Rng;

use crate::error::Result;
use crate::nn::{Bound, Builder, ParamId};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct HawkesParams {
    pub omega: Vec<f64>,
    pub w: Vec<f64>,
}

/// ω for channel c: 1 / 10000^(2⌊c/2⌋ / C).
pub fn frequency_ladder(width: usize) -> Vec<f64> {
    (0..width)
        .map(|c| 10000f64.powf(-((2 * (c / 2)) as f64) / width as f64))
        .collect()
}

impl HawkesParams {
    pub fn standard(width: usize) -> Self {
        HawkesParams {
            omega: frequency_ladder(width),
            w: vec![0.0; width],
        }
    }

    pub fn width(&self) -> usize {
        self.omega.len()
    }
}

fn tri(c: usize, x: f64) -> f64 {
    if c % 2 == 0 {
        x.sin()
    } else {
        x.cos()
    }
}

/// `T_r × C`, row-major. `times` are peak times in conditioning time units.
pub fn hawkes_encoding(times: &[f64], params: &HawkesParams) -> Vec<f64> {
    let c = params.width();
    let mut out = Vec::with_capacity(times.len() * c);
    for (i, &t) in times.iter().enumerate() {
        for k in 0..c {
            out.push(tri(k, params.omega[k] * i as f64 + params.w[k] * t));
        }
    }
    out
}

/// Standard sinusoidal encoding of (possibly fractional) positions.
pub fn positional_encoding(positions: &[f64], width: usize) -> Vec<f64> {
    let omega = frequency_ladder(width);
    positions
        .iter()
        .flat_map(|&pos| (0..width).map(move |k| (k, pos)))
        .map(|(k, pos)| tri(k, omega[k] * pos))
        .collect()
}

/// Trainable form: the fixed ladder ω and learnable offsets w.
#[derive(Debug, Clone, Copy)]
pub struct HawkesLayer {
    pub w: ParamId,
    pub width: usize,
}

impl HawkesLayer {
    pub fn new<R: Rng>(bd: &mut Builder<'_, R>, name: &str, width: usize) -> Self {
        HawkesLayer {
            w: bd.scope(name, |bd| bd.constant("w", &[width], 0.0)),
            width,
        }
    }

    /// Encodes a padded batch of peak times `[B, T]` into `[B, T, C]`.
    pub fn forward(&self, p: &Bound, times: &[f64], batch: usize) -> Result<Tensor> {
        let t = times.len() / batch;
        let c = self.width;
        let omega = frequency_ladder(c);
        let mut base = Vec::with_capacity(t * c);
        for i in 0..t {
            base.extend(omega.iter().map(|o| (o * i as f64) as f32));
        }
        let base = Tensor::new(base, &[1, t, c]);
        let tt = Tensor::new(times.iter().map(|&v| v as f32).collect(), &[batch, t, 1]);
        let arg = base.add(&tt.mul(p.get(self.w))?)?;
        let even = Tensor::new((0..c).map(|k| if k % 2 == 0 { 1.0 } else { 0.0 }).collect(), &[c]);
        let odd = Tensor::new((0..c).map(|k| if k % 2 == 1 { 1.0 } else { 0.0 }).collect(), &[c]);
        arg.sin().mul(&even)?.add(&arg.cos().mul(&odd)?)
    }

    pub fn params(&self, p: &Bound) -> HawkesParams {
        HawkesParams {
            omega: frequency_ladder(self.width),
            w: p.get(self.w).data().iter().map(|&v| v as f64).collect(),
        }
    }
}
