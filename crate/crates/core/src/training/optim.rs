use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{ParamStore, Tier};
use crate::tensor::Tensor;

/// Learning rates of the two trainable groups.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupRates {
    pub pretrained: f64,
    pub fresh: f64,
}

impl GroupRates {
    pub fn for_tier(&self, tier: Tier) -> f64 {
        match tier {
            Tier::Pretrained => self.pretrained,
            Tier::Fresh => self.fresh,
            Tier::Frozen => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            beta1: 0.9,
            beta2: 0.96,
            eps: 1e-8,
            weight_decay: 4.5e-2,
        }
    }
}

/// One decoupled-weight-decay Adam update of a single tensor, in place.
/// `t` is the 1-based step count used for bias correction.
#[allow(clippy::too_many_arguments)]
pub fn adamw_update(x: &mut [f32], g: &[f32], m: &mut [f32], v: &mut [f32], t: u64, lr: f64, cfg: &AdamWConfig) {
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let c1 = 1.0 - b1.powi(t as i32);
    let c2 = 1.0 - b2.powi(t as i32);
    for i in 0..x.len() {
        let gi = g[i] as f64;
        let mi = b1 * m[i] as f64 + (1.0 - b1) * gi;
        let vi = b2 * v[i] as f64 + (1.0 - b2) * gi * gi;
        m[i] = mi as f32;
        v[i] = vi as f32;
        let xi = x[i] as f64;
        let step = (mi / c1) / ((vi / c2).sqrt() + cfg.eps);
        x[i] = (xi - lr * (step + cfg.weight_decay * xi)) as f32;
    }
}

/// Moment estimates for every parameter of a store.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub cfg: AdamWConfig,
    pub step: u64,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl AdamW {
    pub fn new(store: &ParamStore, cfg: AdamWConfig) -> Self {
        let zeros = || store.entries().iter().map(|e| vec![0.0; e.value.numel()]).collect();
        AdamW {
            cfg,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    /// Updates every parameter that has a gradient, at its tier's rate.
    /// A non-finite gradient aborts before anything is modified.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Option<Vec<f32>>], rates: &GroupRates) -> Result<()> {
        if grads.len() != store.len() {
            return Err(Error::dim("optimizer gradients", &[grads.len()], &[store.len()]));
        }
        for (e, g) in store.entries().iter().zip(grads) {
            if let Some(g) = g {
                if g.len() != e.value.numel() {
                    return Err(Error::dim("optimizer gradient", &[g.len()], e.value.shape()));
                }
                if let Some(i) = g.iter().position(|v| !v.is_finite()) {
                    return Err(Error::Divergence {
                        step: self.step as usize + 1,
                        detail: format!("non-finite gradient {} in parameter {} at element {i}", g[i], e.name),
                    });
                }
            }
        }
        self.step += 1;
        for (i, g) in grads.iter().enumerate() {
            let Some(g) = g else { continue };
            let e = &store.entries()[i];
            let lr = rates.for_tier(e.tier);
            if lr == 0.0 {
                continue;
            }
            let shape = e.value.shape().to_vec();
            let mut x = e.value.to_vec();
            adamw_update(&mut x, g, &mut self.m[i], &mut self.v[i], self.step, lr, &self.cfg);
            store.set_index(i, Tensor::new(x, &shape))?;
        }
        Ok(())
    }
}

/// Scales all gradients by `max_norm / g` when their global L2 norm `g`
/// exceeds `max_norm`. Returns the factor applied (1 when untouched).
pub fn clip_gradients(grads: &mut [Option<Vec<f32>>], max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if !(norm > max_norm) {
        return 1.0;
    }
    let scale = max_norm / norm;
    for g in grads.iter_mut().flatten() {
        for v in g.iter_mut() {
            *v = (*v as f64 * scale) as f32;
        }
    }
    scale
}

pub fn global_norm(grads: &[Option<Vec<f32>>]) -> f64 {
    grads.iter().flatten().flat_map(|g| g.iter()).map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt()
}
