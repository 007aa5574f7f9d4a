use super::Tensor;
use crate::error::{Error, Result};

struct Normalized {
    xhat: Vec<f32>,
    inv_std: Vec<f32>,
}

// Standardizes each contiguous run of `seg` values.
fn normalize(x: &[f32], seg: usize, eps: f32) -> Normalized {
    let count = x.len() / seg;
    let mut xhat = vec![0.0f32; x.len()];
    let mut inv_std = vec![0.0f32; count];
    for s in 0..count {
        let xs = &x[s * seg..(s + 1) * seg];
        let mean = xs.iter().map(|&v| v as f64).sum::<f64>() / seg as f64;
        let var = xs.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / seg as f64;
        let is = 1.0 / (var + eps as f64).sqrt();
        inv_std[s] = is as f32;
        for (o, &v) in xhat[s * seg..(s + 1) * seg].iter_mut().zip(xs) {
            *o = ((v as f64 - mean) * is) as f32;
        }
    }
    Normalized { xhat, inv_std }
}

/// dL/dx for y = x̂ given dL/dx̂, per segment.
fn normalize_backward(gxhat: &[f32], xhat: &[f32], inv_std: &[f32], seg: usize) -> Vec<f32> {
    let mut gx = vec![0.0f32; gxhat.len()];
    for (s, &is) in inv_std.iter().enumerate() {
        let r = s * seg..(s + 1) * seg;
        let (g, xh) = (&gxhat[r.clone()], &xhat[r.clone()]);
        let mg = g.iter().map(|&v| v as f64).sum::<f64>() / seg as f64;
        let mgx = g.iter().zip(xh).map(|(&a, &b)| (a * b) as f64).sum::<f64>() / seg as f64;
        for ((o, &gv), &xv) in gx[r].iter_mut().zip(g).zip(xh) {
            *o = (is as f64 * (gv as f64 - mg - xv as f64 * mgx)) as f32;
        }
    }
    gx
}

/// Group normalization over `x: [B, C, ...]` with `groups` channel groups
/// and per-channel affine `gamma, beta: [C]`.
pub fn group_norm(x: &Tensor, groups: usize, gamma: &Tensor, beta: &Tensor, eps: f32) -> Result<Tensor> {
    if x.rank() < 2 || groups == 0 || x.dim(1) % groups != 0 {
        return Err(Error::dim("group_norm", x.shape(), &[groups]));
    }
    let (b, c) = (x.dim(0), x.dim(1));
    let spatial: usize = x.shape()[2..].iter().product();
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(Error::dim("group_norm", gamma.shape(), &[c]));
    }
    let seg = (c / groups) * spatial;
    let norm = normalize(x.data(), seg, eps);
    let (gd, bd) = (gamma.data(), beta.data());
    let mut out = norm.xhat.clone();
    for bi in 0..b {
        for ci in 0..c {
            let off = (bi * c + ci) * spatial;
            for v in &mut out[off..off + spatial] {
                *v = *v * gd[ci] + bd[ci];
            }
        }
    }
    let gamma_d = gamma.data_arc().clone();
    Ok(Tensor::record(out, x.shape(), &[x, gamma, beta], move |g, needs| {
        let mut ggamma = needs[1].then(|| vec![0.0f32; c]);
        let mut gbeta = needs[2].then(|| vec![0.0f32; c]);
        let mut gxhat = needs[0].then(|| vec![0.0f32; g.len()]);
        for bi in 0..b {
            for ci in 0..c {
                let off = (bi * c + ci) * spatial;
                let gs = &g[off..off + spatial];
                if let Some(gg) = ggamma.as_mut() {
                    gg[ci] += gs.iter().zip(&norm.xhat[off..off + spatial]).map(|(a, b)| a * b).sum::<f32>();
                }
                if let Some(gb) = gbeta.as_mut() {
                    gb[ci] += gs.iter().sum::<f32>();
                }
                if let Some(gx) = gxhat.as_mut() {
                    for (o, &v) in gx[off..off + spatial].iter_mut().zip(gs) {
                        *o = v * gamma_d[ci];
                    }
                }
            }
        }
        let gx = gxhat.map(|gxh| normalize_backward(&gxh, &norm.xhat, &norm.inv_std, seg));
        vec![gx, ggamma, gbeta]
    }))
}

/// Layer normalization over the last axis with affine `gamma, beta: [D]`.
pub fn layer_norm(x: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f32) -> Result<Tensor> {
    let d = *x.shape().last().ok_or_else(|| Error::dim("layer_norm", x.shape(), &[]))?;
    if gamma.shape() != [d] || beta.shape() != [d] {
        return Err(Error::dim("layer_norm", gamma.shape(), &[d]));
    }
    let norm = normalize(x.data(), d, eps);
    let (gd, bd) = (gamma.data(), beta.data());
    let out: Vec<f32> = norm
        .xhat
        .iter()
        .enumerate()
        .map(|(i, &v)| v * gd[i % d] + bd[i % d])
        .collect();
    let gamma_d = gamma.data_arc().clone();
    Ok(Tensor::record(out, x.shape(), &[x, gamma, beta], move |g, needs| {
        let ggamma = needs[1].then(|| {
            let mut gg = vec![0.0f32; d];
            for (i, (&gv, &xv)) in g.iter().zip(&norm.xhat).enumerate() {
                gg[i % d] += gv * xv;
            }
            gg
        });
        let gbeta = needs[2].then(|| {
            let mut gb = vec![0.0f32; d];
            for (i, &gv) in g.iter().enumerate() {
                gb[i % d] += gv;
            }
            gb
        });
        let gx = needs[0].then(|| {
            let gxh: Vec<f32> = g.iter().enumerate().map(|(i, &v)| v * gamma_d[i % d]).collect();
            normalize_backward(&gxh, &norm.xhat, &norm.inv_std, d)
        });
        vec![gx, ggamma, gbeta]
    }))
}
