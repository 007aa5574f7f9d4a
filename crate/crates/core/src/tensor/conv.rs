use super::matmul::gemm;
use super::Tensor;
use crate::error::{Error, Result};

/// Gathers sliding windows: `cols[(c*K + k), l] = x[c, l*stride + k - pad]`,
/// zero outside `[0, len)`.
fn im2col(x: &[f32], channels: usize, len: usize, k: usize, stride: usize, pad: usize, out_len: usize, cols: &mut [f32]) {
    for c in 0..channels {
        let xc = &x[c * len..(c + 1) * len];
        for kk in 0..k {
            let row = &mut cols[(c * k + kk) * out_len..(c * k + kk + 1) * out_len];
            for (l, v) in row.iter_mut().enumerate() {
                let pos = (l * stride + kk) as isize - pad as isize;
                *v = if pos >= 0 && (pos as usize) < len {
                    xc[pos as usize]
                } else {
                    0.0
                };
            }
        }
    }
}

/// Scatter-adds windows back: inverse bookkeeping of [`im2col`].
fn col2im(cols: &[f32], channels: usize, len: usize, k: usize, stride: usize, pad: usize, out_len: usize, x: &mut [f32]) {
    for c in 0..channels {
        let xc = &mut x[c * len..(c + 1) * len];
        for kk in 0..k {
            let row = &cols[(c * k + kk) * out_len..(c * k + kk + 1) * out_len];
            for (l, v) in row.iter().enumerate() {
                let pos = (l * stride + kk) as isize - pad as isize;
                if pos >= 0 && (pos as usize) < len {
                    xc[pos as usize] += v;
                }
            }
        }
    }
}

fn check_bias(op: &'static str, bias: Option<&Tensor>, channels: usize) -> Result<()> {
    match bias {
        Some(b) if b.shape() != [channels] => Err(Error::dim(op, b.shape(), &[channels])),
        _ => Ok(()),
    }
}

/// 1-D cross-correlation. `x: [B, Cin, L]`, `w: [Cout, Cin, K]`, optional
/// `bias: [Cout]`; output length `floor((L + 2·padding − K)/stride) + 1`.
pub fn conv1d(x: &Tensor, w: &Tensor, bias: Option<&Tensor>, stride: usize, padding: usize) -> Result<Tensor> {
    if x.rank() != 3 || w.rank() != 3 || x.dim(1) != w.dim(1) {
        return Err(Error::dim("conv1d", x.shape(), w.shape()));
    }
    if stride == 0 {
        return Err(Error::Config("conv1d stride must be at least 1".into()));
    }
    let (b, cin, len) = (x.dim(0), x.dim(1), x.dim(2));
    let (cout, k) = (w.dim(0), w.dim(2));
    if k > len + 2 * padding {
        return Err(Error::dim("conv1d", x.shape(), w.shape()));
    }
    check_bias("conv1d", bias, cout)?;
    let out_len = (len + 2 * padding - k) / stride + 1;
    let ck = cin * k;
    let mut out = vec![0.0f32; b * cout * out_len];
    let mut cols = vec![0.0f32; ck * out_len];
    for bi in 0..b {
        im2col(&x.data()[bi * cin * len..], cin, len, k, stride, padding, out_len, &mut cols);
        let dst = &mut out[bi * cout * out_len..(bi + 1) * cout * out_len];
        gemm(cout, ck, out_len, w.data(), false, &cols, false, dst, false);
        if let Some(bias) = bias {
            for (co, row) in dst.chunks_mut(out_len).enumerate() {
                let bv = bias.data()[co];
                row.iter_mut().for_each(|v| *v += bv);
            }
        }
    }
    let (xd, wd) = (x.data_arc().clone(), w.data_arc().clone());
    let mut inputs = vec![x, w];
    inputs.extend(bias);
    let lw = w.numel();
    Ok(Tensor::record(out, &[b, cout, out_len], &inputs, move |g, needs| {
        let mut gx = needs[0].then(|| vec![0.0f32; b * cin * len]);
        let mut gw = needs[1].then(|| vec![0.0f32; lw]);
        let mut cols = vec![0.0f32; ck * out_len];
        for bi in 0..b {
            let gb = &g[bi * cout * out_len..(bi + 1) * cout * out_len];
            if let Some(gw) = gw.as_mut() {
                im2col(&xd[bi * cin * len..], cin, len, k, stride, padding, out_len, &mut cols);
                gemm(cout, out_len, ck, gb, false, &cols, true, gw, true);
            }
            if let Some(gx) = gx.as_mut() {
                gemm(ck, cout, out_len, &wd, true, gb, false, &mut cols, false);
                col2im(&cols, cin, len, k, stride, padding, out_len, &mut gx[bi * cin * len..]);
            }
        }
        let mut res = vec![gx, gw];
        if needs.len() == 3 {
            res.push(needs[2].then(|| {
                let mut gbias = vec![0.0f32; cout];
                for bi in 0..b {
                    for co in 0..cout {
                        let off = (bi * cout + co) * out_len;
                        gbias[co] += g[off..off + out_len].iter().sum::<f32>();
                    }
                }
                gbias
            }));
        }
        res
    }))
}

/// Transposed 1-D convolution (the adjoint of [`conv1d`] in `x`).
/// `x: [B, Cin, L]`, `w: [Cin, Cout, K]`; output length
/// `(L − 1)·stride − 2·padding + K`.
pub fn conv_transpose1d(x: &Tensor, w: &Tensor, bias: Option<&Tensor>, stride: usize, padding: usize) -> Result<Tensor> {
    if x.rank() != 3 || w.rank() != 3 || x.dim(1) != w.dim(0) {
        return Err(Error::dim("conv_transpose1d", x.shape(), w.shape()));
    }
    if stride == 0 {
        return Err(Error::Config("conv_transpose1d stride must be at least 1".into()));
    }
    let (b, cin, len) = (x.dim(0), x.dim(1), x.dim(2));
    let (cout, k) = (w.dim(1), w.dim(2));
    let full = (len.max(1) - 1) * stride + k;
    if len == 0 || full <= 2 * padding {
        return Err(Error::dim("conv_transpose1d", x.shape(), w.shape()));
    }
    check_bias("conv_transpose1d", bias, cout)?;
    let out_len = full - 2 * padding;
    let ck = cout * k;
    let mut out = vec![0.0f32; b * cout * out_len];
    let mut cols = vec![0.0f32; ck * len];
    for bi in 0..b {
        gemm(ck, cin, len, w.data(), true, &x.data()[bi * cin * len..], false, &mut cols, false);
        let dst = &mut out[bi * cout * out_len..(bi + 1) * cout * out_len];
        col2im(&cols, cout, out_len, k, stride, padding, len, dst);
        if let Some(bias) = bias {
            for (co, row) in dst.chunks_mut(out_len).enumerate() {
                let bv = bias.data()[co];
                row.iter_mut().for_each(|v| *v += bv);
            }
        }
    }
    let (xd, wd) = (x.data_arc().clone(), w.data_arc().clone());
    let mut inputs = vec![x, w];
    inputs.extend(bias);
    let lw = w.numel();
    Ok(Tensor::record(out, &[b, cout, out_len], &inputs, move |g, needs| {
        let mut gx = needs[0].then(|| vec![0.0f32; b * cin * len]);
        let mut gw = needs[1].then(|| vec![0.0f32; lw]);
        let mut cols = vec![0.0f32; ck * len];
        for bi in 0..b {
            let gb = &g[bi * cout * out_len..(bi + 1) * cout * out_len];
            im2col(gb, cout, out_len, k, stride, padding, len, &mut cols);
            if let Some(gx) = gx.as_mut() {
                gemm(cin, ck, len, &wd, false, &cols, false, &mut gx[bi * cin * len..], false);
            }
            if let Some(gw) = gw.as_mut() {
                gemm(cin, len, ck, &xd[bi * cin * len..], false, &cols, true, gw, true);
            }
        }
        let mut res = vec![gx, gw];
        if needs.len() == 3 {
            res.push(needs[2].then(|| {
                let mut gbias = vec![0.0f32; cout];
                for bi in 0..b {
                    for co in 0..cout {
                        let off = (bi * cout + co) * out_len;
                        gbias[co] += g[off..off + out_len].iter().sum::<f32>();
                    }
                }
                gbias
            }));
        }
        res
    }))
}
