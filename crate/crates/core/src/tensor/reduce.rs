use super::{numel, Tensor};
use crate::error::{Error, Result};

/// (outer, axis length, inner) extents for walking `axis`.
fn split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    (
        numel(&shape[..axis]),
        shape[axis],
        numel(&shape[axis + 1..]),
    )
}

fn reduced_shape(shape: &[usize], axis: usize, keepdim: bool) -> Vec<usize> {
    let mut s = shape.to_vec();
    if keepdim {
        s[axis] = 1;
    } else {
        s.remove(axis);
    }
    s
}

impl Tensor {
    fn check_axis(&self, op: &'static str, axis: usize) -> Result<()> {
        if axis >= self.rank() {
            return Err(Error::dim(op, self.shape(), &[axis]));
        }
        Ok(())
    }

    /// Sum of all elements as a scalar tensor.
    pub fn sum(&self) -> Tensor {
        let s = self.data().iter().map(|&v| v as f64).sum::<f64>() as f32;
        let n = self.numel();
        Tensor::record(vec![s], &[], &[self], move |g, _| vec![Some(vec![g[0]; n])])
    }

    pub fn mean(&self) -> Tensor {
        let n = self.numel().max(1);
        self.sum().scale(1.0 / n as f32)
    }

    pub fn sum_axis(&self, axis: usize, keepdim: bool) -> Result<Tensor> {
        self.check_axis("sum_axis", axis)?;
        let (outer, len, inner) = split(self.shape(), axis);
        let mut out = vec![0.0f32; outer * inner];
        let x = self.data();
        for o in 0..outer {
            for i in 0..len {
                let src = &x[(o * len + i) * inner..(o * len + i + 1) * inner];
                for (d, s) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
        let shape = reduced_shape(self.shape(), axis, keepdim);
        Ok(Tensor::record(out, &shape, &[self], move |g, _| {
            let mut gx = vec![0.0f32; outer * len * inner];
            for o in 0..outer {
                for i in 0..len {
                    gx[(o * len + i) * inner..(o * len + i + 1) * inner]
                        .copy_from_slice(&g[o * inner..(o + 1) * inner]);
                }
            }
            vec![Some(gx)]
        }))
    }

    pub fn mean_axis(&self, axis: usize, keepdim: bool) -> Result<Tensor> {
        let len = self.shape().get(axis).copied().unwrap_or(1).max(1);
        Ok(self.sum_axis(axis, keepdim)?.scale(1.0 / len as f32))
    }

    /// Maximum along `axis`; the gradient flows to the first maximal element.
    pub fn max_axis(&self, axis: usize, keepdim: bool) -> Result<Tensor> {
        self.check_axis("max_axis", axis)?;
        let (outer, len, inner) = split(self.shape(), axis);
        if len == 0 {
            return Err(Error::dim("max_axis", self.shape(), &[axis]));
        }
        let x = self.data();
        let mut out = vec![f32::NEG_INFINITY; outer * inner];
        let mut arg = vec![0usize; outer * inner];
        for o in 0..outer {
            for i in 0..len {
                for j in 0..inner {
                    let v = x[(o * len + i) * inner + j];
                    if v > out[o * inner + j] {
                        out[o * inner + j] = v;
                        arg[o * inner + j] = i;
                    }
                }
            }
        }
        let shape = reduced_shape(self.shape(), axis, keepdim);
        Ok(Tensor::record(out, &shape, &[self], move |g, _| {
            let mut gx = vec![0.0f32; outer * len * inner];
            for o in 0..outer {
                for j in 0..inner {
                    gx[(o * len + arg[o * inner + j]) * inner + j] += g[o * inner + j];
                }
            }
            vec![Some(gx)]
        }))
    }

    /// Softmax along `axis`, stabilized by subtracting the maximum.
    pub fn softmax(&self, axis: usize) -> Result<Tensor> {
        self.check_axis("softmax", axis)?;
        let (outer, len, inner) = split(self.shape(), axis);
        let x = self.data();
        let mut y = vec![0.0f32; x.len()];
        for o in 0..outer {
            for j in 0..inner {
                let at = |i: usize| (o * len + i) * inner + j;
                let m = (0..len).map(|i| x[at(i)]).fold(f32::NEG_INFINITY, f32::max);
                let mut z = 0.0f64;
                for i in 0..len {
                    let e = if m == f32::NEG_INFINITY { 0.0 } else { (x[at(i)] - m).exp() };
                    y[at(i)] = e;
                    z += e as f64;
                }
                for i in 0..len {
                    y[at(i)] = (y[at(i)] as f64 / z) as f32;
                }
            }
        }
        let ys = std::sync::Arc::new(y.clone());
        Ok(Tensor::record(y, self.shape(), &[self], move |g, _| {
            let mut gx = vec![0.0f32; ys.len()];
            for o in 0..outer {
                for j in 0..inner {
                    let at = |i: usize| (o * len + i) * inner + j;
                    let dot: f32 = (0..len).map(|i| g[at(i)] * ys[at(i)]).sum();
                    for i in 0..len {
                        gx[at(i)] = ys[at(i)] * (g[at(i)] - dot);
                    }
                }
            }
            vec![Some(gx)]
        }))
    }
}

/// Free-function form of [`Tensor::softmax`].
pub fn softmax(x: &Tensor, axis: usize) -> Result<Tensor> {
    x.softmax(axis)
}
