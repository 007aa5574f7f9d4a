use super::{numel, Tensor};
use crate::error::{Error, Result};

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Index table: output flat index → input flat index for a permutation.
fn permute_map(shape: &[usize], perm: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let in_strides = strides(shape);
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let rank = shape.len();
    let total = numel(shape);
    let mut map = Vec::with_capacity(total);
    let mut idx = vec![0usize; rank];
    let mut cur = 0usize;
    for _ in 0..total {
        map.push(cur);
        for d in (0..rank).rev() {
            idx[d] += 1;
            cur += in_strides[perm[d]];
            if idx[d] < out_shape[d] {
                break;
            }
            cur -= in_strides[perm[d]] * idx[d];
            idx[d] = 0;
        }
    }
    (out_shape, map)
}

impl Tensor {
    /// Same data, new shape. Zero-copy.
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if numel(shape) != self.numel() {
            return Err(Error::dim("reshape", self.shape(), shape));
        }
        Ok(Tensor::record_shared(
            self.data_arc().clone(),
            shape,
            &[self],
            |g, _| vec![Some(g.to_vec())],
        ))
    }

    pub fn permute(&self, perm: &[usize]) -> Result<Tensor> {
        let rank = self.rank();
        let mut seen = vec![false; rank];
        if perm.len() != rank || perm.iter().any(|&p| p >= rank || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::dim("permute", self.shape(), perm));
        }
        let (out_shape, map) = permute_map(self.shape(), perm);
        let x = self.data();
        let data: Vec<f32> = map.iter().map(|&i| x[i]).collect();
        Ok(Tensor::record(data, &out_shape, &[self], move |g, _| {
            let mut gx = vec![0.0f32; g.len()];
            for (o, &i) in map.iter().enumerate() {
                gx[i] = g[o];
            }
            vec![Some(gx)]
        }))
    }

    /// Swaps two axes.
    pub fn transpose(&self, a: usize, b: usize) -> Result<Tensor> {
        if a >= self.rank() || b >= self.rank() {
            return Err(Error::dim("transpose", self.shape(), &[a, b]));
        }
        let mut perm: Vec<usize> = (0..self.rank()).collect();
        perm.swap(a, b);
        self.permute(&perm)
    }

    /// Elements `start..end` along `axis`.
    pub fn slice(&self, axis: usize, start: usize, end: usize) -> Result<Tensor> {
        if axis >= self.rank() || start > end || end > self.dim(axis) {
            return Err(Error::dim("slice", self.shape(), &[axis, start, end]));
        }
        let outer = numel(&self.shape()[..axis]);
        let len = self.dim(axis);
        let inner = numel(&self.shape()[axis + 1..]);
        let w = end - start;
        let x = self.data();
        let mut data = Vec::with_capacity(outer * w * inner);
        for o in 0..outer {
            data.extend_from_slice(&x[(o * len + start) * inner..(o * len + end) * inner]);
        }
        let mut shape = self.shape().to_vec();
        shape[axis] = w;
        Ok(Tensor::record(data, &shape, &[self], move |g, _| {
            let mut gx = vec![0.0f32; outer * len * inner];
            for o in 0..outer {
                gx[(o * len + start) * inner..(o * len + end) * inner]
                    .copy_from_slice(&g[o * w * inner..(o + 1) * w * inner]);
            }
            vec![Some(gx)]
        }))
    }

    /// Inserts a unit axis at `axis`.
    pub fn unsqueeze(&self, axis: usize) -> Result<Tensor> {
        let mut s = self.shape().to_vec();
        if axis > s.len() {
            return Err(Error::dim("unsqueeze", self.shape(), &[axis]));
        }
        s.insert(axis, 1);
        self.reshape(&s)
    }
}

/// Concatenation along `axis`; all other extents must agree.
pub fn concat(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
    let first = parts
        .first()
        .ok_or_else(|| Error::Contract("concat of zero tensors".into()))?;
    if axis >= first.rank() {
        return Err(Error::dim("concat", first.shape(), &[axis]));
    }
    for p in parts.iter().skip(1) {
        let ok = p.rank() == first.rank()
            && p.shape()
                .iter()
                .zip(first.shape())
                .enumerate()
                .all(|(d, (a, b))| d == axis || a == b);
        if !ok {
            return Err(Error::dim("concat", first.shape(), p.shape()));
        }
    }
    let outer = numel(&first.shape()[..axis]);
    let inner = numel(&first.shape()[axis + 1..]);
    let widths: Vec<usize> = parts.iter().map(|p| p.dim(axis) * inner).collect();
    let total: usize = widths.iter().sum();
    let mut data = Vec::with_capacity(outer * total);
    for o in 0..outer {
        for (p, &w) in parts.iter().zip(&widths) {
            data.extend_from_slice(&p.data()[o * w..(o + 1) * w]);
        }
    }
    let mut shape = first.shape().to_vec();
    shape[axis] = parts.iter().map(|p| p.dim(axis)).sum();
    Ok(Tensor::record(data, &shape, parts, move |g, needs| {
        let mut grads: Vec<Option<Vec<f32>>> = widths
            .iter()
            .zip(needs)
            .map(|(&w, &n)| n.then(|| Vec::with_capacity(outer * w)))
            .collect();
        for o in 0..outer {
            let mut off = o * total;
            for (gp, &w) in grads.iter_mut().zip(&widths) {
                if let Some(gp) = gp {
                    gp.extend_from_slice(&g[off..off + w]);
                }
                off += w;
            }
        }
        grads
    }))
}

/// Row gather `table[indices]`: `[N, C]` → `[len(indices), C]`, with
/// scatter-add backward into the selected rows.
pub fn embedding(table: &Tensor, indices: &[usize]) -> Result<Tensor> {
    if table.rank() != 2 {
        return Err(Error::dim("embedding", table.shape(), &[]));
    }
    let (rows, c) = (table.dim(0), table.dim(1));
    if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
        return Err(Error::Lookup { index: bad, len: rows });
    }
    let mut data = Vec::with_capacity(indices.len() * c);
    for &i in indices {
        data.extend_from_slice(&table.data()[i * c..(i + 1) * c]);
    }
    let idx = indices.to_vec();
    Ok(Tensor::record(data, &[indices.len(), c], &[table], move |g, _| {
        let mut gt = vec![0.0f32; rows * c];
        for (r, &i) in idx.iter().enumerate() {
            for (d, s) in gt[i * c..(i + 1) * c].iter_mut().zip(&g[r * c..(r + 1) * c]) {
                *d += s;
            }
        }
        vec![Some(gt)]
    }))
}
