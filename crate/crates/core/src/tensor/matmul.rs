use super::elementwise::broadcast_shape;
use super::{numel, Tensor};
use crate::error::{Error, Result};

/// C (m×n) = op(A) · op(B), where op transposes when the flag is set. `A` is
/// stored row-major as m×k (or k×m when transposed); likewise `B`. With
/// `accumulate` the product is added onto `c`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    a_t: bool,
    b: &[f32],
    b_t: bool,
    c: &mut [f32],
    accumulate: bool,
) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the strides above describe matrices lying entirely inside the
    // checked slices, and `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn batch_offsets(batch: &[usize], full: &[usize]) -> Vec<usize> {
    // Maps each flat batch index of `full` to the flat batch index of the
    // (right-aligned, possibly broadcast) operand batch shape `batch`.
    let total = numel(full);
    let offset = full.len() - batch.len();
    let mut strides = vec![0usize; full.len()];
    let mut s = 1;
    for i in (0..batch.len()).rev() {
        if batch[i] != 1 {
            strides[i + offset] = s;
        }
        s *= batch[i];
    }
    (0..total)
        .map(|mut flat| {
            let mut idx = 0;
            for d in (0..full.len()).rev() {
                idx += (flat % full[d]) * strides[d];
                flat /= full[d];
            }
            idx
        })
        .collect()
}

/// Batched matrix product `[.., m, k] · [.., k, n] → [.., m, n]` with
/// broadcasting over the leading dimensions.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() < 2 || b.rank() < 2 {
        return Err(Error::dim("matmul", a.shape(), b.shape()));
    }
    let (m, k) = (a.dim(a.rank() - 2), a.dim(a.rank() - 1));
    let (k2, n) = (b.dim(b.rank() - 2), b.dim(b.rank() - 1));
    if k != k2 {
        return Err(Error::dim("matmul", a.shape(), b.shape()));
    }
    let a_batch = &a.shape()[..a.rank() - 2];
    let b_batch = &b.shape()[..b.rank() - 2];

    // Right operand without batch dims: fold all of A's rows into one product.
    if b_batch.is_empty() {
        let rows = numel(a_batch) * m;
        let mut out = vec![0.0f32; rows * n];
        gemm(rows, k, n, a.data(), false, b.data(), false, &mut out, false);
        let mut shape = a.shape().to_vec();
        *shape.last_mut().unwrap() = n;
        let (ad, bd) = (a.data_arc().clone(), b.data_arc().clone());
        return Ok(Tensor::record(out, &shape, &[a, b], move |g, needs| {
            let ga = needs[0].then(|| {
                let mut ga = vec![0.0f32; rows * k];
                gemm(rows, n, k, g, false, &bd, true, &mut ga, false);
                ga
            });
            let gb = needs[1].then(|| {
                let mut gb = vec![0.0f32; k * n];
                gemm(k, rows, n, &ad, true, g, false, &mut gb, false);
                gb
            });
            vec![ga, gb]
        }));
    }

    let batch = broadcast_shape(a_batch, b_batch)
        .ok_or_else(|| Error::dim("matmul", a.shape(), b.shape()))?;
    let nb = numel(&batch);
    let a_off = batch_offsets(a_batch, &batch);
    let b_off = batch_offsets(b_batch, &batch);
    let mut out = vec![0.0f32; nb * m * n];
    for i in 0..nb {
        gemm(
            m,
            k,
            n,
            &a.data()[a_off[i] * m * k..],
            false,
            &b.data()[b_off[i] * k * n..],
            false,
            &mut out[i * m * n..],
            false,
        );
    }
    let mut shape = batch.clone();
    shape.extend([m, n]);
    let (ad, bd) = (a.data_arc().clone(), b.data_arc().clone());
    let (la, lb) = (a.numel(), b.numel());
    Ok(Tensor::record(out, &shape, &[a, b], move |g, needs| {
        let mut ga = needs[0].then(|| vec![0.0f32; la]);
        let mut gb = needs[1].then(|| vec![0.0f32; lb]);
        for i in 0..nb {
            let gi = &g[i * m * n..(i + 1) * m * n];
            if let Some(ga) = ga.as_mut() {
                let dst = &mut ga[a_off[i] * m * k..(a_off[i] + 1) * m * k];
                gemm(m, n, k, gi, false, &bd[b_off[i] * k * n..], true, dst, true);
            }
            if let Some(gb) = gb.as_mut() {
                let dst = &mut gb[b_off[i] * k * n..(b_off[i] + 1) * k * n];
                gemm(k, m, n, &ad[a_off[i] * m * k..], true, gi, false, dst, true);
            }
        }
        vec![ga, gb]
    }))
}

impl Tensor {
    pub fn matmul(&self, b: &Tensor) -> Result<Tensor> {
        matmul(self, b)
    }
}
