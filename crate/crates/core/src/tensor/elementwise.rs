use std::sync::Arc;

use super::{numel, Tensor};
use crate::error::{Error, Result};

/// Element-wise operation kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElemOp {
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Exp,
    Ln,
    Tanh,
    Sigmoid,
    Relu,
    Square,
    Sqrt,
    Sin,
    Cos,
    Silu,
}

impl ElemOp {
    fn is_binary(self) -> bool {
        matches!(self, ElemOp::Add | ElemOp::Sub | ElemOp::Mul | ElemOp::Div)
    }
}

/// Dispatches an [`ElemOp`]; binary kinds need `b`, unary kinds reject it.
pub fn elementwise(op: ElemOp, a: &Tensor, b: Option<&Tensor>) -> Result<Tensor> {
    match (op.is_binary(), b) {
        (true, Some(b)) => match op {
            ElemOp::Add => a.add(b),
            ElemOp::Sub => a.sub(b),
            ElemOp::Mul => a.mul(b),
            ElemOp::Div => a.div(b),
            _ => unreachable!(),
        },
        (true, None) => Err(Error::Contract(format!("{op:?} needs two operands"))),
        (false, Some(_)) => Err(Error::Contract(format!("{op:?} takes one operand"))),
        (false, None) => match op {
            ElemOp::Neg => Ok(a.neg()),
            ElemOp::Exp => Ok(a.exp()),
            ElemOp::Ln => a.ln(),
            ElemOp::Tanh => Ok(a.tanh()),
            ElemOp::Sigmoid => Ok(a.sigmoid()),
            ElemOp::Relu => Ok(a.relu()),
            ElemOp::Square => Ok(a.square()),
            ElemOp::Sqrt => a.sqrt(),
            ElemOp::Sin => Ok(a.sin()),
            ElemOp::Cos => Ok(a.cos()),
            ElemOp::Silu => Ok(a.silu()),
            _ => unreachable!(),
        },
    }
}

/// How one operand maps onto the broadcast output.
#[derive(Clone)]
enum Bcast {
    Same,
    Scalar,
    /// Operand equals the trailing `len` elements, repeated.
    Suffix(usize),
    /// Explicit output-index → operand-index table.
    Map(Arc<Vec<u32>>),
}

impl Bcast {
    #[inline]
    fn index(&self, i: usize) -> usize {
        match self {
            Bcast::Same => i,
            Bcast::Scalar => 0,
            Bcast::Suffix(n) => i % n,
            Bcast::Map(m) => m[i] as usize,
        }
    }

    /// Sums an output-shaped gradient down to the operand's size.
    fn reduce(&self, g: &[f32], len: usize) -> Vec<f32> {
        match self {
            Bcast::Same => g.to_vec(),
            _ => {
                let mut out = vec![0.0f32; len];
                for (i, v) in g.iter().enumerate() {
                    out[self.index(i)] += v;
                }
                out
            }
        }
    }
}

pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i < rank - a.len() { 1 } else { a[i - (rank - a.len())] };
        let db = if i < rank - b.len() { 1 } else { b[i - (rank - b.len())] };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

fn plan(input: &[usize], out: &[usize]) -> Bcast {
    if input == out {
        return Bcast::Same;
    }
    let n = numel(input);
    if n == 1 {
        return Bcast::Scalar;
    }
    // Leading singleton/missing dims followed by an exact suffix of `out`.
    let skip = input.iter().take_while(|&&d| d == 1).count();
    let core = &input[skip..];
    if out.ends_with(core) {
        return Bcast::Suffix(n);
    }
    let rank = out.len();
    let offset = rank - input.len();
    let mut strides = vec![0usize; rank];
    let mut s = 1;
    for i in (0..input.len()).rev() {
        if input[i] != 1 {
            strides[i + offset] = s;
        }
        s *= input[i];
    }
    let total = numel(out);
    let mut map = Vec::with_capacity(total);
    let mut idx = vec![0usize; rank];
    let mut cur = 0usize;
    for _ in 0..total {
        map.push(cur as u32);
        for d in (0..rank).rev() {
            idx[d] += 1;
            cur += strides[d];
            if idx[d] < out[d] {
                break;
            }
            cur -= strides[d] * idx[d];
            idx[d] = 0;
        }
    }
    Bcast::Map(Arc::new(map))
}

fn binary(
    name: &'static str,
    a: &Tensor,
    b: &Tensor,
    f: impl Fn(f32, f32) -> f32,
    // Partial derivatives (d/da, d/db) given (a, b, out).
    df: impl Fn(f32, f32) -> (f32, f32) + 'static,
) -> Result<Tensor> {
    let out_shape =
        broadcast_shape(a.shape(), b.shape()).ok_or_else(|| Error::dim(name, a.shape(), b.shape()))?;
    let pa = plan(a.shape(), &out_shape);
    let pb = plan(b.shape(), &out_shape);
    let n = numel(&out_shape);
    let (ad, bd) = (a.data(), b.data());
    let data: Vec<f32> = match (&pa, &pb) {
        (Bcast::Same, Bcast::Same) => ad.iter().zip(bd).map(|(&x, &y)| f(x, y)).collect(),
        (Bcast::Same, Bcast::Scalar) => {
            let y = bd[0];
            ad.iter().map(|&x| f(x, y)).collect()
        }
        _ => (0..n).map(|i| f(ad[pa.index(i)], bd[pb.index(i)])).collect(),
    };
    let (a_arc, b_arc) = (a.data_arc().clone(), b.data_arc().clone());
    let (la, lb) = (a.numel(), b.numel());
    Ok(Tensor::record(data, &out_shape, &[a, b], move |g, needs| {
        let mut ga = needs[0].then(|| vec![0.0f32; n]);
        let mut gb = needs[1].then(|| vec![0.0f32; n]);
        for i in 0..n {
            let (da, db) = df(a_arc[pa.index(i)], b_arc[pb.index(i)]);
            if let Some(ga) = ga.as_mut() {
                ga[i] = g[i] * da;
            }
            if let Some(gb) = gb.as_mut() {
                gb[i] = g[i] * db;
            }
        }
        vec![ga.map(|v| pa.reduce(&v, la)), gb.map(|v| pb.reduce(&v, lb))]
    }))
}

fn unary(
    a: &Tensor,
    f: impl Fn(f32) -> f32,
    // Derivative given (input, output).
    df: impl Fn(f32, f32) -> f32 + 'static,
) -> Tensor {
    let data: Vec<f32> = a.data().iter().map(|&x| f(x)).collect();
    let x = a.data_arc().clone();
    let y = std::sync::Arc::new(data.clone());
    Tensor::record(data, a.shape(), &[a], move |g, _| {
        vec![Some(
            g.iter()
                .zip(x.iter().zip(y.iter()))
                .map(|(g, (&x, &y))| g * df(x, y))
                .collect(),
        )]
    })
}

fn sigmoid(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tensor {
    pub fn add(&self, b: &Tensor) -> Result<Tensor> {
        binary("add", self, b, |x, y| x + y, |_, _| (1.0, 1.0))
    }

    pub fn sub(&self, b: &Tensor) -> Result<Tensor> {
        binary("sub", self, b, |x, y| x - y, |_, _| (1.0, -1.0))
    }

    pub fn mul(&self, b: &Tensor) -> Result<Tensor> {
        binary("mul", self, b, |x, y| x * y, |x, y| (y, x))
    }

    pub fn div(&self, b: &Tensor) -> Result<Tensor> {
        if b.data().iter().any(|&v| v == 0.0) {
            return Err(Error::domain("div", "division by zero"));
        }
        binary("div", self, b, |x, y| x / y, |x, y| (1.0 / y, -x / (y * y)))
    }

    pub fn neg(&self) -> Tensor {
        unary(self, |x| -x, |_, _| -1.0)
    }

    pub fn exp(&self) -> Tensor {
        unary(self, f32::exp, |_, y| y)
    }

    pub fn ln(&self) -> Result<Tensor> {
        if let Some(v) = self.data().iter().find(|&&v| v <= 0.0 || v.is_nan()) {
            return Err(Error::domain("ln", format!("non-positive argument {v}")));
        }
        Ok(unary(self, f32::ln, |x, _| 1.0 / x))
    }

    pub fn tanh(&self) -> Tensor {
        unary(self, f32::tanh, |_, y| 1.0 - y * y)
    }

    pub fn sigmoid(&self) -> Tensor {
        unary(self, sigmoid, |_, y| y * (1.0 - y))
    }

    pub fn relu(&self) -> Tensor {
        unary(self, |x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn square(&self) -> Tensor {
        unary(self, |x| x * x, |x, _| 2.0 * x)
    }

    pub fn sqrt(&self) -> Result<Tensor> {
        if let Some(v) = self.data().iter().find(|&&v| v < 0.0 || v.is_nan()) {
            return Err(Error::domain("sqrt", format!("negative argument {v}")));
        }
        Ok(unary(self, f32::sqrt, |_, y| 0.5 / y))
    }

    pub fn sin(&self) -> Tensor {
        unary(self, f32::sin, |x, _| x.cos())
    }

    pub fn cos(&self) -> Tensor {
        unary(self, f32::cos, |x, _| -x.sin())
    }

    /// x·σ(x).
    pub fn silu(&self) -> Tensor {
        unary(
            self,
            |x| x * sigmoid(x),
            |x, _| {
                let s = sigmoid(x);
                s * (1.0 + x * (1.0 - s))
            },
        )
    }

    pub fn scale(&self, k: f32) -> Tensor {
        unary(self, move |x| x * k, move |_, _| k)
    }

    pub fn add_scalar(&self, k: f32) -> Tensor {
        unary(self, move |x| x + k, |_, _| 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn broadcast_shapes() {
        assert_eq!(broadcast_shape(&[2, 3], &[3]), Some(vec![2, 3]));
        assert_eq!(broadcast_shape(&[2, 3, 4], &[3, 1]), Some(vec![2, 3, 4]));
        assert_eq!(broadcast_shape(&[2, 3], &[2]), None);
    }

    #[test]
    fn mapped_broadcast_matches_manual() {
        let a = Tensor::new((0..24).map(|v| v as f32).collect(), &[2, 3, 4]);
        let b = Tensor::new(vec![10.0, 20.0, 30.0], &[3, 1]);
        let c = a.add(&b).unwrap();
        for i in 0..2 {
            for j in 0..3 {
                for k in 0..4 {
                    let idx = i * 12 + j * 4 + k;
                    assert_eq!(c.data()[idx], idx as f32 + 10.0 * (j + 1) as f32);
                }
            }
        }
    }

    #[test]
    fn dispatch_rejects_wrong_arity() {
        let a = Tensor::new(vec![1.0], &[1]);
        assert!(elementwise(ElemOp::Add, &a, None).is_err());
        assert!(elementwise(ElemOp::Exp, &a, Some(&a)).is_err());
    }
}
