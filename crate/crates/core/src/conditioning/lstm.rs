use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{Bound, Builder, Linear, ParamId};
use crate::tensor::{concat, Tensor};

/// One LSTM direction. Gate order along the packed `4H` axis: input,
/// forget, candidate, output.
#[derive(Debug, Clone, Copy)]
pub struct LstmCell {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new<R: Rng>(bd: &mut Builder<'_, R>, name: &str, input: usize, hidden: usize) -> Self {
        let std = 1.0 / (hidden as f32).sqrt();
        bd.scope(name, |bd| LstmCell {
            w_ih: bd.normal("w_ih", &[input, 4 * hidden], std),
            w_hh: bd.normal("w_hh", &[hidden, 4 * hidden], std),
            bias: bd.constant("bias", &[4 * hidden], 0.0),
            input,
            hidden,
        })
    }

    /// One step from precomputed input contributions `xw = x W_ih + b`,
    /// `[B, 4H]`. Returns the new `(h, c)`.
    fn step_pre(&self, p: &Bound, xw: &Tensor, h: &Tensor, c: &Tensor) -> Result<(Tensor, Tensor)> {
        let hd = self.hidden;
        let g = xw.add(&h.matmul(p.get(self.w_hh))?)?;
        let i = g.slice(1, 0, hd)?.sigmoid();
        let f = g.slice(1, hd, 2 * hd)?.sigmoid();
        let cand = g.slice(1, 2 * hd, 3 * hd)?.tanh();
        let o = g.slice(1, 3 * hd, 4 * hd)?.sigmoid();
        let c_new = f.mul(c)?.add(&i.mul(&cand)?)?;
        let h_new = o.mul(&c_new.tanh())?;
        Ok((h_new, c_new))
    }

    /// A single cell update for input `x` `[B, D]`.
    pub fn step(&self, p: &Bound, x: &Tensor, h: &Tensor, c: &Tensor) -> Result<(Tensor, Tensor)> {
        let xw = x.matmul(p.get(self.w_ih))?.add(p.get(self.bias))?;
        self.step_pre(p, &xw, h, c)
    }

    /// Hidden states for every step of `x` `[B, T, D]`, zero initial state.
    pub fn run(&self, p: &Bound, x: &Tensor, reverse: bool) -> Result<Vec<Tensor>> {
        let (b, t) = (x.shape()[0], x.shape()[1]);
        let xw = x.matmul(p.get(self.w_ih))?.add(p.get(self.bias))?;
        let mut h = Tensor::zeros(&[b, self.hidden]);
        let mut c = Tensor::zeros(&[b, self.hidden]);
        let mut out = vec![None; t];
        let order: Vec<usize> = if reverse { (0..t).rev().collect() } else { (0..t).collect() };
        for ti in order {
            let xt = xw.slice(1, ti, ti + 1)?.reshape(&[b, 4 * self.hidden])?;
            (h, c) = self.step_pre(p, &xt, &h, &c)?;
            out[ti] = Some(h.clone());
        }
        Ok(out.into_iter().map(|h| h.expect("every step visited")).collect())
    }
}

/// Bidirectional LSTM whose concatenated hidden sequence is projected to the
/// conditioning width.
#[derive(Debug, Clone, Copy)]
pub struct BiLstm {
    pub fwd: LstmCell,
    pub bwd: LstmCell,
    pub proj: Linear,
}

impl BiLstm {
    pub fn new<R: Rng>(bd: &mut Builder<'_, R>, name: &str, input: usize, hidden: usize, width: usize) -> Self {
        bd.scope(name, |bd| BiLstm {
            fwd: LstmCell::new(bd, "fwd", input, hidden),
            bwd: LstmCell::new(bd, "bwd", input, hidden),
            proj: Linear::new(bd, "proj", 2 * hidden, width, false),
        })
    }

    /// `[B, T, D_in]` → `[B, T, C]`.
    pub fn forward(&self, p: &Bound, x: &Tensor) -> Result<Tensor> {
        if x.rank() != 3 || x.shape()[2] != self.fwd.input {
            return Err(Error::dim("bilstm input", x.shape(), &[0, 0, self.fwd.input]));
        }
        let (b, t) = (x.shape()[0], x.shape()[1]);
        let f = self.fwd.run(p, x, false)?;
        let r = self.bwd.run(p, x, true)?;
        let steps: Vec<Tensor> = f
            .iter()
            .zip(&r)
            .map(|(a, c)| concat(&[a, c], 1))
            .collect::<Result<_>>()?;
        let refs: Vec<&Tensor> = steps.iter().collect();
        let h = concat(&refs, 1)?.reshape(&[b, t, 2 * self.fwd.hidden])?;
        self.proj.forward(p, &h)
    }
}
