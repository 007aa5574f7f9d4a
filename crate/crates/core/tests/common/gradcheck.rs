//! Finite-difference gradient oracles.
//!
//! Per-op checks differentiate a naive `f64` reference forward with central
//! differences (h = 1e-3) and compare against the engine's `f32` backward.
//! Composite checks difference the engine forward itself along random
//! directions.

use rand::Rng;
use vidsound::tensor::{self, Tape, Tensor};

use super::{normal, rel_err};

#[derive(Clone, Copy)]
pub enum Dist {
    Normal,
    /// Uniform in [0.5, 2.0].
    Positive,
    /// Normal but bounded away from zero (|x| ≥ 0.5).
    AwayFromZero,
}

pub struct OpCase {
    pub name: &'static str,
    pub inputs: Vec<(Vec<usize>, Dist)>,
    pub engine: Box<dyn Fn(&[Tensor]) -> Tensor>,
    pub reference: Box<dyn Fn(&[Vec<f64>]) -> Vec<f64>>,
}

fn sample(rng: &mut impl Rng, n: usize, dist: Dist) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let v = match dist {
                Dist::Normal => normal(rng),
                Dist::Positive => 0.5 + 1.5 * rng.random::<f64>(),
                Dist::AwayFromZero => {
                    let v = normal(rng);
                    v.signum() * (0.5 + v.abs())
                }
            };
            // Round-trip through f32 so the engine and reference see the
            // same point.
            v as f32 as f64
        })
        .collect()
}

pub struct OpResult {
    pub name: &'static str,
    pub max_grad_err: f64,
    pub max_fwd_err: f64,
}

/// Runs `points` random draws; returns the worst gradient and forward
/// relative errors.
pub fn check_op(case: &OpCase, points: usize, h: f64, rng: &mut impl Rng) -> OpResult {
    let mut max_grad_err: f64 = 0.0;
    let mut max_fwd_err: f64 = 0.0;
    for _ in 0..points {
        let xs: Vec<Vec<f64>> = case
            .inputs
            .iter()
            .map(|(shape, dist)| sample(rng, shape.iter().product(), *dist))
            .collect();

        let tape = Tape::new();
        let leaves: Vec<Tensor> = xs
            .iter()
            .zip(&case.inputs)
            .map(|(x, (shape, _))| tape.leaf(x.iter().map(|&v| v as f32).collect(), shape))
            .collect();
        let out = (case.engine)(&leaves);
        let weights: Vec<f64> = (0..out.numel()).map(|_| normal(rng)).collect();
        let w = Tensor::new(weights.iter().map(|&v| v as f32).collect(), out.shape());
        let loss = out.mul(&w).unwrap().sum();
        tape.backward(&loss).unwrap();

        let reference_out = (case.reference)(&xs);
        let engine_out: Vec<f64> = out.data().iter().map(|&v| v as f64).collect();
        max_fwd_err = max_fwd_err.max(rel_err(&engine_out, &reference_out));

        let objective = |xs: &[Vec<f64>]| -> f64 {
            (case.reference)(xs).iter().zip(&weights).map(|(a, b)| a * b).sum()
        };
        for (j, leaf) in leaves.iter().enumerate() {
            let analytic: Vec<f64> = leaf.grad().unwrap().iter().map(|&v| v as f64).collect();
            let mut numeric = vec![0.0; xs[j].len()];
            let mut probe = xs.clone();
            for i in 0..xs[j].len() {
                probe[j][i] = xs[j][i] + h;
                let up = objective(&probe);
                probe[j][i] = xs[j][i] - h;
                let down = objective(&probe);
                probe[j][i] = xs[j][i];
                numeric[i] = (up - down) / (2.0 * h);
            }
            max_grad_err = max_grad_err.max(rel_err(&analytic, &numeric));
        }
    }
    OpResult {
        name: case.name,
        max_grad_err,
        max_fwd_err,
    }
}

/// Directional central difference of an engine-evaluated scalar function.
/// `f` evaluates the loss for the given parameter values; `grad` is the
/// engine's analytic gradient at `params`. The perturbation actually applied
/// (after `f32` rounding) is used for the linear prediction.
pub fn directional_check(
    f: &dyn Fn(&[Vec<f32>]) -> f64,
    params: &[Vec<f32>],
    grad: &[Vec<f32>],
    step: f64,
    rng: &mut impl Rng,
) -> f64 {
    let mut plus = params.to_vec();
    let mut minus = params.to_vec();
    let mut predicted = 0.0f64;
    for (j, p) in params.iter().enumerate() {
        for i in 0..p.len() {
            let v = normal(rng);
            let up = (p[i] as f64 + step * v) as f32;
            let down = (p[i] as f64 - step * v) as f32;
            plus[j][i] = up;
            minus[j][i] = down;
            predicted += grad[j][i] as f64 * (up as f64 - down as f64);
        }
    }
    let measured = f(&plus) - f(&minus);
    (measured - predicted).abs() / measured.abs().max(predicted.abs()).max(1e-30)
}

// ---- naive f64 references ----

fn bcast_index(out_shape: &[usize], in_shape: &[usize], flat: usize) -> usize {
    let mut rem = flat;
    let mut coords = vec![0usize; out_shape.len()];
    for d in (0..out_shape.len()).rev() {
        coords[d] = rem % out_shape[d];
        rem /= out_shape[d];
    }
    let off = out_shape.len() - in_shape.len();
    let mut idx = 0;
    for d in 0..in_shape.len() {
        let c = if in_shape[d] == 1 { 0 } else { coords[d + off] };
        idx = idx * in_shape[d] + c;
    }
    idx
}

fn ref_binary(a: &[f64], sa: &[usize], b: &[f64], sb: &[usize], so: &[usize], f: fn(f64, f64) -> f64) -> Vec<f64> {
    let n: usize = so.iter().product();
    (0..n)
        .map(|i| f(a[bcast_index(so, sa, i)], b[bcast_index(so, sb, i)]))
        .collect()
}

fn ref_matmul(a: &[f64], b: &[f64], batch_a: usize, batch_b: usize, m: usize, k: usize, n: usize) -> Vec<f64> {
    let batch = batch_a.max(batch_b);
    let mut out = vec![0.0; batch * m * n];
    for bi in 0..batch {
        let ao = if batch_a == 1 { 0 } else { bi * m * k };
        let bo = if batch_b == 1 { 0 } else { bi * k * n };
        for i in 0..m {
            for j in 0..n {
                out[bi * m * n + i * n + j] = (0..k).map(|p| a[ao + i * k + p] * b[bo + p * n + j]).sum();
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn ref_conv1d(x: &[f64], w: &[f64], bias: Option<&[f64]>, b: usize, cin: usize, l: usize, cout: usize, k: usize, stride: usize, pad: usize) -> Vec<f64> {
    let lo = (l + 2 * pad - k) / stride + 1;
    let mut out = vec![0.0; b * cout * lo];
    for bi in 0..b {
        for co in 0..cout {
            for t in 0..lo {
                let mut s = bias.map_or(0.0, |bb| bb[co]);
                for ci in 0..cin {
                    for kk in 0..k {
                        let pos = (t * stride + kk) as isize - pad as isize;
                        if pos >= 0 && (pos as usize) < l {
                            s += w[(co * cin + ci) * k + kk] * x[(bi * cin + ci) * l + pos as usize];
                        }
                    }
                }
                out[(bi * cout + co) * lo + t] = s;
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn ref_conv_transpose1d(x: &[f64], w: &[f64], b: usize, cin: usize, l: usize, cout: usize, k: usize, stride: usize, pad: usize) -> Vec<f64> {
    let full = (l - 1) * stride + k;
    let lo = full - 2 * pad;
    let mut out = vec![0.0; b * cout * lo];
    for bi in 0..b {
        for ci in 0..cin {
            for t in 0..l {
                for co in 0..cout {
                    for kk in 0..k {
                        let pos = (t * stride + kk) as isize - pad as isize;
                        if pos >= 0 && (pos as usize) < lo {
                            out[(bi * cout + co) * lo + pos as usize] += x[(bi * cin + ci) * l + t] * w[(ci * cout + co) * k + kk];
                        }
                    }
                }
            }
        }
    }
    out
}

fn ref_softmax_last(x: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for (row, o) in x.chunks(n).zip(out.chunks_mut(n)) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|v| (v - m).exp()).sum();
        for (d, v) in o.iter_mut().zip(row) {
            *d = (v - m).exp() / z;
        }
    }
    out
}

fn ref_standardize(x: &[f64], eps: f64) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    x.iter().map(|v| (v - mean) / (var + eps).sqrt()).collect()
}

fn unary_case(name: &'static str, dist: Dist, engine: fn(&Tensor) -> Tensor, reference: fn(f64) -> f64) -> OpCase {
    OpCase {
        name,
        inputs: vec![(vec![3, 4], dist)],
        engine: Box::new(move |x| engine(&x[0])),
        reference: Box::new(move |x| x[0].iter().map(|&v| reference(v)).collect()),
    }
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Every differentiable tensor operation, each paired with its reference.
pub fn op_suite() -> Vec<OpCase> {
    let mut cases = vec![
        OpCase {
            name: "add",
            inputs: vec![(vec![3, 4], Dist::Normal), (vec![3, 4], Dist::Normal)],
            engine: Box::new(|x| x[0].add(&x[1]).unwrap()),
            reference: Box::new(|x| x[0].iter().zip(&x[1]).map(|(a, b)| a + b).collect()),
        },
        OpCase {
            name: "add (broadcast [2,3,4]+[3,1])",
            inputs: vec![(vec![2, 3, 4], Dist::Normal), (vec![3, 1], Dist::Normal)],
            engine: Box::new(|x| x[0].add(&x[1]).unwrap()),
            reference: Box::new(|x| ref_binary(&x[0], &[2, 3, 4], &x[1], &[3, 1], &[2, 3, 4], |a, b| a + b)),
        },
        OpCase {
            name: "sub (broadcast [2,3]-[3])",
            inputs: vec![(vec![2, 3], Dist::Normal), (vec![3], Dist::Normal)],
            engine: Box::new(|x| x[0].sub(&x[1]).unwrap()),
            reference: Box::new(|x| ref_binary(&x[0], &[2, 3], &x[1], &[3], &[2, 3], |a, b| a - b)),
        },
        OpCase {
            name: "mul (broadcast [2,3,4]*[2,1,4])",
            inputs: vec![(vec![2, 3, 4], Dist::Normal), (vec![2, 1, 4], Dist::Normal)],
            engine: Box::new(|x| x[0].mul(&x[1]).unwrap()),
            reference: Box::new(|x| ref_binary(&x[0], &[2, 3, 4], &x[1], &[2, 1, 4], &[2, 3, 4], |a, b| a * b)),
        },
        OpCase {
            name: "div",
            inputs: vec![(vec![3, 4], Dist::Normal), (vec![3, 4], Dist::AwayFromZero)],
            engine: Box::new(|x| x[0].div(&x[1]).unwrap()),
            reference: Box::new(|x| x[0].iter().zip(&x[1]).map(|(a, b)| a / b).collect()),
        },
        unary_case("neg", Dist::Normal, |t| t.neg(), |v| -v),
        unary_case("exp", Dist::Normal, |t| t.exp(), f64::exp),
        unary_case("ln", Dist::Positive, |t| t.ln().unwrap(), f64::ln),
        unary_case("tanh", Dist::Normal, |t| t.tanh(), f64::tanh),
        unary_case("sigmoid", Dist::Normal, |t| t.sigmoid(), sigmoid),
        unary_case("relu", Dist::AwayFromZero, |t| t.relu(), |v| v.max(0.0)),
        unary_case("square", Dist::Normal, |t| t.square(), |v| v * v),
        unary_case("sqrt", Dist::Positive, |t| t.sqrt().unwrap(), f64::sqrt),
        unary_case("sin", Dist::Normal, |t| t.sin(), f64::sin),
        unary_case("cos", Dist::Normal, |t| t.cos(), f64::cos),
        unary_case("silu", Dist::Normal, |t| t.silu(), |v| v * sigmoid(v)),
        unary_case("scale", Dist::Normal, |t| t.scale(-1.5), |v| -1.5 * v),
        OpCase {
            name: "matmul 4x5·5x3",
            inputs: vec![(vec![4, 5], Dist::Normal), (vec![5, 3], Dist::Normal)],
            engine: Box::new(|x| x[0].matmul(&x[1]).unwrap()),
            reference: Box::new(|x| ref_matmul(&x[0], &x[1], 1, 1, 4, 5, 3)),
        },
        OpCase {
            name: "matmul batched [2,3,4]·[1,4,2]",
            inputs: vec![(vec![2, 3, 4], Dist::Normal), (vec![1, 4, 2], Dist::Normal)],
            engine: Box::new(|x| x[0].matmul(&x[1]).unwrap()),
            reference: Box::new(|x| ref_matmul(&x[0], &x[1], 2, 1, 3, 4, 2)),
        },
        OpCase {
            name: "conv1d B2 Cin3 Cout2 L8 K3",
            inputs: vec![(vec![2, 3, 8], Dist::Normal), (vec![2, 3, 3], Dist::Normal), (vec![2], Dist::Normal)],
            engine: Box::new(|x| tensor::conv1d(&x[0], &x[1], Some(&x[2]), 1, 1).unwrap()),
            reference: Box::new(|x| ref_conv1d(&x[0], &x[1], Some(&x[2]), 2, 3, 8, 2, 3, 1, 1)),
        },
        OpCase {
            name: "conv1d strided",
            inputs: vec![(vec![2, 3, 9], Dist::Normal), (vec![2, 3, 5], Dist::Normal)],
            engine: Box::new(|x| tensor::conv1d(&x[0], &x[1], None, 2, 2).unwrap()),
            reference: Box::new(|x| ref_conv1d(&x[0], &x[1], None, 2, 3, 9, 2, 5, 2, 2)),
        },
        OpCase {
            name: "conv_transpose1d",
            inputs: vec![(vec![2, 3, 5], Dist::Normal), (vec![3, 2, 4], Dist::Normal)],
            engine: Box::new(|x| tensor::conv_transpose1d(&x[0], &x[1], None, 2, 1).unwrap()),
            reference: Box::new(|x| ref_conv_transpose1d(&x[0], &x[1], 2, 3, 5, 2, 4, 2, 1)),
        },
        OpCase {
            name: "softmax",
            inputs: vec![(vec![3, 5], Dist::Normal)],
            engine: Box::new(|x| x[0].softmax(1).unwrap()),
            reference: Box::new(|x| ref_softmax_last(&x[0], 5)),
        },
        OpCase {
            name: "softmax (inner axis)",
            inputs: vec![(vec![2, 4, 3], Dist::Normal)],
            engine: Box::new(|x| x[0].softmax(1).unwrap().permute(&[0, 2, 1]).unwrap()),
            reference: Box::new(|x| {
                let mut t = vec![0.0; 24];
                for b in 0..2 {
                    for i in 0..4 {
                        for j in 0..3 {
                            t[b * 12 + j * 4 + i] = x[0][b * 12 + i * 3 + j];
                        }
                    }
                }
                ref_softmax_last(&t, 4)
            }),
        },
        OpCase {
            name: "sum",
            inputs: vec![(vec![3, 4], Dist::Normal)],
            engine: Box::new(|x| x[0].sum()),
            reference: Box::new(|x| vec![x[0].iter().sum()]),
        },
        OpCase {
            name: "mean_axis",
            inputs: vec![(vec![3, 4], Dist::Normal)],
            engine: Box::new(|x| x[0].mean_axis(0, false).unwrap()),
            reference: Box::new(|x| (0..4).map(|j| (0..3).map(|i| x[0][i * 4 + j]).sum::<f64>() / 3.0).collect()),
        },
        OpCase {
            name: "max_axis",
            inputs: vec![(vec![3, 4], Dist::Normal)],
            engine: Box::new(|x| x[0].max_axis(1, false).unwrap()),
            reference: Box::new(|x| x[0].chunks(4).map(|r| r.iter().cloned().fold(f64::MIN, f64::max)).collect()),
        },
        OpCase {
            name: "transpose+reshape",
            inputs: vec![(vec![2, 3], Dist::Normal)],
            engine: Box::new(|x| x[0].transpose(0, 1).unwrap().reshape(&[6]).unwrap().square()),
            reference: Box::new(|x| {
                let mut o = vec![];
                for j in 0..3 {
                    for i in 0..2 {
                        o.push(x[0][i * 3 + j] * x[0][i * 3 + j]);
                    }
                }
                o
            }),
        },
        OpCase {
            name: "concat+slice",
            inputs: vec![(vec![2, 2], Dist::Normal), (vec![2, 3], Dist::Normal)],
            engine: Box::new(|x| {
                let c = tensor::concat(&[&x[0], &x[1]], 1).unwrap();
                c.slice(1, 1, 4).unwrap().exp()
            }),
            reference: Box::new(|x| {
                let mut o = vec![];
                for r in 0..2 {
                    let row: Vec<f64> = x[0][r * 2..r * 2 + 2].iter().chain(&x[1][r * 3..r * 3 + 3]).cloned().collect();
                    o.extend(row[1..4].iter().map(|v| v.exp()));
                }
                o
            }),
        },
        OpCase {
            name: "embedding",
            inputs: vec![(vec![4, 3], Dist::Normal)],
            engine: Box::new(|x| tensor::embedding(&x[0], &[2, 0, 2]).unwrap().square()),
            reference: Box::new(|x| [2usize, 0, 2].iter().flat_map(|&r| x[0][r * 3..r * 3 + 3].iter().map(|v| v * v).collect::<Vec<_>>()).collect()),
        },
        OpCase {
            name: "group_norm",
            inputs: vec![(vec![2, 4, 5], Dist::Normal), (vec![4], Dist::Normal), (vec![4], Dist::Normal)],
            engine: Box::new(|x| tensor::group_norm(&x[0], 2, &x[1], &x[2], 1e-5).unwrap()),
            reference: Box::new(|x| {
                let mut out = vec![0.0; 40];
                for b in 0..2 {
                    for g in 0..2 {
                        let off = b * 20 + g * 10;
                        let z = ref_standardize(&x[0][off..off + 10], 1e-5);
                        for (i, v) in z.iter().enumerate() {
                            let c = g * 2 + i / 5;
                            out[off + i] = v * x[1][c] + x[2][c];
                        }
                    }
                }
                out
            }),
        },
        OpCase {
            name: "layer_norm",
            inputs: vec![(vec![3, 6], Dist::Normal), (vec![6], Dist::Normal), (vec![6], Dist::Normal)],
            engine: Box::new(|x| tensor::layer_norm(&x[0], &x[1], &x[2], 1e-5).unwrap()),
            reference: Box::new(|x| {
                x[0].chunks(6)
                    .flat_map(|r| ref_standardize(r, 1e-5).into_iter().enumerate().map(|(i, v)| v * x[1][i] + x[2][i]).collect::<Vec<_>>())
                    .collect()
            }),
        },
    ];
    cases.shrink_to_fit();
    cases
}

/// Like [`directional_check`], but the measured derivative is the Richardson
/// extrapolation of central differences at `step` and `step / 2`, which
/// cancels the O(step²) curvature term. For parameters whose loss is strongly
/// curved, where a plain step small enough to be linear drowns in f32 noise.
pub fn directional_check_extrapolated(
    f: &dyn Fn(&[Vec<f32>]) -> f64,
    params: &[Vec<f32>],
    grad: &[Vec<f32>],
    step: f64,
    rng: &mut impl Rng,
) -> f64 {
    directional_check_richardson(f, params, grad, &vec![1.0; params.len()], step, 1, rng)
}

/// Richardson tableau over central differences at `step / 2^k`, k = 0..=levels,
/// cancelling curvature terms up to O(step^(2 levels)). The random direction
/// is multiplied by `scales[j]` on tensor `j`, so parameters with very
/// different sensitivities can share one directional derivative.
pub fn directional_check_richardson(
    f: &dyn Fn(&[Vec<f32>]) -> f64,
    params: &[Vec<f32>],
    grad: &[Vec<f32>],
    scales: &[f64],
    step: f64,
    levels: usize,
    rng: &mut impl Rng,
) -> f64 {
    let dir: Vec<Vec<f64>> = params
        .iter()
        .zip(scales)
        .map(|(p, &s)| p.iter().map(|_| s * normal(rng)).collect())
        .collect();
    let central = |h: f64| {
        let shift = |sign: f64| -> Vec<Vec<f32>> {
            params
                .iter()
                .zip(&dir)
                .map(|(p, d)| p.iter().zip(d).map(|(&x, &v)| (x as f64 + sign * h * v) as f32).collect())
                .collect()
        };
        (f(&shift(1.0)) - f(&shift(-1.0))) / (2.0 * h)
    };
    let mut row: Vec<f64> = (0..=levels).map(|k| central(step / 2f64.powi(k as i32))).collect();
    for m in 1..=levels {
        let w = 4f64.powi(m as i32);
        row = row.windows(2).map(|c| (w * c[1] - c[0]) / (w - 1.0)).collect();
    }
    let measured = row[0];
    let predicted: f64 = grad
        .iter()
        .zip(&dir)
        .flat_map(|(g, d)| g.iter().zip(d).map(|(&a, &b)| a as f64 * b))
        .sum();
    (measured - predicted).abs() / measured.abs().max(predicted.abs()).max(1e-30)
}

/// Directional derivative from a least-squares fit of the odd part
/// `(f(x + h v) - f(x - h v)) / 2 = d h + c3 h^3 + c5 h^5` over `points` steps
/// spaced geometrically from `h_min` to `h_max`. Averages the f32 rounding
/// noise of many evaluations where a Richardson tableau amplifies it.
/// Directions whose predicted derivative is under half its standard
/// deviation are redrawn: near-orthogonal to the gradient, relative error
/// measures only the noise floor.
pub fn directional_check_fit(
    f: &dyn Fn(&[Vec<f32>]) -> f64,
    params: &[Vec<f32>],
    grad: &[Vec<f32>],
    scales: &[f64],
    (h_min, h_max): (f64, f64),
    points: usize,
    rng: &mut impl Rng,
) -> f64 {
    let spread: f64 = grad
        .iter()
        .zip(scales)
        .flat_map(|(g, &s)| g.iter().map(move |&a| (a as f64 * s).powi(2)))
        .sum::<f64>()
        .sqrt();
    let project = |dir: &[Vec<f64>]| -> f64 {
        grad.iter()
            .zip(dir)
            .flat_map(|(g, d)| g.iter().zip(d).map(|(&a, &b)| a as f64 * b))
            .sum()
    };
    let (dir, predicted) = loop {
        let dir: Vec<Vec<f64>> = params
            .iter()
            .zip(scales)
            .map(|(p, &s)| p.iter().map(|_| s * normal(rng)).collect())
            .collect();
        let predicted = project(&dir);
        if predicted.abs() >= 0.5 * spread {
            break (dir, predicted);
        }
    };
    let shift = |h: f64| -> Vec<Vec<f32>> {
        params
            .iter()
            .zip(&dir)
            .map(|(p, d)| p.iter().zip(d).map(|(&x, &v)| (x as f64 + h * v) as f32).collect())
            .collect()
    };
    // Columns in units of h / h_max keep the normal equations well scaled.
    let mut ata = [[0.0f64; 3]; 3];
    let mut aty = [0.0f64; 3];
    for k in 0..points {
        let h = h_min * (h_max / h_min).powf(k as f64 / (points - 1) as f64);
        let y = (f(&shift(h)) - f(&shift(-h))) / 2.0;
        let u = h / h_max;
        let row = [u, u.powi(3), u.powi(5)];
        for i in 0..3 {
            aty[i] += row[i] * y;
            for j in 0..3 {
                ata[i][j] += row[i] * row[j];
            }
        }
    }
    let measured = solve3(ata, aty)[0] / h_max;
    (measured - predicted).abs() / measured.abs().max(predicted.abs()).max(1e-30)
}

/// Gaussian elimination with partial pivoting.
fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> [f64; 3] {
    for c in 0..3 {
        let p = (c..3).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..3 {
            let m = a[r][c] / a[c][c];
            for k in c..3 {
                a[r][k] -= m * a[c][k];
            }
            b[r] -= m * b[c];
        }
    }
    let mut x = [0.0; 3];
    for r in (0..3).rev() {
        x[r] = (b[r] - (r + 1..3).map(|k| a[r][k] * x[k]).sum::<f64>()) / a[r][r];
    }
    x
}
