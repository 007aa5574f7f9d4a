//! Brute-force oracles for the signal-processing and metric operations.

use std::f64::consts::PI;

/// Directogram by explicit double loop. The angular distance between a
/// motion and a bin centre comes from the dot product of unit vectors, so
/// no angle wrapping logic is shared with the library.
pub fn directogram(motions: &[[f64; 2]], valid: &[bool], joints: usize, bins: usize) -> Vec<f64> {
    let steps = motions.len() / joints;
    let width = 2.0 * PI / bins as f64;
    let mut out = vec![0.0; steps * bins];
    for t in 0..steps {
        for k in 0..bins {
            let (cy, cx) = (k as f64 * width).sin_cos();
            let mut acc = 0.0;
            for j in 0..joints {
                let [dx, dy] = motions[t * joints + j];
                let mag = (dx * dx + dy * dy).sqrt();
                if !valid[t * joints + j] || mag == 0.0 {
                    continue;
                }
                let cos = ((dx * cx + dy * cy) / mag).clamp(-1.0, 1.0);
                if cos.acos() <= width + 1e-9 {
                    acc += mag;
                }
            }
            out[t * bins + k] = acc;
        }
    }
    out
}

pub fn flux(rows: &[f64], cols: usize) -> Vec<f64> {
    let steps = rows.len() / cols;
    let mut raw = vec![0.0; steps];
    for t in 1..steps {
        let mut s = 0.0;
        for k in 0..cols {
            let d = rows[t * cols + k] - rows[(t - 1) * cols + k];
            if d > 0.0 {
                s += d;
            }
        }
        raw[t] = s;
    }
    let mut max = 0.0;
    for &v in &raw {
        if v > max {
            max = v;
        }
    }
    if max > 0.0 {
        raw.iter().map(|v| v / max).collect()
    } else {
        raw
    }
}

pub struct Peaks {
    pub pre_max: usize,
    pub post_max: usize,
    pub pre_avg: usize,
    pub post_avg: usize,
    pub delta: f64,
    pub relative: bool,
    pub wait: usize,
}

/// Peak picking straight from the definition: each condition evaluated by
/// scanning its window, then the spacing rule applied left to right.
pub fn peaks(o: &[f64], c: &Peaks) -> Vec<usize> {
    let n = o.len() as isize;
    let mut out: Vec<usize> = Vec::new();
    for t in 0..n {
        let v = o[t as usize];
        if v <= 0.0 {
            continue;
        }
        let mut is_max = true;
        for i in t - c.pre_max as isize..=t + c.post_max as isize {
            if i >= 0 && i < n && o[i as usize] > v {
                is_max = false;
            }
        }
        let mut sum = 0.0;
        let mut count = 0;
        for i in t - c.pre_avg as isize..=t + c.post_avg as isize {
            if i >= 0 && i < n {
                sum += o[i as usize];
                count += 1;
            }
        }
        let thr = if c.relative { c.delta * v } else { c.delta };
        let above = v >= sum / count as f64 + thr;
        let spaced = out.last().is_none_or(|&p| t as usize - p > c.wait);
        if is_max && above && spaced {
            out.push(t as usize);
        }
    }
    out
}

/// Size of a maximum one-to-one matching between two beat lists where a
/// pair may match when their distance is within `tol`; exhaustive search.
pub fn optimal_matching(gen: &[usize], reference: &[usize], tol: usize) -> usize {
    fn go(i: usize, gen: &[usize], reference: &[usize], used: &mut Vec<bool>, tol: usize) -> usize {
        if i == gen.len() {
            return 0;
        }
        let mut best = go(i + 1, gen, reference, used, tol);
        for j in 0..reference.len() {
            if !used[j] && gen[i].abs_diff(reference[j]) <= tol {
                used[j] = true;
                best = best.max(1 + go(i + 1, gen, reference, used, tol));
                used[j] = false;
            }
        }
        best
    }
    go(0, gen, reference, &mut vec![false; reference.len()], tol)
}

/// Magnitude DFT by direct summation with a periodic Hann window.
pub fn stft_magnitude(x: &[f64], window: usize, hop: usize) -> Vec<Vec<f64>> {
    let frames = (x.len() - window) / hop + 1;
    let hann: Vec<f64> = (0..window)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / window as f64).cos())
        .collect();
    (0..frames)
        .map(|f| {
            (0..window / 2 + 1)
                .map(|k| {
                    let (mut re, mut im) = (0.0, 0.0);
                    for n in 0..window {
                        let v = x[f * hop + n] * hann[n];
                        let ang = -2.0 * PI * (k * n) as f64 / window as f64;
                        re += v * ang.cos();
                        im += v * ang.sin();
                    }
                    (re * re + im * im).sqrt()
                })
                .collect()
        })
        .collect()
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}
