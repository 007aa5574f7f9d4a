//! Beat coverage and hit scores between generated and reference beats.
//!
//! BCS = B_a / B_g and BHS = B_a / B_t, with B_a counted by one-to-one
//! matching so neither ratio can exceed 1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TOLERANCE: usize = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeatAlignmentReport {
    pub b_g: usize,
    pub b_t: usize,
    pub b_a: usize,
    pub bcs: f64,
    pub bhs: f64,
    pub f1: f64,
    /// Set when either beat list is empty and a ratio fell back to 0.
    #[serde(default)]
    pub degenerate: bool,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn check_sorted(name: &str, beats: &[usize]) -> Result<()> {
    if beats.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Contract(format!("{name} beats must be sorted")));
    }
    Ok(())
}

/// Greedy one-to-one matching: generated beats are scanned in time order and
/// each claims the nearest unclaimed reference beat within `tolerance`
/// (earlier reference on ties).
pub fn align_beats(gen: &[usize], reference: &[usize], tolerance: usize) -> Result<BeatAlignmentReport> {
    check_sorted("generated", gen)?;
    check_sorted("reference", reference)?;
    let mut claimed = vec![false; reference.len()];
    let mut b_a = 0;
    // Reference beats before `lo` are too early for every later generated beat.
    let mut lo = 0;
    for &g in gen {
        while lo < reference.len() && reference[lo] + tolerance < g {
            lo += 1;
        }
        let mut best: Option<(usize, usize)> = None;
        for (j, &r) in reference.iter().enumerate().skip(lo) {
            if r > g + tolerance {
                break;
            }
            let d = r.abs_diff(g);
            if !claimed[j] && best.is_none_or(|(_, bd)| d < bd) {
                best = Some((j, d));
            }
        }
        if let Some((j, _)) = best {
            claimed[j] = true;
            b_a += 1;
        }
    }
    let (b_g, b_t) = (gen.len(), reference.len());
    let bcs = ratio(b_a, b_g);
    let bhs = ratio(b_a, b_t);
    let f1 = if bcs + bhs > 0.0 {
        2.0 * bcs * bhs / (bcs + bhs)
    } else {
        0.0
    };
    Ok(BeatAlignmentReport {
        b_g,
        b_t,
        b_a,
        bcs,
        bhs,
        f1,
        degenerate: b_g == 0 || b_t == 0,
    })
}

/// The older coverage score B_g / B_t, kept for comparison tables only.
pub fn legacy_bcs(gen: &[usize], reference: &[usize]) -> f64 {
    ratio(gen.len(), reference.len())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchScore {
    pub mean_bcs: f64,
    pub mean_bhs: f64,
    pub mean_f1: f64,
    /// Population standard deviation of per-sample BCS.
    pub csd: f64,
    /// Population standard deviation of per-sample BHS.
    pub hsd: f64,
    pub per_sample: Vec<BeatAlignmentReport>,
}

fn mean_std(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn score_batch<G, R>(pairs: &[(G, R)], tolerance: usize) -> Result<BatchScore>
where
    G: AsRef<[usize]>,
    R: AsRef<[usize]>,
{
    if pairs.is_empty() {
        return Err(Error::Contract("score_batch needs at least one pair".into()));
    }
    let per_sample = pairs
        .iter()
        .map(|(g, r)| align_beats(g.as_ref(), r.as_ref(), tolerance))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(per_sample))
}

pub fn summarize(per_sample: Vec<BeatAlignmentReport>) -> BatchScore {
    let (mean_bcs, csd) = mean_std(per_sample.iter().map(|r| r.bcs));
    let (mean_bhs, hsd) = mean_std(per_sample.iter().map(|r| r.bhs));
    let (mean_f1, _) = mean_std(per_sample.iter().map(|r| r.f1));
    BatchScore {
        mean_bcs,
        mean_bhs,
        mean_f1,
        csd,
        hsd,
        per_sample,
    }
}

/// The JSON document written by `eval`: batch means under the short metric
/// names, summed beat counts, and every per-sample report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub bcs: f64,
    pub bhs: f64,
    pub f1: f64,
    pub csd: f64,
    pub hsd: f64,
    pub b_g: usize,
    pub b_t: usize,
    pub b_a: usize,
    pub tolerance: usize,
    pub per_sample: Vec<BeatAlignmentReport>,
}

impl EvalReport {
    pub fn new(score: BatchScore, tolerance: usize) -> Self {
        EvalReport {
            bcs: score.mean_bcs,
            bhs: score.mean_bhs,
            f1: score.mean_f1,
            csd: score.csd,
            hsd: score.hsd,
            b_g: score.per_sample.iter().map(|r| r.b_g).sum(),
            b_t: score.per_sample.iter().map(|r| r.b_t).sum(),
            b_a: score.per_sample.iter().map(|r| r.b_a).sum(),
            tolerance,
            per_sample: score.per_sample,
        }
    }
}
