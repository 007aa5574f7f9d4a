//! Visual rhythm from 2D pose sequences: motion field, directogram, onset
//! envelope and peak picking. The peak picker is shared with the audio side.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Joints whose confidence falls below this are ignored by default.
pub const DEFAULT_CONFIDENCE_FLOOR: f64 = 0.1;

/// Slack on the directogram indicator boundary so that motions exactly on a
/// bin edge are not lost to rounding in `atan2`.
const BIN_EDGE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct PoseSequence {
    pub fps: f64,
    pub joints: usize,
    /// `T * J` coordinates, frame-major.
    pub frames: Vec<[f64; 2]>,
    /// Optional `T * J` confidences in [0, 1].
    pub confidence: Option<Vec<f64>>,
}

impl PoseSequence {
    pub fn new(fps: f64, joints: usize, frames: Vec<[f64; 2]>, confidence: Option<Vec<f64>>) -> Result<Self> {
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(Error::Config(format!("pose fps must be positive, got {fps}")));
        }
        if joints == 0 {
            return Err(Error::Config("pose sequence needs at least one joint".into()));
        }
        if frames.len() % joints != 0 {
            return Err(Error::Contract(format!(
                "{} coordinates do not divide into {joints} joints",
                frames.len()
            )));
        }
        if frames.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::domain("pose", "non-finite coordinate"));
        }
        if let Some(c) = &confidence {
            if c.len() != frames.len() {
                return Err(Error::dim("pose confidence", &[c.len()], &[frames.len()]));
            }
            if c.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::domain("pose", "confidence outside [0, 1]"));
            }
        }
        Ok(PoseSequence {
            fps,
            joints,
            frames,
            confidence,
        })
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len() / self.joints
    }

    pub fn at(&self, t: usize, j: usize) -> [f64; 2] {
        self.frames[t * self.joints + j]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionField {
    pub fps: f64,
    pub joints: usize,
    /// `(T-1) * J` displacement vectors.
    pub motions: Vec<[f64; 2]>,
    /// Per-motion validity after applying the confidence floor.
    pub valid: Vec<bool>,
}

impl MotionField {
    pub fn num_steps(&self) -> usize {
        self.motions.len() / self.joints
    }
}

pub fn motion_field(p: &PoseSequence) -> Result<MotionField> {
    motion_field_with_floor(p, DEFAULT_CONFIDENCE_FLOOR)
}

/// A motion is valid only when the joint is confidently detected in both of
/// its frames.
pub fn motion_field_with_floor(p: &PoseSequence, floor: f64) -> Result<MotionField> {
    let t = p.num_frames();
    if t < 2 {
        return Err(Error::InputTooShort {
            what: "motion field (pose frames)",
            need: 2,
            got: t,
        });
    }
    let j = p.joints;
    let mut motions = Vec::with_capacity((t - 1) * j);
    let mut valid = Vec::with_capacity((t - 1) * j);
    for ti in 0..t - 1 {
        for ji in 0..j {
            let a = p.at(ti, ji);
            let b = p.at(ti + 1, ji);
            motions.push([b[0] - a[0], b[1] - a[1]]);
            valid.push(match &p.confidence {
                Some(c) => c[ti * j + ji] >= floor && c[(ti + 1) * j + ji] >= floor,
                None => true,
            });
        }
    }
    Ok(MotionField {
        fps: p.fps,
        joints: j,
        motions,
        valid,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Directogram {
    pub fps: f64,
    pub bins: usize,
    /// `(T-1) * K`, time-major.
    pub values: Vec<f64>,
}

impl Directogram {
    pub fn num_steps(&self) -> usize {
        self.values.len() / self.bins
    }

    pub fn bin_centers(&self) -> Vec<f64> {
        (0..self.bins).map(|k| TAU * k as f64 / self.bins as f64).collect()
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.bins..(t + 1) * self.bins]
    }
}

fn circular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).abs() % TAU;
    d.min(TAU - d)
}

/// Each joint adds its motion magnitude to every bin whose centre lies within
/// one bin width of the motion angle, so a motion usually lands in two bins.
pub fn directogram(m: &MotionField, bins: usize) -> Result<Directogram> {
    if bins < 2 {
        return Err(Error::Config(format!("directogram needs at least 2 bins, got {bins}")));
    }
    if m.motions.is_empty() {
        return Err(Error::InputTooShort {
            what: "directogram (motion steps)",
            need: 1,
            got: 0,
        });
    }
    let width = TAU / bins as f64;
    let steps = m.num_steps();
    let mut values = vec![0.0; steps * bins];
    for t in 0..steps {
        let row = &mut values[t * bins..(t + 1) * bins];
        for j in 0..m.joints {
            let idx = t * m.joints + j;
            if !m.valid[idx] {
                continue;
            }
            let [dx, dy] = m.motions[idx];
            let mag = dx.hypot(dy);
            if mag == 0.0 {
                continue;
            }
            let phi = dy.atan2(dx).rem_euclid(TAU);
            for (k, cell) in row.iter_mut().enumerate() {
                if circular_distance(k as f64 * width, phi) <= width + BIN_EDGE_EPS {
                    *cell += mag;
                }
            }
        }
    }
    Ok(Directogram {
        fps: m.fps,
        bins,
        values,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OnsetEnvelope {
    pub values: Vec<f64>,
    pub frame_rate: f64,
    /// Time in seconds that index 0 refers to.
    pub offset: f64,
}

/// Rectified first difference summed over columns, then divided by its
/// maximum. `rows` is time-major with `cols` entries per step.
pub(crate) fn normalized_flux(rows: &[f64], cols: usize) -> Vec<f64> {
    let steps = rows.len() / cols;
    let mut flux = vec![0.0; steps];
    for t in 1..steps {
        let prev = &rows[(t - 1) * cols..t * cols];
        let cur = &rows[t * cols..(t + 1) * cols];
        flux[t] = cur.iter().zip(prev).map(|(c, p)| (c - p).max(0.0)).sum();
    }
    let max = flux.iter().cloned().fold(0.0, f64::max);
    if max > 0.0 {
        for v in &mut flux {
            *v /= max;
        }
    }
    flux
}

pub fn onset_envelope(d: &Directogram) -> Result<OnsetEnvelope> {
    if d.num_steps() < 2 {
        return Err(Error::InputTooShort {
            what: "onset envelope (directogram steps)",
            need: 2,
            got: d.num_steps(),
        });
    }
    // Motion t ends at pose frame t + 1, which is where a jerk lands.
    Ok(OnsetEnvelope {
        values: normalized_flux(&d.values, d.bins),
        frame_rate: d.fps,
        offset: 1.0 / d.fps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeakPickConfig {
    pub pre_max: usize,
    pub post_max: usize,
    pub pre_avg: usize,
    pub post_avg: usize,
    pub delta: f64,
    /// When set, the threshold is `delta * O(t)` instead of `delta`.
    pub relative: bool,
    pub wait: usize,
}

impl PeakPickConfig {
    pub fn visual() -> Self {
        PeakPickConfig {
            pre_max: 3,
            post_max: 3,
            pre_avg: 3,
            post_avg: 3,
            delta: 0.2,
            relative: true,
            wait: 1,
        }
    }

    pub fn audio() -> Self {
        PeakPickConfig {
            pre_max: 3,
            post_max: 3,
            pre_avg: 2,
            post_avg: 2,
            delta: 0.2,
            relative: false,
            wait: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::Config(format!("peak delta must be >= 0, got {}", self.delta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RhythmPeaks {
    pub indices: Vec<usize>,
    pub length: usize,
    pub frame_rate: f64,
    /// Time in seconds that envelope index 0 refers to.
    pub offset: f64,
}

impl RhythmPeaks {
    pub fn new(indices: Vec<usize>, length: usize, frame_rate: f64, offset: f64) -> Result<Self> {
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Contract("peak indices must be strictly increasing".into()));
        }
        if let Some(&last) = indices.last() {
            if last >= length {
                return Err(Error::Lookup { index: last, len: length });
            }
        }
        Ok(RhythmPeaks {
            indices,
            length,
            frame_rate,
            offset,
        })
    }

    pub fn as_binary(&self) -> Vec<f32> {
        let mut v = vec![0.0; self.length];
        for &i in &self.indices {
            v[i] = 1.0;
        }
        v
    }

    pub fn time_of(&self, index: usize) -> f64 {
        self.offset + index as f64 / self.frame_rate
    }

    /// Nearest envelope index for a time in seconds, clamped to the grid.
    pub fn index_of(&self, time: f64) -> usize {
        let i = ((time - self.offset) * self.frame_rate).round();
        (i.max(0.0) as usize).min(self.length.saturating_sub(1))
    }

    pub fn times(&self) -> Vec<f64> {
        self.indices.iter().map(|&i| self.time_of(i)).collect()
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Local-maximum peak picking with a moving-average threshold. Windows are
/// inclusive and clipped at the ends. Only strictly positive values qualify,
/// so a flat zero envelope has no peaks in either threshold mode.
pub fn pick_peaks(o: &OnsetEnvelope, cfg: &PeakPickConfig) -> Result<RhythmPeaks> {
    cfg.validate()?;
    let x = &o.values;
    let n = x.len();
    if n == 0 {
        return Err(Error::InputTooShort {
            what: "peak picking (envelope frames)",
            need: 1,
            got: 0,
        });
    }
    let mut peaks = Vec::new();
    let mut last: Option<usize> = None;
    for t in 0..n {
        let v = x[t];
        if v <= 0.0 {
            continue;
        }
        let lo = t.saturating_sub(cfg.pre_max);
        let hi = (t + cfg.post_max).min(n - 1);
        if x[lo..=hi].iter().any(|&w| w > v) {
            continue;
        }
        let lo = t.saturating_sub(cfg.pre_avg);
        let hi = (t + cfg.post_avg).min(n - 1);
        let mean = x[lo..=hi].iter().sum::<f64>() / (hi + 1 - lo) as f64;
        let thr = if cfg.relative { cfg.delta * v } else { cfg.delta };
        if v < mean + thr {
            continue;
        }
        if let Some(p) = last {
            if t - p <= cfg.wait {
                continue;
            }
        }
        peaks.push(t);
        last = Some(t);
    }
    Ok(RhythmPeaks {
        indices: peaks,
        length: n,
        frame_rate: o.frame_rate,
        offset: o.offset,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RhythmConfig {
    pub bins: usize,
    pub confidence_floor: f64,
    pub peaks: PeakPickConfig,
}

impl Default for RhythmConfig {
    fn default() -> Self {
        RhythmConfig {
            bins: 10,
            confidence_floor: DEFAULT_CONFIDENCE_FLOOR,
            peaks: PeakPickConfig::visual(),
        }
    }
}

/// Intermediate products of visual rhythm extraction, kept for plotting.
#[derive(Debug, Clone)]
pub struct VisualRhythm {
    pub directogram: Directogram,
    pub envelope: OnsetEnvelope,
    pub peaks: RhythmPeaks,
}

pub fn analyze_visual_rhythm(p: &PoseSequence, cfg: &RhythmConfig) -> Result<VisualRhythm> {
    let m = motion_field_with_floor(p, cfg.confidence_floor)?;
    let directogram = directogram(&m, cfg.bins)?;
    let envelope = onset_envelope(&directogram)?;
    let peaks = pick_peaks(&envelope, &cfg.peaks)?;
    Ok(VisualRhythm {
        directogram,
        envelope,
        peaks,
    })
}

pub fn extract_visual_rhythm(p: &PoseSequence, cfg: &RhythmConfig) -> Result<RhythmPeaks> {
    Ok(analyze_visual_rhythm(p, cfg)?.peaks)
}
