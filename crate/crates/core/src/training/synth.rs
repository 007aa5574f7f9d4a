//! Synthetic rhythmic clips: click-burst audio whose bursts coincide with
//! jerks in a pose sequence. Stands in for a real music-video corpus.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::Waveform;
use crate::conditioning::{CondInput, VisualFeatures};
use crate::error::{Error, Result};
use crate::rhythm::{extract_visual_rhythm, PoseSequence, RhythmConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub sample_rate: u32,
    pub audio_channels: usize,
    pub duration: f64,
    pub fps: f64,
    pub joints: usize,
    pub min_peaks: usize,
    pub max_peaks: usize,
    /// Minimum distance between planted rhythm times, seconds.
    pub min_spacing: f64,
    /// Number of genre classes; each has its own burst carrier frequency.
    pub genres: usize,
    pub burst_decay: f64,
    pub background_level: f64,
    /// Amplitude of uniform white noise under everything. It gives every
    /// spectral bin a floor, so log-magnitude flux of each burst is measured
    /// from the same level.
    pub noise_level: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            sample_rate: 256,
            audio_channels: 2,
            duration: 4.0,
            fps: 30.0,
            joints: 17,
            min_peaks: 4,
            max_peaks: 8,
            min_spacing: 0.3,
            genres: 3,
            burst_decay: 0.06,
            background_level: 0.05,
            noise_level: 0.001,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synthetic corpus: {m}")));
        if self.sample_rate < 64 || self.audio_channels == 0 || self.joints == 0 || self.genres == 0 {
            return bad("sample_rate >= 64 and positive channel, joint and genre counts are required");
        }
        if !(self.duration > 0.0 && self.fps > 0.0 && self.min_spacing > 0.0 && self.burst_decay > 0.0) {
            return bad("duration, fps, min_spacing and burst_decay must be positive");
        }
        if !(self.background_level >= 0.0 && self.noise_level >= 0.0) {
            return bad("background and noise levels must be non-negative");
        }
        if self.min_peaks == 0 || self.min_peaks > self.max_peaks {
            return bad("need 1 <= min_peaks <= max_peaks");
        }
        // Times are drawn from [margin, duration - margin].
        let room = self.duration - 2.0 * self.margin();
        if (self.max_peaks - 1) as f64 * self.min_spacing >= room {
            return bad("max_peaks times at min_spacing do not fit in the clip");
        }
        Ok(())
    }

    fn margin(&self) -> f64 {
        0.25
    }

    /// Burst carrier for a genre, as a fraction of the Nyquist frequency.
    pub fn carrier(&self, genre: usize) -> f64 {
        let nyquist = self.sample_rate as f64 / 2.0;
        let step = if self.genres > 1 { 0.35 / (self.genres - 1) as f64 } else { 0.0 };
        nyquist * (0.55 + step * genre as f64)
    }

    pub fn frames(&self) -> usize {
        (self.duration * self.fps).round() as usize
    }

    pub fn samples(&self) -> usize {
        (self.duration * self.sample_rate as f64).round() as usize
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticSample {
    pub waveform: Waveform,
    pub poses: PoseSequence,
    /// Pose coordinates centred per joint and divided by 100, one frame per
    /// row.
    pub visual: VisualFeatures,
    pub genre: usize,
    /// Planted rhythm times in seconds, each on a pose frame.
    pub planted: Vec<f64>,
    /// Peak times extracted from the poses.
    pub rhythm: Vec<f64>,
}

impl SyntheticSample {
    pub fn cond_input(&self) -> CondInput {
        CondInput {
            visual: Some(self.visual.clone()),
            peak_times: self.rhythm.clone(),
            genre: Some(self.genre),
        }
    }
}

/// `n` samples; sample `i` depends only on `(seed, i)`.
pub fn make_synthetic_corpus(n: usize, seed: u64, cfg: &SynthConfig) -> Result<Vec<SyntheticSample>> {
    if n == 0 {
        return Err(Error::InputTooShort {
            what: "synthetic corpus (samples)",
            need: 1,
            got: 0,
        });
    }
    cfg.validate()?;
    (0..n)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            make_sample(&mut rng, cfg)
        })
        .collect()
}

pub fn make_sample(rng: &mut impl Rng, cfg: &SynthConfig) -> Result<SyntheticSample> {
    let planted = draw_times(rng, cfg);
    let genre = rng.random_range(0..cfg.genres);
    let poses = make_poses(rng, cfg, &planted)?;
    let waveform = make_audio(rng, cfg, &planted, genre)?;
    let rhythm = extract_visual_rhythm(&poses, &RhythmConfig::default())?.times();
    let visual = pose_features(&poses)?;
    Ok(SyntheticSample {
        waveform,
        poses,
        visual,
        genre,
        planted,
        rhythm,
    })
}

/// Rejection-samples sorted frame-aligned times with the minimum spacing.
fn draw_times(rng: &mut impl Rng, cfg: &SynthConfig) -> Vec<f64> {
    let count = rng.random_range(cfg.min_peaks..=cfg.max_peaks);
    let lo = (cfg.margin() * cfg.fps).ceil() as usize;
    let hi = ((cfg.duration - cfg.margin()) * cfg.fps).floor() as usize;
    let gap = (cfg.min_spacing * cfg.fps).floor() as usize + 1;
    loop {
        let mut frames: Vec<usize> = (0..count).map(|_| rng.random_range(lo..=hi)).collect();
        frames.sort_unstable();
        if frames.windows(2).all(|w| w[1] - w[0] >= gap) {
            return frames.into_iter().map(|f| f as f64 / cfg.fps).collect();
        }
    }
}

/// Each joint drifts at its own constant velocity; at every planted time all
/// joints jump by a large common displacement between the previous frame and
/// the planted frame. Drift with varying speed would put rectified flux, and
/// so spurious relative-threshold peaks, between the jerks. Coordinates live
/// on a 1/256 pixel grid so frame differences are exact and the drift adds
/// no rounding flux either.
fn make_poses(rng: &mut impl Rng, cfg: &SynthConfig, planted: &[f64]) -> Result<PoseSequence> {
    let frames = cfg.frames();
    let joints = cfg.joints;
    let mut pos: Vec<[f64; 2]> = (0..joints)
        .map(|_| [grid(rng.random_range(200.0..440.0)), grid(rng.random_range(120.0..360.0))])
        .collect();
    let drift: Vec<[f64; 2]> = (0..joints)
        .map(|_| {
            let a: f64 = rng.random_range(0.0..TAU);
            let s: f64 = rng.random_range(0.3..0.8);
            [grid(s * a.cos()), grid(s * a.sin())]
        })
        .collect();
    let jerk_frames: Vec<usize> = planted.iter().map(|t| (t * cfg.fps).round() as usize).collect();
    let mut out = Vec::with_capacity(frames * joints);
    out.extend(pos.iter().copied());
    for f in 1..frames {
        let jerk = jerk_frames.contains(&f).then(|| {
            let a = rng.random_range(0.0..TAU);
            let m = rng.random_range(25.0..40.0);
            [m * a.cos(), m * a.sin()]
        });
        for (p, v) in pos.iter_mut().zip(&drift) {
            p[0] += v[0];
            p[1] += v[1];
            if let Some(d) = jerk {
                let k = rng.random_range(0.8..1.2);
                p[0] += grid(k * d[0]);
                p[1] += grid(k * d[1]);
            }
        }
        out.extend(pos.iter().copied());
    }
    PoseSequence::new(cfg.fps, joints, out, None)
}

fn grid(v: f64) -> f64 {
    (v * 256.0).round() / 256.0
}

/// Quiet background tone and noise floor plus an exponentially decaying sine burst at every
/// planted time, duplicated across channels.
fn make_audio(rng: &mut impl Rng, cfg: &SynthConfig, planted: &[f64], genre: usize) -> Result<Waveform> {
    let sr = cfg.sample_rate as f64;
    let n = cfg.samples();
    // One whole cycle per 16 samples, so short-window STFT magnitudes of the
    // background stay constant from frame to frame.
    let bg_freq = sr / 16.0;
    let bg_phase = rng.random_range(0.0..TAU);
    let carrier = cfg.carrier(genre);
    let bursts: Vec<(f64, f64)> = planted.iter().map(|&t| (t, rng.random_range(0.5..0.8))).collect();
    let mono: Vec<f32> = (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            let mut v = cfg.background_level * (TAU * bg_freq * t + bg_phase).sin()
                + cfg.noise_level * rng.random_range(-1.0..1.0);
            for &(t0, amp) in &bursts {
                let dt = t - t0;
                if dt >= 0.0 {
                    v += amp * (-dt / cfg.burst_decay).exp() * (2.0 * PI * carrier * dt).sin();
                }
            }
            v as f32
        })
        .collect();
    Waveform::new(cfg.sample_rate, vec![mono; cfg.audio_channels])
}

/// Per-frame pose coordinates, centred on each coordinate's clip mean and
/// scaled by 1/100.
pub fn pose_features(p: &PoseSequence) -> Result<VisualFeatures> {
    let frames = p.num_frames();
    let dim = 2 * p.joints;
    let mut mean = vec![0.0f64; dim];
    for t in 0..frames {
        for j in 0..p.joints {
            let [x, y] = p.at(t, j);
            mean[2 * j] += x / frames as f64;
            mean[2 * j + 1] += y / frames as f64;
        }
    }
    let mut values = Vec::with_capacity(frames * dim);
    for t in 0..frames {
        for j in 0..p.joints {
            let [x, y] = p.at(t, j);
            values.push(((x - mean[2 * j]) / 100.0) as f32);
            values.push(((y - mean[2 * j + 1]) / 100.0) as f32);
        }
    }
    VisualFeatures::new(p.fps, dim, values)
}
