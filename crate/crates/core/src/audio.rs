//! Waveforms, STFT magnitudes and spectral-flux beat detection.

use std::f64::consts::PI;

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rhythm::{normalized_flux, pick_peaks, OnsetEnvelope, PeakPickConfig, RhythmPeaks};

/// Floor applied to magnitudes before taking the log.
pub const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub sample_rate: u32,
    /// One sample vector per channel.
    pub channels: Vec<Vec<f32>>,
}

impl Waveform {
    pub fn new(sample_rate: u32, channels: Vec<Vec<f32>>) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        if channels.is_empty() || channels.len() > 2 {
            return Err(Error::Config(format!("expected 1 or 2 channels, got {}", channels.len())));
        }
        if channels.iter().any(|c| c.len() != channels[0].len()) {
            return Err(Error::dim(
                "waveform channels",
                &[channels[0].len()],
                &channels.iter().map(Vec::len).collect::<Vec<_>>(),
            ));
        }
        if channels.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::domain("waveform", "non-finite sample"));
        }
        Ok(Waveform {
            sample_rate,
            channels,
        })
    }

    pub fn mono(sample_rate: u32, samples: Vec<f32>) -> Result<Self> {
        Self::new(sample_rate, vec![samples])
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 / self.sample_rate as f64
    }

    /// Channel average in `f64`. Two identical channels give back the mono
    /// signal exactly.
    pub fn to_mono(&self) -> Vec<f64> {
        match self.channels.as_slice() {
            [m] => m.iter().map(|&v| v as f64).collect(),
            [l, r] => l.iter().zip(r).map(|(&a, &b)| (a as f64 + b as f64) * 0.5).collect(),
            _ => unreachable!("validated channel count"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub frames: usize,
    pub bins: usize,
    /// `frames * bins` magnitudes, frame-major.
    pub values: Vec<f64>,
    pub window: usize,
    pub hop: usize,
    pub sample_rate: u32,
}

impl Spectrogram {
    pub fn frame(&self, f: usize) -> &[f64] {
        &self.values[f * self.bins..(f + 1) * self.bins]
    }

    pub fn frame_rate(&self) -> f64 {
        self.sample_rate as f64 / self.hop as f64
    }

    /// Time of a frame's window centre.
    pub fn frame_time(&self, f: usize) -> f64 {
        (f * self.hop) as f64 / self.sample_rate as f64 + self.window as f64 / (2.0 * self.sample_rate as f64)
    }
}

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect()
}

pub fn stft_magnitude(w: &Waveform, window: usize, hop: usize) -> Result<Spectrogram> {
    if hop == 0 || window < hop {
        return Err(Error::Config(format!("STFT needs window >= hop >= 1, got window {window}, hop {hop}")));
    }
    let x = w.to_mono();
    if x.len() < window {
        return Err(Error::InputTooShort {
            what: "STFT (samples)",
            need: window,
            got: x.len(),
        });
    }
    let frames = (x.len() - window) / hop + 1;
    let bins = window / 2 + 1;
    let win = hann(window);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(window);
    let mut buf = vec![Complex::new(0.0, 0.0); window];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut values = Vec::with_capacity(frames * bins);
    for f in 0..frames {
        let seg = &x[f * hop..f * hop + window];
        for ((b, &s), &h) in buf.iter_mut().zip(seg).zip(&win) {
            *b = Complex::new(s * h, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        values.extend(buf[..bins].iter().map(|c| c.norm()));
    }
    Ok(Spectrogram {
        frames,
        bins,
        values,
        window,
        hop,
        sample_rate: w.sample_rate,
    })
}

/// Rectified spectral flux, max-normalized. Index `f` is the flux into STFT
/// frame `f`, timed at that frame's window centre.
pub fn audio_onset_envelope(s: &Spectrogram, log_magnitude: bool) -> Result<OnsetEnvelope> {
    if s.frames < 2 {
        return Err(Error::InputTooShort {
            what: "audio onset envelope (STFT frames)",
            need: 2,
            got: s.frames,
        });
    }
    let values = if log_magnitude {
        let logged: Vec<f64> = s.values.iter().map(|&m| m.max(LOG_FLOOR).ln()).collect();
        normalized_flux(&logged, s.bins)
    } else {
        normalized_flux(&s.values, s.bins)
    };
    Ok(OnsetEnvelope {
        values,
        frame_rate: s.frame_rate(),
        offset: s.frame_time(0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AudioConfig {
    pub window: usize,
    pub hop: usize,
    pub log_magnitude: bool,
    pub peaks: PeakPickConfig,
}

impl Default for AudioConfig {
    fn default() -> Self {
        AudioConfig {
            window: 1024,
            hop: 512,
            log_magnitude: true,
            peaks: PeakPickConfig::audio(),
        }
    }
}

impl AudioConfig {
    /// The default analysis scaled to another sample rate: the window keeps
    /// its duration at 22050 Hz (rounded up to a power of two, at least 8)
    /// and the hop stays half a window.
    pub fn for_sample_rate(sample_rate: u32) -> Self {
        let d = Self::default();
        let window = ((d.window as f64 * sample_rate as f64 / 22050.0).round() as usize).next_power_of_two().max(8);
        AudioConfig {
            window,
            hop: window / 2,
            ..d
        }
    }
}

#[derive(Debug, Clone)]
pub struct AudioRhythm {
    pub envelope: OnsetEnvelope,
    pub beats: RhythmPeaks,
}

pub fn analyze_audio(w: &Waveform, cfg: &AudioConfig) -> Result<AudioRhythm> {
    let s = stft_magnitude(w, cfg.window, cfg.hop)?;
    let envelope = audio_onset_envelope(&s, cfg.log_magnitude)?;
    let beats = pick_peaks(&envelope, &cfg.peaks)?;
    Ok(AudioRhythm { envelope, beats })
}

pub fn detect_audio_beats(w: &Waveform) -> Result<RhythmPeaks> {
    detect_audio_beats_with(w, &AudioConfig::default())
}

pub fn detect_audio_beats_with(w: &Waveform, cfg: &AudioConfig) -> Result<RhythmPeaks> {
    Ok(analyze_audio(w, cfg)?.beats)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn silence() {
        let w = Waveform::mono(22050, vec![0.0; 22050]).unwrap();
        let s = stft_magnitude(&w, 1024, 512).unwrap();
        assert_eq!(s.frames, (22050 - 1024) / 512 + 1);
        assert!(s.values.iter().all(|&v| v == 0.0));
        assert!(detect_audio_beats(&w).unwrap().is_empty());
    }

    #[test]
    fn short_input_and_bad_geometry() {
        let w = Waveform::mono(22050, vec![0.0; 100]).unwrap();
        assert!(matches!(stft_magnitude(&w, 1024, 512), Err(Error::InputTooShort { .. })));
        assert!(matches!(stft_magnitude(&w, 16, 32), Err(Error::Config(_))));
    }

    #[test]
    fn ragged_channels_rejected() {
        assert!(Waveform::new(8000, vec![vec![0.0; 3], vec![0.0; 4]]).is_err());
    }
}
