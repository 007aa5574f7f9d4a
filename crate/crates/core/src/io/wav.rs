//! RIFF/WAVE reading and writing for PCM-16 and IEEE float-32.

use std::fs;
use std::path::Path;

use crate::audio::Waveform;
use crate::error::{Error, Result};

const FORMAT_PCM: u16 = 1;
const FORMAT_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavEncoding {
    Pcm16,
    Float32,
}

pub fn wav_read(path: &Path) -> Result<Waveform> {
    let bytes = fs::read(path)?;
    wav_decode(&bytes)
}

pub fn wav_write(path: &Path, w: &Waveform, encoding: WavEncoding) -> Result<()> {
    fs::write(path, wav_encode(w, encoding)?)?;
    Ok(())
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

struct Fmt {
    format: u16,
    channels: usize,
    sample_rate: u32,
    bits: u16,
}

fn parse_fmt(body: &[u8]) -> Result<Fmt> {
    let err = |d: String| Error::format("WAV 'fmt ' chunk", d);
    if body.len() < 16 {
        return Err(err(format!("{} bytes, need at least 16", body.len())));
    }
    let mut format = u16_at(body, 0);
    if format == FORMAT_EXTENSIBLE {
        if body.len() < 26 {
            return Err(err("extensible format without a subformat".into()));
        }
        format = u16_at(body, 24);
    }
    let fmt = Fmt {
        format,
        channels: u16_at(body, 2) as usize,
        sample_rate: u32_at(body, 4),
        bits: u16_at(body, 14),
    };
    match (fmt.format, fmt.bits) {
        (FORMAT_PCM, 16) | (FORMAT_FLOAT, 32) => {}
        (f, b) => return Err(err(format!("unsupported codec {f} with {b} bits (need PCM-16 or float-32)"))),
    }
    if !(1..=2).contains(&fmt.channels) {
        return Err(err(format!("{} channels, need 1 or 2", fmt.channels)));
    }
    if fmt.sample_rate == 0 {
        return Err(err("sample rate 0".into()));
    }
    Ok(fmt)
}

pub fn wav_decode(b: &[u8]) -> Result<Waveform> {
    if b.len() < 12 || &b[0..4] != b"RIFF" || &b[8..12] != b"WAVE" {
        return Err(Error::format("WAV 'RIFF' header", "missing RIFF/WAVE signature"));
    }
    let mut fmt = None;
    let mut data = None;
    let mut at = 12;
    while at + 8 <= b.len() {
        let id = &b[at..at + 4];
        let size = u32_at(b, at + 4) as usize;
        let body_start = at + 8;
        let name = String::from_utf8_lossy(id).into_owned();
        if body_start + size > b.len() {
            return Err(Error::format(
                format!("WAV '{name}' chunk"),
                format!("declares {size} bytes but only {} remain", b.len() - body_start),
            ));
        }
        let body = &b[body_start..body_start + size];
        match id {
            b"fmt " => fmt = Some(parse_fmt(body)?),
            b"data" => data = Some(body),
            _ => {}
        }
        // Chunks are padded to even length.
        at = body_start + size + (size & 1);
    }
    let fmt = fmt.ok_or_else(|| Error::format("WAV 'fmt ' chunk", "missing"))?;
    let data = data.ok_or_else(|| Error::format("WAV 'data' chunk", "missing"))?;
    let width = (fmt.bits / 8) as usize;
    let frame = width * fmt.channels;
    if data.len() % frame != 0 {
        return Err(Error::format(
            "WAV 'data' chunk",
            format!("{} bytes is not a whole number of {frame}-byte frames", data.len()),
        ));
    }
    let n = data.len() / frame;
    let mut channels = vec![Vec::with_capacity(n); fmt.channels];
    for i in 0..n {
        for (c, ch) in channels.iter_mut().enumerate() {
            let at = i * frame + c * width;
            let v = if fmt.format == FORMAT_PCM {
                i16::from_le_bytes([data[at], data[at + 1]]) as f32 / 32768.0
            } else {
                f32::from_le_bytes([data[at], data[at + 1], data[at + 2], data[at + 3]])
            };
            ch.push(v);
        }
    }
    Waveform::new(fmt.sample_rate, channels)
}

pub fn wav_encode(w: &Waveform, encoding: WavEncoding) -> Result<Vec<u8>> {
    let channels = w.channels.len();
    if !(1..=2).contains(&channels) {
        return Err(Error::format("WAV writer", format!("{channels} channels, need 1 or 2")));
    }
    let (format, width) = match encoding {
        WavEncoding::Pcm16 => (FORMAT_PCM, 2usize),
        WavEncoding::Float32 => (FORMAT_FLOAT, 4usize),
    };
    let n = w.len();
    let data_len = n * channels * width;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&format.to_le_bytes());
    out.extend_from_slice(&(channels as u16).to_le_bytes());
    out.extend_from_slice(&w.sample_rate.to_le_bytes());
    out.extend_from_slice(&(w.sample_rate * (channels * width) as u32).to_le_bytes());
    out.extend_from_slice(&((channels * width) as u16).to_le_bytes());
    out.extend_from_slice(&((width * 8) as u16).to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for i in 0..n {
        for ch in &w.channels {
            let v = ch[i];
            match encoding {
                WavEncoding::Pcm16 => {
                    let q = (v as f64 * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                    out.extend_from_slice(&q.to_le_bytes());
                }
                WavEncoding::Float32 => out.extend_from_slice(&v.to_le_bytes()),
            }
        }
    }
    Ok(out)
}

/// Linear-interpolation sample-rate conversion. The output has
/// `round(len * to / from)` samples; sample `i` reads the input at position
/// `i * from / to`, holding the last sample past the end.
pub fn resample(w: &Waveform, to: u32) -> Result<Waveform> {
    if to == 0 {
        return Err(Error::Config("resample target rate must be positive".into()));
    }
    let from = w.sample_rate;
    let n = w.len();
    let out_len = ((n as f64) * to as f64 / from as f64).round() as usize;
    let ratio = from as f64 / to as f64;
    let channels = w
        .channels
        .iter()
        .map(|x| {
            (0..out_len)
                .map(|i| {
                    let pos = i as f64 * ratio;
                    let j = pos.floor() as usize;
                    if j + 1 >= n {
                        return x[n - 1];
                    }
                    let frac = pos - j as f64;
                    ((1.0 - frac) * x[j] as f64 + frac * x[j + 1] as f64) as f32
                })
                .collect()
        })
        .collect();
    Waveform::new(to, channels)
}
