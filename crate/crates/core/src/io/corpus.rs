//! Corpus directories written by `make-synth` and read by `train`, `sweep`
//! and the acceptance tools.
//!
//! Layout: `manifest.json` plus, per clip, `<id>.wav` (float-32),
//! `<id>.poses.json` and `<id>.features.csv`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::pose::{read_features, read_poses, write_features, write_poses};
use super::wav::{wav_read, wav_write, WavEncoding};
use crate::audio::Waveform;
use crate::conditioning::VisualFeatures;
use crate::error::{Error, Result};
use crate::rhythm::PoseSequence;
use crate::training::{SynthConfig, SyntheticSample};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestClip {
    pub id: String,
    pub audio: String,
    pub poses: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub genre: Option<usize>,
    /// Ground-truth rhythm times in seconds, when known.
    #[serde(default)]
    pub planted: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthConfig>,
    pub clips: Vec<ManifestClip>,
}

/// One clip loaded from a corpus directory.
#[derive(Debug, Clone)]
pub struct CorpusClip {
    pub id: String,
    pub waveform: Waveform,
    pub poses: PoseSequence,
    pub visual: Option<VisualFeatures>,
    pub genre: Option<usize>,
    pub planted: Vec<f64>,
}

fn with_path<T>(r: Result<T>, path: &Path) -> Result<T> {
    r.map_err(|e| e.in_stage("cli_io", Some(path.to_path_buf())))
}

pub fn write_corpus(dir: &Path, samples: &[SyntheticSample], seed: u64, synth: &SynthConfig) -> Result<Manifest> {
    fs::create_dir_all(dir)?;
    let mut clips = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let id = format!("clip_{i:05}");
        let clip = ManifestClip {
            audio: format!("{id}.wav"),
            poses: format!("{id}.poses.json"),
            features: Some(format!("{id}.features.csv")),
            genre: Some(s.genre),
            planted: s.planted.clone(),
            id,
        };
        wav_write(&dir.join(&clip.audio), &s.waveform, WavEncoding::Float32)?;
        write_poses(&dir.join(&clip.poses), &s.poses)?;
        write_features(&dir.join(clip.features.as_ref().expect("set above")), &s.visual)?;
        clips.push(clip);
    }
    let manifest = Manifest {
        seed: Some(seed),
        synth: Some(synth.clone()),
        clips,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::format("corpus manifest", e.to_string()))?;
    fs::write(dir.join(MANIFEST), text)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    let text = with_path(fs::read_to_string(&path).map_err(Error::from), &path)?;
    let m: Manifest = with_path(
        serde_json::from_str(&text).map_err(|e| Error::format("corpus manifest", e.to_string())),
        &path,
    )?;
    if m.clips.is_empty() {
        return with_path(Err(Error::format("corpus manifest", "no clips listed")), &path);
    }
    Ok(m)
}

/// Loads every clip listed in the directory's manifest; at most `limit`
/// clips when given.
pub fn read_corpus(dir: &Path, limit: Option<usize>) -> Result<Vec<CorpusClip>> {
    let m = read_manifest(dir)?;
    let n = limit.unwrap_or(m.clips.len()).min(m.clips.len());
    m.clips[..n]
        .iter()
        .map(|c| {
            let file = |name: &str| -> PathBuf { dir.join(name) };
            let audio = file(&c.audio);
            let poses = file(&c.poses);
            let visual = match &c.features {
                Some(f) => {
                    let path = file(f);
                    Some(with_path(read_features(&path), &path)?)
                }
                None => None,
            };
            Ok(CorpusClip {
                id: c.id.clone(),
                waveform: with_path(wav_read(&audio), &audio)?,
                poses: with_path(read_poses(&poses), &poses)?,
                visual,
                genre: c.genre,
                planted: c.planted.clone(),
            })
        })
        .collect()
}
