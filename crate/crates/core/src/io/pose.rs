//! Pose JSON files and visual-feature matrices.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::conditioning::VisualFeatures;
use crate::error::{Error, Result};
use crate::rhythm::PoseSequence;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseFile {
    pub fps: f64,
    pub joints: usize,
    /// `T × J × [x, y]`.
    pub frames: Vec<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<Vec<Vec<f64>>>,
}

impl PoseFile {
    pub fn from_sequence(p: &PoseSequence) -> Self {
        let rows = |v: &[[f64; 2]]| v.chunks(p.joints).map(<[_]>::to_vec).collect();
        PoseFile {
            fps: p.fps,
            joints: p.joints,
            frames: rows(&p.frames),
            confidence: p.confidence.as_ref().map(|c| c.chunks(p.joints).map(<[_]>::to_vec).collect()),
        }
    }

    pub fn into_sequence(self) -> Result<PoseSequence> {
        let err = |d: String| Error::format("pose file", d);
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(err(format!("fps must be positive, got {}", self.fps)));
        }
        if let Some(t) = self.frames.iter().position(|f| f.len() != self.joints) {
            return Err(err(format!(
                "frame {t} has {} joints, expected {}",
                self.frames[t].len(),
                self.joints
            )));
        }
        if let Some(c) = &self.confidence {
            if c.len() != self.frames.len() {
                return Err(err(format!("{} confidence rows for {} frames", c.len(), self.frames.len())));
            }
            if let Some(t) = c.iter().position(|r| r.len() != self.joints) {
                return Err(err(format!("confidence row {t} has {} entries, expected {}", c[t].len(), self.joints)));
            }
        }
        let frames = self.frames.into_iter().flatten().collect();
        let confidence = self.confidence.map(|c| c.into_iter().flatten().collect());
        PoseSequence::new(self.fps, self.joints, frames, confidence)
    }
}

pub fn read_poses(path: &Path) -> Result<PoseSequence> {
    let text = fs::read_to_string(path)?;
    let file: PoseFile = serde_json::from_str(&text).map_err(|e| Error::format("pose file", e.to_string()))?;
    file.into_sequence()
}

pub fn write_poses(path: &Path, p: &PoseSequence) -> Result<()> {
    let text = serde_json::to_string(&PoseFile::from_sequence(p)).map_err(|e| Error::format("pose file", e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

/// Visual features as CSV: a `# frame_rate=<fps>` line, then one row of
/// comma-separated values per frame.
pub fn read_features(path: &Path) -> Result<VisualFeatures> {
    let text = fs::read_to_string(path)?;
    let err = |d: String| Error::format("visual feature file", d);
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let head = lines.next().ok_or_else(|| err("empty file".into()))?;
    let rate = head
        .trim()
        .strip_prefix("# frame_rate=")
        .and_then(|v| v.trim().parse::<f64>().ok())
        .filter(|r| *r > 0.0)
        .ok_or_else(|| err(format!("first line must be '# frame_rate=<positive number>', got '{head}'")))?;
    let mut dim = None;
    let mut values = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = line
            .split(',')
            .map(|v| v.trim().parse::<f32>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| err(format!("row {i}: {e}")))?;
        match dim {
            None => dim = Some(row.len()),
            Some(d) if d != row.len() => return Err(err(format!("row {i} has {} values, expected {d}", row.len()))),
            _ => {}
        }
        values.extend(row);
    }
    let dim = dim.ok_or_else(|| err("no feature rows".into()))?;
    VisualFeatures::new(rate, dim, values)
}

pub fn write_features(path: &Path, f: &VisualFeatures) -> Result<()> {
    let mut out = format!("# frame_rate={}\n", f.frame_rate);
    for row in f.values.chunks(f.dim) {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}
