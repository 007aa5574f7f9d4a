//! End-to-end flows: conditioning from poses, generation from a checkpoint,
//! and beat-alignment scoring of generated audio.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{detect_audio_beats_with, AudioConfig, Waveform};
use crate::conditioning::{CondBatch, CondInput, VisualFeatures};
use crate::diffusion::{cfg_denoise, guide, sample_unconditional, sample_with, standard_normal, EdmConfig};
use crate::error::{Error, Result};
use crate::io::{Checkpoint, CorpusClip};
use crate::metrics::{align_beats, summarize, BeatAlignmentReport};
use crate::model::Model;
use crate::rhythm::{extract_visual_rhythm, PoseSequence, RhythmConfig};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct GenerationRequest {
    pub poses: PoseSequence,
    pub visual: Option<VisualFeatures>,
    pub genre: Option<usize>,
    /// Seconds; defaults to the pose sequence's duration.
    pub duration: Option<f64>,
    pub steps: usize,
    pub guidance: f64,
    pub seed: u64,
}

impl GenerationRequest {
    pub fn new(poses: PoseSequence) -> Self {
        let edm = EdmConfig::default();
        GenerationRequest {
            poses,
            visual: None,
            genre: None,
            duration: None,
            steps: edm.steps,
            guidance: edm.guidance_scale,
            seed: 0,
        }
    }

    pub fn pose_duration(&self) -> f64 {
        self.poses.num_frames() as f64 / self.poses.fps
    }
}

/// Conditioning inputs for one clip: rhythm peaks extracted from the poses,
/// plus the optional visual features and genre.
pub fn build_conditioning(poses: &PoseSequence, visual: Option<&VisualFeatures>, genre: Option<usize>, rhythm: &RhythmConfig) -> Result<CondInput> {
    let peaks = extract_visual_rhythm(poses, rhythm).map_err(|e| e.in_stage("rhythm_extract", None))?;
    Ok(CondInput {
        visual: visual.cloned(),
        peak_times: peaks.times(),
        genre,
    })
}

/// Waveform samples for a duration, rounded down to the model's length unit.
pub fn clip_samples(model: &Model, duration: f64) -> Result<usize> {
    let unit = model.cfg.length_multiple();
    let n = (duration * model.cfg.sample_rate as f64).round() as usize / unit * unit;
    if n == 0 {
        return Err(Error::InputTooShort {
            what: "generation length (samples)",
            need: unit,
            got: (duration * model.cfg.sample_rate as f64).round() as usize,
        });
    }
    Ok(n)
}

/// Decodes latents and undoes the training normalization factor.
fn decode(model: &Model, z: &Tensor, normalization: f64) -> Result<Vec<Waveform>> {
    let p = model.store.constants();
    let x = model.decode_latents(&p, z).map_err(|e| e.in_stage("model", None))?;
    let (b, a, l) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let gain = 1.0 / normalization;
    (0..b)
        .map(|i| {
            let channels = (0..a)
                .map(|c| {
                    let start = (i * a + c) * l;
                    x.data()[start..start + l].iter().map(|&v| (v as f64 * gain) as f32).collect()
                })
                .collect();
            Waveform::new(model.cfg.sample_rate, channels)
        })
        .collect()
}

/// Samples one clip per conditioning input with classifier-free guidance
/// `guidance`, or from the null branch alone when `inputs` is `None`.
pub fn generate_batch(
    model: &Model,
    edm: &EdmConfig,
    inputs: Option<&[CondInput]>,
    count: usize,
    samples: usize,
    normalization: f64,
    seed: u64,
) -> Result<Vec<Waveform>> {
    let shape = [count, model.cfg.latent_channels, samples / model.cfg.patch_factor];
    let p = model.store.constants();
    let net = model.net(&p);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = match inputs {
        Some(inputs) => {
            if inputs.len() != count {
                return Err(Error::dim("generate_batch inputs", &[inputs.len()], &[count]));
            }
            let cond: CondBatch = model
                .cond
                .encode_batch(&p, inputs, &vec![false; count])
                .map_err(|e| e.in_stage("conditioning", None))?;
            sample_with(
                |z, s| cfg_denoise(&net, z, &vec![s; count], &cond, edm.guidance_scale, edm),
                &shape,
                edm,
                &mut rng,
            )
        }
        None => sample_unconditional(&net, &shape, edm, &mut rng),
    }
    .map_err(|e| e.in_stage("diffusion", None))?;
    decode(model, &z, normalization)
}

/// Generates the soundtrack for one request.
pub fn generate(ck: &Checkpoint, req: &GenerationRequest, rhythm: &RhythmConfig) -> Result<Waveform> {
    let model = &ck.model;
    let pose_duration = req.pose_duration();
    let duration = req.duration.unwrap_or(pose_duration);
    if (duration - pose_duration).abs() > 1.0 / req.poses.fps + 1e-9 {
        return Err(Error::Config(format!(
            "requested duration {duration:.3} s differs from the pose sequence's {pose_duration:.3} s by more than one frame"
        )));
    }
    let input = build_conditioning(&req.poses, req.visual.as_ref(), req.genre, rhythm)?;
    let samples = clip_samples(model, duration)?;
    let edm = EdmConfig {
        steps: req.steps,
        guidance_scale: req.guidance,
        ..ck.diffusion
    };
    let normalization = ck.train.as_ref().map_or(0.95, |t| t.normalization_factor);
    let mut out = generate_batch(model, &edm, Some(std::slice::from_ref(&input)), 1, samples, normalization, req.seed)?;
    Ok(out.remove(0))
}

/// Detects beats in `w` and scores them against reference times (seconds)
/// mapped onto the same envelope grid.
pub fn score_against_times(w: &Waveform, reference: &[f64], audio: &AudioConfig, tolerance: usize) -> Result<BeatAlignmentReport> {
    let beats = detect_audio_beats_with(w, audio).map_err(|e| e.in_stage("audio_analysis", None))?;
    let mut truth: Vec<usize> = reference.iter().map(|&t| beats.index_of(t)).collect();
    truth.dedup();
    align_beats(&beats.indices, &truth, tolerance)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Steps,
    Guidance,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Steps => "steps",
            SweepParam::Guidance => "guidance",
        }
    }

    /// `base` with this parameter set to `value`.
    pub fn apply(self, base: &EdmConfig, value: f64) -> Result<EdmConfig> {
        let cfg = match self {
            SweepParam::Steps => {
                if !(value >= 1.0 && value.fract() == 0.0) {
                    return Err(Error::Config(format!("step count must be a positive integer, got {value}")));
                }
                EdmConfig { steps: value as usize, ..*base }
            }
            SweepParam::Guidance => EdmConfig { guidance_scale: value, ..*base },
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One row of a sampling sweep. The oracle mode fills `rel_error`; the
/// checkpoint mode fills the beat-alignment columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: String,
    pub value: f64,
    pub steps: usize,
    pub guidance: f64,
    pub rel_error: Option<f64>,
    pub bcs: Option<f64>,
    pub bhs: Option<f64>,
    pub f1: Option<f64>,
    pub csd: Option<f64>,
    pub hsd: Option<f64>,
    pub seconds: f64,
}

impl SweepRow {
    fn new(param: SweepParam, value: f64, edm: &EdmConfig, seconds: f64) -> Self {
        SweepRow {
            param: param.name().into(),
            value,
            steps: edm.steps,
            guidance: edm.guidance_scale,
            rel_error: None,
            bcs: None,
            bhs: None,
            f1: None,
            csd: None,
            hsd: None,
            seconds,
        }
    }
}

/// Runs the sampler against constant-target denoisers: the conditional
/// branch always predicts `z_c` and the unconditional one `z_u`, so guided
/// sampling must land on `z_u + w (z_c − z_u)`.
pub fn oracle_sweep(param: SweepParam, values: &[f64], base: &EdmConfig, seed: u64) -> Result<Vec<SweepRow>> {
    let shape = [1, 8, 64];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = |t: Tensor| t.scale(base.sigma_data as f32);
    let z_c = scale(standard_normal(&mut rng, &shape));
    let z_u = scale(standard_normal(&mut rng, &shape));
    values
        .iter()
        .map(|&value| {
            let edm = param.apply(base, value)?;
            let start = Instant::now();
            let target = guide(&z_u, &z_c, edm.guidance_scale)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
            let x = sample_with(|_, _| guide(&z_u, &z_c, edm.guidance_scale), &shape, &edm, &mut rng)?;
            let err: f64 = x.data().iter().zip(target.data()).map(|(a, b)| ((a - b) as f64).powi(2)).sum();
            let norm: f64 = target.data().iter().map(|&b| (b as f64).powi(2)).sum();
            let mut row = SweepRow::new(param, value, &edm, start.elapsed().as_secs_f64());
            row.rel_error = Some((err / norm).sqrt());
            Ok(row)
        })
        .collect()
}

/// Generates every clip of `clips` at each setting and scores the result
/// against the clip's planted times, or its pose rhythm when none are known.
#[allow(clippy::too_many_arguments)]
pub fn model_sweep(
    ck: &Checkpoint,
    clips: &[CorpusClip],
    param: SweepParam,
    values: &[f64],
    rhythm: &RhythmConfig,
    audio: &AudioConfig,
    tolerance: usize,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    let normalization = ck.train.as_ref().map_or(0.95, |t| t.normalization_factor);
    let mut prepared = Vec::with_capacity(clips.len());
    for c in clips {
        let input = build_conditioning(&c.poses, c.visual.as_ref(), c.genre, rhythm)?;
        let reference = if c.planted.is_empty() { input.peak_times.clone() } else { c.planted.clone() };
        let samples = clip_samples(&ck.model, c.poses.num_frames() as f64 / c.poses.fps)?;
        prepared.push((input, reference, samples));
    }
    values
        .iter()
        .map(|&value| {
            let edm = param.apply(&ck.diffusion, value)?;
            let start = Instant::now();
            let mut reports = Vec::with_capacity(prepared.len());
            for (i, (input, reference, samples)) in prepared.iter().enumerate() {
                let w = generate_batch(
                    &ck.model,
                    &edm,
                    Some(std::slice::from_ref(input)),
                    1,
                    *samples,
                    normalization,
                    seed.wrapping_add(i as u64),
                )?;
                reports.push(score_against_times(&w[0], reference, audio, tolerance)?);
            }
            let score = summarize(reports);
            let mut row = SweepRow::new(param, value, &edm, start.elapsed().as_secs_f64());
            row.bcs = Some(score.mean_bcs);
            row.bhs = Some(score.mean_bhs);
            row.f1 = Some(score.mean_f1);
            row.csd = Some(score.csd);
            row.hsd = Some(score.hsd);
            Ok(row)
        })
        .collect()
}
