//! Two-phase training: codec reconstruction, latent scale calibration, then
//! conditional diffusion with the codec frozen.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::optim::{clip_gradients, global_norm, AdamW, GroupRates};
use super::{lr_schedule, Augment, SyntheticSample, TrainConfig};
use crate::audio::Waveform;
use crate::conditioning::CondInput;
use crate::diffusion::{training_loss, EdmConfig};
use crate::error::{Error, Result};
use crate::io::{save_checkpoint, table, Checkpoint};
use crate::model::Model;
use crate::nn::{ParamEntry, Tier};
use crate::tensor::{Tape, Tensor};

/// One training clip with what it is conditioned on.
#[derive(Debug, Clone)]
pub struct TrainExample {
    pub waveform: Waveform,
    pub cond: CondInput,
}

impl From<&SyntheticSample> for TrainExample {
    fn from(s: &SyntheticSample) -> Self {
        TrainExample {
            waveform: s.waveform.clone(),
            cond: s.cond_input(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub phase: String,
    pub step: usize,
    pub loss: f64,
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
    pub lr_pretrained: f64,
    pub lr_fresh: f64,
    /// Clips in the batch whose conditioning was replaced by the null token.
    pub dropped: usize,
}

#[derive(Debug, Clone, Default)]
pub struct TrainOutputs<'a> {
    /// Written every `checkpoint_every` diffusion steps and at the end.
    pub checkpoint: Option<&'a Path>,
    pub loss_csv: Option<&'a Path>,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub codec: Vec<LossRecord>,
    pub diffusion: Vec<LossRecord>,
    /// Reconstruction error of the trained codec over the corpus.
    pub codec_relative_l2: f64,
    pub latent_scale: f32,
}

/// Model-ready audio: channels matched to the model (mono duplicated),
/// peak-normalized and scaled by `factor`, and cropped to a multiple of the
/// model's length unit. Returns `[A * L]` channel-major samples and `L`.
pub fn prepare_audio(w: &Waveform, model: &Model, factor: f64) -> Result<(Vec<f32>, usize)> {
    let cfg = &model.cfg;
    if w.sample_rate != cfg.sample_rate {
        return Err(Error::Config(format!(
            "clip sample rate {} differs from the model's {}; resample explicitly first",
            w.sample_rate, cfg.sample_rate
        )));
    }
    let unit = cfg.length_multiple();
    let len = w.len() / unit * unit;
    if len == 0 {
        return Err(Error::InputTooShort {
            what: "training clip (samples)",
            need: unit,
            got: w.len(),
        });
    }
    let peak = w.channels.iter().flatten().fold(0.0f32, |m, v| m.max(v.abs())) as f64;
    let gain = if peak > 0.0 { factor / peak } else { 0.0 };
    let mut out = Vec::with_capacity(cfg.audio_channels * len);
    for c in 0..cfg.audio_channels {
        let src = &w.channels[c.min(w.channels.len() - 1)];
        out.extend(src[..len].iter().map(|&v| (v as f64 * gain) as f32));
    }
    Ok((out, len))
}

struct Prepared {
    audio: Vec<Vec<f32>>,
    len: usize,
    channels: usize,
}

impl Prepared {
    fn new(examples: &[TrainExample], model: &Model, cfg: &TrainConfig) -> Result<Self> {
        let mut audio = Vec::with_capacity(examples.len());
        let mut len = None;
        for (i, ex) in examples.iter().enumerate() {
            let (a, l) = prepare_audio(&ex.waveform, model, cfg.normalization_factor)
                .map_err(|e| e.in_stage("training", None))?;
            match len {
                None => len = Some(l),
                Some(l0) if l0 != l => {
                    return Err(Error::Contract(format!(
                        "clip {i} has {l} usable samples, clip 0 has {l0}; all clips must share a length"
                    )))
                }
                _ => {}
            }
            audio.push(a);
        }
        Ok(Prepared {
            audio,
            len: len.expect("non-empty corpus"),
            channels: model.cfg.audio_channels,
        })
    }

    /// `[B, A, L]` with augmentation applied per clip.
    fn batch(&self, idx: &[usize], cfg: &TrainConfig, rng: &mut impl Rng, augment: bool) -> Tensor {
        let mut data = Vec::with_capacity(idx.len() * self.channels * self.len);
        for &i in idx {
            let (gain, offset) = match (augment, cfg.augment) {
                (true, Augment::Gain) => {
                    let [lo, hi] = cfg.augment_gain_range;
                    (if hi > lo { rng.random_range(lo..=hi) } else { lo }, 0.0)
                }
                (true, Augment::DcOffset) => {
                    let [lo, hi] = cfg.augment_dc_range;
                    (1.0, if hi > lo { rng.random_range(lo..=hi) } else { lo })
                }
                _ => (1.0, 0.0),
            };
            data.extend(self.audio[i].iter().map(|&v| (v as f64 * gain + offset) as f32));
        }
        Tensor::new(data, &[idx.len(), self.channels, self.len])
    }
}

/// Endless shuffled passes over `0..n`, drawn `size` at a time.
struct Batcher {
    order: Vec<usize>,
    at: usize,
}

impl Batcher {
    fn new(n: usize) -> Self {
        Batcher {
            order: (0..n).collect(),
            at: n,
        }
    }

    fn next(&mut self, size: usize, rng: &mut impl Rng) -> Vec<usize> {
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.at == self.order.len() {
                self.order.shuffle(rng);
                self.at = 0;
            }
            out.push(self.order[self.at]);
            self.at += 1;
        }
        out
    }
}

/// Which clips of a batch have their conditioning replaced by the null
/// token: all or none with probability `cond_dropout`, or independently per
/// clip when `per_sample_dropout` is set.
pub fn draw_dropout(cfg: &TrainConfig, batch: usize, rng: &mut impl Rng) -> Vec<bool> {
    if cfg.per_sample_dropout {
        (0..batch).map(|_| rng.random_bool(cfg.cond_dropout)).collect()
    } else {
        vec![rng.random_bool(cfg.cond_dropout); batch]
    }
}

fn is_codec(e: &ParamEntry) -> bool {
    e.name.starts_with("codec.")
}

fn check_finite(loss: f64, step: usize, phase: &str) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence {
            step,
            detail: format!("{phase} loss is {loss}"),
        })
    }
}

/// Reconstruction error `‖decode(encode(x)) − x‖ / ‖x‖` pooled over clips.
pub fn codec_relative_l2(model: &Model, clips: &[Waveform], factor: f64) -> Result<f64> {
    let p = model.store.constants();
    let (mut err, mut total) = (0.0f64, 0.0f64);
    for w in clips {
        let (a, len) = prepare_audio(w, model, factor)?;
        let x = Tensor::new(a, &[1, model.cfg.audio_channels, len]);
        let y = model.codec.decode(&p, &model.codec.encode(&p, &x)?)?;
        for (u, v) in y.data().iter().zip(x.data()) {
            err += ((u - v) as f64).powi(2);
            total += (*v as f64).powi(2);
        }
    }
    Ok((err / total.max(1e-300)).sqrt())
}

/// Sets the latent scale so encoded clips have standard deviation
/// `sigma_data`, and returns it.
pub fn calibrate_latent_scale(model: &mut Model, clips: &[Waveform], factor: f64, sigma_data: f64) -> Result<f32> {
    let p = model.store.constants();
    let (mut sum, mut sq, mut n) = (0.0f64, 0.0f64, 0usize);
    for w in clips {
        let (a, len) = prepare_audio(w, model, factor)?;
        let z = model.codec.encode(&p, &Tensor::new(a, &[1, model.cfg.audio_channels, len]))?;
        for &v in z.data() {
            sum += v as f64;
            sq += (v as f64).powi(2);
            n += 1;
        }
    }
    let mean = sum / n as f64;
    let std = (sq / n as f64 - mean * mean).max(0.0).sqrt();
    if !(std > 0.0) {
        return Err(Error::domain("latent scale calibration", "encoded clips have zero spread"));
    }
    let scale = (sigma_data / std) as f32;
    model.store.set(model.latent_scale, Tensor::new(vec![scale], &[1]))?;
    Ok(scale)
}

/// Trailing moving average with the given window.
pub fn moving_average(xs: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    let mut out = Vec::with_capacity(xs.len());
    let mut acc = 0.0;
    for i in 0..xs.len() {
        acc += xs[i];
        if i >= w {
            acc -= xs[i - w];
        }
        out.push(acc / (i + 1).min(w) as f64);
    }
    out
}

/// Phase 1 trains the codec on reconstruction; the latent scale is then
/// calibrated; phase 2 trains the U-Net and conditioning encoders on the
/// diffusion loss with the codec held fixed.
pub fn train(
    model: &mut Model,
    examples: &[TrainExample],
    cfg: &TrainConfig,
    edm: &EdmConfig,
    out: &TrainOutputs<'_>,
) -> Result<TrainReport> {
    if examples.is_empty() {
        return Err(Error::InputTooShort {
            what: "training corpus (clips)",
            need: 1,
            got: 0,
        });
    }
    cfg.validate()?;
    edm.validate()?;
    let data = Prepared::new(examples, model, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut batcher = Batcher::new(examples.len());
    let bs = cfg.batch_size;

    let mut codec_log = Vec::with_capacity(cfg.codec_steps);
    let mut opt = AdamW::new(&model.store, cfg.adamw());
    for step in 0..cfg.codec_steps {
        let x = data.batch(&batcher.next(bs, &mut rng), cfg, &mut rng, true);
        let tape = Tape::new();
        let p = model.store.bind(&tape, is_codec);
        let y = model.codec.decode(&p, &model.codec.encode(&p, &x)?)?;
        let loss = y.sub(&x)?.square().mean();
        let value = loss.item() as f64;
        check_finite(value, step + 1, "codec")?;
        tape.backward(&loss)?;
        let mut grads = p.reached_grads();
        let grad_norm = global_norm(&grads);
        clip_gradients(&mut grads, cfg.grad_clip_max_norm);
        let rates = GroupRates {
            pretrained: cfg.codec_lr,
            fresh: cfg.codec_lr,
        };
        opt.step(&mut model.store, &grads, &rates)?;
        codec_log.push(LossRecord {
            phase: "codec".into(),
            step: step + 1,
            loss: value,
            grad_norm,
            lr_pretrained: cfg.codec_lr,
            lr_fresh: cfg.codec_lr,
            dropped: 0,
        });
    }

    let probe: Vec<Waveform> = examples.iter().take(64).map(|e| e.waveform.clone()).collect();
    let codec_relative_l2 = codec_relative_l2(model, &probe, cfg.normalization_factor)?;
    let latent_scale = calibrate_latent_scale(model, &probe, cfg.normalization_factor, edm.sigma_data)?;

    let steps = cfg.steps.unwrap_or(cfg.epochs * examples.len().div_ceil(bs));
    let trainable = |e: &ParamEntry| e.tier != Tier::Frozen && !is_codec(e);
    let mut opt = AdamW::new(&model.store, cfg.adamw());
    let mut diff_log = Vec::with_capacity(steps);
    for step in 0..steps {
        let idx = batcher.next(bs, &mut rng);
        let x = data.batch(&idx, cfg, &mut rng, true);
        let z0 = model.encode_audio(&model.store.constants(), &x)?;
        let drop = draw_dropout(cfg, idx.len(), &mut rng);
        let inputs: Vec<CondInput> = idx.iter().map(|&i| examples[i].cond.clone()).collect();
        let tape = Tape::new();
        let p = model.store.bind(&tape, trainable);
        let cond = model.cond.encode_batch(&p, &inputs, &drop)?;
        let sample = training_loss(&model.net(&p), &z0, Some(&cond), &mut rng, edm)?;
        let value = sample.loss.item() as f64;
        check_finite(value, step + 1, "diffusion")?;
        tape.backward(&sample.loss)?;
        let mut grads = p.reached_grads();
        let grad_norm = global_norm(&grads);
        clip_gradients(&mut grads, cfg.grad_clip_max_norm);
        let rates = lr_schedule(step, cfg);
        opt.step(&mut model.store, &grads, &rates)?;
        diff_log.push(LossRecord {
            phase: "diffusion".into(),
            step: step + 1,
            loss: value,
            grad_norm,
            lr_pretrained: rates.pretrained,
            lr_fresh: rates.fresh,
            dropped: drop.iter().filter(|&&d| d).count(),
        });
        let due = cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0;
        if let (true, Some(path)) = (due && step + 1 < steps, out.checkpoint) {
            write_checkpoint(path, model, cfg, edm, step + 1)?;
        }
    }
    if let Some(path) = out.checkpoint {
        write_checkpoint(path, model, cfg, edm, steps)?;
    }
    if let Some(path) = out.loss_csv {
        let rows: Vec<&LossRecord> = codec_log.iter().chain(&diff_log).collect();
        table::write_rows(path, &rows)?;
    }
    Ok(TrainReport {
        codec: codec_log,
        diffusion: diff_log,
        codec_relative_l2,
        latent_scale,
    })
}

fn write_checkpoint(path: &Path, model: &Model, cfg: &TrainConfig, edm: &EdmConfig, step: usize) -> Result<()> {
    save_checkpoint(
        path,
        &Checkpoint {
            model: model.clone(),
            diffusion: *edm,
            train: Some(cfg.clone()),
            step,
        },
    )
}
