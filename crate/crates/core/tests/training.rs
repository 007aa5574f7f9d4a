mod common;

use proptest::prelude::*;
use vidsound::audio::{AudioConfig, Waveform};
use vidsound::diffusion::{cfg_denoise, denoise, EdmConfig};
use vidsound::io::load_checkpoint;
use vidsound::metrics::align_beats;
use vidsound::model::{Model, ModelConfig};
use vidsound::nn::Tier;
use vidsound::pipeline::score_against_times;
use vidsound::tensor::Tensor;
use vidsound::training::*;
use vidsound::Error;

fn bits(t: &Tensor) -> (Vec<usize>, Vec<u32>) {
    (t.shape().to_vec(), t.data().iter().map(|v| v.to_bits()).collect())
}

#[test]
fn adamw_leaves_parameters_alone_without_gradient_or_decay() {
    let cfg = AdamWConfig { weight_decay: 0.0, ..AdamWConfig::default() };
    let mut x = vec![1.5f32, -2.0];
    let (mut m, mut v) = (vec![0.0; 2], vec![0.0; 2]);
    adamw_update(&mut x, &[0.0, 0.0], &mut m, &mut v, 1, 0.1, &cfg);
    assert_eq!(x, vec![1.5, -2.0]);
}

#[test]
fn adamw_first_step_on_a_parabola() {
    // f(x) = x², g = 2 at x = 1. After bias correction m̂ = g and v̂ = g², so
    // the step is lr · g / (|g| + eps).
    let cfg = AdamWConfig { weight_decay: 0.0, ..AdamWConfig::default() };
    let mut x = vec![1.0f32];
    let (mut m, mut v) = (vec![0.0], vec![0.0]);
    adamw_update(&mut x, &[2.0], &mut m, &mut v, 1, 0.1, &cfg);
    let expected = 1.0 - 0.1 * 2.0 / (2.0 + 1e-8);
    assert!((x[0] as f64 - expected).abs() < 1e-7, "{}", x[0]);
    assert!((m[0] - 0.2).abs() < 1e-7 && (v[0] - 0.16).abs() < 1e-7);
}

#[test]
fn adamw_weight_decay_is_decoupled() {
    let cfg = AdamWConfig { weight_decay: 0.5, ..AdamWConfig::default() };
    let mut x = vec![2.0f32];
    let (mut m, mut v) = (vec![0.0], vec![0.0]);
    adamw_update(&mut x, &[0.0], &mut m, &mut v, 1, 0.1, &cfg);
    assert!((x[0] - 2.0 * (1.0 - 0.1 * 0.5)).abs() < 1e-7);
}

#[test]
fn clipping_rescales_to_the_max_norm() {
    let mut g = vec![Some(vec![3.0f32]), None, Some(vec![4.0f32])];
    assert!((global_norm(&g) - 5.0).abs() < 1e-12);
    let scale = clip_gradients(&mut g, 0.5);
    assert!((scale - 0.1).abs() < 1e-12);
    assert_eq!(g, vec![Some(vec![0.3f32]), None, Some(vec![0.4f32])]);
}

proptest! {
    #[test]
    fn clipped_norm_never_exceeds_the_limit(
        values in prop::collection::vec(prop::collection::vec(-100.0f32..100.0, 0..20), 1..6),
        max_norm in 0.01f64..10.0,
    ) {
        let mut g: Vec<Option<Vec<f32>>> = values.into_iter().map(Some).collect();
        let before = g.clone();
        let norm = global_norm(&g);
        let scale = clip_gradients(&mut g, max_norm);
        prop_assert!(global_norm(&g) <= max_norm * (1.0 + 1e-6));
        if norm <= max_norm {
            prop_assert_eq!(scale, 1.0);
            prop_assert_eq!(g, before);
        } else {
            for (a, b) in g.iter().flatten().flatten().zip(before.iter().flatten().flatten()) {
                prop_assert!((*a as f64 - *b as f64 * scale).abs() <= 1e-5 * b.abs() as f64 + 1e-12);
            }
        }
    }
}

#[test]
fn learning_rate_schedule_switches_after_warmup() {
    let cfg = TrainConfig::default();
    let warm = GroupRates { pretrained: 2e-4, fresh: 2e-4 };
    assert_eq!(lr_schedule(0, &cfg), warm);
    assert_eq!(lr_schedule(999, &cfg), warm);
    assert_eq!(lr_schedule(1000, &cfg), GroupRates { pretrained: 3e-6, fresh: 3e-3 });
    let aliased = TrainConfig { alias_tiers: true, ..cfg };
    assert_eq!(lr_schedule(1000, &aliased), GroupRates { pretrained: 3e-3, fresh: 3e-3 });
    assert_eq!(GroupRates { pretrained: 1.0, fresh: 2.0 }.for_tier(Tier::Frozen), 0.0);
}

#[test]
fn optimizer_skips_frozen_parameters_and_aborts_on_nan() {
    let mut model = Model::new(ModelConfig::toy(), 0).unwrap();
    let store = &mut model.store;
    let before: Vec<_> = store.entries().iter().map(|e| bits(&e.value)).collect();
    let grads: Vec<Option<Vec<f32>>> = store.entries().iter().map(|e| Some(vec![1.0; e.value.numel()])).collect();
    let mut opt = AdamW::new(store, AdamWConfig::default());
    let rates = GroupRates { pretrained: 1e-2, fresh: 1e-2 };

    let mut bad = grads.clone();
    let last = bad.len() - 1;
    bad[last].as_mut().unwrap()[0] = f32::NAN;
    assert!(matches!(opt.step(store, &bad, &rates), Err(Error::Divergence { .. })));
    assert_eq!(opt.step, 0);
    for (e, b) in store.entries().iter().zip(&before) {
        assert_eq!(&bits(&e.value), b, "{} changed before the abort", e.name);
    }

    opt.step(store, &grads, &rates).unwrap();
    for (e, b) in store.entries().iter().zip(&before) {
        if e.tier == Tier::Frozen {
            assert_eq!(&bits(&e.value), b, "{}", e.name);
        } else {
            assert_ne!(&bits(&e.value), b, "{}", e.name);
        }
    }
}

#[test]
fn dropout_frequency_matches_the_configured_rate() {
    let mut rng = common::rng(3);
    let cfg = TrainConfig::default();
    let dropped = (0..10_000).filter(|_| draw_dropout(&cfg, 8, &mut rng)[0]).count();
    let rate = dropped as f64 / 1e4;
    assert!((rate - 0.10).abs() <= 0.01, "{rate}");

    let per = TrainConfig { per_sample_dropout: true, ..cfg };
    let mut mixed = 0;
    let mut total = 0;
    for _ in 0..10_000 {
        let d = draw_dropout(&per, 8, &mut rng);
        total += d.iter().filter(|&&x| x).count();
        mixed += usize::from(d.iter().any(|&x| x) && !d.iter().all(|&x| x));
    }
    assert!((total as f64 / 8e4 - 0.10).abs() <= 0.01);
    assert!(mixed > 0);
}

#[test]
fn moving_average_is_trailing() {
    let ma = moving_average(&[1.0, 2.0, 3.0, 4.0, 5.0], 2);
    assert_eq!(ma, vec![1.0, 1.5, 2.5, 3.5, 4.5]);
}

fn short_synth() -> SynthConfig {
    SynthConfig { duration: 2.0, min_peaks: 2, max_peaks: 4, ..SynthConfig::default() }
}

#[test]
fn corpus_is_deterministic_per_seed() {
    let cfg = short_synth();
    let a = make_synthetic_corpus(4, 11, &cfg).unwrap();
    let b = make_synthetic_corpus(4, 11, &cfg).unwrap();
    let c = make_synthetic_corpus(4, 12, &cfg).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.waveform, y.waveform);
        assert_eq!(x.poses, y.poses);
        assert_eq!(x.visual, y.visual);
        assert_eq!(x.planted, y.planted);
    }
    assert_ne!(a[0].waveform, c[0].waveform);
    // Sample i does not depend on how many are generated.
    assert_eq!(make_synthetic_corpus(2, 11, &cfg).unwrap()[1].waveform, a[1].waveform);
}

#[test]
fn corpus_samples_have_the_configured_shape() {
    let cfg = SynthConfig::default();
    for s in make_synthetic_corpus(10, 0, &cfg).unwrap() {
        assert_eq!(s.waveform.sample_rate, 256);
        assert_eq!(s.waveform.channels.len(), 2);
        assert_eq!(s.waveform.len(), 1024);
        assert_eq!(s.poses.num_frames(), 120);
        assert_eq!(s.visual.dim, 34);
        assert!(s.genre < 3);
        assert!((4..=8).contains(&s.planted.len()));
        for w in s.planted.windows(2) {
            assert!(w[1] - w[0] >= 0.3);
        }
        assert!(s.planted.iter().all(|&t| (0.25..=3.75).contains(&t)));
    }
}

#[test]
fn planted_rhythm_is_recoverable_from_poses_and_audio() {
    let cfg = SynthConfig::default();
    let audio = AudioConfig::for_sample_rate(cfg.sample_rate);
    let (mut visual, mut heard) = (0.0, 0.0);
    for s in make_synthetic_corpus(20, 5, &cfg).unwrap() {
        let frames = |ts: &[f64]| ts.iter().map(|t| (t * cfg.fps).round() as usize).collect::<Vec<_>>();
        visual += align_beats(&frames(&s.rhythm), &frames(&s.planted), 1).unwrap().f1 / 20.0;
        heard += score_against_times(&s.waveform, &s.planted, &audio, 1).unwrap().f1 / 20.0;
    }
    assert!(visual >= 0.9, "{visual}");
    assert!(heard >= 0.9, "{heard}");
}

#[test]
fn prepare_audio_normalizes_and_duplicates_mono() {
    let model = Model::new(ModelConfig::toy(), 0).unwrap();
    let w = Waveform::new(256, vec![(0..40).map(|i| (i as f32 - 20.0) / 10.0).collect()]).unwrap();
    let (a, len) = prepare_audio(&w, &model, 0.95).unwrap();
    assert_eq!(len, 32);
    assert_eq!(a.len(), 64);
    assert_eq!(a[..32], a[32..]);
    assert!((a[0] + 0.95).abs() < 1e-6);
    let other = Waveform::new(22050, vec![vec![0.0; 64]]).unwrap();
    assert!(matches!(prepare_audio(&other, &model, 0.95), Err(Error::Config(_))));
}

fn tiny_model(seed: u64) -> Model {
    let cfg = ModelConfig {
        latent_channels: 4,
        codec_channels: 8,
        channels: 8,
        cond_width: 16,
        embed_width: 16,
        lstm_hidden: 4,
        heads: 2,
        visual_dim: 34,
        ..ModelConfig::toy()
    };
    Model::new(cfg, seed).unwrap()
}

fn tiny_corpus(n: usize) -> Vec<TrainExample> {
    make_synthetic_corpus(n, 21, &short_synth()).unwrap().iter().map(TrainExample::from).collect()
}

fn quick_cfg() -> TrainConfig {
    TrainConfig {
        batch_size: 2,
        codec_steps: 5,
        steps: Some(6),
        warmup_iters: 2,
        checkpoint_every: 4,
        seed: 8,
        ..TrainConfig::default()
    }
}

#[test]
fn training_is_deterministic_and_writes_outputs() {
    let data = tiny_corpus(4);
    let dir = tempfile::tempdir().unwrap();
    let (ck, csv) = (dir.path().join("m.lris"), dir.path().join("loss.csv"));
    let out = TrainOutputs { checkpoint: Some(&ck), loss_csv: Some(&csv) };
    let mut a = tiny_model(1);
    let ra = train(&mut a, &data, &quick_cfg(), &EdmConfig::default(), &out).unwrap();
    let mut b = tiny_model(1);
    let rb = train(&mut b, &data, &quick_cfg(), &EdmConfig::default(), &TrainOutputs::default()).unwrap();
    assert_eq!(ra.codec, rb.codec);
    assert_eq!(ra.diffusion, rb.diffusion);
    assert_eq!(ra.codec.len(), 5);
    assert_eq!(ra.diffusion.len(), 6);
    assert!(ra.diffusion.iter().all(|r| r.loss.is_finite() && r.grad_norm.is_finite()));
    assert_eq!(ra.diffusion[1].lr_fresh, 2e-4);
    assert_eq!(ra.diffusion[2].lr_fresh, 3e-3);

    let loaded = load_checkpoint(&ck).unwrap();
    assert_eq!(loaded.step, 6);
    assert_eq!(loaded.train, Some(quick_cfg()));
    for (x, y) in loaded.model.store.entries().iter().zip(a.store.entries()) {
        assert_eq!(bits(&x.value), bits(&y.value), "{}", x.name);
    }
    let rows: Vec<LossRecord> = vidsound::io::table::read_rows(&csv).unwrap();
    assert_eq!(rows.len(), 11);
    assert_eq!(rows[0].phase, "codec");
    assert_eq!(rows[5].phase, "diffusion");
}

#[test]
fn codec_is_bit_identical_through_the_diffusion_phase() {
    let data = tiny_corpus(4);
    let mut model = tiny_model(2);
    let codec = |m: &Model| {
        m.store.entries().iter().filter(|e| e.name.starts_with("codec.")).map(|e| bits(&e.value)).collect::<Vec<_>>()
    };
    let before = codec(&model);
    let cfg = TrainConfig { codec_steps: 0, ..quick_cfg() };
    let all_before: Vec<_> = model.store.entries().iter().map(|e| bits(&e.value)).collect();
    train(&mut model, &data, &cfg, &EdmConfig::default(), &TrainOutputs::default()).unwrap();
    assert_eq!(codec(&model), before);
    let changed = model.store.entries().iter().zip(&all_before).filter(|(e, b)| bits(&e.value) != **b).count();
    assert!(changed > 1, "diffusion phase updated {changed} tensors");
}

#[test]
fn latent_scale_calibration_targets_sigma_data() {
    let data = tiny_corpus(3);
    let mut model = tiny_model(4);
    let clips: Vec<Waveform> = data.iter().map(|e| e.waveform.clone()).collect();
    calibrate_latent_scale(&mut model, &clips, 0.95, 0.1).unwrap();
    let p = model.store.constants();
    let mut z = Vec::new();
    for w in &clips {
        let (a, len) = prepare_audio(w, &model, 0.95).unwrap();
        z.extend(model.encode_audio(&p, &Tensor::new(a, &[1, 2, len])).unwrap().data().iter().map(|&v| v as f64));
    }
    let mean = z.iter().sum::<f64>() / z.len() as f64;
    let std = (z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / z.len() as f64).sqrt();
    assert!((std - 0.1).abs() < 1e-4, "{std}");
}

#[test]
fn divergence_aborts_and_keeps_the_last_checkpoint() {
    let mut data = tiny_corpus(2);
    data[1].waveform.channels[0][3] = f32::NAN;
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("m.lris");
    std::fs::write(&ck, b"previous").unwrap();
    let mut model = tiny_model(3);
    let out = TrainOutputs { checkpoint: Some(&ck), loss_csv: None };
    let err = train(&mut model, &data, &quick_cfg(), &EdmConfig::default(), &out).unwrap_err();
    assert!(matches!(err, Error::Divergence { .. }), "{err:?}");
    assert_eq!(std::fs::read(&ck).unwrap(), b"previous");
}

#[test]
fn full_dropout_trains_only_the_unconditional_path() {
    let data = tiny_corpus(4);
    let mut model = tiny_model(6);
    let encoders = |m: &Model| {
        m.store
            .entries()
            .iter()
            .filter(|e| e.name.starts_with("cond.") && !e.name.starts_with("cond.null"))
            .map(|e| (e.name.clone(), bits(&e.value)))
            .collect::<Vec<_>>()
    };
    let before = encoders(&model);
    assert!(!before.is_empty());
    let cfg = TrainConfig { cond_dropout: 1.0, ..quick_cfg() };
    let report = train(&mut model, &data, &cfg, &EdmConfig::default(), &TrainOutputs::default()).unwrap();
    assert!(report.diffusion.iter().all(|r| r.dropped == 2));
    assert_eq!(encoders(&model), before);

    let edm = EdmConfig::default();
    let p = model.store.constants();
    let net = model.net(&p);
    let mut rng = common::rng(0);
    let z = Tensor::new((0..2 * 4 * 32).map(|_| common::normal(&mut rng) as f32 * 0.3).collect(), &[2, 4, 32]);
    let inputs: Vec<_> = data[..2].iter().map(|e| e.cond.clone()).collect();
    let cond = model.cond.encode_batch(&p, &inputs, &[false, false]).unwrap();
    let uncond = denoise(&net, &z, &[0.3, 0.3], None, &edm).unwrap();
    let w0 = cfg_denoise(&net, &z, &[0.3, 0.3], &cond, 0.0, &edm).unwrap();
    assert_eq!(bits(&w0), bits(&uncond));
}

#[test]
fn empty_corpus_is_rejected() {
    let mut model = tiny_model(0);
    let err = train(&mut model, &[], &quick_cfg(), &EdmConfig::default(), &TrainOutputs::default()).unwrap_err();
    assert!(matches!(err, Error::InputTooShort { .. }));
}
