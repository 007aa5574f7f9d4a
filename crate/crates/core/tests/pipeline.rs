use vidsound::diffusion::EdmConfig;
use vidsound::io::Checkpoint;
use vidsound::model::{Model, ModelConfig};
use vidsound::pipeline::*;
use vidsound::rhythm::{extract_visual_rhythm, RhythmConfig};
use vidsound::training::{make_synthetic_corpus, SynthConfig};
use vidsound::Error;

fn checkpoint() -> Checkpoint {
    Checkpoint { model: Model::new(ModelConfig::toy(), 1).unwrap(), diffusion: EdmConfig::default(), train: None, step: 0 }
}

#[test]
fn conditioning_carries_the_extracted_rhythm() {
    let s = &make_synthetic_corpus(1, 2, &SynthConfig::default()).unwrap()[0];
    let rhythm = RhythmConfig::default();
    let full = build_conditioning(&s.poses, Some(&s.visual), Some(s.genre), &rhythm).unwrap();
    assert_eq!(full.peak_times, extract_visual_rhythm(&s.poses, &rhythm).unwrap().times());
    assert_eq!(full.genre, Some(s.genre));
    assert!(full.visual.is_some());
    let bare = build_conditioning(&s.poses, None, None, &rhythm).unwrap();
    assert_eq!(bare.peak_times, full.peak_times);
    assert!(bare.visual.is_none() && bare.genre.is_none());
}

#[test]
fn generation_is_seeded_and_sized_to_the_poses() {
    let ck = checkpoint();
    let s = &make_synthetic_corpus(1, 3, &SynthConfig::default()).unwrap()[0];
    let mut req = GenerationRequest::new(s.poses.clone());
    req.visual = Some(s.visual.clone());
    req.genre = Some(s.genre);
    req.steps = 3;
    let rhythm = RhythmConfig::default();
    let a = generate(&ck, &req, &rhythm).unwrap();
    let b = generate(&ck, &req, &rhythm).unwrap();
    req.seed = 1;
    let c = generate(&ck, &req, &rhythm).unwrap();
    assert_eq!(a.sample_rate, 256);
    assert_eq!(a.channels.len(), 2);
    assert_eq!(a.len(), 1024);
    assert_eq!(a.channels, b.channels);
    assert_ne!(a.channels, c.channels);

    req.duration = Some(3.9);
    assert!(matches!(generate(&ck, &req, &rhythm), Err(Error::Config(_))));
}

#[test]
fn clip_length_rounds_down_to_the_model_unit() {
    let ck = checkpoint();
    let unit = ck.model.cfg.length_multiple();
    assert_eq!(clip_samples(&ck.model, 4.0).unwrap(), 1024);
    assert_eq!(clip_samples(&ck.model, (unit + unit / 2) as f64 / 256.0).unwrap(), unit);
    assert!(matches!(clip_samples(&ck.model, 0.5 / 256.0), Err(Error::InputTooShort { .. })));
}
