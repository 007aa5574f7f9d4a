//! File formats: WAV, pose JSON, visual features, checkpoints, configuration,
//! CSV tables and SVG plots.

pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod plot;
pub mod pose;
pub mod table;
pub mod wav;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use config::{load_config, Config};
pub use corpus::{read_corpus, read_manifest, write_corpus, CorpusClip, Manifest, ManifestClip};
pub use pose::{read_features, read_poses, write_features, write_poses, PoseFile};
pub use wav::{resample, wav_read, wav_write, WavEncoding};
