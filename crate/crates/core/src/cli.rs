//! Command-line interface. Exit codes: 0 success, 1 usage or configuration,
//! 2 unreadable or malformed input, 3 runtime failure or divergence.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::audio::{analyze_audio, AudioConfig, Waveform};
use crate::error::{Error, Result};
use crate::io::plot::rhythm_svg;
use crate::io::table::{envelope_rows, peak_rows, read_rows, write_rows, write_rows_to, EnvelopeRow, PeakRow};
use crate::io::{
    load_checkpoint, load_config, read_corpus, read_features, read_poses, wav_read, wav_write, write_corpus, Config,
    WavEncoding,
};
use crate::metrics::{align_beats, summarize, BeatAlignmentReport, EvalReport};
use crate::pipeline::{build_conditioning, generate, model_sweep, oracle_sweep, GenerationRequest, SweepParam};
use crate::rhythm::analyze_visual_rhythm;
use crate::training::{make_synthetic_corpus, train, TrainExample, TrainOutputs};

#[derive(Debug, Parser)]
#[command(name = "vidsound", version, about = "Rhythm-conditioned soundtrack generation from dance poses")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Visual rhythm peaks from a pose file.
    ExtractRhythm(ExtractRhythmArgs),
    /// Onset-envelope beats from a WAV file.
    AudioOnsets(AudioOnsetsArgs),
    /// Beat alignment of generated against reference audio.
    Eval(EvalArgs),
    /// Writes a synthetic corpus with planted rhythms.
    MakeSynth(MakeSynthArgs),
    /// Trains the codec, then the conditional diffusion model.
    Train(TrainArgs),
    /// Generates a soundtrack for a pose file.
    Sample(SampleArgs),
    /// Draws an onset envelope with its peaks as SVG.
    Plot(PlotArgs),
    /// Sweeps sampling steps or guidance scale.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct ExtractRhythmArgs {
    #[arg(long)]
    pub poses: PathBuf,
    /// Direction bins of the directogram.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Peaks CSV; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub envelope: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AudioOnsetsArgs {
    #[arg(long)]
    pub wav: PathBuf,
    /// Uses the file's `[audio]` section instead of settings scaled to the
    /// WAV's sample rate.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub envelope: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, required_unless_present = "gen_dir", conflicts_with = "gen_dir", requires = "reference")]
    pub gen: Option<PathBuf>,
    #[arg(long = "ref")]
    pub reference: Option<PathBuf>,
    #[arg(long, requires = "ref_dir")]
    pub gen_dir: Option<PathBuf>,
    #[arg(long)]
    pub ref_dir: Option<PathBuf>,
    /// Alignment tolerance in envelope frames.
    #[arg(long, default_value_t = 1)]
    pub tolerance: usize,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Report JSON; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MakeSynthArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Loss curve CSV; defaults to `<out>.loss.csv`.
    #[arg(long)]
    pub loss_csv: Option<PathBuf>,
    /// Overrides the diffusion step count of the config.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Overrides the codec step count of the config.
    #[arg(long)]
    pub codec_steps: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Encoding {
    Pcm16,
    Float32,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub poses: PathBuf,
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub genre: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub guidance: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Seconds; must match the pose sequence within one frame.
    #[arg(long)]
    pub duration: Option<f64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Encoding::Pcm16)]
    pub encoding: Encoding,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[arg(long)]
    pub envelope: PathBuf,
    #[arg(long)]
    pub peaks: PathBuf,
    #[arg(long, default_value = "rhythm")]
    pub title: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SweepKind {
    Steps,
    Guidance,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    pub param: SweepKind,
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
    /// Sweeps a trained model; without it the sampler runs against
    /// constant-target oracle denoisers.
    #[arg(long, requires = "data")]
    pub ckpt: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub clips: usize,
    #[arg(long, default_value_t = 2)]
    pub tolerance: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Results CSV; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Diagnostics go to standard error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e.root() {
        Error::Config(_) => 1,
        Error::Format { .. } | Error::Io(_) | Error::InputTooShort { .. } => 2,
        _ => 3,
    }
}

fn at<T>(r: Result<T>, path: &Path) -> Result<T> {
    r.map_err(|e| match e {
        Error::Stage { .. } => e,
        e => e.in_stage("cli_io", Some(path.to_path_buf())),
    })
}

fn config(path: Option<&Path>) -> Result<Config> {
    path.map_or_else(|| Ok(Config::default()), load_config)
}

fn audio_config(path: Option<&Path>, sample_rate: u32) -> Result<AudioConfig> {
    match path {
        Some(p) => Ok(load_config(p)?.audio),
        None => Ok(AudioConfig::for_sample_rate(sample_rate)),
    }
}

fn emit_rows<T: Serialize>(out: Option<&Path>, rows: &[T]) -> Result<()> {
    match out {
        Some(p) => write_rows(p, rows),
        None => write_rows_to(std::io::stdout().lock(), rows),
    }
}

fn write_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::format("JSON output", e.to_string()))?;
    match out {
        Some(p) => at(fs::write(p, text + "\n").map_err(Error::from), p),
        None => {
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{text}")?;
            Ok(())
        }
    }
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::ExtractRhythm(a) => extract_rhythm(a),
        Command::AudioOnsets(a) => audio_onsets(a),
        Command::Eval(a) => eval(a),
        Command::MakeSynth(a) => make_synth(a),
        Command::Train(a) => train_cmd(a),
        Command::Sample(a) => sample(a),
        Command::Plot(a) => plot(a),
        Command::Sweep(a) => sweep(a),
    }
}

fn extract_rhythm(a: ExtractRhythmArgs) -> Result<()> {
    let mut rhythm = config(a.config.as_deref())?.rhythm;
    if let Some(k) = a.k {
        rhythm.bins = k;
    }
    let poses = at(read_poses(&a.poses), &a.poses)?;
    let v = analyze_visual_rhythm(&poses, &rhythm).map_err(|e| e.in_stage("rhythm_extract", Some(a.poses.clone())))?;
    if let Some(p) = &a.envelope {
        write_rows(p, &envelope_rows(&v.envelope))?;
    }
    eprintln!("{} rhythm peaks in {} frames", v.peaks.len(), poses.num_frames());
    emit_rows(a.out.as_deref(), &peak_rows(&v.peaks))
}

fn audio_onsets(a: AudioOnsetsArgs) -> Result<()> {
    let w = at(wav_read(&a.wav), &a.wav)?;
    let cfg = audio_config(a.config.as_deref(), w.sample_rate)?;
    let r = analyze_audio(&w, &cfg).map_err(|e| e.in_stage("audio_analysis", Some(a.wav.clone())))?;
    if let Some(p) = &a.envelope {
        write_rows(p, &envelope_rows(&r.envelope))?;
    }
    eprintln!("{} beats in {:.3} s", r.beats.len(), w.duration());
    emit_rows(a.out.as_deref(), &peak_rows(&r.beats))
}

fn wav_files(dir: &Path) -> Result<Vec<String>> {
    let mut names: Vec<String> = at(fs::read_dir(dir).map_err(Error::from), dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.to_ascii_lowercase().ends_with(".wav"))
        .collect();
    names.sort();
    Ok(names)
}

fn score_pair(gen: &Path, reference: &Path, cfg: Option<&Path>, tolerance: usize) -> Result<BeatAlignmentReport> {
    let g = at(wav_read(gen), gen)?;
    let r = at(wav_read(reference), reference)?;
    if g.sample_rate != r.sample_rate {
        return Err(Error::format(
            format!("eval input {}", gen.display()),
            format!(
                "sample rate {} differs from the reference's {}; resample one of them first",
                g.sample_rate, r.sample_rate
            ),
        ));
    }
    let audio = audio_config(cfg, g.sample_rate)?;
    let beats = |w: &Waveform, p: &Path| {
        analyze_audio(w, &audio).map(|a| a.beats).map_err(|e| e.in_stage("audio_analysis", Some(p.to_path_buf())))
    };
    let (bg, br) = (beats(&g, gen)?, beats(&r, reference)?);
    align_beats(&bg.indices, &br.indices, tolerance).map_err(|e| e.in_stage("metrics", Some(gen.to_path_buf())))
}

fn eval(a: EvalArgs) -> Result<()> {
    let reports = match (&a.gen, &a.reference, &a.gen_dir, &a.ref_dir) {
        (Some(g), Some(r), None, None) => vec![score_pair(g, r, a.config.as_deref(), a.tolerance)?],
        (None, None, Some(gd), Some(rd)) => {
            let names = wav_files(gd)?;
            if names.is_empty() {
                return Err(Error::format(format!("eval directory {}", gd.display()), "no .wav files"));
            }
            let mut out = Vec::with_capacity(names.len());
            for n in &names {
                let r = rd.join(n);
                if !r.exists() {
                    return Err(Error::format(format!("eval directory {}", rd.display()), format!("no reference for {n}")));
                }
                out.push(score_pair(&gd.join(n), &r, a.config.as_deref(), a.tolerance)?);
            }
            out
        }
        _ => return Err(Error::Config("give --gen with --ref, or --gen-dir with --ref-dir".into())),
    };
    let report = EvalReport::new(summarize(reports), a.tolerance);
    eprintln!("BCS {:.4}  BHS {:.4}  F1 {:.4}", report.bcs, report.bhs, report.f1);
    write_json(a.out.as_deref(), &report)
}

fn make_synth(a: MakeSynthArgs) -> Result<()> {
    let synth = config(a.config.as_deref())?.synth;
    let samples = make_synthetic_corpus(a.n, a.seed, &synth)?;
    let m = write_corpus(&a.out, &samples, a.seed, &synth).map_err(|e| e.in_stage("cli_io", Some(a.out.clone())))?;
    eprintln!("wrote {} clips to {}", m.clips.len(), a.out.display());
    Ok(())
}

fn default_loss_path(out: &Path) -> PathBuf {
    let mut name = out.file_stem().unwrap_or_default().to_os_string();
    name.push(".loss.csv");
    out.with_file_name(name)
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let mut cfg = load_config(&a.config)?;
    if let Some(s) = a.steps {
        cfg.train.steps = Some(s);
    }
    if let Some(s) = a.codec_steps {
        cfg.train.codec_steps = s;
    }
    cfg.validate()?;
    let clips = read_corpus(&a.data, None)?;
    let examples = clips
        .iter()
        .map(|c| {
            let cond = build_conditioning(&c.poses, c.visual.as_ref(), c.genre, &cfg.rhythm)
                .map_err(|e| e.in_stage("conditioning", Some(a.data.join(&c.id))))?;
            Ok(TrainExample { waveform: c.waveform.clone(), cond })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut model = crate::model::Model::new(cfg.model.clone(), cfg.train.seed)?;
    let loss_csv = a.loss_csv.clone().unwrap_or_else(|| default_loss_path(&a.out));
    let out = TrainOutputs { checkpoint: Some(&a.out), loss_csv: Some(&loss_csv) };
    let report = train(&mut model, &examples, &cfg.train, &cfg.diffusion, &out).map_err(|e| e.in_stage("training", None))?;
    let last = report.diffusion.last().map_or(f64::NAN, |r| r.loss);
    eprintln!(
        "codec relative L2 {:.4}, {} diffusion steps, final loss {last:.4}; wrote {} and {}",
        report.codec_relative_l2,
        report.diffusion.len(),
        a.out.display(),
        loss_csv.display()
    );
    Ok(())
}

fn sample(a: SampleArgs) -> Result<()> {
    let rhythm = config(a.config.as_deref())?.rhythm;
    let ck = at(load_checkpoint(&a.ckpt), &a.ckpt)?;
    let poses = at(read_poses(&a.poses), &a.poses)?;
    let visual = match &a.features {
        Some(p) => Some(at(read_features(p), p)?),
        None => None,
    };
    let mut req = GenerationRequest::new(poses);
    req.visual = visual;
    req.genre = a.genre;
    req.duration = a.duration;
    req.steps = a.steps.unwrap_or(ck.diffusion.steps);
    req.guidance = a.guidance.unwrap_or(ck.diffusion.guidance_scale);
    req.seed = a.seed;
    let w = generate(&ck, &req, &rhythm).map_err(|e| match e {
        Error::Stage { .. } => e,
        e => e.in_stage("pipeline", Some(a.poses.clone())),
    })?;
    let encoding = match a.encoding {
        Encoding::Pcm16 => WavEncoding::Pcm16,
        Encoding::Float32 => WavEncoding::Float32,
    };
    at(wav_write(&a.out, &w, encoding), &a.out)?;
    eprintln!("wrote {:.3} s at {} Hz to {}", w.duration(), w.sample_rate, a.out.display());
    Ok(())
}

fn plot(a: PlotArgs) -> Result<()> {
    let env: Vec<EnvelopeRow> = at(read_rows(&a.envelope), &a.envelope)?;
    let peaks: Vec<PeakRow> = at(read_rows(&a.peaks), &a.peaks)?;
    at(fs::write(&a.out, rhythm_svg(&env, &peaks, &a.title)).map_err(Error::from), &a.out)
}

fn sweep(a: SweepArgs) -> Result<()> {
    let param = match a.param {
        SweepKind::Steps => SweepParam::Steps,
        SweepKind::Guidance => SweepParam::Guidance,
    };
    let cfg = config(a.config.as_deref())?;
    let rows = match (&a.ckpt, &a.data) {
        (None, _) => oracle_sweep(param, &a.values, &cfg.diffusion, a.seed)?,
        (Some(ck), Some(data)) => {
            let ck_loaded = at(load_checkpoint(ck), ck)?;
            let clips = read_corpus(data, Some(a.clips))?;
            let rate = ck_loaded.model.cfg.sample_rate;
            let audio = audio_config(a.config.as_deref(), rate)?;
            model_sweep(&ck_loaded, &clips, param, &a.values, &cfg.rhythm, &audio, a.tolerance, a.seed)?
        }
        (Some(_), None) => return Err(Error::Config("--ckpt needs --data".into())),
    };
    emit_rows(a.out.as_deref(), &rows)
}
