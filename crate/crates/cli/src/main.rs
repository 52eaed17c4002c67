mod commands;
mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Word detection and localization for 1-D streaming signals.
///
/// Exit codes: 0 success, 1 domain error, 2 usage error.
#[derive(Parser)]
#[command(name = "wordspot", version, about)]
struct Cli {
    /// Flat key-value config file; CLI flags override its values.
    /// Defaults to $WORDSPOT_CONFIG when set.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Cap worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus with exact alignments.
    Generate(GenerateArgs),
    /// Train a detector on a corpus directory.
    Train(TrainArgs),
    /// Detect and localize words in audio files.
    Infer(InferArgs),
    /// Score detections against ground-truth alignments.
    Evaluate(EvaluateArgs),
    /// Keyword-spotting score: per-keyword threshold sweep and MTWV.
    Mtwv(MtwvArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Output corpus directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Lexicon size.
    #[arg(long)]
    words: Option<usize>,
    /// Training-split utterance count.
    #[arg(long, visible_alias = "train")]
    utterances: Option<usize>,
    #[arg(long)]
    dev: Option<usize>,
    #[arg(long)]
    test: Option<usize>,
    /// Events per utterance: fixed count or MIN..MAX range.
    #[arg(long)]
    events: Option<String>,
    /// Utterance length range in seconds.
    #[arg(long)]
    min_len: Option<f64>,
    #[arg(long)]
    max_len: Option<f64>,
    /// Word duration range in samples.
    #[arg(long)]
    dur_min: Option<usize>,
    #[arg(long)]
    dur_max: Option<usize>,
    /// Signal-to-noise ratio in dB, or "inf" for noiseless audio.
    #[arg(long)]
    snr: Option<String>,
    #[arg(long)]
    sample_rate: Option<u32>,
}

#[derive(Args)]
struct TrainArgs {
    /// Corpus directory produced by `generate` (or matching its layout).
    #[arg(long)]
    corpus: PathBuf,
    /// Output directory for checkpoints and the training log.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    /// Initial learning rate of the cosine schedule.
    #[arg(long)]
    lr: Option<f64>,
    /// Final learning rate of the cosine schedule.
    #[arg(long)]
    lr_final: Option<f64>,
    /// Learning-rate schedule; only "cosine" is supported.
    #[arg(long)]
    lr_schedule: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Resume from a checkpoint that carries training state.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Save an intermediate checkpoint every N epochs.
    #[arg(long)]
    checkpoint_every: Option<usize>,
    /// Backbone conv layers as OUT:KERNEL:STRIDE:DILATION, comma separated.
    #[arg(long)]
    layers: Option<String>,
    #[arg(long)]
    feature_dim: Option<usize>,
    /// Maximum leading-cut augmentation in samples (default: one stride).
    #[arg(long)]
    max_leading_cut: Option<usize>,
    /// Force the true class into the classifier mask when hidden.
    #[arg(long)]
    teacher_force: bool,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// WAV files to process (mono PCM16 at the model's sample rate).
    #[arg(value_name = "AUDIO")]
    audio: Vec<PathBuf>,
    /// Read utterances of a corpus split instead of explicit files.
    #[arg(long, requires = "split")]
    corpus: Option<PathBuf>,
    #[arg(long)]
    split: Option<String>,
    /// Decision threshold on the classifier score.
    #[arg(long, value_parser = parse_lambda)]
    lambda: Option<f64>,
    /// NMS IoU threshold.
    #[arg(long, value_parser = parse_iou)]
    nms: Option<f64>,
    /// Output events file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Process audio as a chunked stream instead of whole files.
    #[arg(long)]
    stream: bool,
    /// Stream chunk size in samples (default: the model stride).
    #[arg(long)]
    chunk: Option<usize>,
    /// Accept WAV files whose rate differs from the checkpoint's.
    #[arg(long)]
    allow_rate_mismatch: bool,
    /// Ablation: "none", "no-classifier" (propose from the detection head)
    /// or "no-regression" (proposals span their source window).
    #[arg(long)]
    ablation: Option<String>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Ground-truth alignment file (TSV).
    #[arg(long)]
    truth: PathBuf,
    /// Detected events file (TSV from `infer`).
    #[arg(long)]
    events: PathBuf,
    /// Restrict scoring to the utterance ids listed in this manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// IoU floor for the actual-accuracy metric.
    #[arg(long)]
    actual_iou: Option<f64>,
    /// Drop events below this score before matching.
    #[arg(long)]
    min_score: Option<f64>,
    /// Sweep thresholds over the distinct event scores and report the
    /// best-F1 operating point (post-NMS approximation).
    #[arg(long)]
    tune_lambda: bool,
    /// Write the machine-readable report here as well.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MtwvArgs {
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    events: PathBuf,
    /// Restrict scoring to the utterance ids listed in this manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Keyword list, one word per line.
    #[arg(long)]
    keywords: PathBuf,
    #[arg(long)]
    beta: Option<f64>,
    /// Sum WAV durations under this directory for the false-alarm rate.
    #[arg(long)]
    audio_dir: Option<PathBuf>,
    /// Total audio duration in seconds (alternative to --audio-dir).
    #[arg(long)]
    total_seconds: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_lambda(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("not a number: {s:?}"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("lambda must be in (0, 1), got {v}"))
    }
}

fn parse_iou(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("not a number: {s:?}"))?;
    if (0.0..1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("IoU threshold must be in [0, 1), got {v}"))
    }
}

fn main() {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        // ignore failure if a pool already exists (e.g. repeated in tests)
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build_global();
    }
    let file_config = match config::FileConfig::load(cli.config.as_deref()) {
        Ok(c) => c,
        Err(e) => exit_with(e),
    };
    let result = match cli.command {
        Command::Generate(args) => commands::generate(args, &file_config),
        Command::Train(args) => commands::train(args, &file_config),
        Command::Infer(args) => commands::infer(args, &file_config),
        Command::Evaluate(args) => commands::evaluate(args, &file_config),
        Command::Mtwv(args) => commands::mtwv(args, &file_config),
    };
    if let Err(e) = result {
        exit_with(e);
    }
}

fn exit_with(e: anyhow::Error) -> ! {
    eprintln!("error: {e:#}");
    std::process::exit(config::exit_code_for(&e));
}
