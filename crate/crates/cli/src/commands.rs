use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};

use wordspot_core::backbone::{Activation, BackboneSpec, ConvLayerSpec};
use wordspot_core::checkpoint;
use wordspot_core::corpus::{self, CorpusConfig, CorpusOnDisk};
use wordspot_core::infer::{infer_utterance_with, ProposalOptions};
use wordspot_core::metrics::{self, LabeledSpan, ScoredSpan};
use wordspot_core::records::{self, EventRecord};
use wordspot_core::rng::{stream_rng, tags};
use wordspot_core::stream::StreamingDetector;
use wordspot_core::train::{self, TrainConfig, TrainState};
use wordspot_core::Model;

use crate::config::{ensure_out_dir, usage, FileConfig, ResolvedConfig};
use crate::{EvaluateArgs, GenerateArgs, InferArgs, MtwvArgs, TrainArgs};

pub fn generate(args: GenerateArgs, fc: &FileConfig) -> Result<()> {
    let seed = fc.get("seed", args.seed, 0)?;
    let words = fc.get("words", args.words, 10)?;
    let train_utts = fc.get("train_utterances", args.utterances, 200)?;
    let dev_utts = fc.get("dev_utterances", args.dev, 50)?;
    let test_utts = fc.get("test_utterances", args.test, 50)?;
    let sample_rate = fc.get("sample_rate", args.sample_rate, 2000)?;
    let min_len_s = fc.get("min_len", args.min_len, 2.0)?;
    let max_len_s = fc.get("max_len", args.max_len, 6.0)?;
    let dur_min = fc.get("dur_min", args.dur_min, 80)?;
    let dur_max = fc.get("dur_max", args.dur_max, 240)?;
    let events_spec = fc.get("events", args.events, String::from("2..4"))?;
    let (min_events, max_events) = parse_events_range(&events_spec)?;
    let snr_spec = fc.get("snr", args.snr, String::from("15"))?;
    let snr_db = parse_snr(&snr_spec)?;

    let config = CorpusConfig {
        lexicon_size: words,
        train_utterances: train_utts,
        dev_utterances: dev_utts,
        test_utterances: test_utts,
        sample_rate,
        min_length: (min_len_s * sample_rate as f64) as usize,
        max_length: (max_len_s * sample_rate as f64) as usize,
        min_events,
        max_events,
        min_duration: dur_min,
        max_duration: dur_max,
        snr_db,
        seed,
        ..CorpusConfig::default()
    };

    ensure_out_dir(&args.out)?;
    let summary = corpus::generate_corpus(&config, &args.out)?;

    let mut resolved = ResolvedConfig::default();
    resolved.push("command", "generate");
    resolved.push("seed", seed);
    resolved.push("words", words);
    resolved.push("train_utterances", train_utts);
    resolved.push("dev_utterances", dev_utts);
    resolved.push("test_utterances", test_utts);
    resolved.push("sample_rate", sample_rate);
    resolved.push("min_len", min_len_s);
    resolved.push("max_len", max_len_s);
    resolved.push("dur_min", dur_min);
    resolved.push("dur_max", dur_max);
    resolved.push("events", &events_spec);
    resolved.push("snr", &snr_spec);
    resolved.write_to(&args.out)?;

    println!(
        "wrote {} utterances ({} events, {:.1} s of audio) to {}",
        summary.utterances,
        summary.events,
        summary.total_samples as f64 / sample_rate as f64,
        args.out.display()
    );
    println!(
        "lexicon: {} words; splits: {} train / {} dev / {} test",
        summary.lexicon.len(),
        train_utts,
        dev_utts,
        test_utts
    );
    Ok(())
}

pub fn train(args: TrainArgs, fc: &FileConfig) -> Result<()> {
    let epochs = fc.get("epochs", args.epochs, 30)?;
    let batch = fc.get("batch", args.batch, 8)?;
    let lr = fc.get("lr", args.lr, 0.001)?;
    let lr_final = fc.get("lr_final", args.lr_final, 0.0001)?;
    let schedule = fc.get("lr_schedule", args.lr_schedule, String::from("cosine"))?;
    if schedule != "cosine" {
        return Err(usage(format!("unsupported lr schedule {schedule:?} (only \"cosine\")")));
    }
    let seed = fc.get("seed", args.seed, 0)?;
    let feature_dim = fc.get("feature_dim", args.feature_dim, 32)?;
    let layers_spec = fc.get(
        "layers",
        args.layers,
        String::from("16:9:4:1,32:5:2:2,32:5:2:4,64:3:1:8"),
    )?;
    let max_leading_cut = fc.get_opt("max_leading_cut", args.max_leading_cut)?;
    let teacher_force =
        fc.get("teacher_force", if args.teacher_force { Some(true) } else { None }, false)?;
    let checkpoint_every = fc.get_opt("checkpoint_every", args.checkpoint_every)?;

    ensure_out_dir(&args.out)?;
    let corpus = CorpusOnDisk::open(&args.corpus)?;
    let utterances = corpus.load_split("train")?;

    let config = TrainConfig {
        epochs,
        batch_size: batch,
        lr_initial: lr,
        lr_final,
        seed,
        max_leading_cut,
        teacher_force,
        ..TrainConfig::default()
    };

    let mut state = match &args.resume {
        Some(path) => {
            let ckpt = checkpoint::load(path)?;
            if ckpt.training.total_epochs != epochs || ckpt.training.seed != seed {
                return Err(usage(format!(
                    "checkpoint was trained with epochs={} seed={}; pass matching flags to resume",
                    ckpt.training.total_epochs, ckpt.training.seed
                )));
            }
            let state = TrainState::from_checkpoint(ckpt)?;
            println!(
                "resuming from {} at epoch {}",
                path.display(),
                state.epochs_completed
            );
            state
        }
        None => {
            let spec = BackboneSpec { layers: parse_layers(&layers_spec)?, feature_dim };
            let mut rng = stream_rng(seed, tags::MODEL_INIT, 0);
            let model =
                Model::init(spec, corpus.lexicon.clone(), corpus.sample_rate, &mut rng)?;
            TrainState::new(model)
        }
    };

    let geometry = state.model.geometry();
    println!(
        "model: {} parameters, receptive field {} samples, stride {} samples",
        state.model.parameter_count(),
        geometry.receptive_field(),
        geometry.stride()
    );
    println!("training on {} utterances for {} epochs", utterances.len(), epochs);

    let log_path = args.out.join("train_log.csv");
    let mut log = std::fs::File::create(&log_path)
        .with_context(|| format!("creating {}", log_path.display()))?;
    writeln!(log, "epoch,lr,L_pos,L_neg,L_o,L_l,L_s,total")?;

    let started = Instant::now();
    let out_dir = args.out.clone();
    train::train(&mut state, &utterances, &config, &mut |state, stats| {
        let l = stats.loss;
        writeln!(
            log,
            "{},{},{},{},{},{},{},{}",
            stats.epoch, stats.lr, l.positive, l.negative, l.offset, l.length, l.classifier,
            l.total
        )
        .map_err(|e| wordspot_core::Error::io(&log_path, e))?;
        println!(
            "epoch {:>3}  lr {:.6}  L_pos {:.4}  L_neg {:.4}  L_o {:.4}  L_l {:.4}  L_s {:.4}  total {:.4}",
            stats.epoch, stats.lr, l.positive, l.negative, l.offset, l.length, l.classifier,
            l.total
        );
        if let Some(every) = checkpoint_every {
            if every > 0 && (stats.epoch + 1) % every == 0 && stats.epoch + 1 < epochs {
                let meta = config.training_meta(&state.model, state.epochs_completed);
                let path = out_dir.join(format!("epoch_{:03}.ckpt", stats.epoch + 1));
                checkpoint::save(&path, &state.model, &meta, Some(&state.resume_state()))?;
            }
        }
        Ok(())
    })?;

    let meta = config.training_meta(&state.model, state.epochs_completed);
    let ckpt_path = args.out.join("checkpoint.ckpt");
    checkpoint::save(&ckpt_path, &state.model, &meta, Some(&state.resume_state()))?;

    let mut resolved = ResolvedConfig::default();
    resolved.push("command", "train");
    resolved.push("corpus", args.corpus.display());
    resolved.push("epochs", epochs);
    resolved.push("batch", batch);
    resolved.push("lr", lr);
    resolved.push("lr_final", lr_final);
    resolved.push("lr_schedule", &schedule);
    resolved.push("seed", seed);
    resolved.push("layers", &layers_spec);
    resolved.push("feature_dim", feature_dim);
    resolved.push("teacher_force", teacher_force);
    if let Some(cut) = max_leading_cut {
        resolved.push("max_leading_cut", cut);
    }
    resolved.write_to(&args.out)?;

    println!(
        "trained {} epochs in {:.1} s; checkpoint at {}",
        state.epochs_completed,
        started.elapsed().as_secs_f64(),
        ckpt_path.display()
    );
    Ok(())
}

pub fn infer(args: InferArgs, fc: &FileConfig) -> Result<()> {
    let lambda = fc.get("lambda", args.lambda, 0.95)?;
    let nms_iou = fc.get("nms", args.nms, 0.5)?;
    wordspot_core::infer::validate_lambda(lambda)?;
    wordspot_core::infer::validate_iou_threshold(nms_iou)?;
    let ablation = fc.get("ablation", args.ablation, String::from("none"))?;
    let options = match ablation.as_str() {
        "none" => ProposalOptions::default(),
        "no-classifier" => ProposalOptions { use_classifier: false, use_regression: true },
        "no-regression" => ProposalOptions { use_classifier: true, use_regression: false },
        other => {
            return Err(usage(format!(
                "unknown ablation {other:?} (none | no-classifier | no-regression)"
            )))
        }
    };

    let ckpt = checkpoint::load(&args.checkpoint)?;
    let model = ckpt.model;
    let expected_rate = if args.allow_rate_mismatch { None } else { Some(model.sample_rate) };

    let mut inputs: Vec<(String, PathBuf)> = Vec::new();
    if let (Some(corpus_dir), Some(split)) = (&args.corpus, &args.split) {
        let corpus = CorpusOnDisk::open(corpus_dir)?;
        for id in corpus.split_ids(split)? {
            inputs.push((id.clone(), corpus_dir.join("wav").join(format!("{id}.wav"))));
        }
    }
    for path in &args.audio {
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().to_string())
            .unwrap_or_else(|| path.display().to_string());
        inputs.push((id, path.clone()));
    }
    if inputs.is_empty() {
        return Err(usage("no input audio: pass WAV files or --corpus DIR --split NAME"));
    }

    let chunk = args.chunk.unwrap_or_else(|| model.geometry().stride());
    let mut all_records: Vec<EventRecord> = Vec::new();
    for (id, path) in &inputs {
        let audio = corpus::load_audio(path, expected_rate)?;
        let proposals = if args.stream {
            if !options.use_classifier || !options.use_regression {
                return Err(usage("--ablation is not available in --stream mode"));
            }
            let mut detector = StreamingDetector::new(&model, lambda, nms_iou)?;
            let mut events = Vec::new();
            for chunk_samples in audio.samples.chunks(chunk.max(1)) {
                events.extend(detector.push(chunk_samples)?);
            }
            let outcome = detector.finish()?;
            if outcome.truncated {
                eprintln!(
                    "warning: {id}: stream shorter than the receptive field; no output"
                );
            }
            events.extend(outcome.events);
            events
        } else {
            infer_utterance_with(&model, &audio.samples, lambda, nms_iou, options)?
        };
        for p in &proposals {
            all_records.push(EventRecord::from_proposal(id, p, &model.lexicon, model.sample_rate));
        }
    }

    match &args.out {
        Some(path) => {
            records::write_event_records_to(path, &all_records)?;
            println!("wrote {} events to {}", all_records.len(), path.display());
        }
        None => {
            records::write_event_records(std::io::stdout().lock(), &all_records)?;
        }
    }
    Ok(())
}

fn truth_spans(path: &Path) -> Result<BTreeMap<String, Vec<LabeledSpan>>> {
    let recs = corpus::read_alignments(path)?;
    let mut by_utt: BTreeMap<String, Vec<LabeledSpan>> = BTreeMap::new();
    for r in recs {
        by_utt.entry(r.utterance.clone()).or_default().push(LabeledSpan {
            word: r.word,
            begin: r.begin as f64,
            end: r.end as f64,
        });
    }
    Ok(by_utt)
}

fn event_spans(path: &Path, min_score: Option<f64>) -> Result<BTreeMap<String, Vec<ScoredSpan>>> {
    let recs = records::read_event_records(path)?;
    let mut by_utt: BTreeMap<String, Vec<ScoredSpan>> = BTreeMap::new();
    for r in recs {
        if let Some(min) = min_score {
            if r.score < min {
                continue;
            }
        }
        by_utt.entry(r.utterance.clone()).or_default().push(ScoredSpan {
            word: r.word,
            begin: r.begin_sample as f64,
            end: r.end_sample as f64,
            score: r.score,
        });
    }
    Ok(by_utt)
}

pub fn evaluate(args: EvaluateArgs, fc: &FileConfig) -> Result<()> {
    let actual_iou = fc.get("actual_iou", args.actual_iou, 0.5)?;
    let truth = truth_spans(&args.truth)?;
    let events = event_spans(&args.events, args.min_score)?;

    if args.tune_lambda {
        let mut scores: Vec<f64> = events
            .values()
            .flat_map(|v| v.iter().map(|s| s.score))
            .collect();
        scores.sort_by(|a, b| b.partial_cmp(a).unwrap());
        scores.dedup();
        if scores.is_empty() {
            return Err(usage("no events to tune on"));
        }
        println!("{:>10} {:>9} {:>9} {:>9}", "lambda", "prec", "recall", "f1");
        let mut best = (scores[0], -1.0f64);
        for &lambda in &scores {
            let filtered: BTreeMap<String, Vec<ScoredSpan>> = events
                .iter()
                .map(|(k, v)| {
                    (k.clone(), v.iter().filter(|s| s.score >= lambda).cloned().collect())
                })
                .collect();
            let s = metrics::evaluate_detection(&truth, &filtered, actual_iou);
            println!(
                "{lambda:>10.6} {:>9.4} {:>9.4} {:>9.4}",
                s.precision, s.recall, s.f1
            );
            if s.f1 > best.1 {
                best = (lambda, s.f1);
            }
        }
        println!("best_lambda = {}", best.0);
        println!("best_f1 = {}", best.1);
        return Ok(());
    }

    let scores = metrics::evaluate_detection(&truth, &events, actual_iou);
    let rows = [
        ("precision", scores.precision),
        ("recall", scores.recall),
        ("f1", scores.f1),
        ("actual_accuracy", scores.actual_accuracy),
        ("avg_iou", scores.avg_iou),
    ];
    println!("{:>16} {:>9}", "metric", "value");
    for (name, v) in rows {
        println!("{name:>16} {v:>9.4}");
    }
    println!("counts: TP={} FP={} FN={}", scores.tp, scores.fp, scores.fn_);
    if !scores.degenerate.is_empty() {
        println!("flagged (empty denominator, reported as 0): {}", scores.degenerate.join(", "));
    }

    let mut report = String::new();
    for (name, v) in rows {
        report.push_str(&format!("{name} = {v}\n"));
    }
    report.push_str(&format!("tp = {}\nfp = {}\nfn = {}\n", scores.tp, scores.fp, scores.fn_));
    report.push_str(&format!("actual_iou_min = {actual_iou}\n"));
    if let Some(path) = &args.out {
        std::fs::write(path, &report).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

pub fn mtwv(args: MtwvArgs, fc: &FileConfig) -> Result<()> {
    let beta = fc.get("beta", args.beta, 999.9)?;
    let truth = truth_spans(&args.truth)?;
    let events = event_spans(&args.events, None)?;

    let keyword_text = std::fs::read_to_string(&args.keywords)
        .with_context(|| format!("reading {}", args.keywords.display()))?;
    let keywords: Vec<String> = keyword_text
        .lines()
        .map(|l| l.trim().to_string())
        .filter(|l| !l.is_empty())
        .collect();
    if keywords.is_empty() {
        return Err(usage("keyword file is empty"));
    }

    let total_seconds = match (args.total_seconds, &args.audio_dir) {
        (Some(s), _) => s,
        (None, Some(dir)) => {
            let mut total = 0.0f64;
            let entries = std::fs::read_dir(dir)
                .with_context(|| format!("reading {}", dir.display()))?;
            for entry in entries {
                let path = entry?.path();
                if path.extension().and_then(|e| e.to_str()) == Some("wav") {
                    let audio = corpus::read_wav(&path)?;
                    total += audio.samples.len() as f64 / audio.sample_rate as f64;
                }
            }
            total
        }
        (None, None) => {
            return Err(usage("pass --total-seconds or --audio-dir for the false-alarm rate"))
        }
    };

    let report = metrics::mtwv_sweep(&truth, &events, &keywords, beta, total_seconds)?;
    for excluded in &report.excluded {
        eprintln!("warning: keyword {excluded:?} has no ground-truth occurrences; excluded");
    }
    println!(
        "{:>16} {:>10} {:>9} {:>12} {:>6}",
        "keyword", "lambda", "p_miss", "p_fa_per_s", "occ"
    );
    for k in &report.per_keyword {
        let lam = if k.threshold.is_infinite() {
            "inf".to_string()
        } else {
            format!("{:.6}", k.threshold)
        };
        println!(
            "{:>16} {:>10} {:>9.4} {:>12.6} {:>6}",
            k.keyword, lam, k.p_miss, k.p_fa, k.occurrences
        );
    }
    println!("mtwv = {}", report.mtwv);
    println!("beta = {beta}");
    println!("total_audio_seconds = {total_seconds}");

    if let Some(path) = &args.out {
        let mut text = String::new();
        text.push_str(&format!("mtwv = {}\nbeta = {beta}\n", report.mtwv));
        text.push_str(&format!("total_audio_seconds = {total_seconds}\n"));
        for k in &report.per_keyword {
            text.push_str(&format!(
                "keyword.{} = {{ lambda = {}, p_miss = {}, p_fa = {}, occurrences = {} }}\n",
                k.keyword, k.threshold, k.p_miss, k.p_fa, k.occurrences
            ));
        }
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn parse_events_range(spec: &str) -> Result<(usize, usize)> {
    let parse = |s: &str| -> Result<usize> {
        s.trim()
            .parse()
            .map_err(|_| usage(format!("bad event count {s:?} in --events {spec:?}")))
    };
    match spec.split_once("..") {
        Some((lo, hi)) => Ok((parse(lo)?, parse(hi)?)),
        None => {
            let n = parse(spec)?;
            Ok((n, n))
        }
    }
}

fn parse_snr(spec: &str) -> Result<Option<f64>> {
    match spec.trim().to_ascii_lowercase().as_str() {
        "inf" | "none" | "off" => Ok(None),
        s => s
            .parse::<f64>()
            .map(Some)
            .map_err(|_| usage(format!("bad --snr {spec:?}: expected dB value or \"inf\""))),
    }
}

/// "OUT:KERNEL:STRIDE:DILATION, ..." with ReLU activations throughout.
fn parse_layers(spec: &str) -> Result<Vec<ConvLayerSpec>> {
    let mut layers = Vec::new();
    let mut in_channels = 1usize;
    for part in spec.split(',') {
        let fields: Vec<&str> = part.trim().split(':').collect();
        if fields.len() != 4 {
            return Err(usage(format!(
                "bad layer {part:?}: expected OUT:KERNEL:STRIDE:DILATION"
            )));
        }
        let mut nums = [0usize; 4];
        for (i, f) in fields.iter().enumerate() {
            nums[i] = f
                .trim()
                .parse()
                .map_err(|_| usage(format!("bad layer field {f:?} in {part:?}")))?;
        }
        layers.push(ConvLayerSpec {
            in_channels,
            out_channels: nums[0],
            kernel: nums[1],
            stride: nums[2],
            dilation: nums[3],
            activation: Activation::Relu,
        });
        in_channels = nums[0];
    }
    if layers.is_empty() {
        return Err(usage("empty --layers"));
    }
    Ok(layers)
}
