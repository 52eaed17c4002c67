//! Synthetic corpus generation, corpus loading, dataset splits.
//!
//! The generator plants parametric word templates into noise at exact
//! sample positions, so alignments are ground truth by construction.
//! Output layout under the corpus directory:
//!
//! ```text
//! lexicon.txt          one word per line
//! alignments.tsv       all word occurrences (see alignment module)
//! splits/{train,dev,test}.txt   utterance ids, one per line
//! wav/<utterance>.wav  mono PCM16 audio
//! ```

pub mod alignment;
pub mod templates;
pub mod wav;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::labeling::{Event, Lexicon};
use crate::rng::{stream_rng, tags};
use crate::train::TrainUtterance;

pub use alignment::{
    group_alignments, lexicon_from_records, load_alignments, rank_words_by_frequency,
    read_alignments, write_alignments_to, AlignmentRecord, LoadedAlignments,
};
pub use templates::WordBank;
pub use wav::{load_audio, read_wav, write_wav, WavAudio};

#[derive(Debug, Clone)]
pub struct CorpusConfig {
    pub lexicon_size: usize,
    pub train_utterances: usize,
    pub dev_utterances: usize,
    pub test_utterances: usize,
    pub sample_rate: u32,
    /// Utterance length range in samples.
    pub min_length: usize,
    pub max_length: usize,
    /// Events per utterance.
    pub min_events: usize,
    pub max_events: usize,
    /// Word duration range in samples.
    pub min_duration: usize,
    pub max_duration: usize,
    pub min_amplitude: f64,
    pub max_amplitude: f64,
    /// Signal-to-noise ratio in dB; `None` disables noise.
    pub snr_db: Option<f64>,
    /// Minimal silence between events, and before/after the first/last one.
    pub min_gap: usize,
    /// Silence kept at both utterance ends (leaves room for the training
    /// leading-cut augmentation).
    pub margin: usize,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            lexicon_size: 10,
            train_utterances: 200,
            dev_utterances: 50,
            test_utterances: 50,
            sample_rate: 2000,
            min_length: 4000,
            max_length: 12000,
            min_events: 2,
            max_events: 4,
            min_duration: 80,
            max_duration: 240,
            min_amplitude: 0.5,
            max_amplitude: 0.9,
            snr_db: Some(15.0),
            min_gap: 20,
            margin: 120,
            seed: 0,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lexicon_size < 2 {
            return Err(Error::InvalidConfig("lexicon needs at least 2 words".into()));
        }
        if self.min_length > self.max_length
            || self.min_events > self.max_events
            || self.min_duration > self.max_duration
            || self.min_amplitude > self.max_amplitude
        {
            return Err(Error::InvalidConfig("inverted range in corpus config".into()));
        }
        if self.min_duration == 0 {
            return Err(Error::InvalidConfig("word duration must be positive".into()));
        }
        // worst-case packing must fit
        let worst = self.max_events * self.max_duration
            + self.max_events.saturating_sub(1) * self.min_gap
            + 2 * self.margin;
        if worst > self.min_length {
            return Err(Error::InfeasiblePacking {
                events: self.max_events,
                max_duration: self.max_duration,
                length: self.min_length,
            });
        }
        Ok(())
    }

    pub fn word_name(&self, w: usize) -> String {
        format!("word_{w:02}")
    }

    pub fn lexicon(&self) -> Result<Lexicon> {
        Lexicon::new((0..self.lexicon_size).map(|w| self.word_name(w)).collect())
    }
}

/// What `generate_corpus` wrote.
#[derive(Debug)]
pub struct GenerateSummary {
    pub out_dir: PathBuf,
    pub utterances: usize,
    pub events: usize,
    pub total_samples: usize,
    pub lexicon: Lexicon,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn name(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

/// Generate a corpus on disk. Deterministic given the config (including
/// its seed): every utterance draws from its own derived RNG streams.
pub fn generate_corpus(config: &CorpusConfig, out_dir: &Path) -> Result<GenerateSummary> {
    config.validate()?;
    let lexicon = config.lexicon()?;
    let canonical = (config.min_duration + config.max_duration) / 2;
    let bank = WordBank::new(config.lexicon_size, config.sample_rate, canonical)?;

    let wav_dir = out_dir.join("wav");
    let split_dir = out_dir.join("splits");
    std::fs::create_dir_all(&wav_dir).map_err(|e| Error::io(&wav_dir, e))?;
    std::fs::create_dir_all(&split_dir).map_err(|e| Error::io(&split_dir, e))?;

    let mut records: Vec<AlignmentRecord> = Vec::new();
    let mut split_ids: BTreeMap<&'static str, Vec<String>> = BTreeMap::new();
    let mut total_samples = 0usize;
    let mut global_index = 0u64;

    let plan = [
        (Split::Train, config.train_utterances),
        (Split::Dev, config.dev_utterances),
        (Split::Test, config.test_utterances),
    ];
    for (split, count) in plan {
        for i in 0..count {
            let id = format!("{}_{i:04}", split.name());
            let utt = synthesize_utterance(config, &bank, global_index)?;
            global_index += 1;
            total_samples += utt.samples.len();
            for ev in &utt.events {
                records.push(AlignmentRecord {
                    utterance: id.clone(),
                    word: lexicon.word(ev.word).to_string(),
                    begin: ev.span.begin(),
                    end: ev.span.end(),
                });
            }
            wav::write_wav(&wav_dir.join(format!("{id}.wav")), &utt.samples, config.sample_rate)?;
            split_ids.entry(split.name()).or_default().push(id);
        }
    }

    alignment::write_alignments_to(&out_dir.join("alignments.tsv"), &records)?;
    let lexicon_path = out_dir.join("lexicon.txt");
    std::fs::write(&lexicon_path, lexicon.words().join("\n") + "\n")
        .map_err(|e| Error::io(&lexicon_path, e))?;
    for (name, ids) in &split_ids {
        let path = split_dir.join(format!("{name}.txt"));
        std::fs::write(&path, ids.join("\n") + "\n").map_err(|e| Error::io(&path, e))?;
    }

    Ok(GenerateSummary {
        out_dir: out_dir.to_path_buf(),
        utterances: global_index as usize,
        events: records.len(),
        total_samples,
        lexicon,
    })
}

/// One synthesized utterance (before PCM quantization).
pub(crate) struct SynthesizedUtterance {
    pub samples: Vec<f64>,
    pub events: Vec<Event>,
}

/// Deterministic synthesis of utterance `index`: content (placement,
/// words, durations, amplitudes) and noise draw from separate RNG streams
/// so the same content can be rendered at different noise levels.
pub(crate) fn synthesize_utterance(
    config: &CorpusConfig,
    bank: &WordBank,
    index: u64,
) -> Result<SynthesizedUtterance> {
    let mut rng = stream_rng(config.seed, tags::CORPUS_CONTENT, index);

    let length = rng.gen_range(config.min_length..=config.max_length);
    let count = rng.gen_range(config.min_events..=config.max_events);
    let words: Vec<usize> = (0..count).map(|_| rng.gen_range(0..config.lexicon_size)).collect();
    let durations: Vec<usize> =
        (0..count).map(|_| rng.gen_range(config.min_duration..=config.max_duration)).collect();
    let amplitudes: Vec<f64> =
        (0..count).map(|_| rng.gen_range(config.min_amplitude..=config.max_amplitude)).collect();

    let needed: usize = durations.iter().sum::<usize>()
        + count.saturating_sub(1) * config.min_gap
        + 2 * config.margin;
    if needed > length {
        return Err(Error::InfeasiblePacking {
            events: count,
            max_duration: config.max_duration,
            length,
        });
    }

    // distribute the slack over the gaps
    let mut slack = length - needed;
    let mut extras = Vec::with_capacity(count);
    for _ in 0..count {
        let e = if slack > 0 { rng.gen_range(0..=slack) } else { 0 };
        extras.push(e);
        slack -= e;
    }

    let mut samples = vec![0.0f64; length];
    let mut events = Vec::with_capacity(count);
    let mut pos = config.margin;
    for k in 0..count {
        pos += extras[k];
        let dur = durations[k];
        let template = bank.synthesize(words[k], dur, amplitudes[k]);
        for (i, v) in template.iter().enumerate() {
            samples[pos + i] += v;
        }
        events.push(Event::new(
            words[k],
            crate::geometry::Interval::new(pos as i64, (pos + dur) as i64).expect("dur > 0"),
        ));
        pos += dur + config.min_gap;
    }

    if let Some(snr_db) = config.snr_db {
        // signal power measured over event spans of the clean signal
        let mut power = 0.0;
        let mut n = 0usize;
        for ev in &events {
            for i in ev.span.begin() as usize..ev.span.end() as usize {
                power += samples[i] * samples[i];
                n += 1;
            }
        }
        if n > 0 && power > 0.0 {
            let p_signal = power / n as f64;
            let sigma = (p_signal / 10f64.powf(snr_db / 10.0)).sqrt();
            let normal = Normal::new(0.0, sigma)
                .map_err(|e| Error::InvalidConfig(format!("noise distribution: {e}")))?;
            let mut noise_rng = stream_rng(config.seed, tags::CORPUS_NOISE, index);
            for s in &mut samples {
                *s += normal.sample(&mut noise_rng);
            }
        }
    }
    Ok(SynthesizedUtterance { samples, events })
}

/// A corpus directory opened for training/evaluation.
#[derive(Debug)]
pub struct CorpusOnDisk {
    pub dir: PathBuf,
    pub lexicon: Lexicon,
    pub sample_rate: u32,
    pub alignments: LoadedAlignments,
    pub splits: BTreeMap<String, Vec<String>>,
}

impl CorpusOnDisk {
    pub fn open(dir: &Path) -> Result<Self> {
        let lexicon_path = dir.join("lexicon.txt");
        let text = std::fs::read_to_string(&lexicon_path).map_err(|e| Error::io(&lexicon_path, e))?;
        let words: Vec<String> =
            text.lines().map(|l| l.trim().to_string()).filter(|l| !l.is_empty()).collect();
        let lexicon = Lexicon::new(words)?;

        let alignments = load_alignments(&dir.join("alignments.tsv"), &lexicon)?;

        let mut splits = BTreeMap::new();
        let split_dir = dir.join("splits");
        for entry in std::fs::read_dir(&split_dir).map_err(|e| Error::io(&split_dir, e))? {
            let entry = entry.map_err(|e| Error::io(&split_dir, e))?;
            let path = entry.path();
            if path.extension().and_then(|e| e.to_str()) == Some("txt") {
                let name = path.file_stem().unwrap().to_string_lossy().to_string();
                let ids: Vec<String> = std::fs::read_to_string(&path)
                    .map_err(|e| Error::io(&path, e))?
                    .lines()
                    .map(|l| l.trim().to_string())
                    .filter(|l| !l.is_empty())
                    .collect();
                splits.insert(name, ids);
            }
        }

        // sample rate from the first listed utterance
        let first = splits
            .values()
            .flat_map(|ids| ids.iter())
            .next()
            .ok_or_else(|| Error::InvalidConfig("corpus has no utterances".into()))?;
        let probe = wav::read_wav(&dir.join("wav").join(format!("{first}.wav")))?;

        Ok(CorpusOnDisk {
            dir: dir.to_path_buf(),
            lexicon,
            sample_rate: probe.sample_rate,
            alignments,
            splits,
        })
    }

    pub fn split_ids(&self, split: &str) -> Result<&[String]> {
        self.splits
            .get(split)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::InvalidConfig(format!("corpus has no split {split:?}")))
    }

    /// Load the audio and events of one split, in manifest order.
    pub fn load_split(&self, split: &str) -> Result<Vec<TrainUtterance>> {
        let ids = self.split_ids(split)?.to_vec();
        let empty: Vec<Event> = Vec::new();
        ids.iter()
            .map(|id| {
                let path = self.dir.join("wav").join(format!("{id}.wav"));
                let audio = wav::load_audio(&path, Some(self.sample_rate))?;
                let events = self
                    .alignments
                    .events_by_utterance
                    .get(id)
                    .unwrap_or(&empty)
                    .clone();
                Ok(TrainUtterance { id: id.clone(), samples: audio.samples, events })
            })
            .collect()
    }
}
