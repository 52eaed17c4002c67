//! Minibatch training with Adam and cosine learning-rate annealing.
//!
//! Utterance gradients within a batch are computed in parallel and reduced
//! in batch order, so results are bitwise reproducible for any thread
//! count. All randomness (epoch shuffles, leading-cut augmentation) is
//! derived from the base seed and epoch/utterance indices, which also makes
//! resumed runs identical to uninterrupted ones.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::checkpoint::{ResumeState, TrainingMeta};
use crate::error::{Error, Result};
use crate::geometry::Interval;
use crate::labeling::{build_targets, Event, LabelThresholds};
use crate::losses::LossBreakdown;
use crate::model::Model;
use crate::rng::{stream_rng, tags};

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_initial: f64,
    pub lr_final: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub seed: u64,
    /// Maximum leading-cut augmentation in samples; `None` uses the model
    /// stride (cut drawn uniformly from `[0, S)`).
    pub max_leading_cut: Option<usize>,
    pub teacher_force: bool,
    pub thresholds: LabelThresholds,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 8,
            lr_initial: 0.001,
            lr_final: 0.0001,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            seed: 0,
            max_leading_cut: None,
            teacher_force: false,
            thresholds: LabelThresholds::default(),
        }
    }
}

impl TrainConfig {
    pub fn training_meta(&self, model: &Model, epochs_completed: usize) -> TrainingMeta {
        TrainingMeta {
            epochs_completed,
            total_epochs: self.epochs,
            seed: self.seed,
            lr_initial: self.lr_initial,
            lr_final: self.lr_final,
            batch_size: self.batch_size,
            max_leading_cut: self.max_leading_cut.unwrap_or(model.geometry().stride()),
            teacher_force: self.teacher_force,
            positive_min: self.thresholds.positive_min,
            negative_max: self.thresholds.negative_max,
        }
    }
}

/// One training utterance: raw samples plus its ground-truth events.
#[derive(Debug, Clone)]
pub struct TrainUtterance {
    pub id: String,
    pub samples: Vec<f64>,
    pub events: Vec<Event>,
}

/// Per-epoch summary passed to the progress hook.
#[derive(Debug, Clone, Copy)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub loss: LossBreakdown,
}

/// Cosine annealing from `lr_initial` (epoch 0) to `lr_final` (last epoch).
pub fn cosine_lr(epoch: usize, total_epochs: usize, lr_initial: f64, lr_final: f64) -> f64 {
    if total_epochs <= 1 {
        return lr_initial;
    }
    let phase = epoch as f64 / (total_epochs - 1) as f64;
    lr_final + 0.5 * (lr_initial - lr_final) * (1.0 + (std::f64::consts::PI * phase).cos())
}

/// Model parameters plus optimizer state; owns everything that must
/// persist across epochs for exact resumption.
pub struct TrainState {
    pub model: Model,
    pub params: Vec<f64>,
    pub adam_m: Vec<f64>,
    pub adam_v: Vec<f64>,
    pub adam_step: u64,
    pub epochs_completed: usize,
}

impl TrainState {
    pub fn new(model: Model) -> Self {
        let params = model.flatten();
        let n = params.len();
        TrainState {
            model,
            params,
            adam_m: vec![0.0; n],
            adam_v: vec![0.0; n],
            adam_step: 0,
            epochs_completed: 0,
        }
    }

    /// Rebuild full-precision training state from a checkpoint.
    pub fn from_checkpoint(ckpt: crate::checkpoint::Checkpoint) -> Result<Self> {
        let resume = ckpt.resume.ok_or_else(|| {
            Error::CheckpointFormat("checkpoint has no resume state (inference-only)".into())
        })?;
        let mut model = ckpt.model;
        model.unflatten(&resume.master);
        Ok(TrainState {
            model,
            params: resume.master,
            adam_m: resume.adam_m,
            adam_v: resume.adam_v,
            adam_step: resume.adam_step,
            epochs_completed: ckpt.training.epochs_completed,
        })
    }

    pub fn resume_state(&self) -> ResumeState {
        ResumeState {
            master: self.params.clone(),
            adam_m: self.adam_m.clone(),
            adam_v: self.adam_v.clone(),
            adam_step: self.adam_step,
        }
    }
}

/// Shift events left by `cut` samples, clamping at the utterance start and
/// dropping events that are cut away entirely.
fn shift_events(events: &[Event], cut: usize) -> Vec<Event> {
    let cut = cut as i64;
    events
        .iter()
        .filter_map(|ev| {
            let begin = (ev.span.begin() - cut).max(0);
            let end = ev.span.end() - cut;
            if end > begin {
                Some(Event::new(ev.word, Interval::new(begin, end).expect("begin < end")))
            } else {
                None
            }
        })
        .collect()
}

/// Run training epochs `state.epochs_completed..config.epochs`.
///
/// `on_epoch` fires after each epoch with the state already advanced; it
/// can save checkpoints or append log rows. Training aborts with a
/// diagnostic if any loss term becomes non-finite.
pub fn train(
    state: &mut TrainState,
    corpus: &[TrainUtterance],
    config: &TrainConfig,
    on_epoch: &mut dyn FnMut(&TrainState, &EpochStats) -> Result<()>,
) -> Result<()> {
    if corpus.is_empty() {
        return Err(Error::InvalidConfig("training corpus is empty".into()));
    }
    config.thresholds.validate()?;
    let geometry = state.model.geometry();
    let max_cut = config.max_leading_cut.unwrap_or(geometry.stride());
    let words = state.model.words();

    for epoch in state.epochs_completed..config.epochs {
        let lr = cosine_lr(epoch, config.epochs, config.lr_initial, config.lr_final);
        let mut order: Vec<usize> = (0..corpus.len()).collect();
        order.shuffle(&mut stream_rng(config.seed, tags::EPOCH_SHUFFLE, epoch as u64));

        let mut sums = LossBreakdown::default();
        let mut seen = 0usize;
        for (batch_idx, batch) in order.chunks(config.batch_size.max(1)).enumerate() {
            let results: Vec<Result<(LossBreakdown, Vec<f64>)>> = batch
                .par_iter()
                .map(|&ui| {
                    let utt = &corpus[ui];
                    let cut = if max_cut > 0 {
                        stream_rng(
                            config.seed,
                            tags::AUGMENT,
                            (epoch * corpus.len() + ui) as u64,
                        )
                        .gen_range(0..max_cut)
                    } else {
                        0
                    };
                    let signal = &utt.samples[cut.min(utt.samples.len())..];
                    let events = shift_events(&utt.events, cut);
                    let targets = build_targets(
                        &geometry,
                        words,
                        &events,
                        signal.len(),
                        &config.thresholds,
                    )?;
                    state.model.loss_and_grad(signal, &targets, config.teacher_force)
                })
                .collect();

            // deterministic reduction in batch order
            let mut grad_sum = vec![0.0; state.params.len()];
            let mut batch_loss = LossBreakdown::default();
            let count = results.len();
            for r in results {
                let (loss, grad) = r?;
                add_loss(&mut batch_loss, &loss);
                for (a, g) in grad_sum.iter_mut().zip(&grad) {
                    *a += g;
                }
            }
            let inv = 1.0 / count as f64;
            for g in &mut grad_sum {
                *g *= inv;
            }
            scale_loss(&mut batch_loss, inv);
            if let Some(term) = batch_loss.non_finite_term() {
                return Err(Error::TrainingDiverged { term, epoch, batch: batch_idx });
            }

            adam_step(state, &grad_sum, lr, config);
            add_loss_scaled(&mut sums, &batch_loss, count as f64);
            seen += count;
        }

        let mut mean = sums;
        scale_loss(&mut mean, 1.0 / seen as f64);
        state.epochs_completed = epoch + 1;
        let stats = EpochStats { epoch, lr, loss: mean };
        on_epoch(state, &stats)?;
    }
    Ok(())
}

fn adam_step(state: &mut TrainState, grad: &[f64], lr: f64, config: &TrainConfig) {
    state.adam_step += 1;
    let t = state.adam_step as f64;
    let b1 = config.adam_beta1;
    let b2 = config.adam_beta2;
    let bc1 = 1.0 - b1.powf(t);
    let bc2 = 1.0 - b2.powf(t);
    for i in 0..grad.len() {
        let g = grad[i];
        state.adam_m[i] = b1 * state.adam_m[i] + (1.0 - b1) * g;
        state.adam_v[i] = b2 * state.adam_v[i] + (1.0 - b2) * g * g;
        let m_hat = state.adam_m[i] / bc1;
        let v_hat = state.adam_v[i] / bc2;
        state.params[i] -= lr * m_hat / (v_hat.sqrt() + config.adam_epsilon);
    }
    state.model.unflatten(&state.params);
}

fn add_loss(acc: &mut LossBreakdown, x: &LossBreakdown) {
    acc.positive += x.positive;
    acc.negative += x.negative;
    acc.offset += x.offset;
    acc.length += x.length;
    acc.classifier += x.classifier;
    acc.total += x.total;
}

fn add_loss_scaled(acc: &mut LossBreakdown, x: &LossBreakdown, k: f64) {
    acc.positive += k * x.positive;
    acc.negative += k * x.negative;
    acc.offset += k * x.offset;
    acc.length += k * x.length;
    acc.classifier += k * x.classifier;
    acc.total += k * x.total;
}

fn scale_loss(acc: &mut LossBreakdown, k: f64) {
    acc.positive *= k;
    acc.negative *= k;
    acc.offset *= k;
    acc.length *= k;
    acc.classifier *= k;
    acc.total *= k;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::{Activation, BackboneSpec, ConvLayerSpec};
    use crate::labeling::Lexicon;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cosine_schedule_endpoints_and_midpoint() {
        assert_eq!(cosine_lr(0, 30, 0.001, 0.0001), 0.001);
        let last = cosine_lr(29, 30, 0.001, 0.0001);
        assert!((last - 0.0001).abs() < 1e-12);
        // midpoint of an odd-length schedule hits the arithmetic mean
        let mid = cosine_lr(5, 11, 0.001, 0.0001);
        assert!((mid - 0.00055).abs() < 1e-12);
        // degenerate one-epoch schedule stays at the initial rate
        assert_eq!(cosine_lr(0, 1, 0.001, 0.0001), 0.001);
    }

    #[test]
    fn shift_events_clamps_and_drops() {
        let ev = |b, e| Event::new(0, Interval::new(b, e).unwrap());
        let shifted = shift_events(&[ev(10, 20), ev(0, 4), ev(2, 30)], 5);
        assert_eq!(shifted.len(), 2);
        assert_eq!(shifted[0].span, Interval::new(5, 15).unwrap());
        assert_eq!(shifted[1].span, Interval::new(0, 25).unwrap());
    }

    fn tiny_model(seed: u64) -> Model {
        let spec = BackboneSpec {
            layers: vec![
                ConvLayerSpec {
                    in_channels: 1,
                    out_channels: 4,
                    kernel: 5,
                    stride: 3,
                    dilation: 1,
                    activation: Activation::Relu,
                },
                ConvLayerSpec {
                    in_channels: 4,
                    out_channels: 6,
                    kernel: 3,
                    stride: 2,
                    dilation: 1,
                    activation: Activation::Relu,
                },
            ],
            feature_dim: 6,
        };
        let lexicon = Lexicon::new(vec!["w0".into(), "w1".into()]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Model::init(spec, lexicon, 1000, &mut rng).unwrap()
    }

    fn tiny_corpus() -> Vec<TrainUtterance> {
        // deterministic mini corpus: two sinusoid "words" on silence
        let mut corpus = Vec::new();
        for u in 0..6 {
            let len = 300 + 17 * u;
            let mut samples = vec![0.0; len];
            let word = u % 2;
            let begin = 60 + 10 * u;
            let dur = 40;
            for i in 0..dur {
                let f = if word == 0 { 0.25 } else { 0.45 };
                samples[begin + i] = (std::f64::consts::TAU * f * i as f64).sin() * 0.8;
            }
            corpus.push(TrainUtterance {
                id: format!("utt{u}"),
                samples,
                events: vec![Event::new(
                    word,
                    Interval::new(begin as i64, (begin + dur) as i64).unwrap(),
                )],
            });
        }
        corpus
    }

    #[test]
    fn one_epoch_smoke_and_stats_are_finite() {
        let mut state = TrainState::new(tiny_model(1));
        let config = TrainConfig { epochs: 1, batch_size: 3, seed: 9, ..Default::default() };
        let mut rows = Vec::new();
        train(&mut state, &tiny_corpus(), &config, &mut |_, stats| {
            rows.push(*stats);
            Ok(())
        })
        .unwrap();
        assert_eq!(rows.len(), 1);
        let l = rows[0].loss;
        for (_, v) in l.terms() {
            assert!(v.is_finite());
        }
        assert_eq!(rows[0].lr, 0.001);
        assert_eq!(state.epochs_completed, 1);
    }

    #[test]
    fn training_is_deterministic() {
        let run = || {
            let mut state = TrainState::new(tiny_model(5));
            let config = TrainConfig { epochs: 3, batch_size: 2, seed: 3, ..Default::default() };
            train(&mut state, &tiny_corpus(), &config, &mut |_, _| Ok(())).unwrap();
            state.params
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn resume_reproduces_uninterrupted_run() {
        let config = TrainConfig { epochs: 4, batch_size: 2, seed: 13, ..Default::default() };
        let corpus = tiny_corpus();

        // uninterrupted run, snapshotting a resume checkpoint after epoch 2
        let mut full = TrainState::new(tiny_model(5));
        let mut snapshot: Option<Vec<u8>> = None;
        train(&mut full, &corpus, &config, &mut |state, stats| {
            if stats.epoch == 1 {
                let meta = config.training_meta(&state.model, state.epochs_completed);
                snapshot = Some(
                    crate::checkpoint::save_bytes(
                        &state.model,
                        &meta,
                        Some(&state.resume_state()),
                    )
                    .unwrap(),
                );
            }
            Ok(())
        })
        .unwrap();

        let restored = crate::checkpoint::load_bytes(&snapshot.unwrap()).unwrap();
        let mut resumed = TrainState::from_checkpoint(restored).unwrap();
        assert_eq!(resumed.epochs_completed, 2);
        train(&mut resumed, &corpus, &config, &mut |_, _| Ok(())).unwrap();

        assert_eq!(full.params, resumed.params);
        assert_eq!(full.adam_step, resumed.adam_step);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let mut state = TrainState::new(tiny_model(1));
        let err = train(&mut state, &[], &TrainConfig::default(), &mut |_, _| Ok(()));
        assert!(matches!(err, Err(Error::InvalidConfig(_))));
    }
}
