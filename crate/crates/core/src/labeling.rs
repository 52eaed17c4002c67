//! Ground-truth events to per-segment training targets.
//!
//! Each (segment, word) cell receives a tri-state detection label from the
//! intersection-over-ground-truth (IoG) of the segment window and the best
//! matching event of that word. Positive cells additionally carry offset and
//! length regression targets, and each segment row carries one classifier
//! label (the positive word with smallest absolute offset, or the negative
//! class).

use crate::error::{Error, Result};
use crate::geometry::{overlap, FrameGeometry, Interval};
use crate::matrix::Mat;

/// Ordered set of target words. Index `c` (= `len()`) is the negative
/// "none of the lexicon" class of the classifier head.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    words: Vec<String>,
}

impl Lexicon {
    pub fn new(words: Vec<String>) -> Result<Self> {
        if words.is_empty() {
            return Err(Error::EmptyLexicon);
        }
        let mut seen = std::collections::HashSet::new();
        for w in &words {
            if !seen.insert(w.as_str()) {
                return Err(Error::DuplicateWord(w.clone()));
            }
        }
        Ok(Lexicon { words })
    }

    /// Number of words, usually written `c`.
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        false // constructor rejects empty lexicons
    }

    /// Class index reserved for "no lexicon word present".
    pub fn negative_class(&self) -> usize {
        self.words.len()
    }

    pub fn word(&self, index: usize) -> &str {
        &self.words[index]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.words.iter().position(|w| w == word)
    }
}

/// One labeled word occurrence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub word: usize,
    pub span: Interval,
}

impl Event {
    pub fn new(word: usize, span: Interval) -> Self {
        Event { word, span }
    }
}

/// Tri-state detection label for one (segment, word) cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectionLabel {
    Positive,
    Negative,
    DontCare,
}

/// IoG thresholds for the tri-state labeling rule.
///
/// IoG strictly above `positive_min` labels the cell positive, strictly
/// below `negative_max` negative, anything in the closed band between the
/// two is "don't care" and excluded from all losses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelThresholds {
    pub positive_min: f64,
    pub negative_max: f64,
}

impl Default for LabelThresholds {
    fn default() -> Self {
        LabelThresholds { positive_min: 0.95, negative_max: 0.5 }
    }
}

impl LabelThresholds {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.negative_max)
            && (0.0..=1.0).contains(&self.positive_min)
            && self.negative_max <= self.positive_min;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "label thresholds need 0 <= negative_max <= positive_min <= 1, got ({}, {})",
                self.negative_max, self.positive_min
            )))
        }
    }
}

/// Per-utterance training targets.
///
/// `offsets` and `lengths` are meaningful only where `labels` is positive;
/// other cells stay zero and are excluded from every loss.
#[derive(Debug, Clone)]
pub struct TargetTensors {
    pub labels: Mat<DetectionLabel>,
    pub offsets: Mat<f64>,
    pub lengths: Mat<f64>,
    /// Per-segment classifier target in `0..=c`, where `c` is the negative class.
    pub classes: Vec<usize>,
}

impl TargetTensors {
    pub fn segments(&self) -> usize {
        self.labels.rows()
    }

    pub fn words(&self) -> usize {
        self.labels.cols()
    }
}

/// Intersection-over-ground-truth of segment `t`'s window and an event.
///
/// 1.0 means the event lies entirely inside the window.
pub fn iog(geometry: &FrameGeometry, t: usize, event: &Event) -> f64 {
    let window = geometry.segment_interval(t);
    overlap(window, event.span) as f64 / event.span.len() as f64
}

/// Tri-state label from an IoG value.
pub fn detection_label(iog_value: f64, thresholds: &LabelThresholds) -> DetectionLabel {
    if iog_value > thresholds.positive_min {
        DetectionLabel::Positive
    } else if iog_value < thresholds.negative_max {
        DetectionLabel::Negative
    } else {
        DetectionLabel::DontCare
    }
}

/// Offset (stride units from the window center to the event center) and
/// length (event duration as a fraction of the receptive field) targets.
pub fn encode_offset_length(geometry: &FrameGeometry, t: usize, event: &Event) -> (f64, f64) {
    let center = (event.span.begin() + event.span.end()) as f64 / (2.0 * geometry.stride() as f64);
    let offset = center - geometry.segment_center(t);
    let length = event.span.len() as f64 / geometry.receptive_field() as f64;
    (offset, length)
}

/// Inverse of [`encode_offset_length`] for segment `t`: absolute begin/end
/// samples from predicted (offset, length).
pub fn decode_offset_length(
    geometry: &FrameGeometry,
    t: usize,
    offset: f64,
    length: f64,
) -> (f64, f64) {
    let s = geometry.stride() as f64;
    let r = geometry.receptive_field() as f64;
    let begin = s * (geometry.segment_center(t) + offset) - 0.5 * length * r;
    (begin, begin + length * r)
}

/// Build the full target tensors for one utterance.
///
/// For every (segment, word) cell the label comes from the maximal IoG over
/// events of that word, and the maximizing event supplies the regression
/// targets when the cell is positive. The classifier target of a segment is
/// the positive word with the smallest absolute offset (ties broken by
/// earlier event begin, then lower word index), or the negative class when
/// the row has no positive cell.
pub fn build_targets(
    geometry: &FrameGeometry,
    lexicon_size: usize,
    events: &[Event],
    length: usize,
    thresholds: &LabelThresholds,
) -> Result<TargetTensors> {
    thresholds.validate()?;
    let n = geometry.segment_count(length)?;
    for ev in events {
        if ev.word >= lexicon_size {
            return Err(Error::WordOutOfRange { word: ev.word, lexicon_size });
        }
        if ev.span.begin() < 0 || ev.span.end() > length as i64 {
            return Err(Error::EventOutOfBounds {
                begin: ev.span.begin(),
                end: ev.span.end(),
                length,
            });
        }
    }

    let mut labels = Mat::filled(n, lexicon_size, DetectionLabel::Negative);
    let mut offsets = Mat::zeros(n, lexicon_size);
    let mut lengths = Mat::zeros(n, lexicon_size);
    // Best (iog, event index) seen per cell; only cells touched by an event
    // differ from the all-negative default.
    let mut best: std::collections::HashMap<(usize, usize), (f64, usize)> =
        std::collections::HashMap::new();

    let r = geometry.receptive_field() as i64;
    let s = geometry.stride() as i64;
    for (idx, ev) in events.iter().enumerate() {
        // Segments whose window intersects the event: t*S < end and t*S + R > begin.
        let t_lo = ((ev.span.begin() - r + s) / s).max(0) as usize;
        let t_hi = (((ev.span.end() - 1) / s) as usize).min(n.saturating_sub(1));
        for t in t_lo..=t_hi.min(n.saturating_sub(1)) {
            let v = iog(geometry, t, ev);
            if v <= 0.0 {
                continue;
            }
            let cell = (t, ev.word);
            let replace = match best.get(&cell) {
                Some(&(cur, _)) => v > cur,
                None => true,
            };
            if replace {
                best.insert(cell, (v, idx));
            }
        }
    }

    for (&(t, w), &(v, idx)) in &best {
        let label = detection_label(v, thresholds);
        labels.set(t, w, label);
        if label == DetectionLabel::Positive {
            let (o, l) = encode_offset_length(geometry, t, &events[idx]);
            offsets.set(t, w, o);
            lengths.set(t, w, l);
        }
    }

    let mut classes = vec![lexicon_size; n];
    for t in 0..n {
        let mut chosen: Option<(f64, i64, usize)> = None; // (|o|, begin, word)
        for w in 0..lexicon_size {
            if labels.get(t, w) != DetectionLabel::Positive {
                continue;
            }
            let abs_o = offsets.get(t, w).abs();
            let begin = events[best[&(t, w)].1].span.begin();
            let cand = (abs_o, begin, w);
            let better = match chosen {
                None => true,
                Some(cur) => {
                    (cand.0, cand.1, cand.2) < (cur.0, cur.1, cur.2)
                }
            };
            if better {
                chosen = Some(cand);
            }
        }
        if let Some((_, _, w)) = chosen {
            classes[t] = w;
        }
    }

    Ok(TargetTensors { labels, offsets, lengths, classes })
}
