//! Proposal decoding and per-class non-maximum suppression.
//!
//! A segment proposes an event when the classifier's best class is a word
//! (not the negative class) with probability at least `lambda`. The word's
//! offset/length regressions decode to absolute times, clamped so a wild
//! regression output cannot produce an absurd interval — the clamps also
//! bound how far any proposal can reach from its source segment, which is
//! what lets streaming inference finalize events early.

use crate::error::{Error, Result};
use crate::geometry::{interval_iou, FrameGeometry};
use crate::heads::HeadOutputs;
use crate::labeling::decode_offset_length;

/// Decoded candidate event, before suppression.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub word: usize,
    /// Begin/end in (real-valued) samples; rounded only at reporting time.
    pub begin: f64,
    pub end: f64,
    pub score: f64,
    pub source_segment: usize,
}

/// Predicted lengths above this are clipped before decoding.
pub const MAX_DECODED_LENGTH: f64 = 2.0;

/// Decode-time bound on |offset| in stride units: one receptive field.
pub fn max_decoded_offset(geometry: &FrameGeometry) -> f64 {
    geometry.receptive_field() as f64 / geometry.stride() as f64
}

/// Greatest distance (in samples) a proposal's interval can extend before
/// the start of its source window, given the decode clamps.
pub(crate) fn proposal_reach_back(geometry: &FrameGeometry) -> f64 {
    1.5 * geometry.receptive_field() as f64
}

pub fn validate_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("lambda must be in (0, 1), got {lambda}")))
    }
}

pub fn validate_iou_threshold(threshold: f64) -> Result<()> {
    if (0.0..1.0).contains(&threshold) {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "NMS IoU threshold must be in [0, 1), got {threshold}"
        )))
    }
}

/// Decode one segment's head outputs into at most one proposal.
pub(crate) fn propose_from_row(
    classifier_row: &[f64],
    offset_row: &[f64],
    length_row: &[f64],
    geometry: &FrameGeometry,
    t: usize,
    lambda: f64,
) -> Option<Proposal> {
    let negative = classifier_row.len() - 1;
    let mut best = 0usize;
    for (j, &p) in classifier_row.iter().enumerate() {
        if p > classifier_row[best] {
            best = j;
        }
    }
    if best == negative {
        return None;
    }
    let score = classifier_row[best];
    if score < lambda {
        return None;
    }
    decode_proposal(geometry, t, best, offset_row[best], length_row[best], score)
}

fn decode_proposal(
    geometry: &FrameGeometry,
    t: usize,
    word: usize,
    offset: f64,
    length: f64,
    score: f64,
) -> Option<Proposal> {
    if length <= 0.0 {
        return None;
    }
    let o_max = max_decoded_offset(geometry);
    let offset = offset.clamp(-o_max, o_max);
    let length = length.min(MAX_DECODED_LENGTH);
    let (begin, end) = decode_offset_length(geometry, t, offset, length);
    let begin = begin.max(0.0);
    if end <= begin {
        return None;
    }
    Some(Proposal { word, begin, end, score, source_segment: t })
}

/// Proposals from every segment of an utterance.
pub fn propose_events(
    outputs: &HeadOutputs,
    geometry: &FrameGeometry,
    lambda: f64,
) -> Result<Vec<Proposal>> {
    validate_lambda(lambda)?;
    let mut proposals = Vec::new();
    for t in 0..outputs.segments() {
        if let Some(p) = propose_from_row(
            outputs.classifier.row(t),
            outputs.offsets.row(t),
            outputs.lengths.row(t),
            geometry,
            t,
            lambda,
        ) {
            proposals.push(p);
        }
    }
    Ok(proposals)
}

/// Ablation switches for the proposal stage.
#[derive(Debug, Clone, Copy)]
pub struct ProposalOptions {
    /// Off: propose from the detection head alone (one proposal per
    /// (segment, word) with detection probability >= lambda, scored by it).
    pub use_classifier: bool,
    /// Off: ignore the regression heads; a proposal spans its source window.
    pub use_regression: bool,
}

impl Default for ProposalOptions {
    fn default() -> Self {
        ProposalOptions { use_classifier: true, use_regression: true }
    }
}

/// [`propose_events`] with ablation switches.
pub fn propose_events_with(
    outputs: &HeadOutputs,
    geometry: &FrameGeometry,
    lambda: f64,
    options: ProposalOptions,
) -> Result<Vec<Proposal>> {
    validate_lambda(lambda)?;
    let mut proposals = Vec::new();
    for t in 0..outputs.segments() {
        if options.use_classifier {
            let row = outputs.classifier.row(t);
            let negative = row.len() - 1;
            let mut best = 0usize;
            for (j, &p) in row.iter().enumerate() {
                if p > row[best] {
                    best = j;
                }
            }
            if best == negative || row[best] < lambda {
                continue;
            }
            if let Some(p) = decode_with_options(outputs, geometry, t, best, row[best], options) {
                proposals.push(p);
            }
        } else {
            for w in 0..outputs.words() {
                let score = outputs.detection.get(t, w);
                if score < lambda {
                    continue;
                }
                if let Some(p) = decode_with_options(outputs, geometry, t, w, score, options) {
                    proposals.push(p);
                }
            }
        }
    }
    Ok(proposals)
}

fn decode_with_options(
    outputs: &HeadOutputs,
    geometry: &FrameGeometry,
    t: usize,
    word: usize,
    score: f64,
    options: ProposalOptions,
) -> Option<Proposal> {
    if options.use_regression {
        decode_proposal(
            geometry,
            t,
            word,
            outputs.offsets.get(t, word),
            outputs.lengths.get(t, word),
            score,
        )
    } else {
        let window = geometry.segment_interval(t);
        Some(Proposal {
            word,
            begin: window.begin() as f64,
            end: window.end() as f64,
            score,
            source_segment: t,
        })
    }
}

/// Score-descending processing order with deterministic tie-breaks.
pub(crate) fn nms_order(a: &Proposal, b: &Proposal) -> std::cmp::Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(std::cmp::Ordering::Equal)
        .then(a.begin.partial_cmp(&b.begin).unwrap_or(std::cmp::Ordering::Equal))
        .then(a.word.cmp(&b.word))
        .then(a.source_segment.cmp(&b.source_segment))
}

/// Greedy per-class non-maximum suppression.
///
/// Repeatedly keeps the highest-scored remaining proposal and discards
/// same-word proposals whose IoU with it exceeds `iou_threshold`. Output
/// is sorted by begin time.
pub fn nms(proposals: &[Proposal], iou_threshold: f64) -> Result<Vec<Proposal>> {
    validate_iou_threshold(iou_threshold)?;
    let mut sorted: Vec<&Proposal> = proposals.iter().collect();
    sorted.sort_by(|a, b| nms_order(a, b));
    let mut kept: Vec<Proposal> = Vec::new();
    for p in sorted {
        let suppressed = kept.iter().any(|q| {
            q.word == p.word && interval_iou(q.begin, q.end, p.begin, p.end) > iou_threshold
        });
        if !suppressed {
            kept.push(p.clone());
        }
    }
    kept.sort_by(|a, b| {
        a.begin
            .partial_cmp(&b.begin)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.end.partial_cmp(&b.end).unwrap_or(std::cmp::Ordering::Equal))
            .then(a.word.cmp(&b.word))
    });
    Ok(kept)
}

/// Whole-file inference: forward, propose, suppress.
pub fn infer_utterance(
    model: &crate::model::Model,
    signal: &[f64],
    lambda: f64,
    iou_threshold: f64,
) -> Result<Vec<Proposal>> {
    infer_utterance_with(model, signal, lambda, iou_threshold, ProposalOptions::default())
}

/// Whole-file inference with ablation switches.
pub fn infer_utterance_with(
    model: &crate::model::Model,
    signal: &[f64],
    lambda: f64,
    iou_threshold: f64,
    options: ProposalOptions,
) -> Result<Vec<Proposal>> {
    let outputs = model.forward(signal)?;
    let proposals = propose_events_with(&outputs, &model.geometry(), lambda, options)?;
    nms(&proposals, iou_threshold)
}
