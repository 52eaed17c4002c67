//! Streaming inference over chunked sample streams.
//!
//! A rolling buffer holds the last receptive field of samples; every new
//! stride's worth of samples yields one feature row, one proposal step,
//! and a finalization pass. Events are emitted as soon as no pending or
//! future proposal can overlap them, so the concatenated output of any
//! chunking equals whole-file inference exactly.

use crate::error::Result;
use crate::infer::{
    nms, proposal_reach_back, propose_from_row, validate_iou_threshold, validate_lambda, Proposal,
};
use crate::heads::forward_heads;
use crate::model::Model;

pub struct StreamingDetector<'m> {
    model: &'m Model,
    lambda: f64,
    iou_threshold: f64,
    buffer: Vec<f64>,
    /// Absolute sample index of `buffer[0]`.
    buffer_start: usize,
    next_segment: usize,
    total_samples: usize,
    pending: Vec<Proposal>,
}

/// Result of draining a finished stream.
#[derive(Debug)]
pub struct StreamOutcome {
    pub events: Vec<Proposal>,
    /// True when the stream was shorter than the receptive field, i.e. no
    /// segment was ever evaluated.
    pub truncated: bool,
}

impl<'m> StreamingDetector<'m> {
    pub fn new(model: &'m Model, lambda: f64, iou_threshold: f64) -> Result<Self> {
        validate_lambda(lambda)?;
        validate_iou_threshold(iou_threshold)?;
        Ok(StreamingDetector {
            model,
            lambda,
            iou_threshold,
            buffer: Vec::new(),
            buffer_start: 0,
            next_segment: 0,
            total_samples: 0,
            pending: Vec::new(),
        })
    }

    pub fn samples_seen(&self) -> usize {
        self.total_samples
    }

    /// Feed a chunk; returns events finalized by this chunk, in begin order.
    pub fn push(&mut self, chunk: &[f64]) -> Result<Vec<Proposal>> {
        let geometry = self.model.geometry();
        let r = geometry.receptive_field();
        let s = geometry.stride();
        self.buffer.extend_from_slice(chunk);
        self.total_samples += chunk.len();

        while self.buffer_start + self.buffer.len() >= self.next_segment * s + r {
            let t = self.next_segment;
            let lo = t * s - self.buffer_start;
            let window = &self.buffer[lo..lo + r];
            let features = self.model.backbone.forward(window)?;
            debug_assert_eq!(features.rows(), 1);
            let outputs = forward_heads(&features, &self.model.heads, None)?;
            if let Some(p) = propose_from_row(
                outputs.classifier.row(0),
                outputs.offsets.row(0),
                outputs.lengths.row(0),
                &geometry,
                t,
                self.lambda,
            ) {
                self.pending.push(p);
            }
            self.next_segment += 1;
        }

        // drop samples that precede the next window
        let keep_from = self.next_segment * s;
        if keep_from > self.buffer_start {
            let drop = (keep_from - self.buffer_start).min(self.buffer.len());
            self.buffer.drain(..drop);
            self.buffer_start += drop;
        }

        // a future proposal (segment >= next_segment) cannot begin earlier
        // than this, given the decode clamps
        let horizon =
            (self.next_segment * s) as f64 - proposal_reach_back(&geometry);
        Ok(self.drain_finalizable(horizon.max(0.0))?)
    }

    /// Flush everything; the stream is over.
    pub fn finish(mut self) -> Result<StreamOutcome> {
        let truncated = self.next_segment == 0;
        let events = self.drain_finalizable(f64::INFINITY)?;
        Ok(StreamOutcome { events, truncated })
    }

    /// Emit the largest begin-sorted prefix of pending proposals that can
    /// no longer interact with the rest or with any future proposal.
    ///
    /// Greedy NMS decomposes across zero-overlap boundaries, so running it
    /// on such a prefix gives exactly the whole-file result.
    fn drain_finalizable(&mut self, future_min_begin: f64) -> Result<Vec<Proposal>> {
        if self.pending.is_empty() {
            return Ok(Vec::new());
        }
        self.pending.sort_by(|a, b| {
            a.begin
                .partial_cmp(&b.begin)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.source_segment.cmp(&b.source_segment))
        });
        let mut cut = 0usize;
        let mut max_end = f64::NEG_INFINITY;
        for i in 0..self.pending.len() {
            if i > 0 {
                // valid cut before item i: closed to the right and future
                let next_begin = self.pending[i].begin;
                if max_end <= next_begin && max_end <= future_min_begin {
                    cut = i;
                }
            }
            max_end = max_end.max(self.pending[i].end);
        }
        if max_end <= future_min_begin {
            cut = self.pending.len();
        }
        if cut == 0 {
            return Ok(Vec::new());
        }
        let block: Vec<Proposal> = self.pending.drain(..cut).collect();
        nms(&block, self.iou_threshold)
    }
}

/// Run a whole signal through the streaming path in fixed-size chunks.
pub fn infer_stream_chunks(
    model: &Model,
    signal: &[f64],
    chunk_size: usize,
    lambda: f64,
    iou_threshold: f64,
) -> Result<StreamOutcome> {
    let mut detector = StreamingDetector::new(model, lambda, iou_threshold)?;
    let mut events = Vec::new();
    for chunk in signal.chunks(chunk_size.max(1)) {
        events.extend(detector.push(chunk)?);
    }
    let outcome = detector.finish()?;
    events.extend(outcome.events);
    Ok(StreamOutcome { events, truncated: outcome.truncated })
}
