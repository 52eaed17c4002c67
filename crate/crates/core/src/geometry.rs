//! Segment/sample geometry: how feature rows map onto sample intervals.
//!
//! A model with receptive field `R` and stride `S` sees the half-open
//! window `[t*S, t*S + R)` at segment index `t`. Everything downstream
//! (labeling, decoding, streaming) is phrased in terms of this mapping.

use crate::error::{Error, Result};

/// Receptive field and stride of a feature extractor, in samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameGeometry {
    receptive_field: usize,
    stride: usize,
}

impl FrameGeometry {
    pub fn new(receptive_field: usize, stride: usize) -> Result<Self> {
        if stride < 1 || receptive_field < stride {
            return Err(Error::InvalidGeometry { receptive_field, stride });
        }
        Ok(FrameGeometry { receptive_field, stride })
    }

    pub fn receptive_field(&self) -> usize {
        self.receptive_field
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    /// Number of segments in an utterance of `length` samples:
    /// `floor((length - R) / S) + 1`.
    pub fn segment_count(&self, length: usize) -> Result<usize> {
        if length < self.receptive_field {
            return Err(Error::UtteranceTooShort {
                length,
                receptive_field: self.receptive_field,
            });
        }
        Ok((length - self.receptive_field) / self.stride + 1)
    }

    /// Sample window covered by segment `t`: `[t*S, t*S + R)`.
    pub fn segment_interval(&self, t: usize) -> Interval {
        let begin = (t * self.stride) as i64;
        Interval { begin, end: begin + self.receptive_field as i64 }
    }

    /// Center of segment `t` in stride units: `(2tS + R) / (2S)`.
    pub fn segment_center(&self, t: usize) -> f64 {
        (2.0 * (t * self.stride) as f64 + self.receptive_field as f64)
            / (2.0 * self.stride as f64)
    }
}

/// Half-open interval of samples `[begin, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interval {
    begin: i64,
    end: i64,
}

impl Interval {
    pub fn new(begin: i64, end: i64) -> Result<Self> {
        if begin >= end {
            return Err(Error::InvalidInterval { begin, end });
        }
        Ok(Interval { begin, end })
    }

    pub fn begin(&self) -> i64 {
        self.begin
    }

    pub fn end(&self) -> i64 {
        self.end
    }

    pub fn len(&self) -> i64 {
        self.end - self.begin
    }

    pub fn is_empty(&self) -> bool {
        false // constructor rejects begin >= end
    }
}

/// Length of the intersection of two intervals, zero when disjoint.
pub fn overlap(a: Interval, b: Interval) -> i64 {
    (a.end.min(b.end) - a.begin.max(b.begin)).max(0)
}

/// Intersection-over-union of two real-valued intervals.
///
/// Degenerate (empty) intervals produce an IoU of zero.
pub fn interval_iou(a_begin: f64, a_end: f64, b_begin: f64, b_end: f64) -> f64 {
    let inter = (a_end.min(b_end) - a_begin.max(b_begin)).max(0.0);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = (a_end - a_begin) + (b_end - b_begin) - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}
