//! Word detection and localization in 1-D streaming signals.
//!
//! The pipeline mirrors single-stage visual object detection: a small
//! convolutional backbone turns a raw signal into one feature row per
//! sliding window, four linear heads predict per-word presence, class,
//! offset and length for every window, and decoded proposals are cleaned
//! up with per-class non-maximum suppression. The crate also ships a
//! synthetic corpus generator with exact alignments, a deterministic
//! trainer, streaming inference, and the detection / keyword-spotting
//! evaluation stack (precision, recall, F1, actual accuracy, average IoU,
//! TWV/MTWV).

pub mod backbone;
pub mod checkpoint;
pub mod corpus;
pub mod error;
pub mod geometry;
pub mod heads;
pub mod infer;
pub mod labeling;
pub mod losses;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod records;
pub mod rng;
pub mod stream;
pub mod train;

pub use error::{Error, Result};
pub use geometry::{interval_iou, overlap, FrameGeometry, Interval};
pub use labeling::{
    build_targets, decode_offset_length, detection_label, encode_offset_length, iog,
    DetectionLabel, Event, LabelThresholds, Lexicon, TargetTensors,
};
pub use matrix::Mat;
pub use model::Model;
