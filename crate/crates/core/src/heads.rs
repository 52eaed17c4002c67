//! Linear prediction heads over the backbone features.
//!
//! Four heads map each d-dimensional feature row to per-word predictions:
//! detection probabilities (sigmoid), offset and length regression (affine),
//! and a (c+1)-way classifier whose softmax is restricted to the word
//! classes gated on by the detection head plus the always-available
//! negative class.

use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::Mat;

/// Feature matrix `z`: one row per segment.
pub type FeatureMatrix = Mat<f64>;

/// Weights and biases of the four heads.
///
/// Weight matrices store one row per output class, so a head applies as
/// `logit[t][k] = bias[k] + sum_j w[k][j] * z[t][j]`.
#[derive(Debug, Clone)]
pub struct HeadParams {
    pub detection_w: Mat<f64>,
    pub detection_b: Vec<f64>,
    pub offset_w: Mat<f64>,
    pub offset_b: Vec<f64>,
    pub length_w: Mat<f64>,
    pub length_b: Vec<f64>,
    pub classifier_w: Mat<f64>,
    pub classifier_b: Vec<f64>,
}

impl HeadParams {
    pub fn zeros(words: usize, feature_dim: usize) -> Self {
        HeadParams {
            detection_w: Mat::zeros(words, feature_dim),
            detection_b: vec![0.0; words],
            offset_w: Mat::zeros(words, feature_dim),
            offset_b: vec![0.0; words],
            length_w: Mat::zeros(words, feature_dim),
            length_b: vec![0.0; words],
            classifier_w: Mat::zeros(words + 1, feature_dim),
            classifier_b: vec![0.0; words + 1],
        }
    }

    pub fn init<R: Rng>(words: usize, feature_dim: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(words, feature_dim);
        let scale = (1.0 / feature_dim as f64).sqrt();
        for m in [&mut p.detection_w, &mut p.offset_w, &mut p.length_w, &mut p.classifier_w] {
            for v in m.data_mut() {
                *v = rng.gen_range(-scale..scale);
            }
        }
        p
    }

    pub fn words(&self) -> usize {
        self.detection_w.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.detection_w.cols()
    }

    fn check_shapes(&self, z: &FeatureMatrix) -> Result<()> {
        let d = self.feature_dim();
        let c = self.words();
        let consistent = z.cols() == d
            && self.detection_b.len() == c
            && self.offset_w.rows() == c
            && self.offset_w.cols() == d
            && self.offset_b.len() == c
            && self.length_w.rows() == c
            && self.length_w.cols() == d
            && self.length_b.len() == c
            && self.classifier_w.rows() == c + 1
            && self.classifier_w.cols() == d
            && self.classifier_b.len() == c + 1;
        if consistent {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                expected: format!("features of dim {d}, heads for {c} words"),
                actual: format!("feature dim {}", z.cols()),
            })
        }
    }
}

/// All head outputs for one utterance (or one streamed segment).
///
/// Pre-activation logits are kept alongside the activations; losses and
/// gradients are computed from logits for numerical stability.
#[derive(Debug, Clone)]
pub struct HeadOutputs {
    pub detection_logits: Mat<f64>,
    /// Sigmoid detection probabilities, strictly inside (0, 1).
    pub detection: Mat<f64>,
    pub offsets: Mat<f64>,
    pub lengths: Mat<f64>,
    pub classifier_logits: Mat<f64>,
    /// Softmax mask actually applied: `n x (c+1)`, negative class always on.
    pub mask: Mat<bool>,
    /// Masked softmax probabilities; masked-out entries are exactly zero.
    pub classifier: Mat<f64>,
}

impl HeadOutputs {
    pub fn segments(&self) -> usize {
        self.detection.rows()
    }

    pub fn words(&self) -> usize {
        self.detection.cols()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Softmax over the masked-in entries; masked-out probabilities are exactly
/// zero and their logits cannot influence the result. The caller must keep
/// at least one entry unmasked (the negative class, by construction).
pub fn masked_softmax(logits: &[f64], mask: &[bool]) -> Vec<f64> {
    debug_assert_eq!(logits.len(), mask.len());
    debug_assert!(mask.iter().any(|&m| m));
    let mut max = f64::NEG_INFINITY;
    for (l, &m) in logits.iter().zip(mask) {
        if m && *l > max {
            max = *l;
        }
    }
    let mut out = vec![0.0; logits.len()];
    let mut sum = 0.0;
    for (i, (l, &m)) in logits.iter().zip(mask).enumerate() {
        if m {
            let e = (l - max).exp();
            out[i] = e;
            sum += e;
        }
    }
    for v in &mut out {
        *v /= sum;
    }
    out
}

/// Detection-head threshold used to gate words into the classifier softmax.
pub const MASK_ON_THRESHOLD: f64 = 0.5;

/// Run all four heads over the feature matrix.
///
/// The classifier mask is derived from the detection probabilities
/// (`detection >= 0.5`) unless `detection_gate` supplies an explicit
/// `n x c` gate for the word classes. The negative class is always on.
pub fn forward_heads(
    z: &FeatureMatrix,
    params: &HeadParams,
    detection_gate: Option<&Mat<bool>>,
) -> Result<HeadOutputs> {
    params.check_shapes(z)?;
    let n = z.rows();
    let c = params.words();
    if let Some(gate) = detection_gate {
        if gate.rows() != n || gate.cols() != c {
            return Err(Error::ShapeMismatch {
                expected: format!("{n}x{c} detection gate"),
                actual: format!("{}x{}", gate.rows(), gate.cols()),
            });
        }
    }

    let detection_logits = z.affine(&params.detection_w, &params.detection_b);
    let mut detection = detection_logits.clone();
    for v in detection.data_mut() {
        *v = sigmoid(*v);
    }
    let offsets = z.affine(&params.offset_w, &params.offset_b);
    let lengths = z.affine(&params.length_w, &params.length_b);
    let classifier_logits = z.affine(&params.classifier_w, &params.classifier_b);

    let mut mask = Mat::filled(n, c + 1, true);
    for t in 0..n {
        for w in 0..c {
            let on = match detection_gate {
                Some(gate) => gate.get(t, w),
                None => detection.get(t, w) >= MASK_ON_THRESHOLD,
            };
            mask.set(t, w, on);
        }
        // column c (negative class) stays true
    }

    let mut classifier = Mat::zeros(n, c + 1);
    for t in 0..n {
        let probs = masked_softmax(classifier_logits.row(t), mask.row(t));
        classifier.row_mut(t).copy_from_slice(&probs);
    }

    Ok(HeadOutputs {
        detection_logits,
        detection,
        offsets,
        lengths,
        classifier_logits,
        mask,
        classifier,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_everything_gives_symmetric_outputs() {
        let c = 3;
        let d = 4;
        let z = Mat::zeros(2, d);
        let params = HeadParams::zeros(c, d);
        let out = forward_heads(&z, &params, None).unwrap();
        for t in 0..2 {
            for w in 0..c {
                assert_eq!(out.detection.get(t, w), 0.5);
                assert!(out.mask.get(t, w));
            }
            assert!(out.mask.get(t, c));
            for j in 0..=c {
                assert!((out.classifier.get(t, j) - 1.0 / (c + 1) as f64).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn masked_softmax_examples() {
        // only the negative class unmasked
        let p = masked_softmax(&[3.0, -1.0, 0.2], &[false, false, true]);
        assert_eq!(p, vec![0.0, 0.0, 1.0]);

        // all unmasked, equal logits, c = 4
        let p = masked_softmax(&[1.0; 5], &[true; 5]);
        for v in p {
            assert!((v - 0.2).abs() < 1e-15);
        }

        // two-way softmax with logits 2 and 0
        let p = masked_softmax(&[7.0, 2.0, 0.0], &[false, true, true]);
        assert_eq!(p[0], 0.0);
        assert!((p[1] - 0.8808).abs() < 1e-4);
        assert!((p[2] - 0.1192).abs() < 1e-4);
    }

    #[test]
    fn softmax_row_from_hand_arithmetic() {
        // n=1, c=2, full mask, logits (1, 2, 0)
        let z = Mat::from_vec(1, 1, vec![1.0]);
        let mut params = HeadParams::zeros(2, 1);
        params.classifier_w = Mat::from_vec(3, 1, vec![1.0, 2.0, 0.0]);
        let gate = Mat::filled(1, 2, true);
        let out = forward_heads(&z, &params, Some(&gate)).unwrap();
        let row = out.classifier.row(0);
        assert!((row[0] - 0.2447).abs() < 1e-4);
        assert!((row[1] - 0.6652).abs() < 1e-4);
        assert!((row[2] - 0.0900).abs() < 1e-4);
    }

    #[test]
    fn gate_plus_negative_with_equal_logits_splits_half() {
        let z = Mat::zeros(1, 2);
        let params = HeadParams::zeros(3, 2);
        let mut gate = Mat::filled(1, 3, false);
        gate.set(0, 1, true);
        let out = forward_heads(&z, &params, Some(&gate)).unwrap();
        let row = out.classifier.row(0);
        assert_eq!(row[0], 0.0);
        assert_eq!(row[2], 0.0);
        assert!((row[1] - 0.5).abs() < 1e-15);
        assert!((row[3] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_error() {
        let z = Mat::zeros(2, 5);
        let params = HeadParams::zeros(3, 4);
        assert!(forward_heads(&z, &params, None).is_err());
    }

    proptest! {
        /// Rows sum to one; masked-out entries are exactly zero and
        /// perturbing a masked-out logit changes nothing.
        #[test]
        fn masked_softmax_properties(
            logits in proptest::collection::vec(-30.0f64..30.0, 1..8),
            mask_bits in proptest::collection::vec(any::<bool>(), 1..8),
            bump in -100.0f64..100.0,
        ) {
            let n = logits.len().min(mask_bits.len());
            let mut logits = logits[..n].to_vec();
            let mut mask = mask_bits[..n].to_vec();
            mask[n - 1] = true; // negative class always on
            let p = masked_softmax(&logits, &mask);
            let sum: f64 = p.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-6);
            for (v, &m) in p.iter().zip(&mask) {
                if m {
                    prop_assert!(*v >= 0.0);
                } else {
                    prop_assert_eq!(*v, 0.0);
                }
            }
            if let Some(off) = mask.iter().position(|&m| !m) {
                logits[off] += bump;
                let q = masked_softmax(&logits, &mask);
                prop_assert_eq!(p, q);
            }
        }
    }
}
