//! The five training losses and their analytic gradients.
//!
//! Detection uses binary cross-entropy averaged separately over positive
//! and negative cells, regression uses mean absolute error over positive
//! cells, and the classifier uses mean cross-entropy over all segments.
//! Don't-care cells never contribute to any term. BCE is evaluated in
//! logit form (softplus), never through `log(sigmoid)`.

use crate::heads::{sigmoid, HeadOutputs, HeadParams};
use crate::labeling::{DetectionLabel, TargetTensors};
use crate::matrix::Mat;

/// Probability floor applied before the classifier log when the predicted
/// mask hides the true class.
pub const CLASSIFIER_PROB_FLOOR: f64 = 1e-12;

/// Per-term loss values; `total` is their plain (unweighted) sum.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub positive: f64,
    pub negative: f64,
    pub offset: f64,
    pub length: f64,
    pub classifier: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn terms(&self) -> [(&'static str, f64); 5] {
        [
            ("L_pos", self.positive),
            ("L_neg", self.negative),
            ("L_o", self.offset),
            ("L_l", self.length),
            ("L_s", self.classifier),
        ]
    }

    /// Name of the first non-finite term, if any.
    pub fn non_finite_term(&self) -> Option<&'static str> {
        self.terms().iter().find(|(_, v)| !v.is_finite()).map(|(n, _)| *n)
    }
}

#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Mean BCE over positive cells; zero when the batch has no positives.
pub fn loss_pos(labels: &Mat<DetectionLabel>, detection_logits: &Mat<f64>) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for t in 0..labels.rows() {
        for (w, &lab) in labels.row(t).iter().enumerate() {
            if lab == DetectionLabel::Positive {
                sum += softplus(-detection_logits.get(t, w));
                count += 1;
            }
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Mean BCE over negative cells; zero when the batch has no negatives.
pub fn loss_neg(labels: &Mat<DetectionLabel>, detection_logits: &Mat<f64>) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for t in 0..labels.rows() {
        for (w, &lab) in labels.row(t).iter().enumerate() {
            if lab == DetectionLabel::Negative {
                sum += softplus(detection_logits.get(t, w));
                count += 1;
            }
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

fn l1_over_positives(targets: &Mat<f64>, predictions: &Mat<f64>, labels: &Mat<DetectionLabel>) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for t in 0..labels.rows() {
        for (w, &lab) in labels.row(t).iter().enumerate() {
            if lab == DetectionLabel::Positive {
                sum += (targets.get(t, w) - predictions.get(t, w)).abs();
                count += 1;
            }
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Mean absolute offset error over positive cells.
pub fn loss_offset(offsets: &Mat<f64>, predicted: &Mat<f64>, labels: &Mat<DetectionLabel>) -> f64 {
    l1_over_positives(offsets, predicted, labels)
}

/// Mean absolute length error over positive cells.
pub fn loss_length(lengths: &Mat<f64>, predicted: &Mat<f64>, labels: &Mat<DetectionLabel>) -> f64 {
    l1_over_positives(lengths, predicted, labels)
}

/// Mean cross-entropy of the true class under the masked softmax.
///
/// Probabilities are floored at [`CLASSIFIER_PROB_FLOOR`] so a masked-out
/// true class yields a large but finite penalty.
pub fn loss_classifier(classes: &[usize], classifier: &Mat<f64>) -> f64 {
    let n = classes.len();
    if n == 0 {
        return 0.0;
    }
    let mut sum = 0.0;
    for (t, &s) in classes.iter().enumerate() {
        sum += -classifier.get(t, s).max(CLASSIFIER_PROB_FLOOR).ln();
    }
    sum / n as f64
}

/// All five terms and their sum.
pub fn total_loss(targets: &TargetTensors, outputs: &HeadOutputs) -> LossBreakdown {
    let positive = loss_pos(&targets.labels, &outputs.detection_logits);
    let negative = loss_neg(&targets.labels, &outputs.detection_logits);
    let offset = loss_offset(&targets.offsets, &outputs.offsets, &targets.labels);
    let length = loss_length(&targets.lengths, &outputs.lengths, &targets.labels);
    let classifier = loss_classifier(&targets.classes, &outputs.classifier);
    LossBreakdown {
        positive,
        negative,
        offset,
        length,
        classifier,
        total: positive + negative + offset + length + classifier,
    }
}

/// Gradients of [`total_loss`] with respect to the head parameters and the
/// feature matrix.
pub struct HeadBackward {
    pub grads: HeadParams,
    pub d_features: Mat<f64>,
    pub loss: LossBreakdown,
}

/// Backward pass through the heads.
///
/// The classifier mask is treated as a constant: no gradient flows through
/// the detection-threshold gating. Rows whose true-class probability sits
/// at the floor (masked out or fully underflowed) contribute a constant
/// loss and therefore no gradient.
pub fn head_backward(
    z: &Mat<f64>,
    params: &HeadParams,
    outputs: &HeadOutputs,
    targets: &TargetTensors,
) -> HeadBackward {
    let n = z.rows();
    let d = z.cols();
    let c = params.words();
    let loss = total_loss(targets, outputs);

    let mut n_pos = 0usize;
    let mut n_neg = 0usize;
    for t in 0..n {
        for &lab in targets.labels.row(t) {
            match lab {
                DetectionLabel::Positive => n_pos += 1,
                DetectionLabel::Negative => n_neg += 1,
                DetectionLabel::DontCare => {}
            }
        }
    }

    // Gradients w.r.t. pre-activation logits of each head.
    let mut g_det = Mat::zeros(n, c);
    let mut g_off = Mat::zeros(n, c);
    let mut g_len = Mat::zeros(n, c);
    let mut g_cls = Mat::zeros(n, c + 1);

    for t in 0..n {
        for w in 0..c {
            match targets.labels.get(t, w) {
                DetectionLabel::Positive => {
                    let a = outputs.detection_logits.get(t, w);
                    g_det.set(t, w, (sigmoid(a) - 1.0) / n_pos as f64);
                    let diff_o = outputs.offsets.get(t, w) - targets.offsets.get(t, w);
                    g_off.set(t, w, diff_o.signum_or_zero() / n_pos as f64);
                    let diff_l = outputs.lengths.get(t, w) - targets.lengths.get(t, w);
                    g_len.set(t, w, diff_l.signum_or_zero() / n_pos as f64);
                }
                DetectionLabel::Negative => {
                    let a = outputs.detection_logits.get(t, w);
                    g_det.set(t, w, sigmoid(a) / n_neg as f64);
                }
                DetectionLabel::DontCare => {}
            }
        }

        let s_true = targets.classes[t];
        let p_true = outputs.classifier.get(t, s_true);
        if p_true > CLASSIFIER_PROB_FLOOR {
            for j in 0..=c {
                if outputs.mask.get(t, j) {
                    let p = outputs.classifier.get(t, j);
                    let delta = if j == s_true { 1.0 } else { 0.0 };
                    g_cls.set(t, j, (p - delta) / n as f64);
                }
            }
        }
    }

    let mut grads = HeadParams::zeros(c, d);
    let mut d_features = Mat::zeros(n, d);

    accumulate_head(
        z,
        &g_det,
        &params.detection_w,
        &mut grads.detection_w,
        &mut grads.detection_b,
        &mut d_features,
    );
    accumulate_head(
        z,
        &g_off,
        &params.offset_w,
        &mut grads.offset_w,
        &mut grads.offset_b,
        &mut d_features,
    );
    accumulate_head(
        z,
        &g_len,
        &params.length_w,
        &mut grads.length_w,
        &mut grads.length_b,
        &mut d_features,
    );
    accumulate_head(
        z,
        &g_cls,
        &params.classifier_w,
        &mut grads.classifier_w,
        &mut grads.classifier_b,
        &mut d_features,
    );

    HeadBackward { grads, d_features, loss }
}

/// `dW[k] += g[t][k] * z[t]`, `db[k] += g[t][k]`, `dz[t] += g[t][k] * W[k]`.
fn accumulate_head(
    z: &Mat<f64>,
    g: &Mat<f64>,
    w: &Mat<f64>,
    dw: &mut Mat<f64>,
    db: &mut [f64],
    dz: &mut Mat<f64>,
) {
    for t in 0..z.rows() {
        let zt = z.row(t);
        let dzt = dz.row_mut(t);
        for (k, &gv) in g.row(t).iter().enumerate() {
            if gv == 0.0 {
                continue;
            }
            db[k] += gv;
            let dwk = dw.row_mut(k);
            let wk = w.row(k);
            for j in 0..zt.len() {
                dwk[j] += gv * zt[j];
                dzt[j] += gv * wk[j];
            }
        }
    }
}

trait SignumOrZero {
    fn signum_or_zero(self) -> f64;
}

impl SignumOrZero for f64 {
    fn signum_or_zero(self) -> f64 {
        if self > 0.0 {
            1.0
        } else if self < 0.0 {
            -1.0
        } else {
            0.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heads::forward_heads;
    use crate::labeling::DetectionLabel::{DontCare, Negative, Positive};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const LN2: f64 = std::f64::consts::LN_2;

    fn labels_1x1(l: DetectionLabel) -> Mat<DetectionLabel> {
        Mat::filled(1, 1, l)
    }

    #[test]
    fn bce_fixtures() {
        // single positive predicted at 0.5 (logit 0) -> ln 2
        let labels = labels_1x1(Positive);
        let logits = Mat::zeros(1, 1);
        assert!((loss_pos(&labels, &logits) - LN2).abs() < 1e-12);

        // saturated positives -> ~0
        let logits = Mat::filled(1, 1, 40.0);
        assert!(loss_pos(&labels, &logits) < 1e-12);

        // two negatives at 0.5 and 0.25: (ln 2 + ln(4/3)) / 2
        let labels = Mat::filled(1, 2, Negative);
        let logit_quarter = (0.25f64 / 0.75).ln();
        let logits = Mat::from_vec(1, 2, vec![0.0, logit_quarter]);
        let expected = (LN2 + (4.0f64 / 3.0).ln()) / 2.0;
        assert!((loss_neg(&labels, &logits) - expected).abs() < 1e-12);
        assert!((expected - 0.490415).abs() < 1e-6);
    }

    #[test]
    fn empty_denominators_give_zero() {
        let labels = Mat::filled(2, 2, DontCare);
        let logits = Mat::filled(2, 2, 3.0);
        assert_eq!(loss_pos(&labels, &logits), 0.0);
        assert_eq!(loss_neg(&labels, &logits), 0.0);
        assert_eq!(loss_offset(&logits, &logits, &labels), 0.0);
    }

    #[test]
    fn l1_fixtures() {
        let labels = labels_1x1(Positive);
        let o = Mat::filled(1, 1, 0.4);
        let o_hat = Mat::filled(1, 1, 0.1);
        assert!((loss_offset(&o, &o_hat, &labels) - 0.3).abs() < 1e-12);

        let labels = Mat::filled(1, 2, Positive);
        let l = Mat::from_vec(1, 2, vec![0.5, 0.5]);
        let l_hat = Mat::from_vec(1, 2, vec![0.6, 0.2]);
        assert!((loss_length(&l, &l_hat, &labels) - 0.2).abs() < 1e-12);

        assert_eq!(loss_offset(&o, &o, &labels_1x1(Positive)), 0.0);
    }

    #[test]
    fn classifier_fixtures() {
        // probability 1 on the true class -> 0
        let probs = Mat::from_vec(1, 2, vec![1.0, 0.0]);
        assert_eq!(loss_classifier(&[0], &probs), 0.0);

        // single segment at 0.5 -> ln 2
        let probs = Mat::from_vec(1, 2, vec![0.5, 0.5]);
        assert!((loss_classifier(&[0], &probs) - LN2).abs() < 1e-12);

        // two segments at 0.5 and 0.25 -> (ln2 + ln4) / 2
        let probs = Mat::from_vec(2, 2, vec![0.5, 0.5, 0.25, 0.75]);
        let expected = (LN2 + 4.0f64.ln()) / 2.0;
        assert!((loss_classifier(&[0, 0], &probs) - expected).abs() < 1e-12);
        assert!((expected - 1.039721).abs() < 1e-6);
    }

    #[test]
    fn masked_out_true_class_is_floored() {
        let mut probs = Mat::zeros(1, 3);
        probs.set(0, 2, 1.0);
        let loss = loss_classifier(&[0], &probs);
        assert!((loss - (-CLASSIFIER_PROB_FLOOR.ln())).abs() < 1e-9);
    }

    fn random_instance(
        rng: &mut ChaCha8Rng,
        n: usize,
        c: usize,
        d: usize,
    ) -> (Mat<f64>, HeadParams, TargetTensors) {
        let z = Mat::from_vec(n, d, (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let params = HeadParams::init(c, d, rng);
        let mut labels = Mat::filled(n, c, Negative);
        let mut offsets = Mat::zeros(n, c);
        let mut lengths = Mat::zeros(n, c);
        let mut classes = vec![c; n];
        for t in 0..n {
            for w in 0..c {
                let roll: f64 = rng.gen();
                if roll < 0.3 {
                    labels.set(t, w, Positive);
                    offsets.set(t, w, rng.gen_range(-2.0..2.0));
                    lengths.set(t, w, rng.gen_range(0.05..1.0));
                    classes[t] = w;
                } else if roll < 0.5 {
                    labels.set(t, w, DontCare);
                }
            }
        }
        (z, params, TargetTensors { labels, offsets, lengths, classes })
    }

    #[test]
    fn total_loss_is_sum_of_terms() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let n = rng.gen_range(1..5);
            let c = rng.gen_range(1..4);
            let d = rng.gen_range(1..9);
            let (z, params, targets) = random_instance(&mut rng, n, c, d);
            let out = forward_heads(&z, &params, None).unwrap();
            let lb = total_loss(&targets, &out);
            let sum = lb.positive + lb.negative + lb.offset + lb.length + lb.classifier;
            assert!((lb.total - sum).abs() <= 1e-12);
        }
    }

    #[test]
    fn dont_care_injection_leaves_bce_terms_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let n = rng.gen_range(1..5);
            let c = rng.gen_range(1..4);
            let (z, params, targets) = random_instance(&mut rng, n, c, 4);
            let out = forward_heads(&z, &params, None).unwrap();
            let before_pos = loss_pos(&targets.labels, &out.detection_logits);
            let before_neg = loss_neg(&targets.labels, &out.detection_logits);

            // widen the matrix with a don't-care column
            let mut wide = Mat::filled(n, c + 1, DontCare);
            for t in 0..n {
                for w in 0..c {
                    wide.set(t, w, targets.labels.get(t, w));
                }
            }
            let mut wide_logits = Mat::zeros(n, c + 1);
            for t in 0..n {
                for w in 0..c {
                    wide_logits.set(t, w, out.detection_logits.get(t, w));
                }
                wide_logits.set(t, c, rng.gen_range(-5.0..5.0));
            }
            assert_eq!(loss_pos(&wide, &wide_logits), before_pos);
            assert_eq!(loss_neg(&wide, &wide_logits), before_neg);
            let _ = z;
        }
    }

    /// Central-difference check of the head gradients with the gate frozen.
    #[test]
    fn head_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (z, params, targets) = random_instance(&mut rng, 3, 2, 4);
        let gate = {
            let out = forward_heads(&z, &params, None).unwrap();
            let mut g = Mat::filled(3, 2, false);
            for t in 0..3 {
                for w in 0..2 {
                    g.set(t, w, out.mask.get(t, w));
                }
            }
            g
        };

        let out = forward_heads(&z, &params, Some(&gate)).unwrap();
        let back = head_backward(&z, &params, &out, &targets);

        let eval = |p: &HeadParams| -> f64 {
            let out = forward_heads(&z, p, Some(&gate)).unwrap();
            total_loss(&targets, &out).total
        };

        let h = 1e-6;
        let mut worst: f64 = 0.0;
        // check a sample of coordinates from every parameter tensor
        let mut p = params.clone();
        for idx in 0..p.detection_w.data().len() {
            let orig = p.detection_w.data()[idx];
            p.detection_w.data_mut()[idx] = orig + h;
            let up = eval(&p);
            p.detection_w.data_mut()[idx] = orig - h;
            let down = eval(&p);
            p.detection_w.data_mut()[idx] = orig;
            let numeric = (up - down) / (2.0 * h);
            let analytic = back.grads.detection_w.data()[idx];
            worst = worst.max((numeric - analytic).abs() / numeric.abs().max(1.0));
        }
        for idx in 0..p.classifier_w.data().len() {
            let orig = p.classifier_w.data()[idx];
            p.classifier_w.data_mut()[idx] = orig + h;
            let up = eval(&p);
            p.classifier_w.data_mut()[idx] = orig - h;
            let down = eval(&p);
            p.classifier_w.data_mut()[idx] = orig;
            let numeric = (up - down) / (2.0 * h);
            let analytic = back.grads.classifier_w.data()[idx];
            worst = worst.max((numeric - analytic).abs() / numeric.abs().max(1.0));
        }
        assert!(worst < 1e-7, "worst relative error {worst}");
    }
}
