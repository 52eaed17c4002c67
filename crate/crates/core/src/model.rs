//! Full detector: backbone plus heads, with a flat parameter view used by
//! the optimizer, the checkpoint format and the finite-difference harness.

use rand::Rng;

use crate::backbone::{BackboneSpec, ConvBackbone};
use crate::error::Result;
use crate::geometry::FrameGeometry;
use crate::heads::{forward_heads, HeadOutputs, HeadParams};
use crate::labeling::{Lexicon, TargetTensors};
use crate::losses::{head_backward, total_loss, LossBreakdown};
use crate::matrix::Mat;

#[derive(Debug, Clone)]
pub struct Model {
    pub backbone: ConvBackbone,
    pub heads: HeadParams,
    pub lexicon: Lexicon,
    pub sample_rate: u32,
}

impl Model {
    pub fn init<R: Rng>(
        spec: BackboneSpec,
        lexicon: Lexicon,
        sample_rate: u32,
        rng: &mut R,
    ) -> Result<Self> {
        let backbone = ConvBackbone::init(spec, rng)?;
        let heads = HeadParams::init(lexicon.len(), backbone.spec().feature_dim, rng);
        Ok(Model { backbone, heads, lexicon, sample_rate })
    }

    pub fn geometry(&self) -> FrameGeometry {
        self.backbone.geometry()
    }

    pub fn words(&self) -> usize {
        self.lexicon.len()
    }

    /// Head outputs for a whole signal.
    pub fn forward(&self, signal: &[f64]) -> Result<HeadOutputs> {
        let features = self.backbone.forward(signal)?;
        forward_heads(&features, &self.heads, None)
    }

    /// Loss and flat gradient for one utterance.
    ///
    /// With `teacher_force` set, segments whose true class is hidden by the
    /// predicted mask get that class forced into the softmax mask.
    pub fn loss_and_grad(
        &self,
        signal: &[f64],
        targets: &TargetTensors,
        teacher_force: bool,
    ) -> Result<(LossBreakdown, Vec<f64>)> {
        let (features, cache) = self.backbone.forward_cached(signal)?;
        let mut outputs = forward_heads(&features, &self.heads, None)?;
        if teacher_force {
            let c = self.words();
            let mut gate = Mat::filled(features.rows(), c, false);
            let mut changed = false;
            for t in 0..features.rows() {
                for w in 0..c {
                    let mut on = outputs.mask.get(t, w);
                    if targets.classes[t] == w && !on {
                        on = true;
                        changed = true;
                    }
                    gate.set(t, w, on);
                }
            }
            if changed {
                outputs = forward_heads(&features, &self.heads, Some(&gate))?;
            }
        }
        let back = head_backward(&features, &self.heads, &outputs, targets);
        let backbone_grads = self.backbone.backward(&cache, &back.d_features);

        let mut grad = Vec::with_capacity(self.parameter_count());
        flatten_backbone(&backbone_grads, &mut grad);
        flatten_heads(&back.grads, &mut grad);
        Ok((back.loss, grad))
    }

    /// Loss only, with an explicit classifier gate (used by the
    /// finite-difference harness so the mask stays constant).
    pub fn loss_with_gate(
        &self,
        signal: &[f64],
        targets: &TargetTensors,
        gate: &Mat<bool>,
    ) -> Result<f64> {
        let features = self.backbone.forward(signal)?;
        let outputs = forward_heads(&features, &self.heads, Some(gate))?;
        Ok(total_loss(targets, &outputs).total)
    }

    pub fn parameter_count(&self) -> usize {
        self.backbone.parameter_count()
            + 3 * (self.words() * (self.backbone.spec().feature_dim + 1))
            + (self.words() + 1) * (self.backbone.spec().feature_dim + 1)
    }

    /// All parameters in declared block order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        flatten_backbone(&self.backbone, &mut out);
        flatten_heads(&self.heads, &mut out);
        out
    }

    pub fn unflatten(&mut self, data: &[f64]) {
        assert_eq!(data.len(), self.parameter_count(), "parameter vector length");
        let mut cursor = 0usize;
        let mut take = |len: usize| {
            let s = &data[cursor..cursor + len];
            cursor += len;
            s
        };
        for layer in &mut self.backbone.layers {
            let w = take(layer.weights.len());
            layer.weights.copy_from_slice(w);
            let b = take(layer.bias.len());
            layer.bias.copy_from_slice(b);
        }
        let w = take(self.backbone.proj_w.data().len());
        self.backbone.proj_w.data_mut().copy_from_slice(w);
        let b = take(self.backbone.proj_b.len());
        self.backbone.proj_b.copy_from_slice(b);

        for (wm, bm) in [
            (&mut self.heads.detection_w, &mut self.heads.detection_b),
            (&mut self.heads.offset_w, &mut self.heads.offset_b),
            (&mut self.heads.length_w, &mut self.heads.length_b),
            (&mut self.heads.classifier_w, &mut self.heads.classifier_b),
        ] {
            let w = take(wm.data().len());
            wm.data_mut().copy_from_slice(w);
            let b = take(bm.len());
            bm.copy_from_slice(b);
        }
        assert_eq!(cursor, data.len());
    }

    /// Named parameter blocks in declared (flatten) order.
    pub fn parameter_blocks(&self) -> Vec<(String, usize)> {
        let mut blocks = Vec::new();
        for (i, layer) in self.backbone.layers.iter().enumerate() {
            blocks.push((format!("conv{i}.weight"), layer.weights.len()));
            blocks.push((format!("conv{i}.bias"), layer.bias.len()));
        }
        blocks.push(("proj.weight".into(), self.backbone.proj_w.data().len()));
        blocks.push(("proj.bias".into(), self.backbone.proj_b.len()));
        for (name, w, b) in [
            ("detection", &self.heads.detection_w, &self.heads.detection_b),
            ("offset", &self.heads.offset_w, &self.heads.offset_b),
            ("length", &self.heads.length_w, &self.heads.length_b),
            ("classifier", &self.heads.classifier_w, &self.heads.classifier_b),
        ] {
            blocks.push((format!("head.{name}.weight"), w.data().len()));
            blocks.push((format!("head.{name}.bias"), b.len()));
        }
        blocks
    }
}

fn flatten_backbone(net: &ConvBackbone, out: &mut Vec<f64>) {
    for layer in &net.layers {
        out.extend_from_slice(&layer.weights);
        out.extend_from_slice(&layer.bias);
    }
    out.extend_from_slice(net.proj_w.data());
    out.extend_from_slice(&net.proj_b);
}

fn flatten_heads(heads: &HeadParams, out: &mut Vec<f64>) {
    out.extend_from_slice(heads.detection_w.data());
    out.extend_from_slice(&heads.detection_b);
    out.extend_from_slice(heads.offset_w.data());
    out.extend_from_slice(&heads.offset_b);
    out.extend_from_slice(heads.length_w.data());
    out.extend_from_slice(&heads.length_b);
    out.extend_from_slice(heads.classifier_w.data());
    out.extend_from_slice(&heads.classifier_b);
}

/// Compare analytic gradients of the total loss against central finite
/// differences; returns the worst scaled relative error.
///
/// The classifier gate is frozen at the unperturbed parameters, matching
/// the training-time convention that no gradient flows through the mask.
/// `sample` limits the check to a pseudo-random subset of coordinates.
pub fn grad_check(
    model: &Model,
    signal: &[f64],
    targets: &TargetTensors,
    step: f64,
    sample: Option<(usize, u64)>,
) -> Result<f64> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    let features = model.backbone.forward(signal)?;
    let base_outputs = forward_heads(&features, &model.heads, None)?;
    let c = model.words();
    let mut gate = Mat::filled(features.rows(), c, false);
    for t in 0..features.rows() {
        for w in 0..c {
            gate.set(t, w, base_outputs.mask.get(t, w));
        }
    }

    let (_, analytic) = model.loss_and_grad(signal, targets, false)?;
    let params = model.flatten();
    let mut indices: Vec<usize> = (0..params.len()).collect();
    if let Some((count, seed)) = sample {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        indices.shuffle(&mut rng);
        indices.truncate(count);
    }

    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    let mut perturbed = params.clone();
    for &i in &indices {
        let orig = params[i];
        perturbed[i] = orig + step;
        probe.unflatten(&perturbed);
        let up = probe.loss_with_gate(signal, targets, &gate)?;
        perturbed[i] = orig - step;
        probe.unflatten(&perturbed);
        let down = probe.loss_with_gate(signal, targets, &gate)?;
        perturbed[i] = orig;

        let numeric = (up - down) / (2.0 * step);
        let err = (numeric - analytic[i]).abs() / numeric.abs().max(analytic[i].abs()).max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}
