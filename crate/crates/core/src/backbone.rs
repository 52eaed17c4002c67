//! Reference convolutional feature extractor.
//!
//! A stack of valid (unpadded) 1-D convolutions followed by a per-frame
//! linear projection. The composition of kernel sizes, strides and
//! dilations determines the receptive field and stride, so every feature
//! row depends on exactly one sample window — the property that makes
//! streaming inference equal to whole-file inference.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::FrameGeometry;
use crate::matrix::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
}

/// One valid 1-D convolution layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvLayerSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub dilation: usize,
    pub activation: Activation,
}

impl ConvLayerSpec {
    /// Kernel extent in input samples: `dilation * (kernel - 1) + 1`.
    pub fn effective_kernel(&self) -> usize {
        self.dilation * (self.kernel - 1) + 1
    }

    pub fn weight_count(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel
    }
}

/// Architecture of the feature extractor: conv stack plus final projection
/// to `feature_dim` values per frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneSpec {
    pub layers: Vec<ConvLayerSpec>,
    pub feature_dim: usize,
}

impl BackboneSpec {
    /// Default detector architecture used by the synthetic pipeline:
    /// four dilated conv layers (receptive field 425, stride 16) and a
    /// 32-dimensional feature projection.
    pub fn reference() -> Self {
        let mk = |ic, oc, k, s, d| ConvLayerSpec {
            in_channels: ic,
            out_channels: oc,
            kernel: k,
            stride: s,
            dilation: d,
            activation: Activation::Relu,
        };
        BackboneSpec {
            layers: vec![
                mk(1, 16, 9, 4, 1),
                mk(16, 32, 5, 2, 2),
                mk(32, 32, 5, 2, 4),
                mk(32, 64, 3, 1, 8),
            ],
            feature_dim: 32,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidConfig("backbone needs at least one layer".into()));
        }
        if self.feature_dim == 0 {
            return Err(Error::InvalidConfig("feature_dim must be positive".into()));
        }
        let mut channels = 1usize;
        for (i, l) in self.layers.iter().enumerate() {
            if l.in_channels != channels {
                return Err(Error::InvalidConfig(format!(
                    "layer {i} expects {} input channels, previous layer provides {channels}",
                    l.in_channels
                )));
            }
            if l.out_channels == 0 || l.kernel == 0 || l.stride == 0 || l.dilation == 0 {
                return Err(Error::InvalidConfig(format!(
                    "layer {i} has a zero dimension: {l:?}"
                )));
            }
            channels = l.out_channels;
        }
        Ok(())
    }

    pub fn output_channels(&self) -> usize {
        self.layers.last().map(|l| l.out_channels).unwrap_or(1)
    }

    /// Receptive field and stride of the composed stack.
    ///
    /// Per layer the receptive field grows by `(k_eff - 1) * stride_so_far`
    /// and the stride multiplies by the layer stride.
    pub fn derived_geometry(&self) -> Result<FrameGeometry> {
        let mut receptive = 1usize;
        let mut stride = 1usize;
        for l in &self.layers {
            receptive += (l.effective_kernel() - 1) * stride;
            stride *= l.stride;
        }
        FrameGeometry::new(receptive, stride)
    }

    pub fn parameter_count(&self) -> usize {
        let conv: usize = self
            .layers
            .iter()
            .map(|l| l.weight_count() + l.out_channels)
            .sum();
        conv + self.feature_dim * self.output_channels() + self.feature_dim
    }
}

/// Weights of one conv layer, laid out `[out_ch][in_ch][kernel]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Backbone parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBackbone {
    spec: BackboneSpec,
    pub layers: Vec<LayerParams>,
    /// Projection from output channels to features, `[feature][channel]`.
    pub proj_w: Mat<f64>,
    pub proj_b: Vec<f64>,
}

/// Cached intermediate activations, needed for the backward pass.
pub struct BackboneCache {
    /// `acts[0]` is the input signal (1 x T); `acts[i]` is layer i's output.
    acts: Vec<Mat<f64>>,
}

impl ConvBackbone {
    pub fn zeros(spec: BackboneSpec) -> Result<Self> {
        spec.validate()?;
        let layers = spec
            .layers
            .iter()
            .map(|l| LayerParams {
                weights: vec![0.0; l.weight_count()],
                bias: vec![0.0; l.out_channels],
            })
            .collect();
        let proj_w = Mat::zeros(spec.feature_dim, spec.output_channels());
        let proj_b = vec![0.0; spec.feature_dim];
        Ok(ConvBackbone { spec, layers, proj_w, proj_b })
    }

    pub fn init<R: Rng>(spec: BackboneSpec, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(spec)?;
        for (layer, l) in net.layers.iter_mut().zip(&net.spec.layers) {
            let fan_in = (l.in_channels * l.kernel) as f64;
            let scale = (2.0 / fan_in).sqrt();
            for w in &mut layer.weights {
                *w = rng.gen_range(-scale..scale);
            }
        }
        let fan_in = net.spec.output_channels() as f64;
        let scale = (1.0 / fan_in).sqrt();
        for w in net.proj_w.data_mut() {
            *w = rng.gen_range(-scale..scale);
        }
        Ok(net)
    }

    pub fn spec(&self) -> &BackboneSpec {
        &self.spec
    }

    pub fn geometry(&self) -> FrameGeometry {
        self.spec.derived_geometry().expect("spec validated at construction")
    }

    /// Feature matrix for a signal; one row per segment.
    pub fn forward(&self, signal: &[f64]) -> Result<Mat<f64>> {
        Ok(self.forward_cached(signal)?.0)
    }

    pub fn forward_cached(&self, signal: &[f64]) -> Result<(Mat<f64>, BackboneCache)> {
        let geometry = self.geometry();
        let n = geometry.segment_count(signal.len())?;

        let mut acts: Vec<Mat<f64>> = Vec::with_capacity(self.spec.layers.len() + 1);
        acts.push(Mat::from_vec(1, signal.len(), signal.to_vec()));
        for (spec, params) in self.spec.layers.iter().zip(&self.layers) {
            let out = conv_forward(spec, params, acts.last().unwrap());
            acts.push(out);
        }

        let last = acts.last().unwrap();
        debug_assert_eq!(last.cols(), n, "conv stack length disagrees with geometry");
        let mut features = Mat::zeros(n, self.spec.feature_dim);
        for t in 0..n {
            let row = features.row_mut(t);
            for (f, slot) in row.iter_mut().enumerate() {
                let wf = self.proj_w.row(f);
                let mut acc = self.proj_b[f];
                for ch in 0..last.rows() {
                    acc += wf[ch] * last.get(ch, t);
                }
                *slot = acc;
            }
        }
        Ok((features, BackboneCache { acts }))
    }

    /// Backpropagate `d_features` through the projection and conv stack.
    pub fn backward(&self, cache: &BackboneCache, d_features: &Mat<f64>) -> ConvBackbone {
        let mut grads = ConvBackbone::zeros(self.spec.clone()).expect("same spec");
        let last = cache.acts.last().unwrap();
        let n = d_features.rows();

        // projection
        let mut d_last = Mat::zeros(last.rows(), last.cols());
        for t in 0..n {
            let df = d_features.row(t);
            for (f, &g) in df.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                grads.proj_b[f] += g;
                let wf = self.proj_w.row(f);
                let dwf = grads.proj_w.row_mut(f);
                for ch in 0..last.rows() {
                    dwf[ch] += g * last.get(ch, t);
                    let cur = d_last.get(ch, t);
                    d_last.set(ch, t, cur + g * wf[ch]);
                }
            }
        }

        // conv stack, reversed
        let mut d_out = d_last;
        for i in (0..self.spec.layers.len()).rev() {
            let spec = &self.spec.layers[i];
            let params = &self.layers[i];
            let input = &cache.acts[i];
            let output = &cache.acts[i + 1];
            let (d_w, d_b, d_in) = conv_backward(spec, params, input, output, &d_out);
            grads.layers[i] = LayerParams { weights: d_w, bias: d_b };
            d_out = d_in;
        }
        grads
    }

    /// Number of scalar parameters.
    pub fn parameter_count(&self) -> usize {
        self.spec.parameter_count()
    }
}

fn conv_forward(spec: &ConvLayerSpec, params: &LayerParams, input: &Mat<f64>) -> Mat<f64> {
    let k_eff = spec.effective_kernel();
    debug_assert!(input.cols() >= k_eff);
    let out_len = (input.cols() - k_eff) / spec.stride + 1;
    let mut out = Mat::zeros(spec.out_channels, out_len);
    for oc in 0..spec.out_channels {
        let bias = params.bias[oc];
        {
            let row = out.row_mut(oc);
            for v in row.iter_mut() {
                *v = bias;
            }
        }
        for ic in 0..spec.in_channels {
            let w = &params.weights[(oc * spec.in_channels + ic) * spec.kernel..][..spec.kernel];
            let x = input.row(ic);
            let row = out.row_mut(oc);
            for (k, &wv) in w.iter().enumerate() {
                let off = k * spec.dilation;
                for (t, slot) in row.iter_mut().enumerate() {
                    *slot += wv * x[t * spec.stride + off];
                }
            }
        }
        if spec.activation == Activation::Relu {
            for v in out.row_mut(oc) {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
    }
    out
}

/// Returns (d_weights, d_bias, d_input) for one layer.
fn conv_backward(
    spec: &ConvLayerSpec,
    params: &LayerParams,
    input: &Mat<f64>,
    output: &Mat<f64>,
    d_output: &Mat<f64>,
) -> (Vec<f64>, Vec<f64>, Mat<f64>) {
    let mut d_w = vec![0.0; params.weights.len()];
    let mut d_b = vec![0.0; params.bias.len()];
    let mut d_in = Mat::zeros(input.rows(), input.cols());
    let out_len = output.cols();

    for oc in 0..spec.out_channels {
        // gradient through the activation
        let out_row = output.row(oc);
        let d_row = d_output.row(oc);
        let mut d_pre = vec![0.0; out_len];
        match spec.activation {
            Activation::Relu => {
                for t in 0..out_len {
                    if out_row[t] > 0.0 {
                        d_pre[t] = d_row[t];
                    }
                }
            }
            Activation::Linear => d_pre.copy_from_slice(d_row),
        }
        for &g in &d_pre {
            d_b[oc] += g;
        }
        for ic in 0..spec.in_channels {
            let base = (oc * spec.in_channels + ic) * spec.kernel;
            let x = input.row(ic);
            let dxi = d_in.row_mut(ic);
            for k in 0..spec.kernel {
                let off = k * spec.dilation;
                let wv = params.weights[base + k];
                let mut dw = 0.0;
                for (t, &g) in d_pre.iter().enumerate() {
                    if g != 0.0 {
                        let pos = t * spec.stride + off;
                        dw += g * x[pos];
                        dxi[pos] += g * wv;
                    }
                }
                d_w[base + k] += dw;
            }
        }
    }
    (d_w, d_b, d_in)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiny_spec() -> BackboneSpec {
        BackboneSpec {
            layers: vec![
                ConvLayerSpec {
                    in_channels: 1,
                    out_channels: 3,
                    kernel: 4,
                    stride: 2,
                    dilation: 1,
                    activation: Activation::Relu,
                },
                ConvLayerSpec {
                    in_channels: 3,
                    out_channels: 4,
                    kernel: 3,
                    stride: 2,
                    dilation: 2,
                    activation: Activation::Relu,
                },
            ],
            feature_dim: 5,
        }
    }

    #[test]
    fn reference_geometry() {
        let g = BackboneSpec::reference().derived_geometry().unwrap();
        assert_eq!(g.receptive_field(), 425);
        assert_eq!(g.stride(), 16);
    }

    #[test]
    fn derived_geometry_matches_dependency_tracing() {
        // Linear activations and all-ones weights: an output frame is
        // nonzero exactly when its window touches the nonzero input sample.
        let mut spec = tiny_spec();
        for l in &mut spec.layers {
            l.activation = Activation::Linear;
        }
        let geometry = spec.derived_geometry().unwrap();
        let mut net = ConvBackbone::zeros(spec).unwrap();
        for layer in &mut net.layers {
            for w in &mut layer.weights {
                *w = 1.0;
            }
        }
        for w in net.proj_w.data_mut() {
            *w = 1.0;
        }

        let t_len = geometry.receptive_field() + geometry.stride() * 7;
        let n = geometry.segment_count(t_len).unwrap();
        for probe in [0usize, 1, 5, t_len / 2, t_len - 1] {
            let mut signal = vec![0.0; t_len];
            signal[probe] = 1.0;
            let features = net.forward(&signal).unwrap();
            assert_eq!(features.rows(), n);
            for t in 0..n {
                let touched = features.row(t).iter().any(|&v| v != 0.0);
                let window = geometry.segment_interval(t);
                let expects = (probe as i64) >= window.begin() && (probe as i64) < window.end();
                assert_eq!(touched, expects, "probe {probe}, segment {t}");
            }
        }
    }

    #[test]
    fn row_count_and_locality() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = ConvBackbone::init(tiny_spec(), &mut rng).unwrap();
        let g = net.geometry();
        let r = g.receptive_field();
        let s = g.stride();

        let signal: Vec<f64> = (0..r + 3 * s).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let features = net.forward(&signal).unwrap();
        assert_eq!(features.rows(), 4);

        // exactly one row at T = R, and it equals row 0 of the longer signal
        let head = net.forward(&signal[..r]).unwrap();
        assert_eq!(head.rows(), 1);
        assert_eq!(head.row(0), features.row(0));

        // every row equals the row computed from its isolated window
        for t in 0..4 {
            let window = &signal[t * s..t * s + r];
            let isolated = net.forward(window).unwrap();
            assert_eq!(isolated.rows(), 1);
            assert_eq!(isolated.row(0), features.row(t), "segment {t}");
        }
    }

    #[test]
    fn zero_signal_zero_bias_gives_zero_features() {
        let net = ConvBackbone::zeros(tiny_spec()).unwrap();
        let g = net.geometry();
        let features = net.forward(&vec![0.0; g.receptive_field()]).unwrap();
        assert!(features.row(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn too_short_signal_is_error() {
        let net = ConvBackbone::zeros(tiny_spec()).unwrap();
        let g = net.geometry();
        let err = net.forward(&vec![0.0; g.receptive_field() - 1]);
        assert!(matches!(err, Err(Error::UtteranceTooShort { .. })));
    }

    /// Finite-difference check of the backbone backward pass under a simple
    /// quadratic loss on the features.
    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let net = ConvBackbone::init(tiny_spec(), &mut rng).unwrap();
        let g = net.geometry();
        let t_len = g.receptive_field() + 2 * g.stride();
        let signal: Vec<f64> = (0..t_len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let target: Vec<f64> = (0..3 * net.spec().feature_dim)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();

        let loss = |net: &ConvBackbone| -> f64 {
            let f = net.forward(&signal).unwrap();
            f.data()
                .iter()
                .zip(&target)
                .map(|(a, b)| 0.5 * (a - b) * (a - b))
                .sum()
        };

        let (features, cache) = net.forward_cached(&signal).unwrap();
        let mut d_features = Mat::zeros(features.rows(), features.cols());
        for (i, slot) in d_features.data_mut().iter_mut().enumerate() {
            *slot = features.data()[i] - target[i];
        }
        let grads = net.backward(&cache, &d_features);

        let h = 1e-6;
        let mut worst: f64 = 0.0;
        let mut probe = net.clone();
        for li in 0..probe.layers.len() {
            for wi in 0..probe.layers[li].weights.len() {
                let orig = probe.layers[li].weights[wi];
                probe.layers[li].weights[wi] = orig + h;
                let up = loss(&probe);
                probe.layers[li].weights[wi] = orig - h;
                let down = loss(&probe);
                probe.layers[li].weights[wi] = orig;
                let numeric = (up - down) / (2.0 * h);
                let analytic = grads.layers[li].weights[wi];
                worst = worst.max((numeric - analytic).abs() / numeric.abs().max(1.0));
            }
            for bi in 0..probe.layers[li].bias.len() {
                let orig = probe.layers[li].bias[bi];
                probe.layers[li].bias[bi] = orig + h;
                let up = loss(&probe);
                probe.layers[li].bias[bi] = orig - h;
                let down = loss(&probe);
                probe.layers[li].bias[bi] = orig;
                let numeric = (up - down) / (2.0 * h);
                let analytic = grads.layers[li].bias[bi];
                worst = worst.max((numeric - analytic).abs() / numeric.abs().max(1.0));
            }
        }
        for wi in 0..probe.proj_w.data().len() {
            let orig = probe.proj_w.data()[wi];
            probe.proj_w.data_mut()[wi] = orig + h;
            let up = loss(&probe);
            probe.proj_w.data_mut()[wi] = orig - h;
            let down = loss(&probe);
            probe.proj_w.data_mut()[wi] = orig;
            let numeric = (up - down) / (2.0 * h);
            let analytic = grads.proj_w.data()[wi];
            worst = worst.max((numeric - analytic).abs() / numeric.abs().max(1.0));
        }
        assert!(worst < 1e-7, "worst relative error {worst}");
    }

    #[test]
    fn spec_validation() {
        let mut spec = tiny_spec();
        spec.layers[1].in_channels = 7;
        assert!(spec.validate().is_err());
        let mut spec = tiny_spec();
        spec.feature_dim = 0;
        assert!(spec.validate().is_err());
        assert!(BackboneSpec { layers: vec![], feature_dim: 4 }.validate().is_err());
    }
}
