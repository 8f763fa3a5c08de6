//! Forward-only micro-CNN and the classifier abstraction the explainers run on.
//!
//! A classifier maps an image to its class probabilities plus the feature
//! stack tapped from one spatial layer. [`ModelSpec`] is the built-in engine;
//! [`adapter::ExternalModel`] forwards the same contract to a subprocess.

pub mod adapter;
pub mod format;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{FeatureStack, ScoreVector, Tensor};

pub use format::{load_model, model_hash, parse_model, save_model, serialize_model};

/// Output of a single forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub scores: ScoreVector,
    pub features: FeatureStack,
}

/// Anything that can classify an image and expose its last spatial features.
pub trait Classifier: Sync {
    /// `[channels, height, width]` of accepted images.
    fn input_shape(&self) -> [usize; 3];

    fn class_count(&self) -> usize;

    fn infer(&self, image: &Tensor) -> Result<Inference>;

    /// Scores for many images; element `i` equals `infer(&images[i]).scores`.
    fn infer_scores_batch(&self, images: &[Tensor]) -> Result<Vec<ScoreVector>> {
        images
            .iter()
            .map(|img| self.infer(img).map(|inf| inf.scores))
            .collect()
    }

    /// Identity recorded in provenance metadata.
    fn provider(&self) -> String;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    /// `[out_channels, in_channels, kernel, kernel]`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv2d {
    /// Stride 1 with "same" zero padding.
    pub fn same(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Self {
        Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride: 1,
            padding: kernel / 2,
            weights,
            bias,
        }
    }

    fn weight(&self, oc: usize, ic: usize, ky: usize, kx: usize) -> f64 {
        self.weights[((oc * self.in_channels + ic) * self.kernel + ky) * self.kernel + kx]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// `[outputs, inputs]`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv2d(Conv2d),
    Relu,
    MaxPool2d { window: usize, stride: usize },
    GlobalAvgPool,
    Dense(Dense),
    Softmax,
}

impl Layer {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv2d(_) => "conv2d",
            Layer::Relu => "relu",
            Layer::MaxPool2d { .. } => "maxpool2d",
            Layer::GlobalAvgPool => "globalavgpool",
            Layer::Dense(_) => "dense",
            Layer::Softmax => "softmax",
        }
    }

    fn output_shape(&self, index: usize, input: &[usize]) -> Result<Vec<usize>> {
        let invalid = |message: String| Error::Validation {
            layer: index,
            kind: self.kind(),
            message,
        };
        let spatial = |input: &[usize]| match *input {
            [c, h, w] => Ok((c, h, w)),
            _ => Err(invalid(format!(
                "expects a spatial [channels, height, width] input, got {input:?}"
            ))),
        };
        match self {
            Layer::Conv2d(conv) => {
                let (c, h, w) = spatial(input)?;
                if conv.kernel == 0 || conv.stride == 0 {
                    return Err(invalid("kernel and stride must be positive".into()));
                }
                if c != conv.in_channels {
                    return Err(invalid(format!(
                        "expects {} input channels, previous layer produces {c}",
                        conv.in_channels
                    )));
                }
                let expected = conv.out_channels * conv.in_channels * conv.kernel * conv.kernel;
                if conv.weights.len() != expected {
                    return Err(invalid(format!(
                        "has {} weights, expected {expected}",
                        conv.weights.len()
                    )));
                }
                if conv.bias.len() != conv.out_channels {
                    return Err(invalid(format!(
                        "has {} biases, expected {}",
                        conv.bias.len(),
                        conv.out_channels
                    )));
                }
                let (ph, pw) = (h + 2 * conv.padding, w + 2 * conv.padding);
                if ph < conv.kernel || pw < conv.kernel || conv.out_channels == 0 {
                    return Err(invalid(format!(
                        "kernel {} does not fit padded input {ph}x{pw}",
                        conv.kernel
                    )));
                }
                Ok(vec![
                    conv.out_channels,
                    (ph - conv.kernel) / conv.stride + 1,
                    (pw - conv.kernel) / conv.stride + 1,
                ])
            }
            Layer::Relu => Ok(input.to_vec()),
            Layer::MaxPool2d { window, stride } => {
                let (c, h, w) = spatial(input)?;
                if *window == 0 || *stride == 0 {
                    return Err(invalid("window and stride must be positive".into()));
                }
                if h < *window || w < *window {
                    return Err(invalid(format!(
                        "window {window} larger than input {h}x{w}"
                    )));
                }
                Ok(vec![c, (h - window) / stride + 1, (w - window) / stride + 1])
            }
            Layer::GlobalAvgPool => {
                let (c, _, _) = spatial(input)?;
                Ok(vec![c])
            }
            Layer::Dense(dense) => {
                let flat: usize = input.iter().product();
                if flat != dense.inputs {
                    return Err(invalid(format!(
                        "expects {} inputs, previous layer produces {flat}",
                        dense.inputs
                    )));
                }
                if dense.outputs == 0 || dense.weights.len() != dense.inputs * dense.outputs {
                    return Err(invalid(format!(
                        "has {} weights, expected {}",
                        dense.weights.len(),
                        dense.inputs * dense.outputs
                    )));
                }
                if dense.bias.len() != dense.outputs {
                    return Err(invalid(format!(
                        "has {} biases, expected {}",
                        dense.bias.len(),
                        dense.outputs
                    )));
                }
                Ok(vec![dense.outputs])
            }
            Layer::Softmax => Ok(vec![input.iter().product()]),
        }
    }

    fn forward(&self, input: Tensor) -> Tensor {
        match self {
            Layer::Conv2d(conv) => conv_forward(conv, &input),
            Layer::Relu => {
                let mut out = input;
                out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
                out
            }
            Layer::MaxPool2d { window, stride } => maxpool_forward(*window, *stride, &input),
            Layer::GlobalAvgPool => {
                let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
                let area = (h * w) as f64;
                let data = input
                    .data()
                    .chunks(h * w)
                    .map(|plane| plane.iter().sum::<f64>() / area)
                    .collect();
                Tensor::from_parts(vec![c], data)
            }
            Layer::Dense(dense) => {
                let x = input.data();
                let data = (0..dense.outputs)
                    .map(|o| {
                        let row = &dense.weights[o * dense.inputs..(o + 1) * dense.inputs];
                        dense.bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
                    })
                    .collect();
                Tensor::from_parts(vec![dense.outputs], data)
            }
            Layer::Softmax => {
                let x = input.data();
                let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
                let sum: f64 = exps.iter().sum();
                Tensor::from_parts(vec![x.len()], exps.into_iter().map(|e| e / sum).collect())
            }
        }
    }
}

fn conv_forward(conv: &Conv2d, input: &Tensor) -> Tensor {
    let (h, w) = (input.shape()[1], input.shape()[2]);
    let k = conv.kernel;
    let p = conv.padding as isize;
    let out_h = (h + 2 * conv.padding - k) / conv.stride + 1;
    let out_w = (w + 2 * conv.padding - k) / conv.stride + 1;
    let x = input.data();
    let mut out = vec![0.0; conv.out_channels * out_h * out_w];
    for oc in 0..conv.out_channels {
        for oy in 0..out_h {
            for ox in 0..out_w {
                let mut acc = conv.bias[oc];
                for ic in 0..conv.in_channels {
                    let plane = &x[ic * h * w..(ic + 1) * h * w];
                    for ky in 0..k {
                        let iy = (oy * conv.stride + ky) as isize - p;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = (ox * conv.stride + kx) as isize - p;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            acc += conv.weight(oc, ic, ky, kx) * plane[iy as usize * w + ix as usize];
                        }
                    }
                }
                out[(oc * out_h + oy) * out_w + ox] = acc;
            }
        }
    }
    Tensor::from_parts(vec![conv.out_channels, out_h, out_w], out)
}

fn maxpool_forward(window: usize, stride: usize, input: &Tensor) -> Tensor {
    let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let out_h = (h - window) / stride + 1;
    let out_w = (w - window) / stride + 1;
    let x = input.data();
    let mut out = Vec::with_capacity(c * out_h * out_w);
    for ch in 0..c {
        let plane = &x[ch * h * w..(ch + 1) * h * w];
        for oy in 0..out_h {
            for ox in 0..out_w {
                let mut m = f64::NEG_INFINITY;
                for dy in 0..window {
                    for dx in 0..window {
                        m = m.max(plane[(oy * stride + dy) * w + ox * stride + dx]);
                    }
                }
                out.push(m);
            }
        }
    }
    Tensor::from_parts(vec![c, out_h, out_w], out)
}

/// A validated, immutable micro-CNN.
///
/// Weights are stored at `f32` precision (the on-disk format) so that an
/// in-memory model and its serialized copy infer identically.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    input_shape: [usize; 3],
    layers: Vec<Layer>,
    tap_index: usize,
    class_count: usize,
    shapes: Vec<Vec<usize>>,
}

impl ModelSpec {
    /// Validates shape composition. `tap_index = None` selects the last layer
    /// with spatial output.
    pub fn new(input_shape: [usize; 3], mut layers: Vec<Layer>, tap_index: Option<usize>) -> Result<Self> {
        if input_shape.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "input shape extents must be positive, got {input_shape:?}"
            )));
        }
        if layers.is_empty() {
            return Err(Error::InvalidArgument("model has no layers".into()));
        }
        for layer in &mut layers {
            match layer {
                Layer::Conv2d(c) => round_to_f32(c.weights.iter_mut().chain(c.bias.iter_mut())),
                Layer::Dense(d) => round_to_f32(d.weights.iter_mut().chain(d.bias.iter_mut())),
                _ => {}
            }
        }
        let last = layers.len() - 1;
        let mut shapes = Vec::with_capacity(layers.len());
        let mut current = input_shape.to_vec();
        for (i, layer) in layers.iter().enumerate() {
            if matches!(layer, Layer::Softmax) && i != last {
                return Err(Error::Validation {
                    layer: i,
                    kind: "softmax",
                    message: "softmax must be the final layer and appear once".into(),
                });
            }
            current = layer.output_shape(i, &current)?;
            shapes.push(current.clone());
        }
        if !matches!(layers[last], Layer::Softmax) {
            return Err(Error::Validation {
                layer: last,
                kind: layers[last].kind(),
                message: "the final layer must be softmax".into(),
            });
        }
        let tap_index = match tap_index {
            Some(t) => {
                if t >= layers.len() || shapes[t].len() != 3 {
                    return Err(Error::Validation {
                        layer: t.min(last),
                        kind: layers[t.min(last)].kind(),
                        message: format!("tap index {t} does not name a layer with spatial output"),
                    });
                }
                t
            }
            None => shapes
                .iter()
                .rposition(|s| s.len() == 3)
                .ok_or_else(|| Error::Validation {
                    layer: 0,
                    kind: layers[0].kind(),
                    message: "model has no layer with spatial output to tap".into(),
                })?,
        };
        let class_count = shapes[last][0];
        Ok(ModelSpec {
            input_shape,
            layers,
            tap_index,
            class_count,
            shapes,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn tap_index(&self) -> usize {
        self.tap_index
    }

    /// Statically composed output shape of every layer.
    pub fn layer_shapes(&self) -> &[Vec<usize>] {
        &self.shapes
    }

    /// `[N, n_h, n_w]` of the tapped feature stack.
    pub fn feature_shape(&self) -> &[usize] {
        &self.shapes[self.tap_index]
    }

    fn check_input(&self, image: &Tensor) -> Result<()> {
        if image.shape() != self.input_shape {
            return Err(Error::ShapeMismatch {
                expected: self.input_shape.to_vec(),
                actual: image.shape().to_vec(),
            });
        }
        image.check_unit_range()
    }
}

fn round_to_f32<'a>(values: impl Iterator<Item = &'a mut f64>) {
    values.for_each(|v| *v = *v as f32 as f64);
}

impl Classifier for ModelSpec {
    fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    fn class_count(&self) -> usize {
        self.class_count
    }

    fn infer(&self, image: &Tensor) -> Result<Inference> {
        self.check_input(image)?;
        let mut x = image.clone();
        let mut tapped = None;
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.forward(x);
            if i == self.tap_index {
                tapped = Some(x.clone());
            }
        }
        let features = FeatureStack::new(tapped.expect("tap index validated at construction"))?;
        Ok(Inference {
            scores: ScoreVector::from_softmax(x.into_data()),
            features,
        })
    }

    fn infer_scores_batch(&self, images: &[Tensor]) -> Result<Vec<ScoreVector>> {
        images
            .par_iter()
            .map(|img| self.infer(img).map(|inf| inf.scores))
            .collect()
    }

    fn provider(&self) -> String {
        format!("builtin:{}", &model_hash(self)[..16])
    }
}
