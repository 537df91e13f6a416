//! Linear-chain network representation.
//!
//! Shapes exclude the batch dimension: convolutional activations are
//! `[channels, height, width]`, fully-connected activations are `[features]`.

use alloc::collections::BTreeMap;
use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use crate::error::{Error, Result};

/// Dense row-major `f32` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if shape.is_empty() || shape.iter().any(|&d| d == 0) {
            return Err(Error::Input(format!("invalid tensor shape {shape:?}")));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Input(format!(
                "tensor shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::Input(format!("non-finite tensor value {bad}")));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let n = shape.iter().product();
        Tensor::new(shape, vec![0.0; n])
    }

    pub fn filled(shape: Vec<usize>, value: f32) -> Result<Self> {
        let n = shape.iter().product();
        Tensor::new(shape, vec![value; n])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Replace the contents with values of the same length.
    pub fn map_data(&self, f: impl FnMut(f32) -> f32) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().copied().map(f).collect(),
        }
    }

    pub(crate) fn from_parts_unchecked(shape: Vec<usize>, data: Vec<f32>) -> Tensor {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor { shape, data }
    }

    /// Concatenate along a new leading batch axis.
    pub fn stack(items: &[Tensor]) -> Result<Tensor> {
        let first = items
            .first()
            .ok_or_else(|| Error::Input("cannot stack zero tensors".into()))?;
        let mut shape = vec![items.len()];
        shape.extend_from_slice(first.shape());
        let mut data = Vec::with_capacity(first.len() * items.len());
        for t in items {
            if t.shape() != first.shape() {
                return Err(Error::Input(format!(
                    "cannot stack shapes {:?} and {:?}",
                    first.shape(),
                    t.shape()
                )));
            }
            data.extend_from_slice(t.data());
        }
        Ok(Tensor { shape, data })
    }
}

/// Layer type plus its structural attributes.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerKind {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        stride: usize,
        padding: usize,
    },
    FullyConnected {
        in_features: usize,
        out_features: usize,
    },
    ReLU,
    /// Per-channel affine normalization; `gamma`, `beta`, `mean`, `var`
    /// live in the layer's params.
    BatchNorm {
        channels: usize,
        epsilon: f64,
    },
    MaxPool {
        window: usize,
        stride: usize,
    },
    AvgPool {
        window: usize,
        stride: usize,
    },
    Flatten,
}

impl LayerKind {
    pub fn tag(&self) -> &'static str {
        match self {
            LayerKind::Conv2d { .. } => "conv2d",
            LayerKind::FullyConnected { .. } => "fully_connected",
            LayerKind::ReLU => "relu",
            LayerKind::BatchNorm { .. } => "batch_norm",
            LayerKind::MaxPool { .. } => "max_pool",
            LayerKind::AvgPool { .. } => "avg_pool",
            LayerKind::Flatten => "flatten",
        }
    }

    /// Conv2d and FullyConnected carry weights that get quantized.
    pub fn is_quantizable(&self) -> bool {
        matches!(self, LayerKind::Conv2d { .. } | LayerKind::FullyConnected { .. })
    }

    pub fn is_fully_connected(&self) -> bool {
        matches!(self, LayerKind::FullyConnected { .. })
    }
}

pub const BN_PARAMS: [&str; 4] = ["gamma", "beta", "mean", "var"];

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    pub params: BTreeMap<String, Tensor>,
}

impl LayerSpec {
    pub fn new(name: impl Into<String>, kind: LayerKind) -> Self {
        LayerSpec {
            name: name.into(),
            kind,
            params: BTreeMap::new(),
        }
    }

    pub fn with_param(mut self, name: impl Into<String>, tensor: Tensor) -> Self {
        self.params.insert(name.into(), tensor);
        self
    }

    pub fn conv2d(
        name: impl Into<String>,
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        stride: usize,
        padding: usize,
        weight: Tensor,
        bias: Option<Tensor>,
    ) -> Self {
        let mut layer = LayerSpec::new(
            name,
            LayerKind::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            },
        )
        .with_param("weight", weight);
        if let Some(b) = bias {
            layer = layer.with_param("bias", b);
        }
        layer
    }

    pub fn fully_connected(
        name: impl Into<String>,
        in_features: usize,
        out_features: usize,
        weight: Tensor,
        bias: Option<Tensor>,
    ) -> Self {
        let mut layer = LayerSpec::new(
            name,
            LayerKind::FullyConnected {
                in_features,
                out_features,
            },
        )
        .with_param("weight", weight);
        if let Some(b) = bias {
            layer = layer.with_param("bias", b);
        }
        layer
    }

    pub fn weight(&self) -> Option<&Tensor> {
        self.params.get("weight")
    }

    pub fn bias(&self) -> Option<&Tensor> {
        self.params.get("bias")
    }

    fn mismatch(&self, detail: String) -> Error {
        Error::ShapeMismatch {
            layer: self.name.clone(),
            detail,
        }
    }

    fn expect_param(&self, key: &str, shape: &[usize]) -> Result<()> {
        match self.params.get(key) {
            Some(t) if t.shape() == shape => Ok(()),
            Some(t) => Err(self.mismatch(format!(
                "param `{key}` has shape {:?}, expected {shape:?}",
                t.shape()
            ))),
            None => Err(self.mismatch(format!("missing param `{key}`"))),
        }
    }

    fn check_params(&self) -> Result<()> {
        let allowed: &[&str] = match &self.kind {
            LayerKind::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                ..
            } => {
                if *in_channels == 0 || *out_channels == 0 || kernel.0 == 0 || kernel.1 == 0 || *stride == 0 {
                    return Err(self.mismatch("zero-sized conv attribute".into()));
                }
                self.expect_param("weight", &[*out_channels, *in_channels, kernel.0, kernel.1])?;
                if self.bias().is_some() {
                    self.expect_param("bias", &[*out_channels])?;
                }
                &["weight", "bias"]
            }
            LayerKind::FullyConnected {
                in_features,
                out_features,
            } => {
                self.expect_param("weight", &[*out_features, *in_features])?;
                if self.bias().is_some() {
                    self.expect_param("bias", &[*out_features])?;
                }
                &["weight", "bias"]
            }
            LayerKind::BatchNorm { channels, epsilon } => {
                if !(epsilon.is_finite() && *epsilon >= 0.0) {
                    return Err(self.mismatch(format!("invalid epsilon {epsilon}")));
                }
                for key in BN_PARAMS {
                    self.expect_param(key, &[*channels])?;
                }
                let var = &self.params["var"];
                if var.data().iter().any(|&v| (v as f64) + epsilon <= 0.0) {
                    return Err(self.mismatch("variance + epsilon must be positive".into()));
                }
                &BN_PARAMS
            }
            LayerKind::MaxPool { window, stride } | LayerKind::AvgPool { window, stride } => {
                if *window == 0 || *stride == 0 {
                    return Err(self.mismatch("zero-sized pool attribute".into()));
                }
                &[]
            }
            LayerKind::ReLU | LayerKind::Flatten => &[],
        };
        if let Some(extra) = self.params.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(self.mismatch(format!("unexpected param `{extra}`")));
        }
        Ok(())
    }

    /// Output shape for a given input shape (batch dimension excluded).
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match &self.kind {
            LayerKind::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                let [c, h, w] = spatial(input).ok_or_else(|| {
                    self.mismatch(format!("conv input must be [C, H, W], got {input:?}"))
                })?;
                if c != *in_channels {
                    return Err(self.mismatch(format!(
                        "expects {in_channels} input channels, got {c}"
                    )));
                }
                let oh = window_out(h + 2 * padding, kernel.0, *stride);
                let ow = window_out(w + 2 * padding, kernel.1, *stride);
                match (oh, ow) {
                    (Some(oh), Some(ow)) => Ok(vec![*out_channels, oh, ow]),
                    _ => Err(self.mismatch(format!(
                        "kernel {kernel:?} larger than padded input {input:?}"
                    ))),
                }
            }
            LayerKind::FullyConnected {
                in_features,
                out_features,
            } => {
                if input != [*in_features] {
                    return Err(self.mismatch(format!(
                        "expects input [{in_features}], got {input:?}"
                    )));
                }
                Ok(vec![*out_features])
            }
            LayerKind::BatchNorm { channels, .. } => {
                if input.first() != Some(channels) {
                    return Err(self.mismatch(format!(
                        "expects {channels} channels, got input {input:?}"
                    )));
                }
                Ok(input.to_vec())
            }
            LayerKind::MaxPool { window, stride } | LayerKind::AvgPool { window, stride } => {
                let [c, h, w] = spatial(input).ok_or_else(|| {
                    self.mismatch(format!("pool input must be [C, H, W], got {input:?}"))
                })?;
                match (window_out(h, *window, *stride), window_out(w, *window, *stride)) {
                    (Some(oh), Some(ow)) => Ok(vec![c, oh, ow]),
                    _ => Err(self.mismatch(format!("window {window} larger than input {input:?}"))),
                }
            }
            LayerKind::ReLU => Ok(input.to_vec()),
            LayerKind::Flatten => Ok(vec![input.iter().product()]),
        }
    }

    /// Weight plus bias element count (zero for layers without weights).
    pub fn param_count(&self) -> usize {
        if !self.kind.is_quantizable() {
            return 0;
        }
        self.weight().map_or(0, Tensor::len) + self.bias().map_or(0, Tensor::len)
    }
}

fn spatial(shape: &[usize]) -> Option<[usize; 3]> {
    match shape {
        [c, h, w] => Some([*c, *h, *w]),
        _ => None,
    }
}

fn window_out(len: usize, window: usize, stride: usize) -> Option<usize> {
    (len >= window).then(|| (len - window) / stride + 1)
}

/// Validated linear chain of layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    input_shape: Vec<usize>,
    layers: Vec<LayerSpec>,
    shapes: Vec<Vec<usize>>,
}

impl Model {
    /// Validate names, parameter shapes and end-to-end shape inference.
    pub fn new(input_shape: Vec<usize>, layers: Vec<LayerSpec>) -> Result<Self> {
        if input_shape.is_empty() || input_shape.iter().any(|&d| d == 0) {
            return Err(Error::Input(format!("invalid input shape {input_shape:?}")));
        }
        let mut seen = BTreeSet::new();
        for layer in &layers {
            if layer.name.is_empty() || !layer.name.chars().all(|c| c.is_ascii_alphanumeric() || "_-.".contains(c)) {
                return Err(Error::Structure(format!("invalid layer name `{}`", layer.name)));
            }
            if !seen.insert(layer.name.as_str()) {
                return Err(Error::Structure(format!("duplicate layer name `{}`", layer.name)));
            }
            layer.check_params()?;
        }
        let mut shapes = Vec::with_capacity(layers.len());
        let mut current = input_shape.clone();
        for layer in &layers {
            current = layer.output_shape(&current)?;
            shapes.push(current.clone());
        }
        Ok(Model {
            input_shape,
            layers,
            shapes,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn layer(&self, name: &str) -> Option<&LayerSpec> {
        self.layers.iter().find(|l| l.name == name)
    }

    /// Inferred output shape of each layer.
    pub fn output_shapes(&self) -> &[Vec<usize>] {
        &self.shapes
    }

    pub fn output_shape(&self) -> &[usize] {
        self.shapes.last().map_or(&self.input_shape, Vec::as_slice)
    }

    /// Input shape seen by layer `index`.
    pub fn layer_input_shape(&self, index: usize) -> &[usize] {
        if index == 0 {
            &self.input_shape
        } else {
            &self.shapes[index - 1]
        }
    }

    pub fn quantizable_layers(&self) -> impl Iterator<Item = &LayerSpec> {
        self.layers.iter().filter(|l| l.kind.is_quantizable())
    }

    pub fn into_layers(self) -> Vec<LayerSpec> {
        self.layers
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "input {:?}", self.input_shape)?;
        for (layer, shape) in self.layers.iter().zip(&self.shapes) {
            writeln!(f, "{:<12} {:<16} -> {:?}", layer.name, layer.kind.tag(), shape)?;
        }
        Ok(())
    }
}

/// Parameter count (weights + biases) of every quantizable layer, in layer order.
pub fn count_params(model: &Model) -> Vec<(String, usize)> {
    model
        .quantizable_layers()
        .map(|l| (l.name.clone(), l.param_count()))
        .collect()
}

/// Multiply-accumulate count per sample of every quantizable layer.
pub fn count_macs(model: &Model) -> Vec<(String, u64)> {
    model
        .layers()
        .iter()
        .zip(model.output_shapes())
        .filter(|(l, _)| l.kind.is_quantizable())
        .map(|(l, out)| {
            let per_output = match &l.kind {
                LayerKind::Conv2d {
                    in_channels, kernel, ..
                } => in_channels * kernel.0 * kernel.1,
                LayerKind::FullyConnected { in_features, .. } => *in_features,
                _ => 0,
            };
            let outputs: usize = out.iter().product();
            (l.name.clone(), (per_output * outputs) as u64)
        })
        .collect()
}

/// Absorb every BatchNorm layer into the Conv2d / FullyConnected layer right
/// before it.
///
/// Per output channel `c`: `w' = w * g`, `b' = (b - mean) * g + beta` with
/// `g = gamma / sqrt(var + eps)`. A missing bias counts as zero.
pub fn fold_batchnorm(model: &Model) -> Result<Model> {
    let mut out: Vec<LayerSpec> = Vec::with_capacity(model.layers().len());
    for layer in model.layers() {
        let LayerKind::BatchNorm { channels, epsilon } = layer.kind else {
            out.push(layer.clone());
            continue;
        };
        let prev = match out.last_mut() {
            Some(p) if p.kind.is_quantizable() => p,
            Some(p) => {
                return Err(Error::Structure(format!(
                    "batch norm `{}` follows `{}` ({}), which cannot absorb it",
                    layer.name,
                    p.name,
                    p.kind.tag()
                )))
            }
            None => {
                return Err(Error::Structure(format!(
                    "batch norm `{}` has no preceding layer to fold into",
                    layer.name
                )))
            }
        };
        let gamma = layer.params["gamma"].data();
        let beta = layer.params["beta"].data();
        let mean = layer.params["mean"].data();
        let var = layer.params["var"].data();
        let weight = prev.weight().expect("validated weight").clone();
        let out_ch = weight.shape()[0];
        if out_ch != channels {
            return Err(Error::ShapeMismatch {
                layer: layer.name.clone(),
                detail: format!("{channels} channels after `{}` with {out_ch} outputs", prev.name),
            });
        }
        let scale: Vec<f64> = (0..channels)
            .map(|c| gamma[c] as f64 / (var[c] as f64 + epsilon).sqrt())
            .collect();
        let per_channel = weight.len() / out_ch;
        let new_w: Vec<f32> = weight
            .data()
            .iter()
            .enumerate()
            .map(|(i, &w)| (w as f64 * scale[i / per_channel]) as f32)
            .collect();
        let old_b: Vec<f32> = prev.bias().map_or_else(|| vec![0.0; out_ch], |b| b.data().to_vec());
        let new_b: Vec<f32> = (0..out_ch)
            .map(|c| ((old_b[c] as f64 - mean[c] as f64) * scale[c] + beta[c] as f64) as f32)
            .collect();
        prev.params.insert(
            "weight".to_string(),
            Tensor::new(weight.shape().to_vec(), new_w)?,
        );
        prev.params.insert("bias".to_string(), Tensor::new(vec![out_ch], new_b)?);
    }
    Model::new(model.input_shape().to_vec(), out)
}
