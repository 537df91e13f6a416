//! Forward execution in floating point and simulated fixed point.
//!
//! Accumulation is always in `f64`. In the fixed-point path weights and biases
//! are quantized once per call, the network input is quantized when the plan
//! carries an input format, and every Conv2d / FullyConnected output is
//! quantized right after accumulation, before any activation function.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use crate::error::{Error, Result};
use crate::ir::{LayerKind, LayerSpec, Model, Tensor};
use crate::quantizer::{derive_qformat, measure_sqnr_f32, Distribution, QFormat, SqnrDb};
use crate::stats::{RunningStats, TensorStats};

/// Stats key of the network input.
pub const INPUT_KEY: &str = "input";

pub fn weight_key(layer: &str) -> String {
    format!("{layer}.weight")
}

pub fn bias_key(layer: &str) -> String {
    format!("{layer}.bias")
}

pub fn act_key(layer: &str) -> String {
    format!("{layer}.act")
}

/// Pre-activation output of every Conv2d / FullyConnected layer, in layer
/// order. Each tensor carries the leading batch dimension.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ActivationTrace {
    entries: Vec<(String, Tensor)>,
}

impl ActivationTrace {
    pub fn get(&self, layer: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == layer).map(|(_, t)| t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Fixed-point formats for every quantizable layer.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QuantizationPlan {
    pub weights: BTreeMap<String, QFormat>,
    /// Bias formats; a layer without an entry quantizes its bias with the
    /// weight format.
    pub biases: BTreeMap<String, QFormat>,
    pub activations: BTreeMap<String, QFormat>,
    pub input: Option<QFormat>,
}

impl QuantizationPlan {
    /// Same weight and activation format for every quantizable layer.
    pub fn uniform(model: &Model, weight: QFormat, activation: QFormat, input: Option<QFormat>) -> Self {
        let mut plan = QuantizationPlan {
            input,
            ..Default::default()
        };
        for l in model.quantizable_layers() {
            plan.weights.insert(l.name.clone(), weight);
            plan.activations.insert(l.name.clone(), activation);
        }
        plan
    }

    /// Every quantizable layer has exactly one weight and one activation
    /// format, and no format names an unknown layer.
    pub fn validate(&self, model: &Model) -> Result<()> {
        for l in model.quantizable_layers() {
            if !self.weights.contains_key(&l.name) || !self.activations.contains_key(&l.name) {
                return Err(Error::PlanCoverage(l.name.clone()));
            }
        }
        let known = |k: &String| model.layer(k).is_some_and(|l| l.kind.is_quantizable());
        for k in self.weights.keys().chain(self.activations.keys()).chain(self.biases.keys()) {
            if !known(k) {
                return Err(Error::Structure(format!(
                    "plan names `{k}`, which is not a quantizable layer"
                )));
            }
        }
        Ok(())
    }

    pub fn bias_format(&self, layer: &str) -> Option<QFormat> {
        self.biases.get(layer).or_else(|| self.weights.get(layer)).copied()
    }
}

/// Bit-widths to realize when deriving a plan from calibration statistics.
#[derive(Debug, Clone)]
pub struct PlanSpec {
    pub weight_bits: BTreeMap<String, u32>,
    pub activation_bits: BTreeMap<String, u32>,
    pub input_bits: Option<u32>,
    pub weight_dist: Distribution,
    pub activation_dist: Distribution,
    pub xi_multiplier: f64,
}

/// A tensor whose statistics could not produce a format.
#[derive(Debug, Clone, PartialEq)]
pub struct DegenerateTensor {
    pub key: String,
    pub error: Error,
    /// Range-covering format used in its place.
    pub fallback: QFormat,
}

/// Derive every format of a plan from calibration statistics.
///
/// Degenerate tensors (zero spread) fall back to the finest format covering
/// their peak magnitude and are reported individually.
pub fn derive_plan(
    model: &Model,
    stats: &BTreeMap<String, TensorStats>,
    spec: &PlanSpec,
) -> Result<(QuantizationPlan, Vec<DegenerateTensor>)> {
    let mut plan = QuantizationPlan::default();
    let mut degenerate = Vec::new();
    let mut derive = |key: String, bits: u32, dist: Distribution| -> Result<QFormat> {
        let st = stats
            .get(&key)
            .ok_or_else(|| Error::Input(format!("no statistics for `{key}`")))?;
        match derive_qformat(st, bits, dist, spec.xi_multiplier) {
            Ok(f) => Ok(f),
            Err(e @ Error::DegenerateStats(_)) => {
                let fallback = if st.max_abs > 0.0 {
                    QFormat::covering(st.max_abs, bits)?
                } else {
                    QFormat::new(bits, 0)?
                };
                degenerate.push(DegenerateTensor {
                    key,
                    error: e,
                    fallback,
                });
                Ok(fallback)
            }
            Err(e) => Err(e),
        }
    };
    for l in model.quantizable_layers() {
        let wb = *spec
            .weight_bits
            .get(&l.name)
            .ok_or_else(|| Error::PlanCoverage(l.name.clone()))?;
        let ab = *spec
            .activation_bits
            .get(&l.name)
            .ok_or_else(|| Error::PlanCoverage(l.name.clone()))?;
        plan.weights
            .insert(l.name.clone(), derive(weight_key(&l.name), wb, spec.weight_dist)?);
        if l.bias().is_some() {
            plan.biases
                .insert(l.name.clone(), derive(bias_key(&l.name), wb, spec.weight_dist)?);
        }
        plan.activations
            .insert(l.name.clone(), derive(act_key(&l.name), ab, spec.activation_dist)?);
    }
    if let Some(bits) = spec.input_bits {
        plan.input = Some(derive(INPUT_KEY.into(), bits, spec.activation_dist)?);
    }
    Ok((plan, degenerate))
}

/// Copy of `model` whose weights and biases are replaced by their quantized
/// values.
pub fn quantize_model(model: &Model, plan: &QuantizationPlan) -> Result<Model> {
    plan.validate(model)?;
    let layers = model
        .layers()
        .iter()
        .map(|l| {
            let mut l = l.clone();
            if l.kind.is_quantizable() {
                let wf = plan.weights[&l.name];
                let bf = plan.bias_format(&l.name).unwrap_or(wf);
                if let Some(w) = l.params.get_mut("weight") {
                    *w = w.map_data(|v| wf.quantize_value(v as f64) as f32);
                }
                if let Some(b) = l.params.get_mut("bias") {
                    *b = b.map_data(|v| bf.quantize_value(v as f64) as f32);
                }
            }
            l
        })
        .collect();
    Model::new(model.input_shape().to_vec(), layers)
}

/// Split a batch tensor into (batch size, per-sample length, was batched).
fn batch_layout(model: &Model, batch: &Tensor) -> Result<(usize, bool)> {
    let input = model.input_shape();
    let shape = batch.shape();
    if shape == input {
        Ok((1, false))
    } else if shape.len() == input.len() + 1 && &shape[1..] == input {
        Ok((shape[0], true))
    } else {
        Err(Error::ShapeMismatch {
            layer: INPUT_KEY.into(),
            detail: format!("batch shape {shape:?} does not match model input {input:?}"),
        })
    }
}

fn with_batch(n: usize, batched: bool, shape: &[usize]) -> Vec<usize> {
    if batched {
        let mut s = vec![n];
        s.extend_from_slice(shape);
        s
    } else {
        shape.to_vec()
    }
}

struct LayerParams {
    weight: Vec<f32>,
    bias: Option<Vec<f32>>,
}

fn prepare_params(layer: &LayerSpec, plan: Option<&QuantizationPlan>) -> Option<LayerParams> {
    if !layer.kind.is_quantizable() {
        return None;
    }
    let weight = layer.weight()?.data();
    let bias = layer.bias().map(Tensor::data);
    Some(match plan {
        None => LayerParams {
            weight: weight.to_vec(),
            bias: bias.map(<[f32]>::to_vec),
        },
        Some(p) => {
            let wf = p.weights[&layer.name];
            let bf = p.bias_format(&layer.name).unwrap_or(wf);
            LayerParams {
                weight: weight.iter().map(|&v| wf.quantize_value(v as f64) as f32).collect(),
                bias: bias.map(|b| b.iter().map(|&v| bf.quantize_value(v as f64) as f32).collect()),
            }
        }
    })
}

fn run(model: &Model, batch: &Tensor, plan: Option<&QuantizationPlan>) -> Result<(Tensor, ActivationTrace)> {
    let (n, batched) = batch_layout(model, batch)?;
    if let Some(p) = plan {
        p.validate(model)?;
    }
    let params: Vec<Option<LayerParams>> = model.layers().iter().map(|l| prepare_params(l, plan)).collect();

    let mut data: Vec<f32> = batch.data().to_vec();
    if let Some(fmt) = plan.and_then(|p| p.input) {
        for v in data.iter_mut() {
            *v = fmt.quantize_value(*v as f64) as f32;
        }
    }
    let mut trace = ActivationTrace::default();
    for (idx, layer) in model.layers().iter().enumerate() {
        let in_shape = model.layer_input_shape(idx);
        let out_shape = &model.output_shapes()[idx];
        let in_len: usize = in_shape.iter().product();
        let out_len: usize = out_shape.iter().product();
        let act_fmt = plan.and_then(|p| p.activations.get(&layer.name).copied());
        let mut next = Vec::with_capacity(n * out_len);
        for sample in data.chunks_exact(in_len) {
            let start = next.len();
            next.resize(start + out_len, 0.0);
            let out = &mut next[start..];
            apply_layer(layer, params[idx].as_ref(), sample, in_shape, out_shape, out);
            if let Some(fmt) = act_fmt {
                for v in out.iter_mut() {
                    *v = fmt.quantize_value(*v as f64) as f32;
                }
            }
        }
        if layer.kind.is_quantizable() {
            trace.entries.push((
                layer.name.clone(),
                Tensor::from_parts_unchecked(with_batch(n, true, out_shape), next.clone()),
            ));
        }
        data = next;
    }
    let output = Tensor::from_parts_unchecked(with_batch(n, batched, model.output_shape()), data);
    Ok((output, trace))
}

fn apply_layer(
    layer: &LayerSpec,
    params: Option<&LayerParams>,
    x: &[f32],
    in_shape: &[usize],
    out_shape: &[usize],
    out: &mut [f32],
) {
    match &layer.kind {
        LayerKind::Conv2d {
            kernel,
            stride,
            padding,
            ..
        } => {
            let p = params.expect("conv params");
            conv2d(x, in_shape, &p.weight, p.bias.as_deref(), *kernel, *stride, *padding, out_shape, out);
        }
        LayerKind::FullyConnected { in_features, .. } => {
            let p = params.expect("fc params");
            for (o, slot) in out.iter_mut().enumerate() {
                let row = &p.weight[o * in_features..(o + 1) * in_features];
                let mut acc = p.bias.as_ref().map_or(0.0, |b| b[o] as f64);
                for (w, a) in row.iter().zip(x) {
                    acc += *w as f64 * *a as f64;
                }
                *slot = acc as f32;
            }
        }
        LayerKind::ReLU => {
            for (o, &v) in out.iter_mut().zip(x) {
                *o = if v > 0.0 { v } else { 0.0 };
            }
        }
        LayerKind::BatchNorm { epsilon, .. } => {
            let per_ch = x.len() / in_shape[0];
            let p = &layer.params;
            let (g, b, m, var) = (p["gamma"].data(), p["beta"].data(), p["mean"].data(), p["var"].data());
            for (i, (o, &v)) in out.iter_mut().zip(x).enumerate() {
                let c = i / per_ch;
                let scale = g[c] as f64 / (var[c] as f64 + epsilon).sqrt();
                *o = ((v as f64 - m[c] as f64) * scale + b[c] as f64) as f32;
            }
        }
        LayerKind::MaxPool { window, stride } => pool(x, in_shape, out_shape, *window, *stride, true, out),
        LayerKind::AvgPool { window, stride } => pool(x, in_shape, out_shape, *window, *stride, false, out),
        LayerKind::Flatten => out.copy_from_slice(x),
    }
}

#[allow(clippy::too_many_arguments)]
fn conv2d(
    x: &[f32],
    in_shape: &[usize],
    weight: &[f32],
    bias: Option<&[f32]>,
    (kh, kw): (usize, usize),
    stride: usize,
    pad: usize,
    out_shape: &[usize],
    out: &mut [f32],
) {
    let (cin, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
    let (cout, oh, ow) = (out_shape[0], out_shape[1], out_shape[2]);
    let mut acc = vec![0.0f64; oh * ow];
    for o in 0..cout {
        acc.fill(bias.map_or(0.0, |b| b[o] as f64));
        for c in 0..cin {
            let plane = &x[c * h * w..(c + 1) * h * w];
            for ky in 0..kh {
                for kx in 0..kw {
                    let wv = weight[((o * cin + c) * kh + ky) * kw + kx] as f64;
                    if wv == 0.0 {
                        continue;
                    }
                    for oy in 0..oh {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let row = &plane[iy as usize * w..(iy as usize + 1) * w];
                        let acc_row = &mut acc[oy * ow..(oy + 1) * ow];
                        for (ox, a) in acc_row.iter_mut().enumerate() {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix >= 0 && ix < w as isize {
                                *a += wv * row[ix as usize] as f64;
                            }
                        }
                    }
                }
            }
        }
        for (dst, &a) in out[o * oh * ow..(o + 1) * oh * ow].iter_mut().zip(&acc) {
            *dst = a as f32;
        }
    }
}

fn pool(x: &[f32], in_shape: &[usize], out_shape: &[usize], window: usize, stride: usize, max: bool, out: &mut [f32]) {
    let (c, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
    let (oh, ow) = (out_shape[1], out_shape[2]);
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut m = f64::NEG_INFINITY;
                let mut s = 0.0f64;
                for dy in 0..window {
                    for dx in 0..window {
                        let v = x[(ch * h + oy * stride + dy) * w + ox * stride + dx] as f64;
                        m = m.max(v);
                        s += v;
                    }
                }
                out[(ch * oh + oy) * ow + ox] = if max { m } else { s / (window * window) as f64 } as f32;
            }
        }
    }
}

/// Floating-point forward pass.
pub fn forward_float(model: &Model, batch: &Tensor) -> Result<(Tensor, ActivationTrace)> {
    run(model, batch, None)
}

/// Simulated fixed-point forward pass.
pub fn forward_quantized(model: &Model, batch: &Tensor, plan: &QuantizationPlan) -> Result<(Tensor, ActivationTrace)> {
    run(model, batch, Some(plan))
}

/// Calibration statistics for the input, every weight and bias tensor, and
/// every pre-activation, aggregated over all batches.
pub fn collect_stats(model: &Model, calibration: &[Tensor]) -> Result<BTreeMap<String, TensorStats>> {
    if calibration.is_empty() {
        return Err(Error::Input("empty calibration set".into()));
    }
    let mut acts: BTreeMap<String, RunningStats> = BTreeMap::new();
    let mut input = RunningStats::default();
    for batch in calibration {
        let partial = batch_stats(model, batch)?;
        input.merge(&partial.0);
        for (k, s) in partial.1 {
            acts.entry(k).or_default().merge(&s);
        }
    }
    let mut out = BTreeMap::new();
    out.insert(INPUT_KEY.into(), input.finish()?);
    for l in model.quantizable_layers() {
        if let Some(w) = l.weight() {
            out.insert(weight_key(&l.name), TensorStats::from_values(w.data())?);
        }
        if let Some(b) = l.bias() {
            out.insert(bias_key(&l.name), TensorStats::from_values(b.data())?);
        }
    }
    for (k, s) in acts {
        out.insert(act_key(&k), s.finish()?);
    }
    Ok(out)
}

/// Input and pre-activation accumulators for one batch; mergeable across
/// batches in any order.
pub fn batch_stats(model: &Model, batch: &Tensor) -> Result<(RunningStats, Vec<(String, RunningStats)>)> {
    let (_, trace) = forward_float(model, batch)?;
    let mut input = RunningStats::default();
    input.extend_f32(batch.data());
    let acts = trace
        .iter()
        .map(|(name, t)| {
            let mut r = RunningStats::default();
            r.extend_f32(t.data());
            (String::from(name), r)
        })
        .collect();
    Ok((input, acts))
}

/// Measured SQNR of every quantizable layer's pre-activation: float trace
/// versus quantized trace on the same batch.
pub fn measure_layer_sqnr(model: &Model, batch: &Tensor, plan: &QuantizationPlan) -> Result<Vec<(String, SqnrDb)>> {
    let (_, float_trace) = forward_float(model, batch)?;
    let (_, quant_trace) = forward_quantized(model, batch, plan)?;
    float_trace
        .iter()
        .zip(quant_trace.iter())
        .map(|((name, f), (_, q))| Ok((String::from(name), measure_sqnr_f32(f.data(), q.data())?)))
        .collect()
}

/// Largest absolute deviation divided by the largest reference magnitude.
pub fn relative_deviation(reference: &[f32], other: &[f32]) -> f64 {
    let scale = reference.iter().fold(0.0f64, |m, &v| m.max((v as f64).abs()));
    let diff = reference
        .iter()
        .zip(other)
        .fold(0.0f64, |m, (&a, &b)| m.max((a as f64 - b as f64).abs()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}
