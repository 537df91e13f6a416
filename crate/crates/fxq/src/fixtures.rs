//! Seeded synthetic models.
//!
//! Parameter counts follow the published architectures exactly; values are
//! Gaussian (He-scaled so activations neither vanish nor explode), since the
//! original trained weights are not available.

use fxq_core::ir::{LayerKind, LayerSpec, Model, Tensor};
use fxq_core::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal, StandardNormal, Uniform};

/// Fixture names accepted by [`by_name`].
pub const NAMES: [&str; 4] = ["cifar", "alexnet", "chain", "conv-bn"];

pub fn by_name(name: &str, seed: u64) -> Option<Result<Model>> {
    match name {
        "cifar" => Some(cifar(seed)),
        "alexnet" => Some(alexnet(seed)),
        "chain" => Some(gaussian_chain(seed, &ChainConfig::default())),
        "conv-bn" => Some(conv_bn(seed)),
        _ => None,
    }
}

fn gaussian(rng: &mut ChaCha20Rng, shape: Vec<usize>, std_dev: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let dist = Normal::new(0.0, std_dev).expect("finite std");
    let data = (0..n).map(|_| dist.sample(rng) as f32).collect();
    Tensor::new(shape, data).expect("finite samples")
}

fn conv(rng: &mut ChaCha20Rng, name: &str, cin: usize, cout: usize, k: usize, stride: usize, pad: usize) -> LayerSpec {
    let std_dev = (2.0 / (cin * k * k) as f64).sqrt();
    let w = gaussian(rng, vec![cout, cin, k, k], std_dev);
    LayerSpec::conv2d(name, cin, cout, (k, k), stride, pad, w, None)
}

fn fc(rng: &mut ChaCha20Rng, name: &str, fin: usize, fout: usize) -> LayerSpec {
    let w = gaussian(rng, vec![fout, fin], (2.0 / fin as f64).sqrt());
    LayerSpec::fully_connected(name, fin, fout, w, None)
}

fn relu(name: &str) -> LayerSpec {
    LayerSpec::new(name, LayerKind::ReLU)
}

fn max_pool(name: &str, window: usize, stride: usize) -> LayerSpec {
    LayerSpec::new(name, LayerKind::MaxPool { window, stride })
}

/// CIFAR-10 network: seven quantizable layers, no biases, 3×24×24 input.
///
/// Output sizes: conv0 22, conv1 12, conv2 10, conv3 8, conv4 5, conv5 2.
pub fn cifar(seed: u64) -> Result<Model> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let layers = vec![
        conv(&mut rng, "conv0", 3, 256, 3, 1, 0),
        relu("relu0"),
        max_pool("pool0", 3, 2),
        conv(&mut rng, "conv1", 256, 128, 3, 1, 2),
        relu("relu1"),
        conv(&mut rng, "conv2", 128, 256, 3, 1, 0),
        relu("relu2"),
        conv(&mut rng, "conv3", 256, 256, 3, 1, 0),
        relu("relu3"),
        max_pool("pool3", 2, 1),
        conv(&mut rng, "conv4", 256, 256, 3, 1, 0),
        relu("relu4"),
        conv(&mut rng, "conv5", 256, 128, 7, 2, 2),
        relu("relu5"),
        LayerSpec::new("flatten", LayerKind::Flatten),
        fc(&mut rng, "fc0", 512, 10),
    ];
    Model::new(vec![3, 24, 24], layers)
}

/// AlexNet-like ImageNet network: five convolutions and two fully-connected
/// layers, no biases, 3×224×224 input.
///
/// Output sizes: conv1 112, conv2 28, conv3..conv5 14; fc1 sees 160·7·7.
pub fn alexnet(seed: u64) -> Result<Model> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let layers = vec![
        conv(&mut rng, "conv1", 3, 96, 7, 2, 3),
        relu("relu1"),
        max_pool("pool1", 2, 2),
        conv(&mut rng, "conv2", 96, 160, 5, 2, 2),
        relu("relu2"),
        max_pool("pool2", 2, 2),
        conv(&mut rng, "conv3", 160, 192, 3, 1, 1),
        relu("relu3"),
        conv(&mut rng, "conv4", 192, 192, 3, 1, 1),
        relu("relu4"),
        conv(&mut rng, "conv5", 192, 160, 3, 1, 1),
        relu("relu5"),
        max_pool("pool5", 2, 2),
        LayerSpec::new("flatten", LayerKind::Flatten),
        fc(&mut rng, "fc1", 7840, 2048),
        relu("relu6"),
        fc(&mut rng, "fc2", 2048, 2048),
    ];
    Model::new(vec![3, 224, 224], layers)
}

#[derive(Debug, Clone)]
pub struct ChainConfig {
    pub layers: usize,
    pub channels: usize,
    pub spatial: usize,
    pub relu: bool,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            layers: 5,
            channels: 16,
            spatial: 12,
            relu: false,
        }
    }
}

/// Chain of 3×3 same-padded convolutions `conv1..convN` with Gaussian
/// weights, optionally separated by ReLU.
pub fn gaussian_chain(seed: u64, cfg: &ChainConfig) -> Result<Model> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let c = cfg.channels;
    let mut layers = Vec::new();
    for i in 1..=cfg.layers {
        let mut l = conv(&mut rng, &format!("conv{i}"), c, c, 3, 1, 1);
        if !cfg.relu {
            // unit gain without the ReLU halving
            l.params
                .insert("weight".into(), l.weight().expect("conv weight").map_data(|w| w / 2f32.sqrt()));
        }
        layers.push(l);
        if cfg.relu && i < cfg.layers {
            layers.push(relu(&format!("relu{i}")));
        }
    }
    Model::new(vec![c, cfg.spatial, cfg.spatial], layers)
}

/// Small conv → batch-norm → ReLU → conv → batch-norm network with random
/// normalization parameters and conv biases.
pub fn conv_bn(seed: u64) -> Result<Model> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut layers = Vec::new();
    let chans = [3usize, 4, 6];
    for i in 0..2 {
        let (cin, cout) = (chans[i], chans[i + 1]);
        let bias = gaussian(&mut rng, vec![cout], 0.1);
        let mut l = conv(&mut rng, &format!("conv{i}"), cin, cout, 3, 1, 1);
        l.params.insert("bias".into(), bias);
        layers.push(l);
        let uni = |rng: &mut ChaCha20Rng, lo: f32, hi: f32| {
            let d = Uniform::new(lo, hi).expect("valid range");
            Tensor::new(vec![cout], (0..cout).map(|_| d.sample(rng)).collect()).expect("finite")
        };
        let bn = LayerSpec::new(
            format!("bn{i}"),
            LayerKind::BatchNorm {
                channels: cout,
                epsilon: 1e-5,
            },
        )
        .with_param("gamma", uni(&mut rng, 0.5, 2.0))
        .with_param("beta", gaussian(&mut rng, vec![cout], 0.2))
        .with_param("mean", gaussian(&mut rng, vec![cout], 0.3))
        .with_param("var", uni(&mut rng, 0.2, 3.0));
        layers.push(bn);
        if i == 0 {
            layers.push(relu("relu0"));
        }
    }
    Model::new(vec![3, 8, 8], layers)
}

/// `count` unit-Gaussian inputs stacked along a leading batch axis.
pub fn gaussian_batch(input_shape: &[usize], count: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut shape = vec![count];
    shape.extend_from_slice(input_shape);
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| StandardNormal.sample(&mut rng)).map(|v: f64| v as f32).collect();
    Tensor::new(shape, data).expect("finite samples")
}
