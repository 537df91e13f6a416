//! Model files: a JSON manifest plus one raw little-endian `f32` blob per
//! parameter tensor.
//!
//! ```json
//! {
//!   "version": 1,
//!   "input_shape": [2],
//!   "layers": [
//!     { "name": "fc", "kind": "fully_connected", "in_features": 2, "out_features": 2,
//!       "params": { "weight": { "file": "fc.weight.f32", "shape": [2, 2] } } }
//!   ]
//! }
//! ```
//!
//! Blob paths are relative to the manifest's directory.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use fxq_core::ir::{LayerKind, LayerSpec, Model, Tensor};
use serde::{Deserialize, Serialize};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("cannot read `{path}`: {source}")]
    Read { path: PathBuf, source: io::Error },
    #[error("cannot write `{path}`: {source}")]
    Write { path: PathBuf, source: io::Error },
    #[error("malformed manifest `{path}`: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("unsupported manifest version {0} (expected {MANIFEST_VERSION})")]
    Version(u32),
    #[error("missing blob `{path}` for layer `{layer}`")]
    MissingBlob { layer: String, path: PathBuf },
    #[error("shape mismatch in layer `{layer}`: blob `{path}` holds {bytes} bytes, shape {shape:?} needs {expected}")]
    BlobLength {
        layer: String,
        path: PathBuf,
        bytes: u64,
        shape: Vec<usize>,
        expected: u64,
    },
    #[error(transparent)]
    Model(#[from] fxq_core::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ManifestDoc {
    version: u32,
    input_shape: Vec<usize>,
    layers: Vec<LayerDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LayerDoc {
    name: String,
    #[serde(flatten)]
    kind: KindDoc,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    params: BTreeMap<String, ParamDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum KindDoc {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: [usize; 2],
        stride: usize,
        padding: usize,
    },
    FullyConnected {
        in_features: usize,
        out_features: usize,
    },
    Relu,
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

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ParamDoc {
    file: String,
    shape: Vec<usize>,
}

impl From<&LayerKind> for KindDoc {
    fn from(kind: &LayerKind) -> Self {
        match *kind {
            LayerKind::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => KindDoc::Conv2d {
                in_channels,
                out_channels,
                kernel: [kernel.0, kernel.1],
                stride,
                padding,
            },
            LayerKind::FullyConnected {
                in_features,
                out_features,
            } => KindDoc::FullyConnected {
                in_features,
                out_features,
            },
            LayerKind::ReLU => KindDoc::Relu,
            LayerKind::BatchNorm { channels, epsilon } => KindDoc::BatchNorm { channels, epsilon },
            LayerKind::MaxPool { window, stride } => KindDoc::MaxPool { window, stride },
            LayerKind::AvgPool { window, stride } => KindDoc::AvgPool { window, stride },
            LayerKind::Flatten => KindDoc::Flatten,
        }
    }
}

impl From<KindDoc> for LayerKind {
    fn from(doc: KindDoc) -> Self {
        match doc {
            KindDoc::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => LayerKind::Conv2d {
                in_channels,
                out_channels,
                kernel: (kernel[0], kernel[1]),
                stride,
                padding,
            },
            KindDoc::FullyConnected {
                in_features,
                out_features,
            } => LayerKind::FullyConnected {
                in_features,
                out_features,
            },
            KindDoc::Relu => LayerKind::ReLU,
            KindDoc::BatchNorm { channels, epsilon } => LayerKind::BatchNorm { channels, epsilon },
            KindDoc::MaxPool { window, stride } => LayerKind::MaxPool { window, stride },
            KindDoc::AvgPool { window, stride } => LayerKind::AvgPool { window, stride },
            KindDoc::Flatten => LayerKind::Flatten,
        }
    }
}

/// Read a headerless little-endian `f32` blob.
pub fn read_blob(path: &Path) -> Result<Vec<f32>, ManifestError> {
    let bytes = fs::read(path).map_err(|source| ManifestError::Read {
        path: path.to_owned(),
        source,
    })?;
    if bytes.len() % 4 != 0 {
        return Err(ManifestError::Read {
            path: path.to_owned(),
            source: io::Error::new(
                io::ErrorKind::InvalidData,
                format!("{} bytes is not a whole number of f32 values", bytes.len()),
            ),
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn write_blob(path: &Path, values: &[f32]) -> Result<(), ManifestError> {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(path, bytes).map_err(|source| ManifestError::Write {
        path: path.to_owned(),
        source,
    })
}

/// Load a calibration or evaluation blob as a batch of model inputs:
/// the value count must be a positive multiple of the input size.
pub fn read_batch(path: &Path, input_shape: &[usize]) -> Result<Tensor, ManifestError> {
    let data = read_blob(path)?;
    let per_item: usize = input_shape.iter().product();
    if data.is_empty() || per_item == 0 || data.len() % per_item != 0 {
        return Err(ManifestError::Model(fxq_core::Error::Input(format!(
            "`{}` holds {} values, not a whole batch of inputs shaped {input_shape:?}",
            path.display(),
            data.len()
        ))));
    }
    let mut shape = vec![data.len() / per_item];
    shape.extend_from_slice(input_shape);
    Ok(Tensor::new(shape, data)?)
}

pub fn load_model(manifest_path: &Path) -> Result<Model, ManifestError> {
    let text = fs::read_to_string(manifest_path).map_err(|source| ManifestError::Read {
        path: manifest_path.to_owned(),
        source,
    })?;
    let doc: ManifestDoc = serde_json::from_str(&text).map_err(|source| ManifestError::Parse {
        path: manifest_path.to_owned(),
        source,
    })?;
    if doc.version != MANIFEST_VERSION {
        return Err(ManifestError::Version(doc.version));
    }
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let mut layers = Vec::with_capacity(doc.layers.len());
    for l in doc.layers {
        let mut spec = LayerSpec::new(l.name.clone(), l.kind.into());
        for (pname, p) in l.params {
            let path = dir.join(&p.file);
            let meta = fs::metadata(&path).map_err(|_| ManifestError::MissingBlob {
                layer: l.name.clone(),
                path: path.clone(),
            })?;
            let expected = p.shape.iter().product::<usize>() as u64 * 4;
            if meta.len() != expected || p.shape.is_empty() {
                return Err(ManifestError::BlobLength {
                    layer: l.name.clone(),
                    path,
                    bytes: meta.len(),
                    shape: p.shape,
                    expected,
                });
            }
            let data = read_blob(&path)?;
            let tensor = Tensor::new(p.shape, data).map_err(|e| {
                ManifestError::Model(fxq_core::Error::ShapeMismatch {
                    layer: l.name.clone(),
                    detail: e.to_string(),
                })
            })?;
            spec.params.insert(pname, tensor);
        }
        layers.push(spec);
    }
    Ok(Model::new(doc.input_shape, layers)?)
}

/// Write the manifest and one blob per parameter next to it.
pub fn save_model(model: &Model, manifest_path: &Path) -> Result<(), ManifestError> {
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let mut layers = Vec::with_capacity(model.layers().len());
    for l in model.layers() {
        let mut params = BTreeMap::new();
        for (pname, t) in &l.params {
            let file = format!("{}.{}.f32", l.name, pname);
            write_blob(&dir.join(&file), t.data())?;
            params.insert(
                pname.clone(),
                ParamDoc {
                    file,
                    shape: t.shape().to_vec(),
                },
            );
        }
        layers.push(LayerDoc {
            name: l.name.clone(),
            kind: (&l.kind).into(),
            params,
        });
    }
    let doc = ManifestDoc {
        version: MANIFEST_VERSION,
        input_shape: model.input_shape().to_vec(),
        layers,
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("manifest serializes");
    text.push('\n');
    fs::write(manifest_path, text).map_err(|source| ManifestError::Write {
        path: manifest_path.to_owned(),
        source,
    })
}
