//! Checkpoint directories: `manifest.json` describing the model and tensor
//! table, `params.bin` with the parameters as little-endian `f32`, and
//! optionally `optim.bin` with the Adam moments as little-endian `f64`.
//!
//! Parameters are kept f32-representable in memory, so save → load → save is
//! byte-identical.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::container::write_atomic;
use crate::error::{shape_err, Error, Result};
use crate::features::{FeatureLayout, FeatureOptions, VoxelGrid};
use crate::model::{self, Model, ModelConfig, ModelParams};
use crate::numerics::Tensor;
use crate::train::{AdamState, TrainConfig};

pub const MANIFEST: &str = "manifest.json";
pub const PARAMS: &str = "params.bin";
pub const OPTIM: &str = "optim.bin";
const FORMAT: &str = "splatok-checkpoint";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub features: FeatureOptions,
    pub grid: VoxelGrid,
    pub optimizer: Option<AdamState>,
    pub train: Option<TrainConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// Offset into `params.bin`, in values.
    offset: usize,
    len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    config: ModelConfig,
    features: FeatureOptions,
    layout: FeatureLayout,
    grid: VoxelGrid,
    step: Option<u64>,
    train: Option<TrainConfig>,
    tensors: Vec<TensorEntry>,
}

/// Feature layout a model with `config` consumes.
pub fn layout_for(config: &ModelConfig, features: &FeatureOptions) -> FeatureLayout {
    let base = FeatureLayout::new(features, 0).width();
    let rest = if features.sh_rest { config.feature_width.saturating_sub(base) } else { 0 };
    FeatureLayout::new(features, rest)
}

pub fn save(dir: &Path, ckpt: &Checkpoint) -> Result<()> {
    let params = ckpt.model.params.tensors();
    let mut tensors = Vec::with_capacity(params.len());
    let mut offset = 0;
    let mut blob = Vec::with_capacity(4 * ckpt.model.params.count());
    for (spec, t) in ckpt.model.params.specs().iter().zip(params) {
        tensors.push(TensorEntry { name: spec.name.clone(), shape: t.shape().to_vec(), offset, len: t.len() });
        offset += t.len();
        for &v in t.data() {
            let f = v as f32;
            if f as f64 != v && v.is_finite() {
                return Err(Error::Config(format!("parameter {} is not f32-representable", spec.name)));
            }
            blob.extend_from_slice(&f.to_le_bytes());
        }
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        version: VERSION,
        config: ckpt.model.config.clone(),
        features: ckpt.features,
        layout: layout_for(&ckpt.model.config, &ckpt.features),
        grid: ckpt.grid,
        step: ckpt.optimizer.as_ref().map(|a| a.step),
        train: ckpt.train.clone(),
        tensors,
    };
    let mut json = serde_json::to_vec_pretty(&manifest)?;
    json.push(b'\n');

    fs::create_dir_all(dir)?;
    write_atomic(&dir.join(PARAMS), &blob)?;
    match &ckpt.optimizer {
        Some(adam) => {
            let mut bytes = Vec::with_capacity(16 * ckpt.model.params.count());
            for t in adam.m.iter().chain(&adam.v) {
                for &v in t.data() {
                    bytes.extend_from_slice(&v.to_le_bytes());
                }
            }
            write_atomic(&dir.join(OPTIM), &bytes)?;
        }
        None => match fs::remove_file(dir.join(OPTIM)) {
            Err(e) if e.kind() != std::io::ErrorKind::NotFound => return Err(e.into()),
            _ => {}
        },
    }
    // the manifest goes last so a readable manifest implies complete blobs
    write_atomic(&dir.join(MANIFEST), &json)
}

pub fn load(dir: &Path) -> Result<Checkpoint> {
    let manifest: Manifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST))?)?;
    if manifest.format != FORMAT || manifest.version != VERSION {
        return Err(Error::Parse(format!(
            "unsupported checkpoint {} v{}",
            manifest.format, manifest.version
        )));
    }
    manifest.config.validate()?;
    let specs = model::param_specs(&manifest.config);
    if specs.len() != manifest.tensors.len() {
        return Err(shape_err("checkpoint tensor table does not match the model"));
    }
    let blob = fs::read(dir.join(PARAMS))?;
    let total: usize = manifest.tensors.iter().map(|t| t.len).sum();
    if blob.len() != 4 * total {
        return Err(Error::TruncatedPayload { expected: 4 * total, found: blob.len() });
    }
    let values: Vec<f64> = blob
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    let mut tensors = Vec::with_capacity(specs.len());
    for (spec, entry) in specs.iter().zip(&manifest.tensors) {
        if spec.name != entry.name || spec.shape != entry.shape {
            return Err(shape_err(format!("checkpoint tensor {} does not match {}", entry.name, spec.name)));
        }
        let data = values
            .get(entry.offset..entry.offset + entry.len)
            .ok_or_else(|| shape_err(format!("tensor {} runs past params.bin", entry.name)))?;
        tensors.push(Tensor::new(entry.shape.clone(), data.to_vec())?);
    }
    let params = ModelParams::from_tensors(&manifest.config, tensors)?;

    let optimizer = match manifest.step {
        None => None,
        Some(step) => {
            let bytes = fs::read(dir.join(OPTIM))?;
            if bytes.len() != 16 * total {
                return Err(Error::TruncatedPayload { expected: 16 * total, found: bytes.len() });
            }
            let mut vals = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
            let mut take = |shape: &[usize]| {
                let n = shape.iter().product();
                Tensor::new(shape.to_vec(), vals.by_ref().take(n).collect())
            };
            let m = params.tensors().iter().map(|t| take(t.shape())).collect::<Result<Vec<_>>>()?;
            let v = params.tensors().iter().map(|t| take(t.shape())).collect::<Result<Vec<_>>>()?;
            Some(AdamState { step, m, v })
        }
    };
    Ok(Checkpoint {
        model: Model { config: manifest.config, params },
        features: manifest.features,
        grid: manifest.grid,
        optimizer,
        train: manifest.train,
    })
}
