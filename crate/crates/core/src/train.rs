//! Mini-batch training with rotation augmentation and an Adam optimizer.
//!
//! Every random draw (batch order, augmentation rotations, reparameterization
//! noise) is derived from the run seed and the step/epoch it belongs to, so a
//! run resumed from a checkpoint replays exactly what an uninterrupted run
//! would have done.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::features::{self, FeatureMatrix, FeatureOptions, VoxelGrid};
use crate::gsio::GaussianScene;
use crate::model::{self, LossParts, Model};
use crate::numerics::Tensor;

pub const DEFAULT_LR: f64 = 1e-4;
pub const DEFAULT_BETAS: (f64, f64) = (0.9, 0.999);
pub const DEFAULT_ADAM_EPS: f64 = 1e-8;
pub const DEFAULT_BATCH: usize = 4;

/// Ablation switches, one per row of the ablation table.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablation {
    pub no_normalization: bool,
    pub no_voxel_append: bool,
    pub no_filtering: bool,
    pub no_augmentation: bool,
    pub no_learnable_query: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub steps: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub augmentation: bool,
    #[serde(default)]
    pub ablation: Ablation,
    /// Steps between checkpoints; 0 keeps only the final one.
    pub checkpoint_every: u64,
}

impl TrainConfig {
    pub fn new(seed: u64, steps: u64) -> Self {
        TrainConfig {
            batch_size: DEFAULT_BATCH,
            steps,
            lr: DEFAULT_LR,
            beta1: DEFAULT_BETAS.0,
            beta2: DEFAULT_BETAS.1,
            adam_eps: DEFAULT_ADAM_EPS,
            seed,
            augmentation: true,
            ablation: Ablation::default(),
            checkpoint_every: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.steps == 0 {
            return Err(Error::Config("batch size and steps must be at least 1".into()));
        }
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!("learning rate {} is not usable", self.lr)));
        }
        let beta_ok = |b: f64| (0.0..1.0).contains(&b);
        if !beta_ok(self.beta1) || !beta_ok(self.beta2) || !(self.adam_eps > 0.0) {
            return Err(Error::Config("moment coefficients must lie in [0, 1) and eps > 0".into()));
        }
        Ok(())
    }

    pub fn augments(&self) -> bool {
        self.augmentation && !self.ablation.no_augmentation
    }
}

/// Adam moment accumulators, one pair per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl AdamState {
    pub fn zeros_like(params: &[Tensor]) -> Self {
        let z: Vec<Tensor> = params.iter().map(|t| Tensor::zeros(t.shape())).collect();
        AdamState { step: 0, m: z.clone(), v: z }
    }

    fn check(&self, params: &[Tensor]) -> Result<()> {
        let ok = self.m.len() == params.len()
            && self.v.len() == params.len()
            && params
                .iter()
                .zip(self.m.iter().zip(&self.v))
                .all(|(p, (m, v))| p.shape() == m.shape() && p.shape() == v.shape());
        if ok {
            Ok(())
        } else {
            Err(shape_err("optimizer moments do not match the parameters"))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 1-based index of the completed step.
    pub step: u64,
    pub loss: LossParts,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub model: Model,
    pub adam: AdamState,
    /// Mean batch loss of every step taken by this process (resumed runs start
    /// empty).
    pub history: Vec<StepRecord>,
}

impl TrainState {
    pub fn new(model: Model) -> Self {
        let adam = AdamState::zeros_like(model.params.tensors());
        TrainState { model, adam, history: Vec::new() }
    }

    pub fn resume(model: Model, adam: AdamState) -> Result<Self> {
        adam.check(model.params.tensors())?;
        Ok(TrainState { model, adam, history: Vec::new() })
    }

    pub fn step(&self) -> u64 {
        self.adam.step
    }
}

/// One training example: encoder features and the row-aligned target.
pub type Example = (FeatureMatrix, Vec<f64>);

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub record: StepRecord,
    pub per_scene: Vec<LossParts>,
}

/// Forward/backward over `batch` with noise `eps[j]` for scene `j`, averages
/// the loss and takes one Adam step.
pub fn train_step(state: &mut TrainState, batch: &[Example], eps: &[Tensor], cfg: &TrainConfig) -> Result<StepReport> {
    if batch.is_empty() {
        return Err(Error::EmptyInput);
    }
    if eps.len() != batch.len() {
        return Err(shape_err("one noise tensor is needed per batch entry"));
    }
    let n = state.model.config.n_gaussians;
    if let Some((f, _)) = batch.iter().find(|(f, _)| f.rows != n) {
        return Err(Error::Config(format!("batch scene has {} Gaussians, model expects {n}", f.rows)));
    }
    state.adam.check(state.model.params.tensors())?;
    let step = state.adam.step + 1;

    let model = &state.model;
    let results: Vec<_> = batch
        .par_iter()
        .zip(eps)
        .map(|((f, t), e)| model::loss_and_grad(model, f, t, e))
        .collect::<Result<_>>()?;

    let inv = 1.0 / batch.len() as f64;
    let mut mean = LossParts { total: 0.0, recon: 0.0, kl: 0.0 };
    for (parts, _) in &results {
        mean.total += parts.total * inv;
        mean.recon += parts.recon * inv;
        mean.kl += parts.kl * inv;
    }
    if !mean.total.is_finite() {
        return Err(Error::Divergence { step });
    }

    let params = state.model.params.tensors_mut();
    let mut grads: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
    // fixed reduction order: scene 0, 1, ...
    for (_, g) in &results {
        for (acc, gi) in grads.iter_mut().zip(&g.params) {
            if let Some(gi) = gi {
                for (a, b) in acc.data_mut().iter_mut().zip(gi.data()) {
                    *a += b * inv;
                }
            }
        }
    }

    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let c1 = 1.0 - b1.powi(step as i32);
    let c2 = 1.0 - b2.powi(step as i32);
    let adam = &mut state.adam;
    params
        .par_iter_mut()
        .zip(adam.m.par_iter_mut().zip(adam.v.par_iter_mut()))
        .zip(grads.par_iter())
        .for_each(|((p, (m, v)), g)| {
            let (p, m, v) = (p.data_mut(), m.data_mut(), v.data_mut());
            for i in 0..p.len() {
                let gi = g.data()[i];
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                let update = cfg.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + cfg.adam_eps);
                p[i] = (p[i] - update) as f32 as f64;
            }
        });
    adam.step = step;

    let record = StepRecord { step, loss: mean };
    state.history.push(record);
    Ok(StepReport {
        record,
        per_scene: results.into_iter().map(|(p, _)| p).collect(),
    })
}

/// Preprocessed (normalized, filtered) training scenes and how to featurize them.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub scenes: Vec<GaussianScene>,
    pub grid: VoxelGrid,
    pub features: FeatureOptions,
}

impl Dataset {
    pub fn validate(&self, model: &Model) -> Result<()> {
        let Some(first) = self.scenes.first() else {
            return Err(Error::Config("the training set is empty".into()));
        };
        if let Some(s) = self.scenes.iter().find(|s| s.len() != first.len()) {
            return Err(Error::Config(format!(
                "scenes disagree on N ({} vs {})",
                first.len(),
                s.len()
            )));
        }
        if first.len() != model.config.n_gaussians {
            return Err(Error::Config(format!(
                "scenes have N = {}, model expects {}",
                first.len(),
                model.config.n_gaussians
            )));
        }
        let rest = first.colors_rest.as_ref().map_or(0, |r| r.width);
        let width = features::FeatureLayout::new(&self.features, rest).width();
        if width != model.config.feature_width {
            return Err(Error::Config(format!(
                "features are {width} wide, model expects {}",
                model.config.feature_width
            )));
        }
        Ok(())
    }
}

const STREAM_ORDER: u64 = 1;
const STREAM_ROTATION: u64 = 2;
const STREAM_NOISE: u64 = 3;

/// Independent generator for one `(seed, stream, a, b)` tuple.
pub fn sub_rng(seed: u64, stream: u64, a: u64, b: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    for (chunk, word) in key.chunks_exact_mut(8).zip([seed, stream, a, b]) {
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

fn epoch_order(seed: u64, epoch: u64, count: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..count).collect();
    order.shuffle(&mut sub_rng(seed, STREAM_ORDER, epoch, 0));
    order
}

/// Rotation applied to scene `scene` during `epoch`.
pub fn augmentation_rotation(seed: u64, epoch: u64, scene: usize) -> crate::geom::Mat3 {
    features::random_rotation_with(&mut sub_rng(seed, STREAM_ROTATION, epoch, scene as u64))
}

/// Noise for batch slot `slot` of 1-based step `step`.
pub fn step_noise(config: &model::ModelConfig, seed: u64, step: u64, slot: usize) -> Tensor {
    model::sample_eps(config, &mut sub_rng(seed, STREAM_NOISE, step, slot as u64))
}

/// `(epoch, scene index)` of every batch slot of 1-based step `step`.
pub fn batch_plan(seed: u64, step: u64, batch: usize, scenes: usize) -> Vec<(u64, usize)> {
    let s = scenes as u64;
    (0..batch as u64)
        .map(|j| {
            let pos = (step - 1) * batch as u64 + j;
            let epoch = pos / s;
            (epoch, epoch_order(seed, epoch, scenes)[(pos % s) as usize])
        })
        .collect()
}

/// Runs steps `state.step()+1 ..= cfg.steps`, calling `on_step` after each.
pub fn run_training(
    data: &Dataset,
    state: &mut TrainState,
    cfg: &TrainConfig,
    mut on_step: impl FnMut(&StepReport, &TrainState) -> Result<()>,
) -> Result<()> {
    cfg.validate()?;
    data.validate(&state.model)?;
    let mut cache: HashMap<(u64, usize), Example> = HashMap::new();
    let fixed: Vec<Example> = if cfg.augments() {
        Vec::new()
    } else {
        data.scenes
            .iter()
            .map(|s| features::featurize(s, &data.grid, &data.features))
            .collect()
    };
    while state.step() < cfg.steps {
        let step = state.step() + 1;
        let plan = batch_plan(cfg.seed, step, cfg.batch_size, data.scenes.len());
        let batch: Vec<Example> = if cfg.augments() {
            let current = plan.iter().map(|&(e, _)| e).min().unwrap_or(0);
            cache.retain(|&(e, _), _| e >= current);
            let missing: Vec<(u64, usize)> = plan
                .iter()
                .copied()
                .filter(|k| !cache.contains_key(k))
                .collect::<std::collections::BTreeSet<_>>()
                .into_iter()
                .collect();
            let built: Vec<Example> = missing
                .par_iter()
                .map(|&(e, i)| {
                    let r = augmentation_rotation(cfg.seed, e, i);
                    features::featurize(&features::rotate_scene(&data.scenes[i], &r), &data.grid, &data.features)
                })
                .collect();
            cache.extend(missing.into_iter().zip(built));
            plan.iter().map(|k| cache[k].clone()).collect()
        } else {
            plan.iter().map(|&(_, i)| fixed[i].clone()).collect()
        };
        let eps: Vec<Tensor> = (0..batch.len())
            .map(|j| step_noise(&state.model.config, cfg.seed, step, j))
            .collect();
        let report = train_step(state, &batch, &eps, cfg)?;
        on_step(&report, state)?;
    }
    Ok(())
}

/// One loss-log line: step, total, reconstruction and KL, tab-separated.
pub fn log_line(r: &StepRecord) -> String {
    let mut s = String::new();
    writeln!(s, "{}\t{}\t{}\t{}", r.step, r.loss.total, r.loss.recon, r.loss.kl).unwrap();
    s
}
