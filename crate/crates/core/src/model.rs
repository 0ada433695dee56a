//! The splat VAE: a learnable canonical query cross-attends over the per-Gaussian
//! features, self-attention blocks refine the `M` tokens, and two linear heads
//! give the latent mean and log-variance. The decoder projects a latent back
//! to `M` tokens, runs its own self-attention stack, and an MLP tail emits
//! `g = N / M` Gaussians (14 raw channels each) per token.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::features::{self, TARGET_WIDTH};
use crate::numerics::{self, AttentionWeights, Graph, Gradients, Tensor, Var};

pub const DEFAULT_KL_WEIGHT: f64 = 1e-6;
pub const LOGVAR_MIN: f64 = -30.0;
pub const LOGVAR_MAX: f64 = 20.0;
const LN_EPS: f64 = 1e-5;
const FF_MULT: usize = 4;
const QUERY_INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_gaussians: usize,
    pub feature_width: usize,
    pub query_tokens: usize,
    pub width: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub encoder_blocks: usize,
    pub decoder_blocks: usize,
    /// `[H, W, D]`.
    pub latent_shape: [usize; 3],
    pub bands: usize,
    pub kl_weight: f64,
    /// Half-extent of the canonical volume the query lattice spans.
    pub radius: f64,
    /// `false` swaps the cross-attention tokenizer for full self-attention
    /// over all `N` inputs followed by mean-pooling to `M` tokens.
    #[serde(default = "default_true")]
    pub learnable_query: bool,
}

fn default_true() -> bool {
    true
}

impl ModelConfig {
    /// Desk-scale configuration used throughout the tests.
    pub fn toy() -> Self {
        ModelConfig {
            n_gaussians: 256,
            feature_width: 113,
            query_tokens: 16,
            width: 96,
            heads: 4,
            head_dim: 24,
            encoder_blocks: 2,
            decoder_blocks: 2,
            latent_shape: [8, 8, 4],
            bands: features::DEFAULT_BANDS,
            kl_weight: DEFAULT_KL_WEIGHT,
            radius: 1.0,
            learnable_query: true,
        }
    }

    /// Full-size architecture. `N` is 39 936 (156 Gaussians per token), the
    /// largest multiple of 256 below 40 000.
    pub fn full() -> Self {
        ModelConfig {
            n_gaussians: 39_936,
            feature_width: 113,
            query_tokens: 256,
            width: 768,
            heads: 12,
            head_dim: 64,
            encoder_blocks: 8,
            decoder_blocks: 16,
            latent_shape: [64, 64, 4],
            bands: features::DEFAULT_BANDS,
            kl_weight: DEFAULT_KL_WEIGHT,
            radius: 1.0,
            learnable_query: true,
        }
    }

    pub fn latent_size(&self) -> usize {
        self.latent_shape.iter().product()
    }

    pub fn per_token(&self) -> usize {
        self.n_gaussians / self.query_tokens
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.n_gaussians,
            self.feature_width,
            self.query_tokens,
            self.width,
            self.heads,
            self.head_dim,
            self.bands,
        ]
        .iter()
        .chain(&self.latent_shape)
        .all(|&v| v > 0);
        if !positive {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        if self.width != self.heads * self.head_dim {
            return Err(Error::Config(format!(
                "width {} != heads {} x head dim {}",
                self.width, self.heads, self.head_dim
            )));
        }
        if self.width < 3 {
            // query tokens start with their raw lattice position
            return Err(Error::Config(format!("width {} is below 3", self.width)));
        }
        if self.n_gaussians % self.query_tokens != 0 {
            return Err(Error::Config(format!(
                "{} Gaussians do not split evenly over {} tokens",
                self.n_gaussians, self.query_tokens
            )));
        }
        if !(self.kl_weight >= 0.0) || !(self.radius > 0.0) {
            return Err(Error::Config("kl weight must be >= 0 and radius > 0".into()));
        }
        Ok(())
    }

    /// Number of attention scores computed per forward pass (all heads).
    pub fn attention_scores(&self) -> usize {
        let (n, m, h) = (self.n_gaussians, self.query_tokens, self.heads);
        let tokenizer = if self.learnable_query { m * n } else { n * n };
        h * (tokenizer + (self.encoder_blocks + self.decoder_blocks) * m * m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Init {
    Xavier { fan_in: usize, fan_out: usize },
    Zeros,
    Ones,
    Query,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    init: Init,
}

fn spec(name: String, shape: Vec<usize>, init: Init) -> ParamSpec {
    ParamSpec { name, shape, init }
}

fn linear_specs(out: &mut Vec<ParamSpec>, prefix: &str, fan_in: usize, fan_out: usize) {
    out.push(spec(format!("{prefix}.w"), vec![fan_in, fan_out], Init::Xavier { fan_in, fan_out }));
    out.push(spec(format!("{prefix}.b"), vec![fan_out], Init::Zeros));
}

fn norm_specs(out: &mut Vec<ParamSpec>, prefix: &str, width: usize) {
    out.push(spec(format!("{prefix}.g"), vec![width], Init::Ones));
    out.push(spec(format!("{prefix}.b"), vec![width], Init::Zeros));
}

fn block_specs(out: &mut Vec<ParamSpec>, prefix: &str, w: usize) {
    for p in ["q", "k", "v", "o"] {
        linear_specs(out, &format!("{prefix}.attn.{p}"), w, w);
    }
    norm_specs(out, &format!("{prefix}.ln1"), w);
    linear_specs(out, &format!("{prefix}.ff1"), w, FF_MULT * w);
    linear_specs(out, &format!("{prefix}.ff2"), FF_MULT * w, w);
    norm_specs(out, &format!("{prefix}.ln2"), w);
}

/// Every learnable tensor with its shape, in canonical order.
pub fn param_specs(config: &ModelConfig) -> Vec<ParamSpec> {
    let (c, m, w, l) = (
        config.feature_width,
        config.query_tokens,
        config.width,
        config.latent_size(),
    );
    let mut out = Vec::new();
    linear_specs(&mut out, "enc.key", c, w);
    norm_specs(&mut out, "enc.key.ln", w);
    if config.learnable_query {
        linear_specs(&mut out, "enc.value", c, w);
        norm_specs(&mut out, "enc.value.ln", w);
        out.push(spec("enc.query".into(), vec![m, w], Init::Query));
    }
    block_specs(&mut out, "enc.tokenizer", w);
    for i in 0..config.encoder_blocks {
        block_specs(&mut out, &format!("enc.block{i}"), w);
    }
    linear_specs(&mut out, "enc.mu", m * w, l);
    linear_specs(&mut out, "enc.logvar", m * w, l);
    linear_specs(&mut out, "dec.in", l, m * w);
    norm_specs(&mut out, "dec.in.ln", w);
    for i in 0..config.decoder_blocks {
        block_specs(&mut out, &format!("dec.block{i}"), w);
    }
    linear_specs(&mut out, "dec.tail1", w, w);
    linear_specs(&mut out, "dec.tail2", w, w);
    linear_specs(&mut out, "dec.tail3", w, config.per_token() * TARGET_WIDTH);
    out
}

/// Factor `m` into a near-cubic `a × b × c` lattice with `a ≥ b ≥ c`.
pub fn lattice_dims(m: usize) -> [usize; 3] {
    let mut best = [m, 1, 1];
    for c in 1..=m {
        if m % c != 0 {
            continue;
        }
        for b in c..=m / c {
            if (m / c) % b != 0 {
                continue;
            }
            let a = m / c / b;
            if a < b {
                continue;
            }
            if a - c < best[0] - best[2] {
                best = [a, b, c];
            }
        }
    }
    best
}

/// Cell centers of the `lattice_dims(m)` grid over `[-r, r]³`, x slowest.
pub fn query_lattice(m: usize, r: f64) -> Vec<[f64; 3]> {
    let dims = lattice_dims(m);
    let coord = |i: usize, n: usize| -r + (i as f64 + 0.5) * 2.0 * r / n as f64;
    let mut out = Vec::with_capacity(m);
    for i in 0..dims[0] {
        for j in 0..dims[1] {
            for k in 0..dims[2] {
                out.push([coord(i, dims[0]), coord(j, dims[1]), coord(k, dims[2])]);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    specs: Vec<ParamSpec>,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl ModelParams {
    /// Wraps tensors that must match `param_specs(config)` one to one.
    pub fn from_tensors(config: &ModelConfig, tensors: Vec<Tensor>) -> Result<Self> {
        let specs = param_specs(config);
        if specs.len() != tensors.len() {
            return Err(shape_err(format!("expected {} tensors, got {}", specs.len(), tensors.len())));
        }
        for (s, t) in specs.iter().zip(&tensors) {
            if s.shape != t.shape() {
                return Err(shape_err(format!("{}: expected {:?}, got {:?}", s.name, s.shape, t.shape())));
            }
        }
        let index = specs.iter().enumerate().map(|(i, s)| (s.name.clone(), i)).collect();
        Ok(ModelParams { specs, tensors, index })
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index.get(name).map(|&i| &mut self.tensors[i])
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }
}

/// Rounds every value to the nearest f32 so checkpoints store parameters exactly.
pub fn round_to_f32(values: &mut [f64]) {
    for v in values {
        *v = *v as f32 as f64;
    }
}

pub fn init_params(config: &ModelConfig, seed: u64) -> Result<ModelParams> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let query_noise = Normal::new(0.0, QUERY_INIT_STD).unwrap();
    let tensors = param_specs(config)
        .iter()
        .map(|s| {
            let n: usize = s.shape.iter().product();
            let mut data = match s.init {
                Init::Zeros => vec![0.0; n],
                Init::Ones => vec![1.0; n],
                Init::Xavier { fan_in, fan_out } => {
                    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    (0..n).map(|_| rng.random_range(-a..a)).collect()
                }
                Init::Query => {
                    let w = s.shape[1];
                    let lattice = query_lattice(s.shape[0], config.radius);
                    let mut d = Vec::with_capacity(n);
                    for p in lattice {
                        d.extend_from_slice(&p);
                        d.extend((3..w).map(|_| query_noise.sample(&mut rng)));
                    }
                    d
                }
            };
            round_to_f32(&mut data);
            Tensor::new(s.shape.clone(), data)
        })
        .collect::<Result<Vec<_>>>()?;
    ModelParams::from_tensors(config, tensors)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let params = init_params(&config, seed)?;
        Ok(Model { config, params })
    }
}

/// Mean, clamped log-variance and sample of one latent, each `[H, W, D]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCode {
    pub mu: Tensor,
    pub logvar: Tensor,
    pub z: Tensor,
}

/// Builds the forward pass on a graph.
struct Net<'a, 'p> {
    g: &'a mut Graph<'p>,
    params: &'a ModelParams,
    config: &'a ModelConfig,
}

impl Net<'_, '_> {
    fn p(&mut self, name: &str) -> Var {
        let i = self.params.position(name).unwrap_or_else(|| panic!("missing parameter {name}"));
        self.g.param(i)
    }

    fn linear(&mut self, x: Var, prefix: &str) -> Result<Var> {
        let (w, b) = (self.p(&format!("{prefix}.w")), self.p(&format!("{prefix}.b")));
        self.g.linear(x, w, b)
    }

    fn norm(&mut self, x: Var, prefix: &str) -> Result<Var> {
        let (gain, bias) = (self.p(&format!("{prefix}.g")), self.p(&format!("{prefix}.b")));
        self.g.layer_norm(x, gain, bias, LN_EPS)
    }

    fn attn_weights(&mut self, prefix: &str) -> AttentionWeights {
        let mut lw = |p: &str| (self.p(&format!("{prefix}.attn.{p}.w")), self.p(&format!("{prefix}.attn.{p}.b")));
        let (wq, bq) = lw("q");
        let (wk, bk) = lw("k");
        let (wv, bv) = lw("v");
        let (wo, bo) = lw("o");
        AttentionWeights { wq, bq, wk, bk, wv, bv, wo, bo }
    }

    /// Post-norm transformer block: `h = LN(x + Attn(x, k, v))`, `LN(h + FF(h))`.
    fn block(&mut self, x: Var, k: Var, v: Var, prefix: &str) -> Result<Var> {
        let w = self.attn_weights(prefix);
        let a = self.g.attention(x, k, v, &w, self.config.heads)?;
        let h = self.g.add(x, a)?;
        let h = self.norm(h, &format!("{prefix}.ln1"))?;
        let f = self.linear(h, &format!("{prefix}.ff1"))?;
        let f = self.g.gelu(f);
        let f = self.linear(f, &format!("{prefix}.ff2"))?;
        let o = self.g.add(h, f)?;
        self.norm(o, &format!("{prefix}.ln2"))
    }

    fn encode(&mut self, features: Var) -> Result<(Var, Var)> {
        let c = self.config;
        let key = self.linear(features, "enc.key")?;
        let key = self.norm(key, "enc.key.ln")?;
        let mut tokens = if c.learnable_query {
            let value = self.linear(features, "enc.value")?;
            let value = self.norm(value, "enc.value.ln")?;
            let query = self.p("enc.query");
            self.block(query, key, value, "enc.tokenizer")?
        } else {
            let full = self.block(key, key, key, "enc.tokenizer")?;
            let g = c.per_token();
            let mut pool = vec![0.0; c.query_tokens * c.n_gaussians];
            for t in 0..c.query_tokens {
                for j in 0..g {
                    pool[t * c.n_gaussians + t * g + j] = 1.0 / g as f64;
                }
            }
            let pool = self.g.leaf(Tensor::matrix(c.query_tokens, c.n_gaussians, pool)?);
            self.g.matmul(pool, full)?
        };
        for i in 0..c.encoder_blocks {
            tokens = self.block(tokens, tokens, tokens, &format!("enc.block{i}"))?;
        }
        let flat = self.g.reshape(tokens, &[1, c.query_tokens * c.width])?;
        let mu = self.linear(flat, "enc.mu")?;
        let logvar = self.linear(flat, "enc.logvar")?;
        let logvar = self.g.clamp(logvar, LOGVAR_MIN, LOGVAR_MAX);
        Ok((mu, logvar))
    }

    fn decode(&mut self, z: Var) -> Result<Var> {
        let c = self.config;
        let z = self.g.reshape(z, &[1, c.latent_size()])?;
        let t = self.linear(z, "dec.in")?;
        let t = self.g.reshape(t, &[c.query_tokens, c.width])?;
        let mut t = self.norm(t, "dec.in.ln")?;
        for i in 0..c.decoder_blocks {
            t = self.block(t, t, t, &format!("dec.block{i}"))?;
        }
        let h = self.linear(t, "dec.tail1")?;
        let h = self.g.gelu(h);
        let h = self.linear(h, "dec.tail2")?;
        let h = self.g.gelu(h);
        let out = self.linear(h, "dec.tail3")?;
        self.g.reshape(out, &[c.n_gaussians, TARGET_WIDTH])
    }

    /// `z = μ + ε·exp(½ logvar)`.
    fn reparameterize(&mut self, mu: Var, logvar: Var, eps: Var) -> Result<Var> {
        let half = self.g.scale(logvar, 0.5);
        let std = self.g.exp(half);
        let noise = self.g.mul(eps, std)?;
        self.g.add(mu, noise)
    }
}

fn check_features(config: &ModelConfig, rows: usize, cols: usize) -> Result<()> {
    if rows != config.n_gaussians || cols != config.feature_width {
        return Err(shape_err(format!(
            "features are {rows}x{cols}, model expects {}x{}",
            config.n_gaussians, config.feature_width
        )));
    }
    Ok(())
}

fn features_tensor(config: &ModelConfig, f: &features::FeatureMatrix) -> Result<Tensor> {
    check_features(config, f.rows, f.cols)?;
    Tensor::matrix(f.rows, f.cols, f.values.clone())
}

fn latent_tensor(config: &ModelConfig, values: Vec<f64>) -> Result<Tensor> {
    Tensor::new(config.latent_shape.to_vec(), values)
}

/// Latent mean and clamped log-variance of one scene.
pub fn encode(features: &features::FeatureMatrix, model: &Model) -> Result<(Tensor, Tensor)> {
    let x = features_tensor(&model.config, features)?;
    let mut g = Graph::new(model.params.tensors());
    let mut net = Net {
        g: &mut g,
        params: &model.params,
        config: &model.config,
    };
    let x = net.g.leaf(x);
    let (mu, logvar) = net.encode(x)?;
    let mu = latent_tensor(&model.config, g.value(mu).data().to_vec())?;
    let logvar = latent_tensor(&model.config, g.value(logvar).data().to_vec())?;
    Ok((mu, logvar))
}

pub fn reparameterize(mu: &Tensor, logvar: &Tensor, eps: &Tensor) -> Result<Tensor> {
    if mu.shape() != logvar.shape() || mu.shape() != eps.shape() {
        return Err(shape_err("reparameterize operands must share a shape"));
    }
    let z = mu
        .data()
        .iter()
        .zip(logvar.data())
        .zip(eps.data())
        .map(|((m, l), e)| m + e * (0.5 * l.clamp(LOGVAR_MIN, LOGVAR_MAX)).exp())
        .collect();
    Tensor::new(mu.shape().to_vec(), z)
}

/// Decodes a latent into `N × 14` raw attributes in Morton-target order.
pub fn decode(z: &Tensor, model: &Model) -> Result<Tensor> {
    if z.len() != model.config.latent_size() {
        return Err(shape_err(format!(
            "latent has {} values, model expects {:?}",
            z.len(),
            model.config.latent_shape
        )));
    }
    let mut g = Graph::new(model.params.tensors());
    let mut net = Net {
        g: &mut g,
        params: &model.params,
        config: &model.config,
    };
    let z = net.g.leaf(z.clone());
    let out = net.decode(z)?;
    Ok(g.value(out).clone())
}

/// Standard-normal noise with the latent's shape.
pub fn sample_eps<R: Rng>(config: &ModelConfig, rng: &mut R) -> Tensor {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let data = (0..config.latent_size()).map(|_| normal.sample(rng)).collect();
    Tensor::new(config.latent_shape.to_vec(), data).unwrap()
}

/// Noise drawn from a generator seeded with `seed` alone.
pub fn seeded_eps(config: &ModelConfig, seed: u64) -> Tensor {
    sample_eps(config, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Encode, sample with `eps`, and keep the whole code.
pub fn encode_latent(features: &features::FeatureMatrix, model: &Model, eps: &Tensor) -> Result<LatentCode> {
    let (mu, logvar) = encode(features, model)?;
    let z = reparameterize(&mu, &logvar, eps)?;
    Ok(LatentCode { mu, logvar, z })
}

pub fn kl_divergence(mu: &Tensor, logvar: &Tensor) -> Result<f64> {
    if mu.shape() != logvar.shape() {
        return Err(shape_err("kl operands must share a shape"));
    }
    Ok(numerics::kl_divergence(mu.data(), logvar.data()))
}

/// Mean squared reconstruction error plus `lambda`-weighted KL.
pub fn loss(output: &Tensor, target: &[f64], mu: &Tensor, logvar: &Tensor, lambda: f64) -> Result<f64> {
    if output.len() != target.len() {
        return Err(shape_err(format!("output has {} values, target {}", output.len(), target.len())));
    }
    let mse = output
        .data()
        .iter()
        .zip(target)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / target.len() as f64;
    Ok(mse + lambda * kl_divergence(mu, logvar)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub total: f64,
    pub recon: f64,
    pub kl: f64,
}

/// Forward and backward pass of the training objective for one scene.
pub fn loss_and_grad(
    model: &Model,
    features: &features::FeatureMatrix,
    target: &[f64],
    eps: &Tensor,
) -> Result<(LossParts, Gradients)> {
    let config = &model.config;
    let x = features_tensor(config, features)?;
    if target.len() != config.n_gaussians * TARGET_WIDTH {
        return Err(shape_err(format!("target has {} values", target.len())));
    }
    if eps.len() != config.latent_size() {
        return Err(shape_err("noise must have the latent's size"));
    }
    let mut g = Graph::new(model.params.tensors());
    let mut net = Net {
        g: &mut g,
        params: &model.params,
        config,
    };
    let x = net.g.leaf(x);
    let (mu, logvar) = net.encode(x)?;
    let eps = net.g.leaf(eps.clone().reshaped(&[1, config.latent_size()])?);
    let z = net.reparameterize(mu, logvar, eps)?;
    let out = net.decode(z)?;
    let target = net.g.leaf(Tensor::matrix(config.n_gaussians, TARGET_WIDTH, target.to_vec())?);
    let recon = g.mse(out, target)?;
    let kl = g.kl_std_normal(mu, logvar)?;
    let total = g.weighted_sum(&[(recon, 1.0), (kl, config.kl_weight)])?;
    let parts = LossParts {
        total: g.value(total).item(),
        recon: g.value(recon).item(),
        kl: g.value(kl).item(),
    };
    let grads = g.backward(total)?;
    Ok((parts, grads))
}

/// Loss value only; the same arithmetic as [`loss_and_grad`].
pub fn loss_value(model: &Model, features: &features::FeatureMatrix, target: &[f64], eps: &Tensor) -> Result<LossParts> {
    let code = encode_latent(features, model, eps)?;
    let out = decode(&code.z, model)?;
    let recon = loss(&out, target, &code.mu, &code.logvar, 0.0)?;
    let kl = kl_divergence(&code.mu, &code.logvar)?;
    Ok(LossParts {
        total: recon + model.config.kl_weight * kl,
        recon,
        kl,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureOptions, VoxelGrid};
    use crate::{normalize, synth};

    fn toy_scene(seed: u64) -> (features::FeatureMatrix, Vec<f64>) {
        let s = synth::scene(seed, 256, synth::Shape::Torus);
        let (s, _, _) = normalize::normalize(&s, &[], 1.0).unwrap();
        features::featurize(&s, &VoxelGrid::default(), &FeatureOptions::default())
    }

    #[test]
    fn lattice_shapes() {
        assert_eq!(lattice_dims(256), [8, 8, 4]);
        assert_eq!(lattice_dims(8), [2, 2, 2]);
        assert_eq!(lattice_dims(16), [4, 2, 2]);
        assert_eq!(lattice_dims(7), [7, 1, 1]);
        let corners = query_lattice(8, 1.0);
        assert_eq!(corners[0], [-0.5, -0.5, -0.5]);
        assert_eq!(corners[7], [0.5, 0.5, 0.5]);
    }

    #[test]
    fn init_is_seeded_and_lattice_bounded() {
        let c = ModelConfig::toy();
        let a = init_params(&c, 5).unwrap();
        assert_eq!(a, init_params(&c, 5).unwrap());
        assert_ne!(a, init_params(&c, 6).unwrap());
        let q = a.get("enc.query").unwrap();
        assert_eq!(q.shape(), &[16, 96]);
        for row in q.data().chunks(96) {
            assert!(row[..3].iter().all(|v| v.abs() <= 1.0));
        }
        assert_eq!(a.get("enc.tokenizer.ln1.g").unwrap().data(), &[1.0; 96]);
    }

    #[test]
    fn full_config_shapes() {
        let c = ModelConfig::full();
        c.validate().unwrap();
        let specs = param_specs(&c);
        let shape = |n: &str| specs.iter().find(|s| s.name == n).unwrap().shape.clone();
        assert_eq!(shape("enc.query"), vec![256, 768]);
        assert_eq!(shape("enc.mu.w"), vec![256 * 768, 64 * 64 * 4]);
        assert_eq!(shape("dec.tail3.w"), vec![768, 156 * 14]);
        assert_eq!(specs.iter().filter(|s| s.name.ends_with("ln2.g")).count(), 1 + 8 + 16);
        let bad = ModelConfig {
            n_gaussians: 40_000,
            ..c
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let narrow = ModelConfig { width: 2, heads: 1, head_dim: 2, ..ModelConfig::toy() };
        assert!(matches!(narrow.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn shapes_and_reparameterization() {
        let model = Model::new(ModelConfig::toy(), 1).unwrap();
        let (f, _) = toy_scene(2);
        let (mu, logvar) = encode(&f, &model).unwrap();
        assert_eq!(mu.shape(), &[8, 8, 4]);
        assert_eq!(logvar.shape(), &[8, 8, 4]);
        assert_eq!(encode(&f, &model).unwrap().0, mu);
        let zero = Tensor::zeros(&[8, 8, 4]);
        assert_eq!(reparameterize(&mu, &logvar, &zero).unwrap(), mu);
        let out = decode(&mu, &model).unwrap();
        assert_eq!(out.shape(), &[256, 14]);
    }

    #[test]
    fn reparameterize_examples() {
        let t = |v: f64| Tensor::new(vec![1], vec![v]).unwrap();
        assert_eq!(reparameterize(&t(2.0), &t(4f64.ln()), &t(0.5)).unwrap().item(), 3.0);
        assert_eq!(reparameterize(&t(0.0), &t(0.0), &t(1.0)).unwrap().item(), 1.0);
    }

    #[test]
    fn zero_tail_decodes_to_zero() {
        let mut model = Model::new(ModelConfig::toy(), 1).unwrap();
        for name in ["dec.tail3.w", "dec.tail3.b"] {
            model.params.get_mut(name).unwrap().data_mut().fill(0.0);
        }
        let z = sample_eps(&model.config, &mut ChaCha8Rng::seed_from_u64(3));
        assert!(decode(&z, &model).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn kl_and_loss_examples() {
        let t = |v: &[f64]| Tensor::new(vec![v.len()], v.to_vec()).unwrap();
        assert_eq!(kl_divergence(&t(&[0.0, 0.0]), &t(&[0.0, 0.0])).unwrap(), 0.0);
        assert_eq!(kl_divergence(&t(&[1.0]), &t(&[0.0])).unwrap(), 0.5);
        let ones = Tensor::new(vec![2, 14], vec![1.0; 28]).unwrap();
        let z = t(&[0.0]);
        assert_eq!(loss(&ones, &[0.0; 28], &z, &z, 0.0).unwrap(), 1.0);
        assert_eq!(loss(&ones, &[1.0; 28], &z, &z, DEFAULT_KL_WEIGHT).unwrap(), 0.0);
    }

    #[test]
    fn gradient_loss_matches_value_path() {
        let model = Model::new(ModelConfig::toy(), 9).unwrap();
        let (f, t) = toy_scene(4);
        let eps = sample_eps(&model.config, &mut ChaCha8Rng::seed_from_u64(1));
        let (parts, grads) = loss_and_grad(&model, &f, &t, &eps).unwrap();
        let value = loss_value(&model, &f, &t, &eps).unwrap();
        assert!((parts.total - value.total).abs() < 1e-12 * value.total.abs().max(1.0));
        assert!(grads.params.iter().all(Option::is_some));
    }

    #[test]
    fn self_attention_ablation_costs_quadratic_scores() {
        let with = ModelConfig::toy();
        let without = ModelConfig {
            learnable_query: false,
            ..with.clone()
        };
        let (n, m) = (with.n_gaussians, with.query_tokens);
        assert_eq!(without.attention_scores() - with.attention_scores(), with.heads * (n * n - m * n));
        let model = Model::new(without, 2).unwrap();
        assert!(model.params.get("enc.query").is_none());
        let (f, t) = toy_scene(3);
        let eps = Tensor::zeros(&[8, 8, 4]);
        let (parts, _) = loss_and_grad(&model, &f, &t, &eps).unwrap();
        assert!(parts.total.is_finite());
    }
}
