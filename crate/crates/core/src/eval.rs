//! Reconstruction metrics and latent-space analysis.
//!
//! Latent analysis always uses the mean `μ`, never a sampled code.

use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::features::{self, FeatureOptions, VoxelGrid, TARGET_WIDTH};
use crate::geom::{self, Mat3, Vec3};
use crate::gsio::GaussianScene;
use crate::model::{self, Model};
use crate::numerics::Tensor;

/// Failure threshold used at desk scale, as a fraction of the error of
/// predicting every Gaussian as its scene's per-channel mean.
pub const DESK_THRESHOLD_FACTOR: f64 = 1.0;
/// Eigenvalues at or below this fraction of the largest count as zero.
const SPECTRUM_FLOOR: f64 = 1e-12;

/// Mean over rows of the Euclidean norm of the per-row residual.
pub fn scene_l2(output: &[f64], target: &[f64]) -> Result<f64> {
    if output.len() != target.len() || target.is_empty() || target.len() % TARGET_WIDTH != 0 {
        return Err(shape_err(format!(
            "reconstruction has {} values and target {}; both must be equal non-empty multiples of {TARGET_WIDTH}",
            output.len(),
            target.len()
        )));
    }
    let rows = target.len() / TARGET_WIDTH;
    let sum: f64 = output
        .chunks_exact(TARGET_WIDTH)
        .zip(target.chunks_exact(TARGET_WIDTH))
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
        .sum();
    Ok(sum / rows as f64)
}

/// Fraction of errors strictly above `threshold`.
pub fn failure_rate(errors: &[f64], threshold: f64) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(errors.iter().filter(|&&e| e > threshold).count() as f64 / errors.len() as f64)
}

/// [`scene_l2`] of the prediction that repeats the target's per-channel mean.
pub fn mean_predictor_l2(target: &[f64]) -> Result<f64> {
    if target.is_empty() || target.len() % TARGET_WIDTH != 0 {
        return Err(shape_err("target must be a non-empty N x 14 array"));
    }
    let rows = target.len() / TARGET_WIDTH;
    let mut mean = [0.0; TARGET_WIDTH];
    for r in target.chunks_exact(TARGET_WIDTH) {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= rows as f64);
    let pred: Vec<f64> = (0..rows).flat_map(|_| mean).collect();
    scene_l2(&pred, target)
}

/// Desk-scale failure threshold for a set of targets.
pub fn desk_threshold(targets: &[&[f64]]) -> Result<f64> {
    if targets.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut sum = 0.0;
    for t in targets {
        sum += mean_predictor_l2(t)?;
    }
    Ok(DESK_THRESHOLD_FACTOR * sum / targets.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneError {
    pub name: String,
    pub l2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scenes: Vec<SceneError>,
    pub threshold: f64,
    pub failure_rate: f64,
    pub mean_l2: f64,
    pub median_l2: f64,
    pub max_l2: f64,
}

impl EvalReport {
    pub fn new(scenes: Vec<SceneError>, threshold: f64) -> Result<Self> {
        let errors: Vec<f64> = scenes.iter().map(|s| s.l2).collect();
        let failure_rate = failure_rate(&errors, threshold)?;
        let mut sorted = errors.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median_l2 = if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) };
        Ok(EvalReport {
            scenes,
            threshold,
            failure_rate,
            mean_l2: errors.iter().sum::<f64>() / n as f64,
            median_l2,
            max_l2: sorted[n - 1],
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// Encodes `scene` (already normalized and of the model's size) and returns `μ`.
pub fn embed(model: &Model, scene: &GaussianScene, grid: &VoxelGrid, opts: &FeatureOptions) -> Result<Tensor> {
    let (f, _) = features::featurize(scene, grid, opts);
    Ok(model::encode(&f, model)?.0)
}

/// Reconstruction of `scene` decoded from `μ`, with its target.
pub fn reconstruct(
    model: &Model,
    scene: &GaussianScene,
    grid: &VoxelGrid,
    opts: &FeatureOptions,
) -> Result<(Tensor, Vec<f64>)> {
    let (f, target) = features::featurize(scene, grid, opts);
    let (mu, _) = model::encode(&f, model)?;
    Ok((model::decode(&mu, model)?, target))
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Pairwise Euclidean distances between flattened embeddings.
pub fn latent_distances(embeddings: &[Tensor]) -> Result<Vec<Vec<f64>>> {
    if let Some(e) = embeddings.iter().find(|e| e.shape() != embeddings[0].shape()) {
        return Err(shape_err(format!(
            "embedding shapes differ: {:?} vs {:?}",
            embeddings[0].shape(),
            e.shape()
        )));
    }
    let n = embeddings.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = distance(embeddings[i].data(), embeddings[j].data());
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    Ok(d)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    /// One `dims`-vector per embedding.
    pub points: Vec<Vec<f64>>,
    /// Leading eigenvalues of the sample covariance, descending.
    pub eigenvalues: Vec<f64>,
    /// Unit principal directions, one per row.
    pub components: Vec<Vec<f64>>,
    /// Total variance (trace of the covariance).
    pub total_variance: f64,
}

/// Projects mean-centered embeddings onto their top `dims` principal
/// directions. The covariance is normalized by `n - 1`; each direction's first
/// nonzero loading is made positive.
pub fn pca_project(embeddings: &[Vec<f64>], dims: usize) -> Result<Projection> {
    let n = embeddings.len();
    if dims == 0 || n < dims + 1 {
        return Err(shape_err(format!("{n} embeddings cannot span {dims} principal components")));
    }
    let d = embeddings[0].len();
    if d < dims || embeddings.iter().any(|e| e.len() != d) {
        return Err(shape_err("embeddings must share a length of at least dims"));
    }
    let mut mean = vec![0.0; d];
    for e in embeddings {
        for (m, v) in mean.iter_mut().zip(e) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let x = DMatrix::from_fn(n, d, |i, j| embeddings[i][j] - mean[j]);
    let denom = (n - 1) as f64;

    // Eigen-decompose whichever of the d x d covariance and the n x n Gram
    // matrix is smaller; both share their nonzero spectrum.
    let (values, directions) = if d <= n {
        let cov = (x.transpose() * &x) / denom;
        let eig = SymmetricEigen::new(cov);
        let order = descending(&eig.eigenvalues);
        let dirs: Vec<Vec<f64>> = order.iter().map(|&k| eig.eigenvectors.column(k).iter().copied().collect()).collect();
        (order.iter().map(|&k| eig.eigenvalues[k]).collect::<Vec<_>>(), dirs)
    } else {
        let gram = (&x * x.transpose()) / denom;
        let eig = SymmetricEigen::new(gram);
        let order = descending(&eig.eigenvalues);
        let dirs = order
            .iter()
            .take(dims)
            .map(|&k| {
                let v = x.transpose() * eig.eigenvectors.column(k);
                let norm = v.norm();
                v.iter().map(|a| if norm > 0.0 { a / norm } else { 0.0 }).collect()
            })
            .collect();
        (order.iter().map(|&k| eig.eigenvalues[k]).collect::<Vec<_>>(), dirs)
    };

    let top = values[0].max(0.0);
    if values[dims - 1] <= SPECTRUM_FLOOR * top || top == 0.0 {
        return Err(Error::DegenerateSpectrum { dims });
    }
    let components: Vec<Vec<f64>> = directions
        .into_iter()
        .take(dims)
        .map(|mut v: Vec<f64>| {
            let peak = v.iter().fold(0.0f64, |m, a| m.max(a.abs()));
            if let Some(first) = v.iter().find(|a| a.abs() > SPECTRUM_FLOOR.sqrt() * peak) {
                if *first < 0.0 {
                    v.iter_mut().for_each(|a| *a = -*a);
                }
            }
            v
        })
        .collect();
    let points = (0..n)
        .map(|i| {
            components
                .iter()
                .map(|c| c.iter().enumerate().map(|(j, cj)| x[(i, j)] * cj).sum())
                .collect()
        })
        .collect();
    let total_variance = x.iter().map(|v| v * v).sum::<f64>() / denom;
    Ok(Projection {
        points,
        eigenvalues: values.into_iter().take(dims).collect(),
        components,
        total_variance,
    })
}

fn descending(values: &nalgebra::DVector<f64>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order
}

/// `count` rotations about `axis` at angles `k · 360° / count`.
pub fn loop_rotations(axis: Vec3, count: usize) -> Vec<Mat3> {
    (0..count)
        .map(|k| geom::axis_angle(axis, std::f64::consts::TAU * k as f64 / count as f64))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopStats {
    /// `d(μ_k, μ_{k+1})` for every step, including the wrap from the last
    /// rotation back to the first.
    pub consecutive: Vec<f64>,
    pub mean_consecutive: f64,
    /// Distance between the last and first embeddings of the loop.
    pub loop_closure: f64,
    /// Smallest distance from any loop embedding to any reference embedding.
    pub min_cross_scene: f64,
    /// Fraction of steps whose distance is below `min_cross_scene`.
    pub steps_below_cross: f64,
}

/// Embeds `scene` under each rotation and compares consecutive embeddings
/// with the embeddings of `references` (in their own poses).
pub fn rotation_loop_stats(
    model: &Model,
    scene: &GaussianScene,
    rotations: &[Mat3],
    references: &[GaussianScene],
    grid: &VoxelGrid,
    opts: &FeatureOptions,
) -> Result<LoopStats> {
    if rotations.is_empty() {
        return Err(Error::EmptyInput);
    }
    let loop_mu = rotations
        .iter()
        .map(|r| embed(model, &features::rotate_scene(scene, r), grid, opts))
        .collect::<Result<Vec<_>>>()?;
    let refs = references
        .iter()
        .map(|s| embed(model, s, grid, opts))
        .collect::<Result<Vec<_>>>()?;
    let k = loop_mu.len();
    let consecutive: Vec<f64> = (0..k)
        .map(|i| distance(loop_mu[i].data(), loop_mu[(i + 1) % k].data()))
        .collect();
    let min_cross_scene = loop_mu
        .iter()
        .flat_map(|a| refs.iter().map(move |b| distance(a.data(), b.data())))
        .fold(f64::INFINITY, f64::min);
    let below = consecutive.iter().filter(|&&c| c < min_cross_scene).count();
    Ok(LoopStats {
        mean_consecutive: consecutive.iter().sum::<f64>() / k as f64,
        loop_closure: distance(loop_mu[k - 1].data(), loop_mu[0].data()),
        min_cross_scene,
        steps_below_cross: below as f64 / k as f64,
        consecutive,
    })
}

/// Distance matrix as a tab-separated table with a header row of names.
pub fn distances_tsv(names: &[String], d: &[Vec<f64>]) -> String {
    let mut s = String::from("scene");
    for n in names {
        write!(s, "\t{n}").unwrap();
    }
    s.push('\n');
    for (n, row) in names.iter().zip(d) {
        s.push_str(n);
        for v in row {
            write!(s, "\t{v}").unwrap();
        }
        s.push('\n');
    }
    s
}

/// `id\tx\ty` rows for plotting.
pub fn projection_tsv(names: &[String], p: &Projection) -> String {
    let mut s = String::from("id\tx\ty\n");
    for (n, pt) in names.iter().zip(&p.points) {
        write!(s, "{n}").unwrap();
        for v in pt {
            write!(s, "\t{v}").unwrap();
        }
        s.push('\n');
    }
    s
}
