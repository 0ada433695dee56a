//! Canonical-space normalization of splat scenes and their cameras.
//!
//! Centers are mean-shifted to the origin and uniformly rescaled so the
//! farthest center lands at `r / 1.1`. Per-Gaussian scales follow the same
//! factor (added as `ln(scale)` in log storage) and camera centers receive the
//! same affine map with orientations untouched, so every projected pixel
//! position is preserved.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{self, Vec3};
use crate::gsio::{CameraPose, GaussianScene};

pub const DEFAULT_RADIUS: f64 = 1.0;
const MARGIN: f64 = 1.1;
const DEGENERATE_EXTENT: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormTransform {
    pub translate: Vec3,
    pub scale: f64,
    pub r: f64,
}

impl NormTransform {
    pub fn identity(r: f64) -> Self {
        NormTransform {
            translate: [0.0; 3],
            scale: 1.0,
            r,
        }
    }

    fn check(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::InvalidTransform(format!("scale {} must be positive", self.scale)));
        }
        if !self.translate.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidTransform("non-finite translation".into()));
        }
        Ok(())
    }

    pub fn forward_point(&self, x: Vec3) -> Vec3 {
        geom::scale(geom::add(x, self.translate), self.scale)
    }

    pub fn inverse_point(&self, x: Vec3) -> Vec3 {
        geom::sub(geom::scale(x, 1.0 / self.scale), self.translate)
    }
}

/// Mean of the centers, accumulated in index order.
pub fn centroid(centers: &[Vec3]) -> Vec3 {
    let mut sum = [0.0; 3];
    for c in centers {
        sum = geom::add(sum, *c);
    }
    geom::scale(sum, 1.0 / centers.len() as f64)
}

pub fn compute_transform(scene: &GaussianScene, r: f64) -> Result<NormTransform> {
    if scene.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidTransform(format!("radius {r} must be positive")));
    }
    let translate = geom::scale(centroid(&scene.centers), -1.0);
    let extent = scene
        .centers
        .iter()
        .map(|&c| geom::norm(geom::add(c, translate)))
        .fold(0.0, f64::max);
    if extent < DEGENERATE_EXTENT {
        return Err(Error::DegenerateScene);
    }
    Ok(NormTransform {
        translate,
        scale: r / (extent * MARGIN),
        r,
    })
}

fn map_scene(scene: &GaussianScene, point: impl Fn(Vec3) -> Vec3, log_shift: f64) -> GaussianScene {
    GaussianScene {
        centers: scene.centers.iter().map(|&c| point(c)).collect(),
        scales: scene
            .scales
            .iter()
            .map(|s| [s[0] + log_shift, s[1] + log_shift, s[2] + log_shift])
            .collect(),
        ..scene.clone()
    }
}

fn map_cameras(cameras: &[CameraPose], point: impl Fn(Vec3) -> Vec3) -> Vec<CameraPose> {
    cameras
        .iter()
        .map(|c| CameraPose {
            center: point(c.center),
            ..c.clone()
        })
        .collect()
}

pub fn apply(
    scene: &GaussianScene,
    cameras: &[CameraPose],
    t: &NormTransform,
) -> Result<(GaussianScene, Vec<CameraPose>)> {
    t.check()?;
    let f = |x| t.forward_point(x);
    Ok((map_scene(scene, f, t.scale.ln()), map_cameras(cameras, f)))
}

pub fn invert(
    scene: &GaussianScene,
    cameras: &[CameraPose],
    t: &NormTransform,
) -> Result<(GaussianScene, Vec<CameraPose>)> {
    t.check()?;
    let f = |x| t.inverse_point(x);
    Ok((map_scene(scene, f, -t.scale.ln()), map_cameras(cameras, f)))
}

/// Computes and applies the transform in one go.
pub fn normalize(
    scene: &GaussianScene,
    cameras: &[CameraPose],
    r: f64,
) -> Result<(GaussianScene, Vec<CameraPose>, NormTransform)> {
    let t = compute_transform(scene, r)?;
    let (s, c) = apply(scene, cameras, &t)?;
    Ok((s, c, t))
}
