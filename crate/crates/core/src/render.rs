//! Minimal CPU preview renderer: isotropic screen-space footprints composited
//! back to front.

use crate::error::{Error, Result};
use crate::geom::{self, Vec3};
use crate::gsio::{CameraPose, GaussianScene};
use crate::synth::SH_C0;

const MIN_DEPTH: f64 = 1e-9;
/// Footprints are truncated at this many standard deviations.
const CUTOFF_SIGMA: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    /// Row-major RGB.
    pub pixels: Vec<u8>,
}

impl Image {
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }
}

/// Pixel coordinates and depth of a world point.
pub fn project_center(camera: &CameraPose, x: Vec3) -> Result<(f64, f64, f64)> {
    let p = geom::mat_vec(&camera.rotation, geom::sub(x, camera.center));
    let depth = p[2];
    if !(depth >= MIN_DEPTH) {
        return Err(Error::BehindCamera { depth });
    }
    Ok((
        camera.fx * p[0] / depth + camera.cx,
        camera.fy * p[1] / depth + camera.cy,
        depth,
    ))
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

struct Splat {
    u: f64,
    v: f64,
    depth: f64,
    id: usize,
    radius: f64,
    alpha: f64,
    color: [f64; 3],
}

/// Renders `scene` from `camera` at `width`x`height` (intrinsics are rescaled
/// from the camera's native image size). Background is black.
pub fn render_preview(scene: &GaussianScene, camera: &CameraPose, width: usize, height: usize) -> Image {
    let sx = width as f64 / camera.width.max(1) as f64;
    let sy = height as f64 / camera.height.max(1) as f64;
    let cam = CameraPose {
        fx: camera.fx * sx,
        fy: camera.fy * sy,
        cx: camera.cx * sx,
        cy: camera.cy * sy,
        width,
        height,
        ..camera.clone()
    };
    let focal = 0.5 * (cam.fx + cam.fy);

    let mut splats: Vec<Splat> = (0..scene.len())
        .filter_map(|id| {
            let (u, v, depth) = project_center(&cam, scene.centers[id]).ok()?;
            let s = scene.scales[id];
            let linear = (s[0].exp() + s[1].exp() + s[2].exp()) / 3.0;
            let c = scene.colors_dc[id];
            Some(Splat {
                u,
                v,
                depth,
                id,
                radius: linear * focal / depth,
                alpha: sigmoid(scene.opacities[id]),
                color: c.map(|dc| (0.5 + SH_C0 * dc).clamp(0.0, 1.0)),
            })
        })
        .collect();
    // far to near, stable on id
    splats.sort_by(|a, b| b.depth.total_cmp(&a.depth).then(a.id.cmp(&b.id)));

    let mut accum = vec![[0.0f64; 3]; width * height];
    for s in &splats {
        if !(s.radius > 0.0) {
            continue;
        }
        let reach = CUTOFF_SIGMA * s.radius;
        let x0 = ((s.u - reach).floor().max(0.0)) as usize;
        let y0 = ((s.v - reach).floor().max(0.0)) as usize;
        let x1 = (s.u + reach).ceil().min(width as f64);
        let y1 = (s.v + reach).ceil().min(height as f64);
        if x1 <= 0.0 || y1 <= 0.0 {
            continue;
        }
        let inv = 1.0 / (s.radius * s.radius);
        for y in y0..y1 as usize {
            for x in x0..x1 as usize {
                let dx = x as f64 + 0.5 - s.u;
                let dy = y as f64 + 0.5 - s.v;
                let d2 = (dx * dx + dy * dy) * inv;
                if d2 > CUTOFF_SIGMA * CUTOFF_SIGMA {
                    continue;
                }
                let a = s.alpha * (-0.5 * d2).exp();
                let px = &mut accum[y * width + x];
                for k in 0..3 {
                    px[k] = a * s.color[k] + (1.0 - a) * px[k];
                }
            }
        }
    }
    Image {
        width,
        height,
        pixels: accum
            .iter()
            .flat_map(|p| p.map(|c| (c.clamp(0.0, 1.0) * 255.0).round() as u8))
            .collect(),
    }
}
