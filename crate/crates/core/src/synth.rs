//! Seeded synthetic scenes, cameras and masks for tests, benches and demos.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::geom::{self, Quat, Vec3};
use crate::gsio::{CameraPose, GaussianScene, Mask};
use crate::normalize;

/// SH degree-0 basis constant.
pub const SH_C0: f64 = 0.282_094_791_773_878_14;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Sphere,
    Torus,
    Cube,
    Helix,
}

impl Shape {
    pub const ALL: [Shape; 4] = [Shape::Sphere, Shape::Torus, Shape::Cube, Shape::Helix];

    fn base_color(self) -> Vec3 {
        match self {
            Shape::Sphere => [0.9, 0.2, 0.2],
            Shape::Torus => [0.2, 0.8, 0.3],
            Shape::Cube => [0.2, 0.3, 0.9],
            Shape::Helix => [0.9, 0.8, 0.2],
        }
    }

    fn sample(self, rng: &mut ChaCha8Rng) -> Vec3 {
        use std::f64::consts::TAU;
        match self {
            Shape::Sphere => {
                let z: f64 = rng.random_range(-1.0..1.0);
                let phi = rng.random_range(0.0..TAU);
                let s = (1.0 - z * z).sqrt();
                [s * phi.cos(), s * phi.sin(), z]
            }
            Shape::Torus => {
                let (u, v) = (rng.random_range(0.0..TAU), rng.random_range(0.0..TAU));
                let rad = 1.0 + 0.35 * v.cos();
                [rad * u.cos(), rad * u.sin(), 0.35 * v.sin()]
            }
            Shape::Cube => {
                let face = rng.random_range(0..6usize);
                let mut p: Vec3 = [
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ];
                p[face / 2] = if face % 2 == 0 { -1.0 } else { 1.0 };
                p
            }
            Shape::Helix => {
                let t: f64 = rng.random_range(0.0..1.0);
                let a = t * 3.0 * TAU;
                [a.cos(), a.sin(), 2.0 * t - 1.0]
            }
        }
    }
}

/// `n` Gaussians at the origin with identity rotation and neutral attributes.
pub fn blank_scene(n: usize) -> GaussianScene {
    GaussianScene {
        centers: vec![[0.0; 3]; n],
        rotations: vec![[1.0, 0.0, 0.0, 0.0]; n],
        opacities: vec![0.0; n],
        scales: vec![[0.0; 3]; n],
        colors_dc: vec![[0.0; 3]; n],
        colors_rest: None,
    }
}

/// Random scene of `n` Gaussians on `shape`, placed at an arbitrary offset and
/// global scale (like an SfM reconstruction) so it needs normalization.
///
/// Attributes vary smoothly over the surface with a little per-Gaussian
/// noise, the way neighbouring splats of a trained scene tend to agree.
pub fn scene(seed: u64, n: usize, shape: Shape) -> GaussianScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Normal::new(0.0, 0.03).unwrap();
    let noise = Normal::new(0.0, 0.02).unwrap();
    let world_scale: f64 = rng.random_range(0.5..20.0);
    let offset: Vec3 = [
        rng.random_range(-50.0..50.0),
        rng.random_range(-50.0..50.0),
        rng.random_range(-50.0..50.0),
    ];
    let base_rot: Quat = std::array::from_fn(|_| noise.sample(&mut rng) * 50.0);
    let mag = rng.random_range(0.8..1.2) / geom::quat_norm(base_rot).max(1e-9);
    let base_rot = base_rot.map(|v| v * mag);
    let base_opacity = rng.random_range(0.0..2.0);
    let log_s = (0.03 * world_scale).ln();
    let color = shape.base_color();
    let mut s = blank_scene(n);
    for i in 0..n {
        let p = shape.sample(&mut rng);
        s.centers[i] = std::array::from_fn(|k| (p[k] + jitter.sample(&mut rng)) * world_scale + offset[k]);
        let twist = [(0.5 * p[2]).cos(), 0.0, 0.0, (0.5 * p[2]).sin()];
        s.rotations[i] = geom::quat_mul(base_rot, twist).map(|v| v + noise.sample(&mut rng));
        s.opacities[i] = base_opacity + 0.5 * p[0] + noise.sample(&mut rng);
        s.scales[i] = std::array::from_fn(|k| log_s + 0.2 * p[(k + 1) % 3] + noise.sample(&mut rng));
        s.colors_dc[i] = std::array::from_fn(|k| {
            let rgb = (color[k] + 0.1 * p[1] + noise.sample(&mut rng)).clamp(0.0, 1.0);
            (rgb - 0.5) / SH_C0
        });
    }
    s
}

/// World-to-camera rotation looking from `eye` toward `target` (+z forward,
/// +y down).
pub fn look_at(eye: Vec3, target: Vec3) -> geom::Mat3 {
    let fwd = geom::sub(target, eye);
    let fwd = geom::scale(fwd, 1.0 / geom::norm(fwd));
    let up = if fwd[2].abs() > 0.9 { [0.0, 1.0, 0.0] } else { [0.0, 0.0, 1.0] };
    let right = cross(fwd, up);
    let right = geom::scale(right, 1.0 / geom::norm(right));
    let down = cross(fwd, right);
    [right, down, fwd]
}

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// `count` cameras on a ring around the scene, all looking at its centroid.
pub fn orbit_cameras(scene: &GaussianScene, count: usize, width: usize, height: usize) -> Vec<CameraPose> {
    let c = normalize::centroid(&scene.centers);
    let radius = scene
        .centers
        .iter()
        .map(|&p| geom::norm(geom::sub(p, c)))
        .fold(0.0, f64::max)
        .max(1e-6);
    (0..count)
        .map(|k| {
            let a = std::f64::consts::TAU * k as f64 / count as f64;
            let eye = geom::add(c, [3.0 * radius * a.cos(), 3.0 * radius * a.sin(), 0.8 * radius]);
            let f = width as f64;
            CameraPose {
                rotation: look_at(eye, c),
                center: eye,
                fx: f,
                fy: f,
                cx: width as f64 / 2.0,
                cy: height as f64 / 2.0,
                width,
                height,
            }
        })
        .collect()
}

/// Filled disk mask.
pub fn disk_mask(width: usize, height: usize, cx: f64, cy: f64, radius: f64) -> Mask {
    let mut values = vec![0u8; width * height];
    for y in 0..height {
        for x in 0..width {
            let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            if dx * dx + dy * dy <= radius * radius {
                values[y * width + x] = 255;
            }
        }
    }
    Mask { width, height, values }
}
