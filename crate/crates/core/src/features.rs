//! Encoder input assembly: Fourier encodings of centers and of their voxel
//! anchors, raw attributes, Morton canonical ordering and SO(3) augmentation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};
use crate::geom::{self, Mat3, Vec3};
use crate::gsio::GaussianScene;

pub const DEFAULT_BANDS: usize = 8;
pub const DEFAULT_RESOLUTION: usize = 40;
/// Raw reconstruction channels per Gaussian: `[x:3 | rot:4 | o:1 | s:3 | c:3]`.
pub const TARGET_WIDTH: usize = 14;

/// Width of `fourier_encode` output for `bands` frequency bands.
pub const fn encoding_width(bands: usize) -> usize {
    3 + 6 * bands
}

/// `[p, sin(2^j π p), cos(2^j π p)]` for `j` in `0..bands`; per band the three
/// sines precede the three cosines.
pub fn fourier_encode(p: Vec3, bands: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(encoding_width(bands));
    fourier_encode_into(p, bands, &mut out);
    out
}

fn fourier_encode_into(p: Vec3, bands: usize, out: &mut Vec<f64>) {
    out.extend_from_slice(&p);
    for j in 0..bands {
        let freq = (1u64 << j) as f64 * std::f64::consts::PI;
        for t in p {
            out.push((freq * t).sin());
        }
        for t in p {
            out.push((freq * t).cos());
        }
    }
}

/// Regular `V³` grid over `[-r, r]³`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoxelGrid {
    pub resolution: usize,
    pub r: f64,
}

impl Default for VoxelGrid {
    fn default() -> Self {
        VoxelGrid {
            resolution: DEFAULT_RESOLUTION,
            r: 1.0,
        }
    }
}

impl VoxelGrid {
    pub fn cell(&self) -> f64 {
        2.0 * self.r / self.resolution as f64
    }

    /// Cell index per axis; out-of-domain coordinates clamp to the boundary cell.
    pub fn index(&self, p: Vec3) -> [usize; 3] {
        let cell = self.cell();
        p.map(|t| {
            let i = ((t + self.r) / cell).floor();
            i.clamp(0.0, (self.resolution - 1) as f64) as usize
        })
    }

    pub fn center(&self, idx: [usize; 3]) -> Vec3 {
        let cell = self.cell();
        idx.map(|i| -self.r + (i as f64 + 0.5) * cell)
    }
}

pub fn voxel_anchor(p: Vec3, grid: &VoxelGrid) -> Vec3 {
    grid.center(grid.index(p))
}

fn spread_bits(v: u32) -> u64 {
    let mut x = v as u64 & 0x1f_ffff;
    x = (x | x << 32) & 0x1f_0000_0000_ffff;
    x = (x | x << 16) & 0x1f_0000_ff00_00ff;
    x = (x | x << 8) & 0x100f_00f0_0f00_f00f;
    x = (x | x << 4) & 0x10c3_0c30_c30c_30c3;
    x = (x | x << 2) & 0x1249_2492_4924_9249;
    x
}

/// 3D Morton (Z-order) code; x occupies the lowest bit of each triple.
pub fn morton3(idx: [usize; 3]) -> u64 {
    spread_bits(idx[0] as u32) | spread_bits(idx[1] as u32) << 1 | spread_bits(idx[2] as u32) << 2
}

/// Gaussian ids ordered by the Morton code of their voxel, ties by id.
pub fn canonical_order(scene: &GaussianScene, grid: &VoxelGrid) -> Vec<usize> {
    let mut keyed: Vec<(u64, usize)> = scene
        .centers
        .iter()
        .enumerate()
        .map(|(i, &c)| (morton3(grid.index(c)), i))
        .collect();
    keyed.sort_unstable();
    keyed.into_iter().map(|(_, i)| i).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureOptions {
    pub bands: usize,
    /// Append the encoding of each Gaussian's voxel anchor.
    pub voxel_append: bool,
    /// Append higher-order SH coefficients when the scene carries them.
    pub sh_rest: bool,
}

impl Default for FeatureOptions {
    fn default() -> Self {
        FeatureOptions {
            bands: DEFAULT_BANDS,
            voxel_append: true,
            sh_rest: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureBlock {
    pub name: String,
    pub start: usize,
    pub width: usize,
}

/// Channel ranges of a feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub blocks: Vec<FeatureBlock>,
}

impl FeatureLayout {
    pub fn new(opts: &FeatureOptions, sh_rest_width: usize) -> Self {
        let enc = encoding_width(opts.bands);
        let mut widths = vec![("gamma_x", enc)];
        if opts.voxel_append {
            widths.push(("gamma_v", enc));
        }
        widths.extend([("rotation", 4), ("opacity", 1), ("scale", 3), ("color_dc", 3)]);
        if opts.sh_rest && sh_rest_width > 0 {
            widths.push(("color_rest", sh_rest_width));
        }
        let mut start = 0;
        let blocks = widths
            .into_iter()
            .map(|(name, width)| {
                let b = FeatureBlock {
                    name: name.into(),
                    start,
                    width,
                };
                start += width;
                b
            })
            .collect();
        FeatureLayout { blocks }
    }

    pub fn width(&self) -> usize {
        self.blocks.iter().map(|b| b.width).sum()
    }

    pub fn block(&self, name: &str) -> Option<&FeatureBlock> {
        self.blocks.iter().find(|b| b.name == name)
    }
}

/// Row-major `N × C` encoder input.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
    pub layout: FeatureLayout,
}

impl FeatureMatrix {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }
}

/// Builds the feature rows in the scene's own order.
pub fn assemble(scene: &GaussianScene, grid: &VoxelGrid, opts: &FeatureOptions) -> FeatureMatrix {
    let rest_width = scene.colors_rest.as_ref().map_or(0, |r| r.width);
    let layout = FeatureLayout::new(opts, rest_width);
    let cols = layout.width();
    let mut values = Vec::with_capacity(scene.len() * cols);
    for i in 0..scene.len() {
        let x = scene.centers[i];
        fourier_encode_into(x, opts.bands, &mut values);
        if opts.voxel_append {
            fourier_encode_into(voxel_anchor(x, grid), opts.bands, &mut values);
        }
        values.extend_from_slice(&scene.rotations[i]);
        values.push(scene.opacities[i]);
        values.extend_from_slice(&scene.scales[i]);
        values.extend_from_slice(&scene.colors_dc[i]);
        if opts.sh_rest {
            if let Some(r) = &scene.colors_rest {
                values.extend_from_slice(r.row(i));
            }
        }
    }
    FeatureMatrix {
        rows: scene.len(),
        cols,
        values,
        layout,
    }
}

/// Raw `N × 14` reconstruction target in scene order.
pub fn targets(scene: &GaussianScene) -> Vec<f64> {
    let mut out = Vec::with_capacity(scene.len() * TARGET_WIDTH);
    for i in 0..scene.len() {
        out.extend_from_slice(&scene.centers[i]);
        out.extend_from_slice(&scene.rotations[i]);
        out.push(scene.opacities[i]);
        out.extend_from_slice(&scene.scales[i]);
        out.extend_from_slice(&scene.colors_dc[i]);
    }
    out
}

/// Inverse of [`targets`]: a scene from `N × 14` raw rows.
pub fn scene_from_targets(rows: &[f64]) -> Result<GaussianScene> {
    if rows.is_empty() || rows.len() % TARGET_WIDTH != 0 {
        return Err(shape_err(format!(
            "{} values is not a positive multiple of {TARGET_WIDTH}",
            rows.len()
        )));
    }
    let chunks = rows.chunks_exact(TARGET_WIDTH);
    Ok(GaussianScene {
        centers: chunks.clone().map(|r| [r[0], r[1], r[2]]).collect(),
        rotations: chunks.clone().map(|r| [r[3], r[4], r[5], r[6]]).collect(),
        opacities: chunks.clone().map(|r| r[7]).collect(),
        scales: chunks.clone().map(|r| [r[8], r[9], r[10]]).collect(),
        colors_dc: chunks.map(|r| [r[11], r[12], r[13]]).collect(),
        colors_rest: None,
    })
}

/// Morton-sorts the scene, then returns its features and reconstruction
/// target, row-aligned.
pub fn featurize(
    scene: &GaussianScene,
    grid: &VoxelGrid,
    opts: &FeatureOptions,
) -> (FeatureMatrix, Vec<f64>) {
    let sorted = scene.select(&canonical_order(scene, grid));
    (assemble(&sorted, grid, opts), targets(&sorted))
}

/// Uniformly distributed rotation (random unit quaternion), fixed per seed.
pub fn random_rotation(seed: u64) -> Mat3 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_rotation_with(&mut rng)
}

pub fn random_rotation_with<R: Rng>(rng: &mut R) -> Mat3 {
    use std::f64::consts::TAU;
    let (u1, u2, u3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    geom::quat_to_mat([
        b * (TAU * u3).cos(),
        a * (TAU * u2).sin(),
        a * (TAU * u2).cos(),
        b * (TAU * u3).sin(),
    ])
}

/// Rotates centers and orientations by `r`; scales, opacities and colors
/// (including higher-order SH) pass through.
pub fn rotate_scene(scene: &GaussianScene, r: &Mat3) -> GaussianScene {
    let qr = geom::mat_to_quat(r);
    GaussianScene {
        centers: scene.centers.iter().map(|&c| geom::mat_vec(r, c)).collect(),
        rotations: scene.rotations.iter().map(|&q| geom::quat_mul(qr, q)).collect(),
        ..scene.clone()
    }
}
