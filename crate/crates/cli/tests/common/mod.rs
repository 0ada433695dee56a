// Shared fixtures: synthetic raw scenes on disk and a handle on the binary.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use splatok::geom;
use splatok::gsio::{write_cameras, write_mask, write_ply};
use splatok::synth::{self, Shape};
use splatok::GaussianScene;

pub const CAM_W: usize = 64;
pub const CAM_H: usize = 48;

pub fn splatok(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_splatok"))
        .current_dir(dir)
        .args(args)
        .env_remove("RAYON_NUM_THREADS")
        .output()
        .expect("spawning splatok")
}

/// Runs a subcommand and fails loudly unless it exits 0.
pub fn ok(dir: &Path, args: &[&str]) -> String {
    let out = splatok(dir, args);
    assert!(
        out.status.success(),
        "splatok {} failed ({}):\n{}",
        args.join(" "),
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// A synthetic scene at an arbitrary scale and offset, as SfM would leave it.
pub fn raw_scene(seed: u64, n: usize) -> GaussianScene {
    let mut s = synth::scene(seed, n, Shape::ALL[seed as usize % 4]);
    let k = 3.7 + seed as f64;
    let off = [10.0 * seed as f64, -4.0, 2.5];
    for c in &mut s.centers {
        *c = geom::add(geom::scale(*c, k), off);
    }
    for sc in &mut s.scales {
        *sc = sc.map(|v| v + k.ln());
    }
    s
}

/// Writes `<name>.ply`, `<name>.cams.json` and `<name>.pgm` into `dir`.
pub fn write_raw(dir: &Path, name: &str, seed: u64, n: usize) -> [PathBuf; 3] {
    let scene = raw_scene(seed, n);
    let cams = synth::orbit_cameras(&scene, 4, CAM_W, CAM_H);
    let mask = synth::disk_mask(CAM_W, CAM_H, CAM_W as f64 / 2.0, CAM_H as f64 / 2.0, 14.0);
    let paths = [".ply", ".cams.json", ".pgm"].map(|ext| dir.join(format!("{name}{ext}")));
    fs::write(&paths[0], write_ply(&scene)).unwrap();
    fs::write(&paths[1], write_cameras(&cams)).unwrap();
    fs::write(&paths[2], write_mask(&mask)).unwrap();
    paths
}

/// Ingests `count` scenes of `n` Gaussians into `dir/manifest.json`.
pub fn ingest_all(dir: &Path, count: usize, n: usize) {
    for i in 0..count {
        let name = format!("s{i}");
        let [ply, cams, mask] = write_raw(dir, &name, i as u64, n);
        let (ply, cams, mask) = (ply.to_str().unwrap(), cams.to_str().unwrap(), mask.to_str().unwrap());
        ok(dir, &["ingest", "--manifest", "manifest.json", "--name", &name, "--ply", ply, "--cams", cams, "--mask", mask, "--camera-index", "1"]);
    }
}

/// ingest -> normalize -> filter -> featurize -> train -> encode, all inside `dir`.
pub fn pipeline(dir: &Path, steps: u64, target_n: usize) {
    ingest_all(dir, 2, 2 * target_n);
    ok(dir, &["normalize", "--manifest", "manifest.json"]);
    ok(dir, &["filter", "--manifest", "manifest.json", "--target-n", &target_n.to_string()]);
    ok(dir, &["featurize", "--manifest", "manifest.json"]);
    ok(dir, &["train", "--manifest", "manifest.json", "--ckpt", "ckpt", "--seed", "7", "--steps", &steps.to_string(), "--batch-size", "2"]);
    ok(dir, &["encode", "--ckpt", "ckpt", "--in", "s0.filtered.ply", "--out", "s0.z.bin", "--seed", "3"]);
}

/// Every regular file below `dir`, by relative path.
pub fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}
