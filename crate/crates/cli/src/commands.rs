use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use rayon::prelude::*;
use splatok::checkpoint::{self, Checkpoint};
use splatok::container::{self, write_atomic};
use splatok::features::{self, FeatureLayout, FeatureOptions, VoxelGrid};
use splatok::manifest::{base_dir, SceneManifest};
use splatok::normalize::{self, NormTransform};
use splatok::train::{self, Ablation, Dataset, TrainConfig, TrainState};
use splatok::{eval, filter, gsio, model, render, CameraPose, GaussianScene, Model, ModelConfig, Tensor};

use crate::{
    AnalyzeArgs, DecodeArgs, EncodeArgs, EvalArgs, FeaturizeArgs, FilterArgs, IngestArgs, NormalizeArgs, RenderArgs,
    TrainArgs,
};

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn read_ply(path: &Path) -> Result<GaussianScene> {
    gsio::parse_ply(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn read_cameras(path: &Path) -> Result<Vec<CameraPose>> {
    gsio::load_cameras(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn read_transform(path: &Path) -> Result<NormTransform> {
    serde_json::from_slice(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    write_atomic(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn transform_json(t: &NormTransform) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(t)?;
    v.push(b'\n');
    Ok(v)
}

/// `path` relative to `base` when it lies inside it, otherwise absolute.
fn relative_to(base: &Path, path: &Path) -> Result<PathBuf> {
    let base = base.canonicalize().with_context(|| format!("resolving {}", base.display()))?;
    let full = path.canonicalize().with_context(|| format!("resolving {}", path.display()))?;
    Ok(full.strip_prefix(&base).map(Path::to_path_buf).unwrap_or(full))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn camera<'a>(cams: &'a [CameraPose], index: usize) -> Result<&'a CameraPose> {
    cams.get(index)
        .with_context(|| format!("camera index {index} is out of range ({} cameras)", cams.len()))
}

pub fn ingest(a: IngestArgs) -> Result<()> {
    let mut m = SceneManifest::load_or_default(&a.manifest)?;
    ensure!(m.entry(&a.name).is_none(), "scene {} is already in the manifest", a.name);
    read_ply(&a.ply)?.validate()?;
    if let Some(c) = &a.cams {
        let cams = read_cameras(c)?;
        if let Some(mask) = &a.mask {
            let mask = gsio::load_mask(&read(mask)?)?;
            let cam = camera(&cams, a.camera_index.unwrap_or(0))?;
            ensure!(
                (mask.width, mask.height) == (cam.width, cam.height),
                "mask is {}x{} but the camera is {}x{}",
                mask.width,
                mask.height,
                cam.width,
                cam.height
            );
        }
    }
    let base = base_dir(&a.manifest);
    fs::create_dir_all(&base)?;
    let rel = |p: &Option<PathBuf>| p.as_deref().map(|p| relative_to(&base, p)).transpose();
    m.scenes.push(splatok::manifest::SceneEntry {
        name: a.name,
        raw_ply: relative_to(&base, &a.ply)?,
        cameras: rel(&a.cams)?,
        mask: rel(&a.mask)?,
        camera_index: a.mask.as_ref().map(|_| a.camera_index.unwrap_or(0)),
        ..Default::default()
    });
    m.save(&a.manifest)?;
    Ok(())
}

fn normalize_scene(
    scene: &GaussianScene,
    cams: &[CameraPose],
    r: f64,
    off: bool,
) -> Result<(GaussianScene, Vec<CameraPose>, NormTransform)> {
    if off {
        Ok((scene.clone(), cams.to_vec(), NormTransform::identity(r)))
    } else {
        Ok(normalize::normalize(scene, cams, r)?)
    }
}

pub fn normalize(a: NormalizeArgs) -> Result<()> {
    if let Some(path) = &a.manifest {
        let mut m = SceneManifest::load(path)?;
        let base = base_dir(path);
        let outputs = m
            .scenes
            .par_iter()
            .map(|e| {
                let scene = read_ply(&base.join(&e.raw_ply))?;
                let cams = match &e.cameras {
                    Some(c) => read_cameras(&base.join(c))?,
                    None => Vec::new(),
                };
                let (s, c, t) = normalize_scene(&scene, &cams, a.r, a.no_normalization)
                    .with_context(|| format!("scene {}", e.name))?;
                Ok((s, e.cameras.as_ref().map(|_| c), t))
            })
            .collect::<Result<Vec<_>>>()?;
        for (e, (s, c, t)) in m.scenes.iter_mut().zip(outputs) {
            let ply = PathBuf::from(format!("{}.norm.ply", e.name));
            write(&base.join(&ply), &gsio::write_ply(&s))?;
            // standalone copy of the record for decode --transform
            write(&base.join(format!("{}.transform.json", e.name)), &transform_json(&t)?)?;
            e.normalized_cameras = match c {
                Some(c) => {
                    let p = PathBuf::from(format!("{}.norm.cams.json", e.name));
                    write(&base.join(&p), &gsio::write_cameras(&c))?;
                    Some(p)
                }
                None => None,
            };
            e.normalized_ply = Some(ply);
            e.transform = Some(t);
            e.filtered_ply = None;
            e.subsample_seed = None;
            e.features = None;
        }
        return Ok(m.save(path)?);
    }

    let input = a.input.as_deref().expect("clap requires --in");
    let output = a.output.as_deref().expect("clap requires --out");
    let scene = read_ply(input)?;
    let cams = a.cams.as_deref().map(read_cameras).transpose()?;
    let (s, c, t) = normalize_scene(&scene, cams.as_deref().unwrap_or(&[]), a.r, a.no_normalization)?;
    write(output, &gsio::write_ply(&s))?;
    if cams.is_some() {
        let p = a.out_cams.clone().unwrap_or_else(|| sibling(output, ".cams.json"));
        write(&p, &gsio::write_cameras(&c))?;
    }
    let tp = a.transform.clone().unwrap_or_else(|| sibling(output, ".transform.json"));
    write(&tp, &transform_json(&t)?)
}

fn filter_scene(
    scene: &GaussianScene,
    cams: Option<&[CameraPose]>,
    mask: Option<&gsio::Mask>,
    camera_index: usize,
    a: &FilterArgs,
) -> Result<GaussianScene> {
    if a.no_filtering {
        let seed = a.seed.expect("clap requires --seed");
        return Ok(filter::uniform_subsample(scene, a.target_n, seed)?.0);
    }
    let (Some(cams), Some(mask)) = (cams, mask) else {
        bail!("region growing needs cameras and a mask (or pass --no-filtering)");
    };
    let seed = filter::pick_seed(scene, camera(cams, camera_index)?, mask)?;
    Ok(filter::grow_region(scene, seed, a.target_n, a.k)?.0)
}

pub fn filter(a: FilterArgs) -> Result<()> {
    ensure!(a.target_n > 0 && a.k > 0, "--target-n and --k must be positive");
    if let Some(path) = &a.manifest {
        let mut m = SceneManifest::load(path)?;
        let base = base_dir(path);
        let outputs = m
            .scenes
            .par_iter()
            .map(|e| {
                let norm = e
                    .normalized_ply
                    .as_ref()
                    .with_context(|| format!("scene {} has not been normalized", e.name))?;
                let scene = read_ply(&base.join(norm))?;
                let cams = e.normalized_cameras.as_ref().map(|c| read_cameras(&base.join(c))).transpose()?;
                let mask = e.mask.as_ref().map(|p| read(&base.join(p)).and_then(|b| Ok(gsio::load_mask(&b)?))).transpose()?;
                filter_scene(&scene, cams.as_deref(), mask.as_ref(), e.camera_index.unwrap_or(0), &a)
                    .with_context(|| format!("scene {}", e.name))
            })
            .collect::<Result<Vec<_>>>()?;
        for (e, s) in m.scenes.iter_mut().zip(outputs) {
            let p = PathBuf::from(format!("{}.filtered.ply", e.name));
            write(&base.join(&p), &gsio::write_ply(&s))?;
            e.filtered_ply = Some(p);
            e.subsample_seed = if a.no_filtering { a.seed } else { None };
            e.n = Some(s.len());
            e.features = None;
        }
        return Ok(m.save(path)?);
    }

    let input = a.input.as_deref().expect("clap requires --in");
    let output = a.output.as_deref().expect("clap requires --out");
    let scene = read_ply(input)?;
    let cams = a.cams.as_deref().map(read_cameras).transpose()?;
    let mask = a.mask.as_deref().map(|p| read(p).and_then(|b| Ok(gsio::load_mask(&b)?))).transpose()?;
    let s = filter_scene(&scene, cams.as_deref(), mask.as_ref(), a.camera_index.unwrap_or(0), &a)?;
    write(output, &gsio::write_ply(&s))
}

fn feature_setup(a: &FeaturizeArgs) -> Result<(VoxelGrid, FeatureOptions)> {
    ensure!(a.r > 0.0 && a.resolution > 0 && a.bands > 0, "--r, --resolution and --bands must be positive");
    Ok((
        VoxelGrid { resolution: a.resolution, r: a.r },
        FeatureOptions { bands: a.bands, voxel_append: !a.no_voxel_append, sh_rest: a.sh_rest },
    ))
}

fn feature_tensors(scene: &GaussianScene, grid: &VoxelGrid, opts: &FeatureOptions) -> Result<(Tensor, Tensor)> {
    let (f, t) = features::featurize(scene, grid, opts);
    let rows = f.rows;
    Ok((Tensor::matrix(rows, f.cols, f.values)?, Tensor::matrix(rows, features::TARGET_WIDTH, t)?))
}

pub fn featurize(a: FeaturizeArgs) -> Result<()> {
    let (grid, opts) = feature_setup(&a)?;
    if let Some(path) = &a.manifest {
        let mut m = SceneManifest::load(path)?;
        let base = base_dir(path);
        let outputs = m
            .scenes
            .par_iter()
            .map(|e| {
                let p = e
                    .filtered_ply
                    .as_ref()
                    .with_context(|| format!("scene {} has not been filtered", e.name))?;
                let scene = read_ply(&base.join(p))?;
                let rest = scene.colors_rest.as_ref().map_or(0, |r| r.width);
                Ok((feature_tensors(&scene, &grid, &opts)?.0, FeatureLayout::new(&opts, rest), scene.len()))
            })
            .collect::<Result<Vec<_>>>()?;
        for (e, (f, layout, n)) in m.scenes.iter_mut().zip(outputs) {
            let p = PathBuf::from(format!("{}.features.bin", e.name));
            write(&base.join(&p), &container::encode_tensor(&f))?;
            e.features = Some(p);
            e.feature_options = Some(opts);
            e.grid = Some(grid);
            e.layout = Some(layout);
            e.n = Some(n);
        }
        return Ok(m.save(path)?);
    }

    let input = a.input.as_deref().expect("clap requires --in");
    let output = a.output.as_deref().expect("clap requires --out");
    let (f, t) = feature_tensors(&read_ply(input)?, &grid, &opts)?;
    write(output, &container::encode_tensor(&f))?;
    if let Some(p) = &a.target_out {
        write(p, &container::encode_tensor(&t))?;
    }
    Ok(())
}

fn base_config(name: &str) -> Result<ModelConfig> {
    Ok(match name {
        "toy" => ModelConfig::toy(),
        "full" => ModelConfig::full(),
        path => serde_json::from_slice(&read(Path::new(path))?).with_context(|| format!("parsing {path}"))?,
    })
}

pub fn train(a: TrainArgs) -> Result<()> {
    let m = SceneManifest::load(&a.manifest)?;
    let base = base_dir(&a.manifest);
    let (n, opts, grid) = m.training_shape()?;
    let ablation = Ablation {
        no_normalization: a.no_normalization,
        no_voxel_append: a.no_voxel_append,
        no_filtering: a.no_filtering,
        no_augmentation: a.no_augmentation,
        no_learnable_query: a.no_learnable_query,
    };
    for e in &m.scenes {
        let identity = e.transform.is_some_and(|t| t.translate == [0.0; 3] && t.scale == 1.0);
        ensure!(
            !a.no_normalization || identity,
            "scene {} was normalized but --no-normalization was given",
            e.name
        );
        ensure!(
            a.no_filtering == e.subsample_seed.is_some(),
            "scene {}: --no-filtering must match how the scene was filtered",
            e.name
        );
    }
    ensure!(
        a.no_voxel_append != opts.voxel_append,
        "--no-voxel-append must match how the manifest was featurized"
    );
    let scenes = m
        .scenes
        .iter()
        .map(|e| read_ply(&base.join(e.filtered_ply.as_ref().unwrap())))
        .collect::<Result<Vec<_>>>()?;
    let rest = scenes[0].colors_rest.as_ref().map_or(0, |r| r.width);

    let mut config = base_config(&a.config)?;
    config.n_gaussians = n;
    config.feature_width = FeatureLayout::new(&opts, rest).width();
    config.learnable_query = !a.no_learnable_query;
    config.radius = grid.r;
    config.validate()?;

    let cfg = TrainConfig {
        batch_size: a.batch_size,
        steps: a.steps,
        lr: a.lr,
        augmentation: !a.no_augmentation,
        ablation,
        checkpoint_every: a.checkpoint_every,
        ..TrainConfig::new(a.seed, a.steps)
    };
    cfg.validate()?;
    let log_path = a.log.clone().unwrap_or_else(|| a.ckpt.join("loss.tsv"));

    let (mut state, mut log) = if a.resume {
        let ck = checkpoint::load(&a.ckpt)?;
        ensure!(ck.model.config == config, "checkpoint model config differs from this run");
        ensure!(ck.features == opts && ck.grid == grid, "checkpoint features differ from the manifest");
        let adam = ck.optimizer.context("checkpoint has no optimizer state to resume from")?;
        let step = adam.step;
        let previous = String::from_utf8(read(&log_path)?)?;
        let kept: String = previous
            .lines()
            .filter(|l| l.split('\t').next().and_then(|s| s.parse::<u64>().ok()).is_some_and(|s| s <= step))
            .map(|l| format!("{l}\n"))
            .collect();
        (TrainState::resume(ck.model, adam)?, kept)
    } else {
        (TrainState::new(Model::new(config, a.seed)?), String::new())
    };

    let save = |state: &TrainState, log: &str| -> Result<()> {
        let ck = Checkpoint {
            model: state.model.clone(),
            features: opts,
            grid,
            optimizer: Some(state.adam.clone()),
            train: Some(cfg.clone()),
        };
        checkpoint::save(&a.ckpt, &ck)?;
        write(&log_path, log.as_bytes())
    };
    let data = Dataset { scenes, grid, features: opts };
    train::run_training(&data, &mut state, &cfg, |report, state| {
        log.push_str(&train::log_line(&report.record));
        if cfg.checkpoint_every > 0 && report.record.step % cfg.checkpoint_every == 0 {
            save(state, &log).map_err(|e| splatok::Error::Config(format!("{e:#}")))?;
        }
        Ok(())
    })?;
    save(&state, &log)?;
    if let Some(last) = state.history.last() {
        println!("step {}: loss {}", last.step, last.loss.total);
    }
    Ok(())
}

fn load_for_inference(ckpt: &Path, scene_path: &Path) -> Result<(Checkpoint, features::FeatureMatrix, Vec<f64>)> {
    let ck = checkpoint::load(ckpt)?;
    let scene = read_ply(scene_path)?;
    ensure!(
        scene.len() == ck.model.config.n_gaussians,
        "{} has {} Gaussians, the model expects {}",
        scene_path.display(),
        scene.len(),
        ck.model.config.n_gaussians
    );
    let (f, t) = features::featurize(&scene, &ck.grid, &ck.features);
    Ok((ck, f, t))
}

pub fn encode(a: EncodeArgs) -> Result<()> {
    let (ck, f, _) = load_for_inference(&a.ckpt, &a.input)?;
    let code = model::encode_latent(&f, &ck.model, &model::seeded_eps(&ck.model.config, a.seed))?;
    let out = if a.mean { &code.mu } else { &code.z };
    write(&a.output, &container::encode_tensor(out))
}

pub fn decode(a: DecodeArgs) -> Result<()> {
    let ck = checkpoint::load(&a.ckpt)?;
    let z = container::decode_tensor(&read(&a.latent)?)?;
    let t = a.transform.as_deref().map(read_transform).transpose()?;
    let out = model::decode(&z, &ck.model)?;
    let mut scene = features::scene_from_targets(out.data())?;
    if let Some(t) = t {
        scene = normalize::invert(&scene, &[], &t)?.0;
    }
    write(&a.output, &gsio::write_ply(&scene))
}

fn manifest_scenes(path: &Path) -> Result<(SceneManifest, Vec<GaussianScene>)> {
    let m = SceneManifest::load(path)?;
    let base = base_dir(path);
    let scenes = m
        .scenes
        .par_iter()
        .map(|e| {
            let p = e.filtered_ply.as_ref().with_context(|| format!("scene {} has not been filtered", e.name))?;
            read_ply(&base.join(p))
        })
        .collect::<Result<Vec<_>>>()?;
    ensure!(!scenes.is_empty(), "the manifest lists no scenes");
    Ok((m, scenes))
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let ck = checkpoint::load(&a.ckpt)?;
    let (m, scenes) = manifest_scenes(&a.manifest)?;
    let (errors, targets): (Vec<_>, Vec<_>) = m
        .scenes
        .par_iter()
        .zip(&scenes)
        .map(|(e, s)| {
            let (out, target) =
                eval::reconstruct(&ck.model, s, &ck.grid, &ck.features).with_context(|| format!("scene {}", e.name))?;
            let l2 = eval::scene_l2(out.data(), &target)?;
            Ok((eval::SceneError { name: e.name.clone(), l2 }, target))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    let threshold = match a.threshold {
        Some(t) => t,
        None => eval::desk_threshold(&targets.iter().map(Vec::as_slice).collect::<Vec<_>>())?,
    };
    let report = eval::EvalReport::new(errors, threshold)?;
    write(&a.output, report.to_json()?.as_bytes())?;
    println!(
        "mean L2 {:.6}, failure rate {:.4} (threshold {:.6})",
        report.mean_l2, report.failure_rate, report.threshold
    );
    Ok(())
}

pub fn analyze(a: AnalyzeArgs) -> Result<()> {
    let ck = checkpoint::load(&a.ckpt)?;
    let (m, scenes) = manifest_scenes(&a.manifest)?;
    ensure!(a.rotations > 0, "--rotations must be positive");
    let axis = [a.axis[0], a.axis[1], a.axis[2]];
    ensure!(axis.iter().any(|&v| v != 0.0), "--axis must be nonzero");
    let names: Vec<String> = m.scenes.iter().map(|e| e.name.clone()).collect();
    let loop_idx = match &a.loop_scene {
        Some(n) => names.iter().position(|x| x == n).with_context(|| format!("no scene named {n}"))?,
        None => 0,
    };

    let mu = scenes
        .par_iter()
        .map(|s| eval::embed(&ck.model, s, &ck.grid, &ck.features))
        .collect::<splatok::Result<Vec<_>>>()?;
    let dist = eval::latent_distances(&mu)?;
    let projection = match eval::pca_project(&mu.iter().map(|t| t.data().to_vec()).collect::<Vec<_>>(), 2) {
        Ok(p) => Some(p),
        Err(e) => {
            eprintln!("note: skipping the PCA projection: {e}");
            None
        }
    };
    let references: Vec<GaussianScene> = scenes
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != loop_idx)
        .map(|(_, s)| s.clone())
        .collect();
    let stats = eval::rotation_loop_stats(
        &ck.model,
        &scenes[loop_idx],
        &eval::loop_rotations(axis, a.rotations),
        &references,
        &ck.grid,
        &ck.features,
    )?;

    fs::create_dir_all(&a.out_dir)?;
    write(&a.out_dir.join("distances.tsv"), eval::distances_tsv(&names, &dist).as_bytes())?;
    if let Some(p) = projection {
        write(&a.out_dir.join("pca.tsv"), eval::projection_tsv(&names, &p).as_bytes())?;
    }
    let mut json = serde_json::to_vec_pretty(&stats)?;
    json.push(b'\n');
    write(&a.out_dir.join("loop.json"), &json)
}

pub fn render(a: RenderArgs) -> Result<()> {
    let scene = read_ply(&a.input)?;
    let cams = read_cameras(&a.cams)?;
    let cam = camera(&cams, a.camera_index)?;
    let (w, h) = (a.width.unwrap_or(cam.width), a.height.unwrap_or(cam.height));
    ensure!(w > 0 && h > 0, "image size must be positive");
    let img = render::render_preview(&scene, cam, w, h);
    write(&a.output, &img.to_ppm())
}
