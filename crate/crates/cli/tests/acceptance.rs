// Acceptance suite: one PASS/FAIL line per criterion. Run with
// `cargo test -p splatok-cli --test acceptance`; exits nonzero on any failure.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use splatok::checkpoint::{self, Checkpoint};
use splatok::container;
use splatok::eval::{self, EvalReport, SceneError};
use splatok::features::{self, FeatureOptions, VoxelGrid};
use splatok::filter::{self, build_index, grow_region, grow_region_order};
use splatok::geom::{self, Vec3};
use splatok::gsio::{self, RestColors};
use splatok::model::{self, Model, ModelConfig};
use splatok::normalize::{self, apply, compute_transform, invert};
use splatok::numerics::{AttentionWeights, Graph, Var};
use splatok::render::{project_center, render_preview};
use splatok::synth::{self, Shape};
use splatok::train::{self, Dataset, TrainConfig, TrainState};
use splatok::{GaussianScene, Tensor};

type Outcome = Result<String, String>;

macro_rules! check {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn within(start: Instant, budget: Duration) -> Result<(), String> {
    let t = start.elapsed();
    if t > budget {
        return Err(format!("took {:.1}s, budget {}s", t.as_secs_f64(), budget.as_secs()));
    }
    Ok(())
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn random_scene(rng: &mut ChaCha8Rng, n: usize, rest: usize) -> GaussianScene {
    let v3 = |rng: &mut ChaCha8Rng, s: f64| -> Vec3 { [0, 1, 2].map(|_| rng.random_range(-s..s)) };
    let origin = v3(rng, 1000.0);
    let spread = 10f64.powf(rng.random_range(-2.0..3.0));
    GaussianScene {
        centers: (0..n).map(|_| geom::add(origin, v3(rng, spread))).collect(),
        rotations: (0..n).map(|_| [0, 1, 2, 3].map(|_| rng.random_range(-1.0..1.0))).collect(),
        opacities: (0..n).map(|_| rng.random_range(-6.0..6.0)).collect(),
        scales: (0..n).map(|_| v3(rng, 5.0)).collect(),
        colors_dc: (0..n).map(|_| v3(rng, 2.0)).collect(),
        colors_rest: (rest > 0).then(|| RestColors {
            width: rest,
            values: (0..n * rest).map(|_| rng.random_range(-1.0..1.0)).collect(),
        }),
    }
}

// ---------------------------------------------------------------- 1

const NORM_SCENES: usize = 100;
const CENTER_TOL: f64 = 1e-9;
const BOUND_TOL: f64 = 1e-6;
const IDEMPOTENCE_TOL: f64 = 1e-9;
const INVERSE_TOL: f64 = 1e-6;

fn normalization_suite() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = [0.0f64; 4];
    for i in 0..NORM_SCENES {
        let n = rng.random_range(100..=5000);
        let r = rng.random_range(0.25..4.0);
        let scene = random_scene(&mut rng, n, 0);
        let cams = synth::orbit_cameras(&scene, 2, 64, 48);
        let t = compute_transform(&scene, r).map_err(|e| e.to_string())?;
        let (out, ncams) = apply(&scene, &cams, &t).map_err(|e| e.to_string())?;

        let extent = out.centers.iter().map(|&c| geom::norm(c)).fold(0.0, f64::max);
        let center = geom::norm(normalize::centroid(&out.centers)) / extent;
        check!(center <= CENTER_TOL, "scene {i}: centroid off by {center:e} of the extent");
        let bound = rel(extent, r / 1.1);
        check!(bound <= BOUND_TOL, "scene {i}: max norm {extent} vs r/1.1 = {}", r / 1.1);

        let again = compute_transform(&out, r).map_err(|e| e.to_string())?;
        let (twice, _) = apply(&out, &[], &again).map_err(|e| e.to_string())?;
        let moved = out
            .centers
            .iter()
            .zip(&twice.centers)
            .map(|(a, b)| geom::norm(geom::sub(*a, *b)))
            .fold(0.0, f64::max)
            / extent;
        let idem = (geom::norm(again.translate) / extent).max((again.scale - 1.0).abs()).max(moved);
        check!(idem <= IDEMPOTENCE_TOL, "scene {i}: second normalization moved things by {idem:e}");

        let (back, bcams) = invert(&out, &ncams, &t).map_err(|e| e.to_string())?;
        let mag = scene.centers.iter().map(|&c| geom::norm(c)).fold(0.0, f64::max);
        let mut inv = 0.0f64;
        for (a, b) in back.centers.iter().zip(&scene.centers).chain(bcams.iter().map(|c| &c.center).zip(cams.iter().map(|c| &c.center))) {
            inv = inv.max(geom::norm(geom::sub(*a, *b)) / mag);
        }
        for (a, b) in back.scales.iter().flatten().zip(scene.scales.iter().flatten()) {
            inv = inv.max((a - b).abs() / b.abs().max(1.0));
        }
        check!(inv <= INVERSE_TOL, "scene {i}: inverse round trip off by {inv:e}");
        for (k, v) in [center, bound, idem, inv].into_iter().enumerate() {
            worst[k] = worst[k].max(v);
        }
    }
    within(start, Duration::from_secs(10))?;
    Ok(format!(
        "{NORM_SCENES} scenes; worst centroid {:.1e}, bound {:.1e}, idempotence {:.1e}, inverse {:.1e}",
        worst[0], worst[1], worst[2], worst[3]
    ))
}

// ---------------------------------------------------------------- 2

const TRIPLES: usize = 10_000;
const PIXEL_TOL: f64 = 1e-4;
const IMAGE_TOL: u8 = 2;

fn render_consistency() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_px = 0.0f64;
    let mut worst_img = 0u8;
    let scenes = 100;
    for s in 0..scenes {
        let n = rng.random_range(200..1500);
        let scene = random_scene(&mut rng, n, 0);
        let cams = synth::orbit_cameras(&scene, 8, 320, 240);
        let (ns, ncams, _) = normalize::normalize(&scene, &cams, 1.0).map_err(|e| e.to_string())?;
        for _ in 0..TRIPLES / scenes {
            let c = rng.random_range(0..cams.len());
            let i = rng.random_range(0..n);
            let (u0, v0, _) = project_center(&cams[c], scene.centers[i]).map_err(|e| e.to_string())?;
            let (u1, v1, _) = project_center(&ncams[c], ns.centers[i]).map_err(|e| e.to_string())?;
            worst_px = worst_px.max((u0 - u1).abs()).max((v0 - v1).abs());
        }
        if s % 10 == 0 {
            for (a, b) in cams.iter().zip(&ncams).take(2) {
                let i0 = render_preview(&scene, a, 160, 120);
                let i1 = render_preview(&ns, b, 160, 120);
                check!(i0.pixels.iter().any(|&p| p > 0), "scene {s}: blank preview");
                let d = i0.pixels.iter().zip(&i1.pixels).map(|(x, y)| x.abs_diff(*y)).max().unwrap();
                worst_img = worst_img.max(d);
            }
        }
    }
    check!(worst_px < PIXEL_TOL, "projected centers differ by {worst_px:e} px");
    check!(worst_img <= IMAGE_TOL, "previews differ by {worst_img}/255");
    within(start, Duration::from_secs(60))?;
    Ok(format!("{TRIPLES} triples, worst {worst_px:.1e} px; 20 previews, worst {worst_img}/255"))
}

// ---------------------------------------------------------------- 3

const FD_H: f64 = 1e-5;
const GRAD_TOL: f64 = 1e-4;
// Roundoff in the model loss puts a few 1e-9 of noise in an FD_H difference
// quotient. Smaller gradients are held to GRAD_TOL * FD_FLOOR absolute and do
// not count towards MODEL_COORDS.
const FD_FLOOR: f64 = 1e-4;
const MODEL_COORDS: usize = 200;

fn rel_grad(fd: f64, analytic: f64) -> f64 {
    (fd - analytic).abs() / fd.abs().max(analytic.abs()).max(FD_FLOOR)
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Checks every input coordinate of `f`, whose output is reduced to a
/// scalar through fixed random weights. Returns (coordinates, worst).
fn op_check(inputs: Vec<Tensor>, f: impl Fn(&mut Graph, &[Var]) -> Var) -> Result<(usize, f64), String> {
    let probe = |g: &mut Graph, y: Var| {
        let t = g.value(y).clone();
        let w = random_tensor(&mut ChaCha8Rng::seed_from_u64(77), t.shape());
        let w = g.leaf(w);
        let p = g.mul(y, w).unwrap();
        g.sum(p)
    };
    let eval = |xs: &[Tensor]| {
        let mut g = Graph::new(&[]);
        let vars: Vec<Var> = xs.iter().map(|t| g.leaf(t.clone())).collect();
        let y = f(&mut g, &vars);
        let s = probe(&mut g, y);
        g.value(s).item()
    };
    let mut g = Graph::new(&[]);
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let y = f(&mut g, &vars);
    let s = probe(&mut g, y);
    let grads = g.backward(s).map_err(|e| e.to_string())?;
    let (mut count, mut worst) = (0, 0.0f64);
    for (i, v) in vars.iter().enumerate() {
        let analytic = grads.leaf(*v).map(|t| t.data().to_vec()).unwrap_or(vec![0.0; inputs[i].len()]);
        for j in 0..inputs[i].len() {
            let mut plus = inputs.clone();
            plus[i].data_mut()[j] += FD_H;
            let mut minus = inputs.clone();
            minus[i].data_mut()[j] -= FD_H;
            let fd = (eval(&plus) - eval(&minus)) / (2.0 * FD_H);
            let r = rel_grad(fd, analytic[j]);
            check!(r < GRAD_TOL, "input {i}[{j}]: analytic {:e} vs numeric {fd:e}", analytic[j]);
            worst = worst.max(r);
            count += 1;
        }
    }
    Ok((count, worst))
}

fn op_suite() -> Result<(usize, usize, f64), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut r = |s: &[usize]| random_tensor(&mut rng, s);
    type Case = (&'static str, Vec<Tensor>, Box<dyn Fn(&mut Graph, &[Var]) -> Var>);
    let cases: Vec<Case> = vec![
        ("matmul", vec![r(&[3, 4]), r(&[4, 2])], Box::new(|g, v| g.matmul(v[0], v[1]).unwrap())),
        ("matmul_nt", vec![r(&[3, 4]), r(&[5, 4])], Box::new(|g, v| g.matmul_nt(v[0], v[1]).unwrap())),
        ("add", vec![r(&[2, 3]), r(&[2, 3])], Box::new(|g, v| g.add(v[0], v[1]).unwrap())),
        ("add_row", vec![r(&[3, 4]), r(&[4])], Box::new(|g, v| g.add_row(v[0], v[1]).unwrap())),
        ("mul", vec![r(&[2, 3]), r(&[2, 3])], Box::new(|g, v| g.mul(v[0], v[1]).unwrap())),
        ("scale", vec![r(&[2, 3])], Box::new(|g, v| g.scale(v[0], -2.5))),
        ("exp", vec![r(&[2, 3])], Box::new(|g, v| g.exp(v[0]))),
        ("gelu", vec![r(&[3, 5])], Box::new(|g, v| g.gelu(v[0]))),
        ("softmax", vec![r(&[3, 5])], Box::new(|g, v| g.softmax(v[0]))),
        ("layer_norm", vec![r(&[3, 6]), r(&[6]), r(&[6])], Box::new(|g, v| g.layer_norm(v[0], v[1], v[2], 1e-5).unwrap())),
        ("slice_cols", vec![r(&[3, 6])], Box::new(|g, v| g.slice_cols(v[0], 2, 3).unwrap())),
        ("concat_cols", vec![r(&[3, 2]), r(&[3, 4])], Box::new(|g, v| g.concat_cols(&[v[0], v[1]]).unwrap())),
        ("reshape", vec![r(&[3, 4])], Box::new(|g, v| g.reshape(v[0], &[2, 6]).unwrap())),
        ("clamp", vec![r(&[4, 4])], Box::new(|g, v| g.clamp(v[0], -0.5, 0.5))),
        ("sum", vec![r(&[2, 5])], Box::new(|g, v| g.sum(v[0]))),
        ("mse", vec![r(&[3, 4]), r(&[3, 4])], Box::new(|g, v| g.mse(v[0], v[1]).unwrap())),
        ("kl_std_normal", vec![r(&[2, 4]), r(&[2, 4])], Box::new(|g, v| g.kl_std_normal(v[0], v[1]).unwrap())),
        (
            "weighted_sum",
            vec![r(&[1]), r(&[1])],
            Box::new(|g, v| g.weighted_sum(&[(v[0], 0.7), (v[1], -1.3)]).unwrap()),
        ),
        ("linear", vec![r(&[3, 4]), r(&[4, 5]), r(&[5])], Box::new(|g, v| g.linear(v[0], v[1], v[2]).unwrap())),
        ("multi_head", vec![r(&[3, 8]), r(&[5, 8]), r(&[5, 8])], Box::new(|g, v| g.multi_head(v[0], v[1], v[2], 2).unwrap())),
        (
            "attention",
            {
                let mut xs = vec![r(&[3, 6]), r(&[4, 6])];
                for _ in 0..4 {
                    xs.push(r(&[6, 6]));
                    xs.push(r(&[6]));
                }
                xs
            },
            Box::new(|g, v| {
                let w = AttentionWeights { wq: v[2], bq: v[3], wk: v[4], bk: v[5], wv: v[6], bv: v[7], wo: v[8], bo: v[9] };
                g.attention(v[0], v[1], v[1], &w, 3).unwrap()
            }),
        ),
    ];
    let (ops, mut coords, mut worst) = (cases.len(), 0, 0.0f64);
    for (name, inputs, f) in cases {
        let (c, w) = op_check(inputs, f).map_err(|e| format!("{name}: {e}"))?;
        coords += c;
        worst = worst.max(w);
    }
    Ok((ops, coords, worst))
}

fn model_check() -> Result<(usize, f64), String> {
    let config = ModelConfig::toy();
    let model = Model::new(config.clone(), 11).map_err(|e| e.to_string())?;
    let scene = normalize::normalize(&synth::scene(11, config.n_gaussians, Shape::Torus), &[], 1.0).unwrap().0;
    let (f, t) = features::featurize(&scene, &VoxelGrid::default(), &FeatureOptions::default());
    let eps = model::seeded_eps(&config, 12);
    let (_, grads) = model::loss_and_grad(&model, &f, &t, &eps).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let tensors = model.params.tensors().len();
    let (mut resolved, mut tried, mut worst) = (0, 0, 0.0f64);
    while resolved < MODEL_COORDS {
        check!(tried < 50 * MODEL_COORDS, "too few coordinates carry a resolvable gradient");
        let ti = if tried < tensors { tried } else { rng.random_range(0..tensors) };
        let j = rng.random_range(0..model.params.tensors()[ti].len());
        let analytic = grads.params[ti].as_ref().map_or(0.0, |g| g.data()[j]);
        let at = |d: f64| {
            let mut m = model.clone();
            m.params.tensors_mut()[ti].data_mut()[j] += d;
            model::loss_value(&m, &f, &t, &eps).unwrap().total
        };
        let fd = (at(FD_H) - at(-FD_H)) / (2.0 * FD_H);
        let r = rel_grad(fd, analytic);
        check!(r < GRAD_TOL, "{}[{j}]: analytic {analytic:e} vs numeric {fd:e}", model.params.specs()[ti].name);
        worst = worst.max(r);
        resolved += (fd.abs().max(analytic.abs()) >= FD_FLOOR) as usize;
        tried += 1;
    }
    Ok((tried, worst))
}

fn gradient_fidelity() -> Outcome {
    let start = Instant::now();
    let (ops, op_coords, op_worst) = op_suite()?;
    let (coords, model_worst) = model_check()?;
    within(start, Duration::from_secs(300))?;
    Ok(format!(
        "{ops} ops / {op_coords} coords worst {op_worst:.1e}; toy model {coords} coords ({MODEL_COORDS} resolvable) worst {model_worst:.1e}"
    ))
}

// ---------------------------------------------------------------- 4 and 5

const TRAIN_SCENES: usize = 4;
const PARENT_N: usize = 320;
const TRAIN_STEPS: u64 = 4000;
const TRAIN_BATCH: usize = 8;
const TRAIN_LR: f64 = 3e-4;
const TRAIN_SEED: u64 = 1;
const LOSS_DROP: f64 = 10.0;
const LOOP_ROTATIONS: usize = 36;
const LOOP_FRACTION: f64 = 0.9;
const CROP_TRIALS: usize = 20;
const CROP_FRACTION: f64 = 0.9;

struct Trained {
    model: Model,
    parents: Vec<GaussianScene>,
    scenes: Vec<GaussianScene>,
    grid: VoxelGrid,
    opts: FeatureOptions,
}

/// A normalized synthetic scene larger than the training size, from which
/// training scenes and crops are region-grown.
fn parent(i: usize) -> GaussianScene {
    let s = synth::scene(100 + i as u64, PARENT_N, Shape::ALL[i % 4]);
    normalize::normalize(&s, &[], 1.0).unwrap().0
}

fn crop(parent: &GaussianScene, seed: usize, n: usize) -> GaussianScene {
    grow_region(parent, seed, n, filter::DEFAULT_K).unwrap().0
}

fn overfit_convergence(slot: &mut Option<Trained>) -> Outcome {
    let start = Instant::now();
    let config = ModelConfig::toy();
    let n = config.n_gaussians;
    let parents: Vec<GaussianScene> = (0..TRAIN_SCENES).map(parent).collect();
    let mask = synth::disk_mask(64, 48, 32.0, 24.0, 14.0);
    let scenes = parents
        .iter()
        .map(|p| {
            let cams = synth::orbit_cameras(p, 4, 64, 48);
            let seed = filter::pick_seed(p, &cams[1], &mask)?;
            Ok(crop(p, seed, n))
        })
        .collect::<splatok::Result<Vec<_>>>()
        .map_err(|e| e.to_string())?;
    let (grid, opts) = (VoxelGrid::default(), FeatureOptions::default());
    let data = Dataset { scenes: scenes.clone(), grid, features: opts };
    let mut state = TrainState::new(Model::new(config, 0).map_err(|e| e.to_string())?);
    let cfg = TrainConfig { batch_size: TRAIN_BATCH, lr: TRAIN_LR, augmentation: true, ..TrainConfig::new(TRAIN_SEED, TRAIN_STEPS) };
    train::run_training(&data, &mut state, &cfg, |_, _| Ok(())).map_err(|e| e.to_string())?;

    let first = state.history[0].loss.total;
    let tail = &state.history[state.history.len() - 100..];
    let last = tail.iter().map(|r| r.loss.total).sum::<f64>() / tail.len() as f64;
    let mut errors = Vec::new();
    let mut targets = Vec::new();
    for (i, s) in scenes.iter().enumerate() {
        let (out, target) = eval::reconstruct(&state.model, s, &grid, &opts).map_err(|e| e.to_string())?;
        errors.push(SceneError { name: format!("scene{i}"), l2: eval::scene_l2(out.data(), &target).unwrap() });
        targets.push(target);
    }
    let threshold = eval::desk_threshold(&targets.iter().map(Vec::as_slice).collect::<Vec<_>>()).unwrap();
    let report = EvalReport::new(errors, threshold).unwrap();
    let l2s: Vec<String> = report.scenes.iter().map(|s| format!("{:.3}", s.l2)).collect();
    *slot = Some(Trained { model: state.model, parents, scenes, grid, opts });

    check!(first / last >= LOSS_DROP, "loss {first:.4} -> {last:.4} (mean of last 100 steps) is under {LOSS_DROP}x");
    check!(report.failure_rate == 0.0, "L2 [{}] vs threshold {threshold:.3}: failure rate {}", l2s.join(", "), report.failure_rate);
    within(start, Duration::from_secs(1800))?;
    Ok(format!(
        "loss {first:.3} -> {last:.4} ({:.0}x); L2 [{}] < threshold {threshold:.3}; {:.0}s",
        first / last,
        l2s.join(", "),
        start.elapsed().as_secs_f64()
    ))
}

fn latent_structure(trained: &Option<Trained>) -> Outcome {
    let Some(t) = trained else {
        return Err("criterion 4 produced no trained model".into());
    };
    let references: Vec<GaussianScene> = t.scenes[1..].to_vec();
    let rotations = eval::loop_rotations([0.0, 0.0, 1.0], LOOP_ROTATIONS);
    let stats = eval::rotation_loop_stats(&t.model, &t.scenes[0], &rotations, &references, &t.grid, &t.opts)
        .map_err(|e| e.to_string())?;
    check!(
        stats.steps_below_cross >= LOOP_FRACTION,
        "only {:.0}% of loop steps under the cross-scene distance {:.3} (mean step {:.3})",
        100.0 * stats.steps_below_cross,
        stats.min_cross_scene,
        stats.mean_consecutive
    );

    let embed = |s: &GaussianScene| eval::embed(&t.model, s, &t.grid, &t.opts).unwrap();
    let mu: Vec<Tensor> = t.scenes.iter().map(embed).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut wins = 0;
    for _ in 0..CROP_TRIALS {
        let i = rng.random_range(0..t.scenes.len());
        let n = t.model.config.n_gaussians;
        let a = embed(&crop(&t.parents[i], rng.random_range(0..PARENT_N), n));
        let b = embed(&crop(&t.parents[i], rng.random_range(0..PARENT_N), n));
        let same = eval::distance(a.data(), b.data());
        let other = (0..mu.len())
            .filter(|&j| j != i)
            .flat_map(|j| [eval::distance(a.data(), mu[j].data()), eval::distance(b.data(), mu[j].data())])
            .fold(f64::INFINITY, f64::min);
        wins += (same < other) as usize;
    }
    let frac = wins as f64 / CROP_TRIALS as f64;
    check!(frac >= CROP_FRACTION, "same-scene crops closest in only {wins}/{CROP_TRIALS} trials");
    Ok(format!(
        "loop: {:.0}% of {LOOP_ROTATIONS} steps under cross-scene {:.3} (mean step {:.3}); crops: {wins}/{CROP_TRIALS}",
        100.0 * stats.steps_below_cross,
        stats.min_cross_scene,
        stats.mean_consecutive
    ))
}

// ---------------------------------------------------------------- 6

const GROW_INSTANCES: usize = 50;
const KNN_QUERIES: usize = 10_000;

fn brute_neighbours(points: &[Vec3], q: Vec3, k: usize, skip: Option<usize>) -> Vec<usize> {
    let mut all: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .filter(|&(j, _)| Some(j) != skip)
        .map(|(j, &p)| (geom::dist2(q, p), j))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all.truncate(k);
    all.into_iter().map(|(_, j)| j).collect()
}

/// O(N^2) region growing with the same rules: each step takes the cheapest
/// (squared distance, id) edge from a selected point to one of its k nearest
/// others; with no such edge left, the unselected point nearest the centroid.
/// Returns the order and how many refills happened.
fn brute_grow(points: &[Vec3], seed: usize, target: usize, k: usize) -> (Vec<usize>, usize) {
    let n = points.len();
    let mut best = vec![(f64::INFINITY, usize::MAX); n];
    let mut selected = vec![false; n];
    let mut order = Vec::with_capacity(target);
    let mut sum = [0.0; 3];
    let mut refills = 0;
    let mut next = seed;
    loop {
        selected[next] = true;
        order.push(next);
        sum = geom::add(sum, points[next]);
        if order.len() == target {
            return (order, refills);
        }
        for j in brute_neighbours(points, points[next], k, Some(next)) {
            let key = (geom::dist2(points[next], points[j]), j);
            if key.0 < best[j].0 {
                best[j] = key;
            }
        }
        let cand = (0..n)
            .filter(|&j| !selected[j] && best[j].0.is_finite())
            .min_by(|&a, &b| best[a].0.total_cmp(&best[b].0).then(a.cmp(&b)));
        next = match cand {
            Some(j) => j,
            None => {
                refills += 1;
                let c = geom::scale(sum, 1.0 / order.len() as f64);
                (0..n)
                    .filter(|&j| !selected[j])
                    .min_by(|&a, &b| geom::dist2(c, points[a]).total_cmp(&geom::dist2(c, points[b])).then(a.cmp(&b)))
                    .unwrap()
            }
        };
    }
}

fn clustered(rng: &mut ChaCha8Rng, n: usize, clusters: usize) -> Vec<Vec3> {
    let hubs: Vec<Vec3> = (0..clusters).map(|_| [0, 1, 2].map(|_| rng.random_range(-100.0..100.0))).collect();
    let mut pts: Vec<Vec3> = Vec::with_capacity(n);
    for i in 0..n {
        if i > 0 && rng.random_bool(0.03) {
            // exact duplicate of an earlier point
            let j = rng.random_range(0..i);
            pts.push(pts[j]);
            continue;
        }
        let h = hubs[rng.random_range(0..clusters)];
        pts.push(geom::add(h, [0, 1, 2].map(|_| rng.random_range(-2.0..2.0))));
    }
    pts
}

fn filtering_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut refill_cases, mut queries) = (0, 0);
    for inst in 0..GROW_INSTANCES {
        let n = rng.random_range(50..=2000);
        let clusters = rng.random_range(1..=6);
        let k = rng.random_range(1..=24);
        let pts = clustered(&mut rng, n, clusters);
        let seed = rng.random_range(0..n);
        let target = rng.random_range(n / 2..=n);
        let index = build_index(&pts).map_err(|e| e.to_string())?;
        let got = grow_region_order(&index, seed, target, k).map_err(|e| e.to_string())?;
        let (want, refills) = brute_grow(&pts, seed, target, k);
        check!(got == want, "instance {inst} (N={n}, k={k}, {clusters} clusters): selections differ");
        refill_cases += (refills > 0) as usize;

        for _ in 0..KNN_QUERIES / GROW_INSTANCES {
            let q = if rng.random_bool(0.5) {
                pts[rng.random_range(0..n)]
            } else {
                [0, 1, 2].map(|_| rng.random_range(-110.0..110.0))
            };
            let kq = rng.random_range(1..=40);
            let got: Vec<usize> = index.knn(q, kq).into_iter().map(|(j, _)| j).collect();
            check!(got == brute_neighbours(&pts, q, kq, None), "instance {inst}: knn differs for k={kq}");
            queries += 1;
        }
    }
    check!(refill_cases > 0, "no instance exercised the centroid refill");
    within(start, Duration::from_secs(60))?;
    Ok(format!("{GROW_INSTANCES} instances ({refill_cases} with refills) and {queries} knn queries match"))
}

// ---------------------------------------------------------------- 7

const KL_DRAWS: usize = 20;
const KL_SAMPLES: usize = 1_000_000;
const KL_TOL: f64 = 0.01;

fn kl_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for draw in 0..KL_DRAWS {
        let d = rng.random_range(1..=4);
        let mu: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let lv: Vec<f64> = (0..d).map(|_| rng.random_range(-1.5..1.5)).collect();
        let exact = model::kl_divergence(&Tensor::new(vec![d], mu.clone()).unwrap(), &Tensor::new(vec![d], lv.clone()).unwrap())
            .map_err(|e| e.to_string())?;
        let mut acc = 0.0;
        for _ in 0..KL_SAMPLES {
            for (&m, &l) in mu.iter().zip(&lv) {
                let e: f64 = StandardNormal.sample(&mut rng);
                let z = m + (0.5 * l).exp() * e;
                acc += -0.5 * l - 0.5 * e * e + 0.5 * z * z;
            }
        }
        let est = acc / KL_SAMPLES as f64;
        let r = rel(est, exact);
        check!(r < KL_TOL, "draw {draw}: closed form {exact:.5} vs Monte Carlo {est:.5}");
        worst = worst.max(r);
    }
    Ok(format!("{KL_DRAWS} draws x {KL_SAMPLES} samples, worst relative gap {:.2}%", 100.0 * worst))
}

// ---------------------------------------------------------------- 8

fn f32_scene(rng: &mut ChaCha8Rng, n: usize, rest: usize) -> GaussianScene {
    let mut s = random_scene(rng, n, rest);
    let r = |v: &mut f64| *v = *v as f32 as f64;
    s.centers.iter_mut().flatten().for_each(r);
    s.rotations.iter_mut().flatten().for_each(r);
    s.opacities.iter_mut().for_each(r);
    s.scales.iter_mut().flatten().for_each(r);
    s.colors_dc.iter_mut().flatten().for_each(r);
    if let Some(x) = &mut s.colors_rest {
        x.values.iter_mut().for_each(r);
    }
    s
}

fn format_fidelity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for i in 0..20 {
        let n = rng.random_range(1..500);
        let scene = f32_scene(&mut rng, n, if i % 2 == 0 { 0 } else { 45 });
        let bytes = gsio::write_ply(&scene);
        let back = gsio::parse_ply(&bytes).map_err(|e| e.to_string())?;
        check!(back == scene, "PLY {i}: parse(write(scene)) differs");
        check!(gsio::write_ply(&back) == bytes, "PLY {i}: write(parse(bytes)) differs");
    }

    let deg3 = f32_scene(&mut rng, 10, 45);
    let bytes = gsio::write_ply(&deg3);
    let header_end = bytes.windows(11).position(|w| w == b"end_header\n").ok_or("no end_header")?;
    let header = std::str::from_utf8(&bytes[..header_end]).map_err(|e| e.to_string())?;
    let props = header.lines().filter(|l| l.starts_with("property ")).count();
    check!(props == 62, "degree-3 header lists {props} properties");
    check!(gsio::parse_ply(&bytes).map_err(|e| e.to_string())? == deg3, "degree-3 scene does not round-trip");

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = ModelConfig { n_gaussians: 64, query_tokens: 8, ..ModelConfig::toy() };
    let scenes: Vec<GaussianScene> = (0..2).map(|i| normalize::normalize(&synth::scene(i, 64, Shape::Cube), &[], 1.0).unwrap().0).collect();
    let mut state = TrainState::new(Model::new(config, 4).map_err(|e| e.to_string())?);
    let cfg = TrainConfig::new(9, 3);
    let data = Dataset { scenes, grid: VoxelGrid::default(), features: FeatureOptions::default() };
    train::run_training(&data, &mut state, &cfg, |_, _| Ok(())).map_err(|e| e.to_string())?;
    let ck = Checkpoint {
        model: state.model,
        features: data.features,
        grid: data.grid,
        optimizer: Some(state.adam),
        train: Some(cfg),
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    checkpoint::save(&a, &ck).map_err(|e| e.to_string())?;
    let loaded = checkpoint::load(&a).map_err(|e| e.to_string())?;
    checkpoint::save(&b, &loaded).map_err(|e| e.to_string())?;
    for f in [checkpoint::MANIFEST, checkpoint::PARAMS, checkpoint::OPTIM] {
        check!(std::fs::read(a.join(f)).unwrap() == std::fs::read(b.join(f)).unwrap(), "checkpoint {f} differs after save-load-save");
    }

    let mut values: Vec<f64> = (0..8 * 8 * 4).map(|_| rng.random_range(-1e3f32..1e3) as f64).collect();
    values[..4].copy_from_slice(&[-0.0, f32::MIN_POSITIVE as f64 / 8.0, f32::MAX as f64, f32::MIN as f64]);
    let z = Tensor::new(vec![8, 8, 4], values).unwrap();
    let back = container::decode_tensor(&container::encode_tensor(&z)).map_err(|e| e.to_string())?;
    check!(back.shape() == z.shape(), "latent shape changed");
    check!(
        back.data().iter().zip(z.data()).all(|(a, b)| a.to_bits() == b.to_bits()),
        "latent values changed"
    );
    Ok("20 PLYs byte-identical; 62 degree-3 properties; checkpoint and latent round trips exact".into())
}

// ---------------------------------------------------------------- 9

const E2E_STEPS: u64 = 100;

fn determinism() -> Outcome {
    let (a, b) = (tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?);
    common::pipeline(a.path(), E2E_STEPS, 256);
    common::pipeline(b.path(), E2E_STEPS, 256);
    let (sa, sb) = (common::snapshot(a.path()), common::snapshot(b.path()));
    check!(sa.keys().eq(sb.keys()), "the two runs wrote different files");
    for (k, v) in &sa {
        check!(&sb[k] == v, "{} differs between runs", k.display());
    }
    Ok(format!("{} artifacts byte-identical after {E2E_STEPS} training steps", sa.len()))
}

// ----------------------------------------------------------------

fn main() {
    std::panic::set_hook(Box::new(|_| {}));
    let mut trained = None;
    let mut failures = 0;
    let mut report = |n: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let outcome = match catch_unwind(AssertUnwindSafe(f)) {
            Ok(o) => o,
            Err(p) => Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into())),
        };
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {n} {name}: {detail} [{secs:.1}s]"),
            Err(why) => {
                failures += 1;
                println!("FAIL {n} {name}: {why} [{secs:.1}s]");
            }
        }
    };
    report(1, "normalization", &mut normalization_suite);
    report(2, "render consistency", &mut render_consistency);
    report(3, "gradient fidelity", &mut gradient_fidelity);
    report(4, "overfit convergence", &mut || overfit_convergence(&mut trained));
    report(5, "latent structure", &mut || latent_structure(&trained));
    report(6, "filtering equivalence", &mut filtering_equivalence);
    report(7, "KL oracle", &mut kl_oracle);
    report(8, "format fidelity", &mut format_fidelity);
    report(9, "determinism", &mut determinism);
    if failures > 0 {
        std::process::exit(1);
    }
}
