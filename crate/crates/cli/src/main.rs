//! `splatok`: preprocess splat scenes, train the tokenizer, encode, decode,
//! evaluate and preview.
//!
//! Every flag can also be set through a `SPLATOK_*` environment variable.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "splatok", version, about = "Scene-level Gaussian splat tokenizer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Register a raw scene (PLY, cameras, mask) in a manifest.
    Ingest(IngestArgs),
    /// Center and rescale scenes (and their cameras) into a ball of radius r.
    Normalize(NormalizeArgs),
    /// Select a fixed-size, mask-seeded neighbourhood of each scene.
    Filter(FilterArgs),
    /// Build encoder features and reconstruction targets.
    Featurize(FeaturizeArgs),
    /// Train the tokenizer on a manifest.
    Train(TrainArgs),
    /// Encode a preprocessed scene into a latent container.
    Encode(EncodeArgs),
    /// Decode a latent container into a splat PLY.
    Decode(DecodeArgs),
    /// Reconstruction error and failure rate over a manifest.
    Eval(EvalArgs),
    /// Latent distances, PCA projection and rotation-loop statistics.
    Analyze(AnalyzeArgs),
    /// Render a preview image of a splat PLY.
    Render(RenderArgs),
}

#[derive(Args)]
pub struct IngestArgs {
    #[arg(long, env = "SPLATOK_MANIFEST")]
    pub manifest: PathBuf,
    #[arg(long, env = "SPLATOK_NAME")]
    pub name: String,
    #[arg(long, env = "SPLATOK_PLY")]
    pub ply: PathBuf,
    #[arg(long, env = "SPLATOK_CAMS")]
    pub cams: Option<PathBuf>,
    #[arg(long, env = "SPLATOK_MASK", requires = "cams")]
    pub mask: Option<PathBuf>,
    #[arg(long, env = "SPLATOK_CAMERA_INDEX", requires = "mask")]
    pub camera_index: Option<usize>,
}

#[derive(Args)]
pub struct NormalizeArgs {
    /// Process every scene of this manifest.
    #[arg(long, env = "SPLATOK_MANIFEST", conflicts_with_all = ["input", "output"], required_unless_present = "input")]
    pub manifest: Option<PathBuf>,
    #[arg(long = "in", env = "SPLATOK_IN", requires = "output")]
    pub input: Option<PathBuf>,
    #[arg(long, env = "SPLATOK_CAMS")]
    pub cams: Option<PathBuf>,
    #[arg(long = "out", env = "SPLATOK_OUT")]
    pub output: Option<PathBuf>,
    /// Where to write the transformed cameras (defaults next to --out).
    #[arg(long, env = "SPLATOK_OUT_CAMS")]
    pub out_cams: Option<PathBuf>,
    /// Where to write the transform record (defaults next to --out).
    #[arg(long, env = "SPLATOK_TRANSFORM")]
    pub transform: Option<PathBuf>,
    #[arg(long, env = "SPLATOK_R", default_value_t = splatok::normalize::DEFAULT_RADIUS)]
    pub r: f64,
    /// Ablation: keep the original coordinates (identity transform).
    #[arg(long, env = "SPLATOK_NO_NORMALIZATION")]
    pub no_normalization: bool,
}

#[derive(Args)]
pub struct FilterArgs {
    #[arg(long, env = "SPLATOK_MANIFEST", conflicts_with_all = ["input", "output"], required_unless_present = "input")]
    pub manifest: Option<PathBuf>,
    #[arg(long = "in", env = "SPLATOK_IN", requires = "output")]
    pub input: Option<PathBuf>,
    #[arg(long, env = "SPLATOK_MASK")]
    pub mask: Option<PathBuf>,
    #[arg(long, env = "SPLATOK_CAMS")]
    pub cams: Option<PathBuf>,
    #[arg(long, env = "SPLATOK_CAMERA_INDEX")]
    pub camera_index: Option<usize>,
    #[arg(long = "out", env = "SPLATOK_OUT")]
    pub output: Option<PathBuf>,
    #[arg(long, env = "SPLATOK_TARGET_N", default_value_t = splatok::filter::DEFAULT_TARGET_N)]
    pub target_n: usize,
    #[arg(long, env = "SPLATOK_K", default_value_t = splatok::filter::DEFAULT_K)]
    pub k: usize,
    /// Ablation: take a seeded uniform subsample instead of growing a region.
    #[arg(long, env = "SPLATOK_NO_FILTERING", requires = "seed")]
    pub no_filtering: bool,
    #[arg(long, env = "SPLATOK_SEED")]
    pub seed: Option<u64>,
}

#[derive(Args)]
pub struct FeaturizeArgs {
    #[arg(long, env = "SPLATOK_MANIFEST", conflicts_with_all = ["input", "output"], required_unless_present = "input")]
    pub manifest: Option<PathBuf>,
    #[arg(long = "in", env = "SPLATOK_IN", requires = "output")]
    pub input: Option<PathBuf>,
    /// Feature matrix container.
    #[arg(long = "out", env = "SPLATOK_OUT")]
    pub output: Option<PathBuf>,
    /// Optional N x 14 target container.
    #[arg(long, env = "SPLATOK_TARGET_OUT")]
    pub target_out: Option<PathBuf>,
    #[arg(long, env = "SPLATOK_BANDS", default_value_t = splatok::features::DEFAULT_BANDS)]
    pub bands: usize,
    #[arg(long, env = "SPLATOK_R", default_value_t = splatok::normalize::DEFAULT_RADIUS)]
    pub r: f64,
    #[arg(long, env = "SPLATOK_RESOLUTION", default_value_t = splatok::features::DEFAULT_RESOLUTION)]
    pub resolution: usize,
    /// Append higher-order SH coefficients when present.
    #[arg(long, env = "SPLATOK_SH_REST")]
    pub sh_rest: bool,
    /// Ablation: leave out the voxel-anchor encoding.
    #[arg(long, env = "SPLATOK_NO_VOXEL_APPEND")]
    pub no_voxel_append: bool,
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long, env = "SPLATOK_MANIFEST")]
    pub manifest: PathBuf,
    /// Checkpoint directory.
    #[arg(long, env = "SPLATOK_CKPT")]
    pub ckpt: PathBuf,
    #[arg(long, env = "SPLATOK_SEED")]
    pub seed: u64,
    #[arg(long, env = "SPLATOK_STEPS", default_value_t = 1000)]
    pub steps: u64,
    #[arg(long, env = "SPLATOK_BATCH_SIZE", default_value_t = splatok::train::DEFAULT_BATCH)]
    pub batch_size: usize,
    #[arg(long, env = "SPLATOK_LR", default_value_t = splatok::train::DEFAULT_LR)]
    pub lr: f64,
    /// `toy`, `full`, or a JSON model-config file. N and C always come from the manifest.
    #[arg(long, env = "SPLATOK_CONFIG", default_value = "toy")]
    pub config: String,
    #[arg(long, env = "SPLATOK_CHECKPOINT_EVERY", default_value_t = 0)]
    pub checkpoint_every: u64,
    /// Continue from the optimizer state stored in --ckpt.
    #[arg(long, env = "SPLATOK_RESUME")]
    pub resume: bool,
    /// Loss log (defaults to loss.tsv inside the checkpoint directory).
    #[arg(long, env = "SPLATOK_LOG")]
    pub log: Option<PathBuf>,
    #[arg(long, env = "SPLATOK_NO_AUGMENTATION")]
    pub no_augmentation: bool,
    #[arg(long, env = "SPLATOK_NO_LEARNABLE_QUERY")]
    pub no_learnable_query: bool,
    /// Assert the manifest was preprocessed without normalization.
    #[arg(long, env = "SPLATOK_NO_NORMALIZATION")]
    pub no_normalization: bool,
    /// Assert the manifest was featurized without voxel appending.
    #[arg(long, env = "SPLATOK_NO_VOXEL_APPEND")]
    pub no_voxel_append: bool,
    /// Assert the manifest was subsampled instead of filtered.
    #[arg(long, env = "SPLATOK_NO_FILTERING")]
    pub no_filtering: bool,
}

#[derive(Args)]
pub struct EncodeArgs {
    #[arg(long, env = "SPLATOK_CKPT")]
    pub ckpt: PathBuf,
    #[arg(long = "in", env = "SPLATOK_IN")]
    pub input: PathBuf,
    #[arg(long = "out", env = "SPLATOK_OUT")]
    pub output: PathBuf,
    /// Seed of the reparameterization noise.
    #[arg(long, env = "SPLATOK_SEED")]
    pub seed: u64,
    /// Write the posterior mean instead of a sample.
    #[arg(long, env = "SPLATOK_MEAN")]
    pub mean: bool,
}

#[derive(Args)]
pub struct DecodeArgs {
    #[arg(long, env = "SPLATOK_CKPT")]
    pub ckpt: PathBuf,
    #[arg(long, env = "SPLATOK_LATENT")]
    pub latent: PathBuf,
    #[arg(long = "out", env = "SPLATOK_OUT")]
    pub output: PathBuf,
    /// Map the result back to world space with this transform record.
    #[arg(long, env = "SPLATOK_TRANSFORM")]
    pub transform: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long, env = "SPLATOK_CKPT")]
    pub ckpt: PathBuf,
    #[arg(long, env = "SPLATOK_MANIFEST")]
    pub manifest: PathBuf,
    #[arg(long = "out", env = "SPLATOK_OUT")]
    pub output: PathBuf,
    /// Failure threshold; defaults to the desk-scale threshold of the manifest's scenes.
    #[arg(long, env = "SPLATOK_THRESHOLD")]
    pub threshold: Option<f64>,
}

#[derive(Args)]
pub struct AnalyzeArgs {
    #[arg(long, env = "SPLATOK_CKPT")]
    pub ckpt: PathBuf,
    #[arg(long, env = "SPLATOK_MANIFEST")]
    pub manifest: PathBuf,
    #[arg(long, env = "SPLATOK_OUT_DIR")]
    pub out_dir: PathBuf,
    /// Scene embedded under the rotation loop (defaults to the first one).
    #[arg(long, env = "SPLATOK_LOOP_SCENE")]
    pub loop_scene: Option<String>,
    #[arg(long, env = "SPLATOK_ROTATIONS", default_value_t = 36)]
    pub rotations: usize,
    #[arg(long, env = "SPLATOK_AXIS", value_delimiter = ',', num_args = 3, default_values_t = [0.0, 0.0, 1.0])]
    pub axis: Vec<f64>,
}

#[derive(Args)]
pub struct RenderArgs {
    #[arg(long = "in", env = "SPLATOK_IN")]
    pub input: PathBuf,
    #[arg(long, env = "SPLATOK_CAMS")]
    pub cams: PathBuf,
    #[arg(long, env = "SPLATOK_CAMERA_INDEX", default_value_t = 0)]
    pub camera_index: usize,
    /// Binary PPM output.
    #[arg(long = "out", env = "SPLATOK_OUT")]
    pub output: PathBuf,
    #[arg(long, env = "SPLATOK_WIDTH")]
    pub width: Option<usize>,
    #[arg(long, env = "SPLATOK_HEIGHT")]
    pub height: Option<usize>,
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest(a) => commands::ingest(a),
        Command::Normalize(a) => commands::normalize(a),
        Command::Filter(a) => commands::filter(a),
        Command::Featurize(a) => commands::featurize(a),
        Command::Train(a) => commands::train(a),
        Command::Encode(a) => commands::encode(a),
        Command::Decode(a) => commands::decode(a),
        Command::Eval(a) => commands::eval(a),
        Command::Analyze(a) => commands::analyze(a),
        Command::Render(a) => commands::render(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
