//! Tokenization of scene-level 3D Gaussian splats.
//!
//! The crate covers the whole path from trained splat files to latent codes:
//! PLY/camera/mask ingestion ([`gsio`]), canonical-space normalization
//! ([`normalize`]), mask-seeded region growing ([`filter`]), encoder feature
//! assembly ([`features`]), a small reverse-mode autodiff substrate
//! ([`numerics`]), the VAE itself ([`model`]), training ([`train`]),
//! reconstruction metrics and latent analysis ([`eval`]), and a CPU preview
//! renderer ([`render`]).

pub mod checkpoint;
pub mod container;
pub mod error;
pub mod eval;
pub mod features;
pub mod filter;
pub mod geom;
pub mod gsio;
pub mod manifest;
pub mod model;
pub mod normalize;
pub mod numerics;
pub mod render;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
pub use features::{FeatureLayout, FeatureMatrix, FeatureOptions, VoxelGrid};
pub use filter::KnnIndex;
pub use gsio::{CameraPose, GaussianScene, Mask};
pub use model::{LatentCode, Model, ModelConfig, ModelParams};
pub use normalize::NormTransform;
pub use numerics::Tensor;
pub use render::Image;
