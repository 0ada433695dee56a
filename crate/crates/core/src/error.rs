use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("non-finite value in record {index}")]
    InvalidValue { index: usize },
    #[error("camera {index}: rotation is not orthonormal")]
    InvalidRotation { index: usize },
    #[error("degenerate scene: all centers coincide")]
    DegenerateScene,
    #[error("invalid normalization transform: {0}")]
    InvalidTransform(String),
    #[error("empty input")]
    EmptyInput,
    #[error("mask has no inside pixels")]
    EmptyMask,
    #[error("mask is {mask_w}x{mask_h} but camera image is {cam_w}x{cam_h}")]
    MaskSizeMismatch {
        mask_w: usize,
        mask_h: usize,
        cam_w: usize,
        cam_h: usize,
    },
    #[error("no Gaussian projects inside the mask")]
    SeedNotFound,
    #[error("requested {requested} Gaussians but the scene has {available}")]
    InsufficientGaussians { requested: usize, available: usize },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("point is behind the camera or on its focal plane (depth {depth})")]
    BehindCamera { depth: f64 },
    #[error("spectrum is rank-deficient below {dims} components")]
    DegenerateSpectrum { dims: usize },
    #[error("training diverged at step {step}")]
    Divergence { step: u64 },
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn shape_err(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}
