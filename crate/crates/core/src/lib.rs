//! Two-stage weakly supervised anomaly detection for exam-session video.
//!
//! Stage I trains a multiple-instance ranking model on video-level labels and
//! turns its clip scores into soft pseudo-labels. Stage II trains a feature
//! encoder with a temporal graph and a feature-similarity graph against those
//! labels. Everything is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix `f64`.

pub mod attention;
pub mod config;
pub mod data;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod gradsuite;
pub mod graph;
pub mod mil;
pub mod nn;
pub mod pipeline;
pub mod scalar;

pub use config::{load_config, RunConfig};
pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor = nn::Tensor<f64>;
pub type ParamSet = nn::ParamSet<f64>;
pub type VideoBag = data::VideoBag<f64>;
pub type Dataset = data::Dataset<f64>;
pub type GeneratorModel = mil::GeneratorModel<f64>;
pub type EncoderModel = encoder::EncoderModel<f64>;

/// Generator for code paths that take an RNG but never draw from it
/// (inference, checkpoint loading).
pub(crate) fn inert_rng() -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(0)
}
