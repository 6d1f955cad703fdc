//! Scene text verification with guided visual attention.
//!
//! Given an image and a candidate string, the model outputs the
//! probability that the string appears in the image. The crate contains a
//! small reverse-mode differentiation engine ([`tensor`]), the
//! convolutional encoder with coordinate channels ([`encoder`]), the
//! character-guided attention decoder ([`decoder`]), candidate sampling
//! and hard-negative mining ([`sampler`]), a synthetic dataset generator
//! ([`datagen`]), the two-phase trainer ([`trainer`]) and the evaluation
//! protocols ([`evaluator`]).

pub mod datagen;
pub mod decoder;
pub mod diagnostics;
pub mod encoder;
pub mod error;
pub mod evaluator;
pub mod imageio;
pub mod model;
pub mod sampler;
pub mod tensor;
pub mod textops;
pub mod trainer;

pub use datagen::{Dataset, GenConfig, Sample};
pub use decoder::{AttentionTrace, Score};
pub use encoder::FeatureMap;
pub use error::{Error, Result};
pub use evaluator::{PrCurve, ScoredCandidate};
pub use imageio::GrayImage;
pub use model::{DecoderConfig, EncoderConfig, Model, ModelConfig, ModelKind};
pub use sampler::{Phase, SamplingConfig};
pub use tensor::{Graph, Tensor, Var};
pub use textops::{Charset, EncodedCandidate};
pub use trainer::{Checkpoint, TrainConfig};
