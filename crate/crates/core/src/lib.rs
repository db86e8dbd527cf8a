//! Speech-based depression screening.
//!
//! The crate covers WAV input/output, a 178-column acoustic feature layout,
//! waveform augmentation, questionnaire scoring, corpus manifests with a
//! synthetic generator, a from-scratch 1D CNN, evaluation reports and the
//! orchestration that chains them.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`). The aliases
//! below fix the scalar for the common cases; training and model files use
//! `f64`.

pub mod audio;
pub mod augment;
pub mod config;
pub mod corpus;
pub mod eval;
pub mod features;
pub mod kv;
pub mod nn;
pub mod parallel;
pub mod pipeline;
pub mod scalar;
pub mod seeding;
pub mod surveys;

pub use scalar::Scalar;

pub type Clip = audio::AudioClip<f64>;
pub type Clip32 = audio::AudioClip<f32>;
pub type Features = features::FeatureMatrix<f64>;
pub type Features32 = features::FeatureMatrix<f32>;
pub type Vector = features::FeatureVector<f64>;
pub type Vector32 = features::FeatureVector<f32>;
pub type Cnn = nn::Model<f64>;
pub type Cnn32 = nn::Model<f32>;
