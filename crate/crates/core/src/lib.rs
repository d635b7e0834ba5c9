//! Targeted data augmentation toolkit.
//!
//! Measure how strongly an artifact (frame, ruler mark, eyeglasses) co-occurs
//! with one class, insert that artifact at random during training so a model
//! learns to ignore it, and measure the remaining sensitivity by inserting
//! held-out artifacts into test images and counting flipped predictions.
//!
//! The heavy loops (synthesis, per-sample gradients, bias insertion over a
//! test set) run through [`Execution`], which is data-parallel with the
//! `parallel` feature and sequential otherwise. Every random draw comes from
//! a per-sample stream, so results are identical under both strategies.

pub mod augment;
pub mod cbi;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod library;
pub mod metrics;
pub mod model;
pub mod policy;
pub mod raster;
pub mod rng;
pub mod synth;

pub use augment::{ArtifactAsset, ArtifactKind, AssetPool, GeometricTransform, Split};
pub use cbi::{run_cbi, CbiReport, CbiRun, Classifier, PredictionPair};
pub use error::{ErrorCategory, Result, TdaError};
pub use exec::Execution;
pub use experiment::{ExperimentConfig, SweepSummary};
pub use metrics::{bias_report, AnnotationRecord, BiasReport, Manifest};
pub use model::{featurize, gradient_check, train, FeatureVector, LabeledImage, ToyModel, TrainConfig};
pub use policy::{augment_sample, should_apply, AugmentationPolicy};
pub use raster::{BinaryMask, RasterImage};
pub use synth::{generate, SynthConfig};
