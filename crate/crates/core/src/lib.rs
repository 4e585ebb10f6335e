// SPDX-License-Identifier: MIT OR Apache-2.0

//! Text-conditioned latent navigation.
//!
//! A face description is parsed into target feature values
//! ([`text::Lexicon::parse`]), latent directions for each feature are fit
//! from labeled latents ([`fit::fit_all`]), and a seed latent is moved along
//! those directions until its projections match the targets
//! ([`nav::navigate_sequential`], [`nav::navigate_vectorized`]). The
//! [`oracle`] module provides a planted ground truth for checking all of it.

pub mod angles;
pub mod dataset;
pub mod error;
pub mod fit;
pub mod fsutil;
pub mod latent;
pub mod nav;
pub mod oracle;
pub mod pipeline;
pub mod registry;
pub mod text;

pub use angles::{angle_matrix, AngleMatrix};
pub use error::{Error, Result};
pub use fit::{
    fit_all, fit_continuous, fit_discrete, FitConfig, FitOutcome, FitReport, LabeledSample,
};
pub use latent::{DirectionSet, LatentShape, LatentVector};
pub use nav::{
    navigate_sequential, navigate_vectorized, project_all, project_feature, sample_seed, SeedSpec,
    SequentialOutcome, SequentialParams,
};
pub use oracle::{make_world, oracle_eval, OracleEvalConfig, OracleReport, OracleWorld};
pub use registry::{
    load_registry, FeatureDef, FeatureKind, FeatureRegistry, FeatureVector, ValueRange,
};
pub use text::{Lexicon, ParseTrace};
