//! Counterfactual explanation engine for time series classifiers.
//!
//! The crate bundles a small data model with archive parsers, distance
//! kernels, two built-in classifiers, generators from each of the main
//! counterfactual families (gradient optimization, instance transplant,
//! multi-objective evolution, discord/segment replacement and latent-space
//! search) and a uniform evaluator plus benchmark runner.
//!
//! Data-parallel inner loops (population scoring, matrix profile rows,
//! occlusion windows, benchmark cells) go through [`parallel::Execution`].
//! With the default `parallel` feature they run on rayon; without it every
//! path is sequential. Results never depend on the execution mode.

// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod catalog;
pub mod classifier;
pub mod data;
pub mod distance;
pub mod error;
pub mod evaluation;
pub mod generator;
pub mod parallel;
pub mod rng;
pub mod synthetic;

pub use classifier::{Classifier, GradientClassifier, ProbVector};
pub use data::{Dataset, LabeledInstance, NormStats, TimeSeries};
pub use error::{CfxError, Result};
pub use generator::{CounterfactualResult, CounterfactualSet, GeneratorSpec};
