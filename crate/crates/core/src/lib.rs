//! Stochastic neighbor embedding: SNE, symmetric SNE, t-SNE and t-SNE with
//! general Student-t degrees of freedom, with gradient descent
//! (momentum, jitter, early exaggeration), a kernel-regression out-of-sample
//! map, random-walk landmark acceleration and brute-force oracles for
//! checking all of it.
//!
//! ```
//! use sne_core::{run, BandwidthSpec, Method, OptimizerConfig, VariantSpec};
//! use sne_core::synthetic::two_clusters;
//!
//! let (data, _labels) = two_clusters(10, 4, 6.0, 1);
//! let variant = VariantSpec::for_dims(Method::Tsne, 2);
//! let mut config = OptimizerConfig::for_method(Method::Tsne);
//! config.max_iters = 20;
//! let (embedding, trace) = run(&data, &variant, &BandwidthSpec::default(), 2, &config).unwrap();
//! assert_eq!(embedding.n(), 20);
//! assert_eq!(trace.len(), 20);
//! ```

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Tests pin reference values printed at more digits than f64 holds.
#![cfg_attr(test, allow(clippy::excessive_precision))]

pub mod affinity;
pub mod cli;
pub mod error;
pub mod gradient;
pub mod kernel;
pub mod landmark;
pub mod optimizer;
pub mod oracle;
pub mod out_of_sample;
pub mod synthetic;
pub mod types;

pub use affinity::{input_affinities, Bandwidth, BandwidthSpec};
pub use error::{Result, SneError};
pub use landmark::{landmark_embed, LandmarkParams};
pub use optimizer::{run, run_with_affinities, Optimizer};
pub use out_of_sample::KernelMap;
pub use types::{
    DataMatrix, EmbeddingMatrix, IterationRecord, Method, OptimizerConfig, ProbabilityKind,
    ProbabilityMatrix, RunTrace, VariantSpec,
};
