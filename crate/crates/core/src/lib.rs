//! Disagreement modeling for ordinal Word-in-Context (WiC) judgments.
//!
//! The crate covers the numerical side of the pipeline:
//!
//! - [`data`]: usages, rated instances and the two task targets (median
//!   judgment for OGWiC, mean pairwise disagreement for DisWiC);
//! - [`store`]: the `WICE` binary embedding interchange format;
//! - [`features`]: plain and enriched pairwise feature vectors;
//! - [`metrics`]: ordinal Krippendorff's alpha and Spearman's rho;
//! - [`baselines`]: alpha-optimized cosine binning and ridge regression;
//! - [`neural`]: linear heads and adapter networks trained with AdamW;
//! - [`gbdt`]: gradient-boosted trees and the two-model weighted ensemble.
//!
//! Embeddings are produced elsewhere (any tool that writes the `WICE`
//! format) and consumed here as frozen inputs.

pub mod baselines;
pub mod data;
pub mod error;
pub mod features;
pub mod gbdt;
pub mod metrics;
pub mod neural;
pub mod store;
pub mod synthetic;

pub use data::{Dataset, Instance, Task, TaskTargets, Usage};
pub use error::{Error, Result};
pub use features::PairFeatures;
pub use store::{AlignedSplit, EmbeddingRecord, EmbeddingStore};
