//! Self-supervised representation learning on biomedical heterogeneous
//! networks.
//!
//! The crate covers the full pipeline:
//!
//! - [`graph`]: the typed drug/protein/disease network and its structural
//!   queries (clustering coefficients, distance buckets, meta-path walks).
//! - [`sim`]: original-feature-space similarity kernels (Tanimoto,
//!   Smith-Waterman, ModuleSim) and the per-type similarity table.
//! - [`nn`]: a small reverse-mode autodiff core with the graph-attention
//!   encoder, MLP and Adam used by every trainer.
//! - [`pretext`]: samplers and losses for the six self-supervised tasks.
//! - [`mtl`]: shared/private adversarial multi-task pretraining and the
//!   task-combination catalogue.
//! - [`eval`]: drug-drug and drug-target link-prediction evaluation under
//!   warm-start and cold-start protocols.
//! - [`demo`]: a seeded synthetic network so the whole pipeline runs
//!   without external data.

pub mod demo;
pub mod eval;
pub mod graph;
pub mod mtl;
pub mod nn;
pub mod oracles;
pub mod pretext;
pub mod sim;
pub mod util;
