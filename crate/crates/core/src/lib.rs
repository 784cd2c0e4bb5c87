//! Virality ranking toolkit.
//!
//! The crate is organised as a pipeline:
//!
//! - [`store`]: append-only document store that applies compliance deletions
//!   and hands out consistent in-memory snapshots.
//! - [`features`]: turns a snapshot into a typed, modality-tagged
//!   [`FeatureMatrix`](features::FeatureMatrix) with a log-transformed target.
//! - [`gbrt`]: histogram gradient-boosted regression trees with a Poisson
//!   objective, leaf-weight capping, GOSS and optimal categorical splits.
//! - [`metrics`]: tie-aware Spearman, R², RMSE and nonzero-restricted MAPE.
//! - [`experiments`]: deterministic 70/10/20 splits and modality ablations.
//! - [`synth`] and [`pipeline`]: synthetic data and the stage runners used by
//!   the command-line front end.

pub mod config;
pub mod experiments;
pub mod features;
pub mod gbrt;
pub mod language;
pub mod metrics;
pub mod provenance;
pub mod pipeline;
pub mod store;
pub mod synth;

mod digest;

pub use digest::sha256_hex;
