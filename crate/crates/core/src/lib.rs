//! Hierarchical multimodal diagnostic engine for oral disease.
//!
//! - [`taxonomy`]: the 118-disease registry and per-level label schema.
//! - [`fusion`]: affine projection and fusion of modality features.
//! - [`reasoning`]: Fast Mode and the six-level Standard Mode with gating.
//! - [`datapipe`]: augmentation plans, partitioning, manifests, synthetic data.
//! - [`trainer`]: gradient-descent fitting of the heads.
//! - [`evaluation`]: zone-stratified accuracy, mode deltas and the atlas.
//! - [`engine`]: a loaded model directory ready to diagnose.

pub mod datapipe;
pub mod engine;
pub mod evaluation;
pub mod fusion;
pub mod numeric;
pub mod reasoning;
pub mod taxonomy;
pub mod trainer;
