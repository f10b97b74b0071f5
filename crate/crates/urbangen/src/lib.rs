//! Generative urban-layout tooling at desk scale.
//!
//! The crate covers the full path from vector map data to a scored set of
//! generated images:
//!
//! - [`tiles`]: Web-Mercator slippy-tile arithmetic.
//! - [`ingest`]: GeoJSON layer loading, clipping, and per-tile semantics
//!   (land-use composition, building metrics, settlement types).
//! - [`render`]: constraint-image rasterization with a fixed palette.
//! - [`prompts`]: minimal / structured / elaborate text descriptions.
//! - [`embed`]: tokenization, 77-token chunking, and chunk-averaged
//!   conditioning vectors.
//! - [`dataset`]: coverage filtering, spatial augmentation, splitting, and
//!   manifest emission.
//! - [`diffusion`]: a small denoising diffusion model trained with the
//!   noise-prediction objective.
//! - [`controlnet`]: a locked/trainable copy pair joined by zero-initialized
//!   1x1 convolutions.
//! - [`metrics`]: FID and unbiased KID over pluggable image features.
//! - [`pipeline`] and [`config`]: the CLI orchestration surface.

pub mod config;
pub mod controlnet;
pub mod dataset;
pub mod diffusion;
pub mod embed;
pub mod error;
pub mod fixtures;
pub mod geom;
pub mod imgio;
pub mod ingest;
pub mod llm;
pub mod metrics;
pub mod pipeline;
pub mod prompts;
pub mod render;
pub mod rng;
pub mod tensor;
pub mod tiles;

pub use error::{Error, Result};
