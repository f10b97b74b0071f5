//! Declarative run configuration.
//!
//! One TOML document drives every subcommand; the resolved document's hash
//! is embedded in manifests, checkpoints, and reports so artifacts can be
//! traced back to the exact configuration and seed that produced them.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diffusion::{make_schedule, ArchSpec, NoiseSchedule, ScheduleKind};
use crate::error::{Error, Result};
use crate::llm::LlmClientConfig;
use crate::prompts::PromptStyle;
use crate::render::Variant;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathsConfig {
    pub data_root: PathBuf,
    pub out_root: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CityConfig {
    pub name: String,
    /// Augmentation multiplier (1, 2, or 4 in practice).
    #[serde(default = "default_multiplier")]
    pub multiplier: u32,
    /// Tile range: `nx x ny` tiles starting at `(x0, y0)`.
    pub x0: u32,
    pub y0: u32,
    pub nx: u32,
    pub ny: u32,
}

fn default_multiplier() -> u32 {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetConfig {
    #[serde(default = "default_zoom")]
    pub zoom: u8,
    pub cities: Vec<CityConfig>,
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
    #[serde(default = "default_raster_size")]
    pub raster_size: u32,
}

fn default_zoom() -> u8 {
    16
}

fn default_val_fraction() -> f64 {
    0.07
}

fn default_raster_size() -> u32 {
    512
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PromptConfig {
    #[serde(default = "default_style")]
    pub style: PromptStyle,
}

fn default_style() -> PromptStyle {
    PromptStyle::Structured
}

impl Default for PromptConfig {
    fn default() -> Self {
        PromptConfig { style: default_style() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(default = "default_t_steps")]
    pub t_steps: usize,
    #[serde(default = "default_beta_start")]
    pub beta_start: f64,
    #[serde(default = "default_beta_end")]
    pub beta_end: f64,
    #[serde(default = "default_image_size")]
    pub image_size: usize,
    #[serde(default = "default_base_channels")]
    pub base_channels: usize,
    #[serde(default = "default_mid_channels")]
    pub mid_channels: usize,
    #[serde(default = "default_cond_dim")]
    pub cond_dim: usize,
    #[serde(default = "default_time_dim")]
    pub time_dim: usize,
    #[serde(default = "default_kernel")]
    pub kernel: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
}

fn default_t_steps() -> usize {
    50
}
fn default_beta_start() -> f64 {
    1e-4
}
fn default_beta_end() -> f64 {
    0.02
}
fn default_image_size() -> usize {
    64
}
fn default_base_channels() -> usize {
    16
}
fn default_mid_channels() -> usize {
    32
}
fn default_cond_dim() -> usize {
    64
}
fn default_time_dim() -> usize {
    16
}
fn default_kernel() -> usize {
    3
}
fn default_lr() -> f64 {
    1e-3
}
fn default_steps() -> usize {
    500
}
fn default_batch_size() -> usize {
    4
}

impl Default for ModelConfig {
    fn default() -> Self {
        toml::from_str("").expect("defaults populate")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsConfig {
    /// When set, KID additionally averages over this many seeded subsets.
    #[serde(default)]
    pub kid_subsets: Option<usize>,
    #[serde(default = "default_subset_size")]
    pub kid_subset_size: usize,
}

fn default_subset_size() -> usize {
    1000
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig { kid_subsets: None, kid_subset_size: default_subset_size() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: PathsConfig,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub prompt: PromptConfig,
    #[serde(default = "default_variant")]
    pub variant: Variant,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub llm: LlmClientConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
    /// Optional override for the builtin tag map.
    #[serde(default)]
    pub tag_map: Option<PathBuf>,
}

fn default_variant() -> Variant {
    Variant::Landuse
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig =
            toml::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dataset.cities.is_empty() {
            return Err(Error::Invalid("no cities configured".into()));
        }
        for c in &self.dataset.cities {
            if c.nx == 0 || c.ny == 0 {
                return Err(Error::Invalid(format!("city {} has an empty tile range", c.name)));
            }
        }
        if !(0.0..1.0).contains(&self.dataset.val_fraction) || self.dataset.val_fraction <= 0.0 {
            return Err(Error::Invalid("val_fraction must lie in (0, 1)".into()));
        }
        self.arch().validate()?;
        Ok(())
    }

    /// SHA-256 over the canonical TOML re-serialization.
    pub fn config_hash(&self) -> String {
        let canonical = toml::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        format!("{:x}", hasher.finalize())
    }

    pub fn arch(&self) -> ArchSpec {
        ArchSpec {
            channels: 3,
            height: self.model.image_size,
            width: self.model.image_size,
            base_channels: self.model.base_channels,
            mid_channels: self.model.mid_channels,
            cond_dim: self.model.cond_dim,
            time_dim: self.model.time_dim,
            kernel: self.model.kernel,
        }
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        make_schedule(
            self.model.t_steps,
            self.model.beta_start,
            self.model.beta_end,
            ScheduleKind::Linear,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_toml() -> String {
        r#"
seed = 7

[paths]
data_root = "/tmp/data"
out_root = "/tmp/out"

[dataset]
cities = [{ name = "alpha", multiplier = 2, x0 = 100, y0 = 200, nx = 3, ny = 2 }]
"#
        .to_string()
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg: RunConfig = toml::from_str(&minimal_toml()).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.dataset.zoom, 16);
        assert_eq!(cfg.model.t_steps, 50);
        assert_eq!(cfg.dataset.raster_size, 512);
        assert!((cfg.dataset.val_fraction - 0.07).abs() < 1e-12);
        assert_eq!(cfg.variant, Variant::Landuse);
        assert!(cfg.llm.offline());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a: RunConfig = toml::from_str(&minimal_toml()).unwrap();
        let b: RunConfig = toml::from_str(&minimal_toml()).unwrap();
        assert_eq!(a.config_hash(), b.config_hash());
        let mut c = a.clone();
        c.seed = 8;
        assert_ne!(a.config_hash(), c.config_hash());
    }

    #[test]
    fn bad_val_fraction_rejected() {
        let mut cfg: RunConfig = toml::from_str(&minimal_toml()).unwrap();
        cfg.dataset.val_fraction = 1.5;
        assert!(cfg.validate().is_err());
    }
}
