//! Run configuration (JSON). Missing fields take their defaults.

use std::fs;
use std::path::Path;

use inkline_core::diffusion::{DiffusionConfig, FontTrainConfig};
use inkline_core::layout::{LayoutConfig, LayoutTrainConfig};
use inkline_core::style::ContrastiveConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Paper,
    #[default]
    Toy,
}

impl Scale {
    pub fn as_str(self) -> &'static str {
        match self {
            Scale::Paper => "paper",
            Scale::Toy => "toy",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LayoutSection {
    pub lr: f64,
    pub batch: usize,
    pub steps: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    /// Per-line slant and spacing augmentation, in standard deviations.
    pub augment: f64,
    /// Probability of training a line after context from the same writer.
    pub context: f64,
}

impl Default for LayoutSection {
    fn default() -> Self {
        Self { lr: 0.01, batch: 32, steps: 2000, embed_dim: 64, hidden: 128, layers: 2, augment: 1.0, context: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FontSection {
    pub lr: f64,
    pub clip: f64,
    pub decay: f64,
    pub batch: usize,
    /// Diffusion steps; the scale's default when absent.
    #[serde(rename = "T", skip_serializing_if = "Option::is_none")]
    pub steps_t: Option<usize>,
    pub n_max: usize,
    pub steps: usize,
    pub reference_glyphs: usize,
}

impl Default for FontSection {
    fn default() -> Self {
        Self { lr: 0.001, clip: 1.0, decay: 0.9998, batch: 64, steps_t: None, n_max: 120, steps: 2000, reference_glyphs: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContrastiveSection {
    pub tau: f64,
    pub l: usize,
    pub lambdas: [f64; 3],
    pub normalize: bool,
}

impl Default for ContrastiveSection {
    fn default() -> Self {
        let c = ContrastiveConfig::default();
        Self { tau: c.tau, l: c.segment_len, lambdas: c.lambdas, normalize: c.normalize }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct Seeds {
    pub layout: u64,
    pub font: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct RunConfig {
    pub scale: Scale,
    pub layout: LayoutSection,
    pub font: FontSection,
    pub contrastive: ContrastiveSection,
    pub seeds: Seeds,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Parse { path: path.to_path_buf(), line: e.line(), message: e.to_string() })
    }

    pub fn layout_model(&self, categories: usize) -> LayoutConfig {
        LayoutConfig {
            categories,
            embed_dim: self.layout.embed_dim,
            hidden: self.layout.hidden,
            layers: self.layout.layers,
        }
    }

    pub fn layout_train(&self) -> LayoutTrainConfig {
        LayoutTrainConfig {
            learning_rate: self.layout.lr,
            batch: self.layout.batch,
            seed: self.seeds.layout,
            augment: self.layout.augment,
            context: self.layout.context,
        }
    }

    pub fn diffusion(&self, categories: usize) -> DiffusionConfig {
        let base = match self.scale {
            Scale::Paper => DiffusionConfig::paper(categories),
            Scale::Toy => DiffusionConfig::toy(categories),
        };
        DiffusionConfig { steps: self.font.steps_t.unwrap_or(base.steps), n_max: self.font.n_max, ..base }
    }

    pub fn contrastive(&self) -> ContrastiveConfig {
        ContrastiveConfig {
            tau: self.contrastive.tau,
            segment_len: self.contrastive.l,
            lambdas: self.contrastive.lambdas,
            normalize: self.contrastive.normalize,
        }
    }

    pub fn font_train(&self) -> FontTrainConfig {
        FontTrainConfig {
            learning_rate: self.font.lr,
            clip: self.font.clip,
            decay: self.font.decay,
            batch: self.font.batch,
            reference_glyphs: self.font.reference_glyphs,
            contrastive: self.contrastive(),
            seed: self.seeds.font,
        }
    }
}
