use serde::{Deserialize, Serialize};

use crate::error::{IaError, Result};

/// Sub-networks that the ablation harness can switch off.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Component {
    /// Positional adapter (Fourier box terms in the prototype MLPs).
    Pa,
    /// Visual adapter (two transformer encoder layers).
    Va,
    /// Human-object cognitive block.
    Hocb,
    /// Interaction cognitive block.
    Icb,
}

impl Component {
    pub fn as_str(&self) -> &'static str {
        match self {
            Component::Pa => "PA",
            Component::Va => "VA",
            Component::Hocb => "HOCB",
            Component::Icb => "ICB",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IaConfig {
    /// Model width `D`.
    pub model_width: usize,
    /// Length of one box's Fourier embedding; `8 * n_bands`.
    pub fourier_dim: usize,
    pub n_heads: usize,
    pub mlp_hidden: usize,
    pub decoder_mid_channels: usize,
    pub patch_size: usize,
    /// Square encoder input resolution.
    pub image_size: usize,
    pub text_dim: usize,
    pub visual_dim: usize,
    pub visual_adapter_layers: usize,
    #[serde(default)]
    pub disabled: Vec<Component>,
}

impl IaConfig {
    /// Desk-scale profile for the 64-d mock encoder.
    pub fn desk() -> Self {
        IaConfig {
            model_width: 32,
            fourier_dim: 32,
            n_heads: 4,
            mlp_hidden: 64,
            decoder_mid_channels: 16,
            patch_size: 16,
            image_size: 64,
            text_dim: 64,
            visual_dim: 64,
            visual_adapter_layers: 2,
            disabled: Vec::new(),
        }
    }

    /// Full-scale profile on a ViT-B/16-sized encoder.
    pub fn full_base() -> Self {
        IaConfig {
            model_width: 256,
            fourier_dim: 64,
            n_heads: 8,
            mlp_hidden: 512,
            decoder_mid_channels: 128,
            patch_size: 16,
            image_size: 224,
            text_dim: 512,
            visual_dim: 768,
            visual_adapter_layers: 2,
            disabled: Vec::new(),
        }
    }

    /// Full-scale profile on a ViT-L/14-sized encoder.
    pub fn full_large() -> Self {
        IaConfig {
            patch_size: 14,
            text_dim: 768,
            visual_dim: 1024,
            ..Self::full_base()
        }
    }

    pub fn n_bands(&self) -> usize {
        self.fourier_dim / 8
    }

    pub fn grid_side(&self) -> usize {
        self.image_size / self.patch_size
    }

    pub fn enabled(&self, c: Component) -> bool {
        !self.disabled.contains(&c)
    }

    pub fn without(mut self, c: Component) -> Self {
        if !self.disabled.contains(&c) {
            self.disabled.push(c);
            self.disabled.sort();
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.model_width,
            self.fourier_dim,
            self.n_heads,
            self.mlp_hidden,
            self.decoder_mid_channels,
            self.patch_size,
            self.image_size,
            self.text_dim,
            self.visual_dim,
        ];
        if positive.contains(&0) {
            return Err(IaError::Config("model dimensions must be positive".into()));
        }
        if self.fourier_dim % 8 != 0 {
            return Err(IaError::Config(format!(
                "fourier_dim {} must be divisible by 8 (4 coordinates x sin/cos)",
                self.fourier_dim
            )));
        }
        if self.model_width % self.n_heads != 0 {
            return Err(IaError::Config(format!(
                "model width {} not divisible by {} heads",
                self.model_width, self.n_heads
            )));
        }
        if self.image_size % self.patch_size != 0 {
            return Err(IaError::Config(format!(
                "image size {} not a multiple of patch size {}",
                self.image_size, self.patch_size
            )));
        }
        Ok(())
    }
}
