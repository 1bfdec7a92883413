use serde::{Deserialize, Serialize};

use crate::{NnError, Result};

/// How the global embedding joins the token sequence of each layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionAxis {
    /// One extra token, dropped again after the layer.
    #[default]
    Token,
    /// Appended to every token's features and projected back to the hidden
    /// size by a learned matrix.
    Channel,
}

/// Residual form of the fused layer output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualMode {
    /// `Y = MLP(A) + A + E'`
    #[default]
    Standard,
    /// `Y = MLP(A) + E'`
    StrictEmbedding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvActivation {
    #[default]
    Gelu,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub num_layers: usize,
    pub hidden_size: usize,
    pub mlp_size: usize,
    pub num_heads: usize,
    pub patch_size: usize,
    pub image_hw: usize,
    pub in_channels: usize,
    pub num_classes: usize,
    pub fusion_enabled: bool,
    pub se_reduction: usize,
    pub fusion_axis: FusionAxis,
    pub residual: ResidualMode,
    /// Channels of the intermediate conv stages; a final stage maps to
    /// `hidden_size`.
    pub conv_channels: Vec<usize>,
    pub conv_bias: bool,
    pub conv_activation: ConvActivation,
    pub layer_norm_eps: f64,
    pub init_std: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk(2)
    }
}

impl ModelConfig {
    fn base(
        layers: usize,
        hidden: usize,
        mlp: usize,
        heads: usize,
        patch: usize,
        image: usize,
        classes: usize,
    ) -> Self {
        Self {
            num_layers: layers,
            hidden_size: hidden,
            mlp_size: mlp,
            num_heads: heads,
            patch_size: patch,
            image_hw: image,
            in_channels: 3,
            num_classes: classes,
            fusion_enabled: true,
            se_reduction: 4,
            fusion_axis: FusionAxis::Token,
            residual: ResidualMode::Standard,
            conv_channels: vec![32, 64],
            conv_bias: true,
            conv_activation: ConvActivation::Gelu,
            layer_norm_eps: 1e-6,
            init_std: 0.02,
        }
    }

    /// 2 layers, hidden 16, MLP 32, 2 heads, 8-pixel patches on 32x32 images.
    pub fn tiny(num_classes: usize) -> Self {
        Self::base(2, 16, 32, 2, 8, 32, num_classes)
    }

    /// 2 layers, hidden 32, MLP 64, 2 heads, 16-pixel patches on 224x224.
    pub fn desk(num_classes: usize) -> Self {
        Self::base(2, 32, 64, 2, 16, 224, num_classes)
    }

    pub fn vit_b16(num_classes: usize) -> Self {
        Self::base(12, 768, 3072, 12, 16, 224, num_classes)
    }

    pub fn vit_b32(num_classes: usize) -> Self {
        Self::base(12, 768, 3072, 12, 32, 224, num_classes)
    }

    pub fn vit_l16(num_classes: usize) -> Self {
        Self::base(24, 1024, 4096, 16, 16, 224, num_classes)
    }

    pub fn vit_l32(num_classes: usize) -> Self {
        Self::base(24, 1024, 4096, 16, 32, 224, num_classes)
    }

    pub fn preset(name: &str, num_classes: usize) -> Option<Self> {
        Some(match name {
            "tiny" => Self::tiny(num_classes),
            "desk" => Self::desk(num_classes),
            "b16" | "vit_b16" => Self::vit_b16(num_classes),
            "b32" | "vit_b32" => Self::vit_b32(num_classes),
            "l16" | "vit_l16" => Self::vit_l16(num_classes),
            "l32" | "vit_l32" => Self::vit_l32(num_classes),
            _ => return None,
        })
    }

    pub fn with_fusion(mut self, enabled: bool) -> Self {
        self.fusion_enabled = enabled;
        self
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_size / self.num_heads
    }

    pub fn grid(&self) -> usize {
        self.image_hw / self.patch_size
    }

    pub fn num_patches(&self) -> usize {
        self.grid() * self.grid()
    }

    pub fn num_tokens(&self) -> usize {
        self.num_patches() + 1
    }

    pub fn se_hidden(&self) -> usize {
        self.hidden_size / self.se_reduction
    }

    /// Channel counts of the conv stack, input first.
    pub fn conv_stages(&self) -> Vec<usize> {
        let mut c = vec![self.in_channels];
        c.extend(&self.conv_channels);
        c.push(self.hidden_size);
        c
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(NnError::Config(msg));
        let positive = [
            ("num_layers", self.num_layers),
            ("hidden_size", self.hidden_size),
            ("mlp_size", self.mlp_size),
            ("num_heads", self.num_heads),
            ("patch_size", self.patch_size),
            ("image_hw", self.image_hw),
            ("in_channels", self.in_channels),
            ("num_classes", self.num_classes),
            ("se_reduction", self.se_reduction),
        ];
        for (name, v) in positive {
            if v == 0 {
                return fail(format!("{name} must be positive"));
            }
        }
        if !self.hidden_size.is_multiple_of(self.num_heads) {
            return fail(format!(
                "hidden_size {} is not divisible by num_heads {}",
                self.hidden_size, self.num_heads
            ));
        }
        if !self.image_hw.is_multiple_of(self.patch_size) {
            return fail(format!(
                "image_hw {} is not divisible by patch_size {}",
                self.image_hw, self.patch_size
            ));
        }
        if self.se_hidden() == 0 {
            return fail(format!(
                "se_reduction {} exceeds hidden_size {}",
                self.se_reduction, self.hidden_size
            ));
        }
        if self.conv_channels.contains(&0) {
            return fail("conv_channels must be positive".into());
        }
        if !(self.layer_norm_eps > 0.0) || !(self.init_std >= 0.0) {
            return fail("layer_norm_eps must be positive and init_std non-negative".into());
        }
        Ok(())
    }
}
