use serde::Serialize;

use super::{FusionAxis, ModelConfig};

/// Closed-form parameter totals per component.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParameterCount {
    pub breakdown: Vec<(String, usize)>,
    pub total: usize,
}

impl ParameterCount {
    pub fn get(&self, component: &str) -> usize {
        self.breakdown
            .iter()
            .find(|(name, _)| name == component)
            .map_or(0, |(_, n)| *n)
    }

    /// Parameters that exist only because fusion is enabled.
    pub fn fusion_extra(&self) -> usize {
        ["conv_embed", "se", "fusion_projection"]
            .iter()
            .map(|c| self.get(c))
            .sum()
    }
}

pub fn count_parameters(cfg: &ModelConfig) -> ParameterCount {
    let d = cfg.hidden_size;
    let linear = |i: usize, o: usize| i * o + o;
    let patch_in = cfg.in_channels * cfg.patch_size * cfg.patch_size;
    let per_layer =
        2 * d + 4 * linear(d, d) + 2 * d + linear(d, cfg.mlp_size) + linear(cfg.mlp_size, d);

    let mut breakdown = vec![
        ("patch_embed".to_string(), linear(patch_in, d)),
        ("class_token".to_string(), d),
        ("position_embedding".to_string(), cfg.num_tokens() * d),
        ("encoder".to_string(), cfg.num_layers * per_layer),
        ("final_norm".to_string(), 2 * d),
        ("head".to_string(), linear(d, cfg.num_classes)),
    ];
    if cfg.fusion_enabled {
        let conv: usize = cfg
            .conv_stages()
            .windows(2)
            .map(|c| c[0] * c[1] * 9 + if cfg.conv_bias { c[1] } else { 0 })
            .sum();
        breakdown.push(("conv_embed".to_string(), conv));
        breakdown.push((
            "se".to_string(),
            linear(d, cfg.se_hidden()) + linear(cfg.se_hidden(), d),
        ));
        if cfg.fusion_axis == FusionAxis::Channel {
            breakdown.push((
                "fusion_projection".to_string(),
                cfg.num_layers * linear(2 * d, d),
            ));
        }
    }
    let total = breakdown.iter().map(|(_, n)| n).sum();
    ParameterCount { breakdown, total }
}
