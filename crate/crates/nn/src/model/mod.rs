//! Vision Transformer encoder and its ES-ViT extension.
//!
//! Parameters live in an [`EsVitModel`] as plain tensors in a fixed order.
//! Each forward pass binds them into a fresh [`Graph`] through
//! [`EsVitModel::bind`], which returns a [`BoundModel`] exposing the
//! individual building blocks.

mod config;
mod count;
mod forward;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub use config::{ConvActivation, FusionAxis, ModelConfig, ResidualMode};
pub use count::{count_parameters, ParameterCount};
pub use forward::{BoundModel, ForwardOutput};

use crate::{Graph, NnError, Real, Result, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Init {
    TruncNormal,
    Zeros,
    Ones,
    /// `[I; 0]` for a `[2D, D]` projection.
    StackedIdentity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    init: Init,
}

impl ParamSpec {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Weight and bias positions of one affine map or norm.
pub(crate) type Pair = (usize, usize);

#[derive(Debug, Clone)]
pub(crate) struct LayerIndex {
    pub norm1: Pair,
    pub q: Pair,
    pub k: Pair,
    pub v: Pair,
    pub proj: Pair,
    pub norm2: Pair,
    pub fc1: Pair,
    pub fc2: Pair,
    pub fuse: Option<Pair>,
}

#[derive(Debug, Clone)]
pub(crate) struct SeIndex {
    pub reduce: Pair,
    pub expand: Pair,
}

/// Parameter shapes in registration order plus where each one sits.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub specs: Vec<ParamSpec>,
    pub patch: Pair,
    pub cls: usize,
    pub pos: usize,
    pub layers: Vec<LayerIndex>,
    pub conv: Vec<(usize, Option<usize>)>,
    pub se: Option<SeIndex>,
    pub norm: Pair,
    pub head: Pair,
}

#[derive(Default)]
struct Builder {
    specs: Vec<ParamSpec>,
}

impl Builder {
    fn add(&mut self, name: String, shape: Vec<usize>, init: Init) -> usize {
        self.specs.push(ParamSpec { name, shape, init });
        self.specs.len() - 1
    }

    fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize) -> Pair {
        (
            self.add(
                format!("{name}.weight"),
                vec![fan_in, fan_out],
                Init::TruncNormal,
            ),
            self.add(format!("{name}.bias"), vec![fan_out], Init::Zeros),
        )
    }

    fn norm(&mut self, name: &str, dim: usize) -> Pair {
        (
            self.add(format!("{name}.gain"), vec![dim], Init::Ones),
            self.add(format!("{name}.bias"), vec![dim], Init::Zeros),
        )
    }
}

impl Layout {
    pub(crate) fn new(cfg: &ModelConfig) -> Self {
        let d = cfg.hidden_size;
        let mut b = Builder::default();
        let patch = b.linear(
            "patch_embed",
            cfg.in_channels * cfg.patch_size * cfg.patch_size,
            d,
        );
        let cls = b.add("cls_token".into(), vec![1, d], Init::TruncNormal);
        let pos = b.add(
            "pos_embed".into(),
            vec![cfg.num_tokens(), d],
            Init::TruncNormal,
        );
        let layers = (0..cfg.num_layers)
            .map(|i| {
                let p = format!("layers.{i}");
                let fuse =
                    (cfg.fusion_enabled && cfg.fusion_axis == FusionAxis::Channel).then(|| {
                        (
                            b.add(
                                format!("{p}.fuse.weight"),
                                vec![2 * d, d],
                                Init::StackedIdentity,
                            ),
                            b.add(format!("{p}.fuse.bias"), vec![d], Init::Zeros),
                        )
                    });
                LayerIndex {
                    norm1: b.norm(&format!("{p}.norm1"), d),
                    q: b.linear(&format!("{p}.attn.q"), d, d),
                    k: b.linear(&format!("{p}.attn.k"), d, d),
                    v: b.linear(&format!("{p}.attn.v"), d, d),
                    proj: b.linear(&format!("{p}.attn.proj"), d, d),
                    norm2: b.norm(&format!("{p}.norm2"), d),
                    fc1: b.linear(&format!("{p}.mlp.fc1"), d, cfg.mlp_size),
                    fc2: b.linear(&format!("{p}.mlp.fc2"), cfg.mlp_size, d),
                    fuse,
                }
            })
            .collect();
        let mut conv = Vec::new();
        let mut se = None;
        if cfg.fusion_enabled {
            for (j, pair) in cfg.conv_stages().windows(2).enumerate() {
                let w = b.add(
                    format!("conv.{j}.weight"),
                    vec![pair[1], pair[0], 3, 3],
                    Init::TruncNormal,
                );
                let bias = cfg
                    .conv_bias
                    .then(|| b.add(format!("conv.{j}.bias"), vec![pair[1]], Init::Zeros));
                conv.push((w, bias));
            }
            let reduce = b.linear("se.reduce", d, cfg.se_hidden());
            let expand = (
                b.add(
                    "se.expand.weight".into(),
                    vec![cfg.se_hidden(), d],
                    Init::Zeros,
                ),
                b.add("se.expand.bias".into(), vec![d], Init::Zeros),
            );
            se = Some(SeIndex { reduce, expand });
        }
        let norm = b.norm("norm", d);
        let head = b.linear("head", d, cfg.num_classes);
        Self {
            specs: b.specs,
            patch,
            cls,
            pos,
            layers,
            conv,
            se,
            norm,
            head,
        }
    }
}

/// Shapes of every trainable tensor `cfg` registers, without allocating them.
pub fn parameter_specs(cfg: &ModelConfig) -> Vec<ParamSpec> {
    Layout::new(cfg).specs
}

/// The classifier: configuration plus one tensor per registered parameter.
#[derive(Debug, Clone)]
pub struct EsVitModel<T> {
    config: ModelConfig,
    layout: Layout,
    params: Vec<Tensor<T>>,
}

impl<T: Real> EsVitModel<T> {
    /// Fresh weights drawn from `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = layout
            .specs
            .iter()
            .map(|s| init_tensor(s, config.init_std, &mut rng))
            .collect();
        Ok(Self {
            config,
            layout,
            params,
        })
    }

    /// Rebuilds from named tensors; every registered name must be present
    /// with its exact shape.
    pub fn from_named(config: ModelConfig, mut named: BTreeMap<String, Tensor<T>>) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        let params = layout
            .specs
            .iter()
            .map(|s| {
                let t = named
                    .remove(&s.name)
                    .ok_or_else(|| NnError::Checkpoint(format!("missing parameter {}", s.name)))?;
                if t.shape() != s.shape.as_slice() {
                    return Err(NnError::Checkpoint(format!(
                        "parameter {} has shape {:?}, expected {:?}",
                        s.name,
                        t.shape(),
                        s.shape
                    )));
                }
                Ok(t)
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(extra) = named.keys().next() {
            return Err(NnError::Checkpoint(format!("unexpected parameter {extra}")));
        }
        Ok(Self {
            config,
            layout,
            params,
        })
    }

    /// Same shared weights under a different fusion switch. Parameters the
    /// new configuration adds are freshly drawn from `seed`.
    pub fn with_fusion(&self, enabled: bool, seed: u64) -> Result<Self> {
        let config = self.config.clone().with_fusion(enabled);
        let fresh = Self::new(config.clone(), seed)?;
        let mut named: BTreeMap<String, Tensor<T>> = fresh
            .named_params()
            .map(|(n, t)| (n.to_string(), t.clone()))
            .collect();
        for (name, t) in self.named_params() {
            if let Some(slot) = named.get_mut(name) {
                *slot = t.clone();
            }
        }
        Self::from_named(config, named)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.layout.specs
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn named_params(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.layout
            .specs
            .iter()
            .map(|s| s.name.as_str())
            .zip(&self.params)
    }

    pub fn param(&self, name: &str) -> Option<&Tensor<T>> {
        self.named_params()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| t)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        let i = self.layout.specs.iter().position(|s| s.name == name)?;
        Some(&mut self.params[i])
    }

    /// Number of trainable scalars actually held.
    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(Tensor::numel).sum()
    }

    /// Inserts every parameter into `g`, as trainable leaves or constants.
    pub fn bind<'a>(&'a self, g: &mut Graph<T>, trainable: bool) -> Result<BoundModel<'a>> {
        let vars = self
            .params
            .iter()
            .map(|t| {
                if trainable {
                    g.param(t.clone())
                } else {
                    g.constant(t.clone())
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BoundModel::new(&self.config, &self.layout, vars))
    }

    /// Binds explicit graph variables in registration order.
    pub fn bind_vars(&self, vars: Vec<crate::Var>) -> Result<BoundModel<'_>> {
        if vars.len() != self.params.len() {
            return Err(NnError::Config(format!(
                "{} variables for {} parameters",
                vars.len(),
                self.params.len()
            )));
        }
        Ok(BoundModel::new(&self.config, &self.layout, vars))
    }

    fn check_image(&self, image: &Tensor<T>) -> Result<()> {
        let c = &self.config;
        let want = [c.in_channels, c.image_hw, c.image_hw];
        if image.shape() != want {
            return Err(NnError::ShapeMismatch {
                op: "image",
                lhs: image.shape().to_vec(),
                rhs: want.to_vec(),
            });
        }
        Ok(())
    }

    /// Class logits of one `[C, H, W]` image.
    pub fn logits(&self, image: &Tensor<T>) -> Result<Vec<T>> {
        self.check_image(image)?;
        let mut g = Graph::new();
        let m = self.bind(&mut g, false)?;
        let x = g.constant(image.clone())?;
        let out = m.forward(&mut g, x)?;
        Ok(g.value(out.logits).data().to_vec())
    }

    /// Logits of the plain ViT path on the shared weights.
    pub fn logits_plain(&self, image: &Tensor<T>) -> Result<Vec<T>> {
        self.check_image(image)?;
        let mut g = Graph::new();
        let m = self.bind(&mut g, false)?;
        let x = g.constant(image.clone())?;
        let out = m.forward_plain(&mut g, x)?;
        Ok(g.value(out.logits).data().to_vec())
    }

    /// Cross-entropy of one image and its gradient for every parameter, in
    /// registration order.
    pub fn loss_and_grads(&self, image: &Tensor<T>, label: usize) -> Result<ImageStep<T>> {
        self.check_image(image)?;
        let mut g = Graph::new();
        let m = self.bind(&mut g, true)?;
        let x = g.constant(image.clone())?;
        let out = m.forward(&mut g, x)?;
        let loss = g.cross_entropy(out.logits, &[label])?;
        g.backward(loss)?;
        let grads = m
            .vars()
            .iter()
            .zip(&self.params)
            .map(|(&v, p)| {
                g.take_grad(v)
                    .unwrap_or_else(|| Tensor::zeros(p.shape().to_vec()))
            })
            .collect();
        Ok(ImageStep {
            loss: g.value(loss).item(),
            logits: g.value(out.logits).data().to_vec(),
            grads,
        })
    }

    pub fn card(&self) -> ModelCard {
        ModelCard::new(&self.config)
    }
}

#[derive(Debug, Clone)]
pub struct ImageStep<T> {
    pub loss: T,
    pub logits: Vec<T>,
    pub grads: Vec<Tensor<T>>,
}

fn init_tensor<T: Real>(spec: &ParamSpec, std: f64, rng: &mut ChaCha8Rng) -> Tensor<T> {
    match spec.init {
        Init::TruncNormal => Tensor::trunc_normal(spec.shape.clone(), std, rng),
        Init::Zeros => Tensor::zeros(spec.shape.clone()),
        Init::Ones => Tensor::ones(spec.shape.clone()),
        Init::StackedIdentity => {
            let d = spec.shape[1];
            let mut t = Tensor::zeros(spec.shape.clone());
            for i in 0..d {
                t.data_mut()[i * d + i] = T::one();
            }
            t
        }
    }
}

/// Human-readable description written next to checkpoints.
#[derive(Debug, Clone, Serialize)]
pub struct ModelCard {
    pub architecture: &'static str,
    pub config: ModelConfig,
    pub norm_placement: &'static str,
    pub fusion: &'static str,
    pub residual: ResidualMode,
    pub embedding_reuse: &'static str,
    pub parameters: ParameterCount,
}

impl ModelCard {
    pub fn new(cfg: &ModelConfig) -> Self {
        Self {
            architecture: if cfg.fusion_enabled { "es-vit" } else { "vit" },
            config: cfg.clone(),
            norm_placement: "pre-norm",
            fusion: match (cfg.fusion_enabled, cfg.fusion_axis) {
                (false, _) => "disabled",
                (true, FusionAxis::Token) => "token",
                (true, FusionAxis::Channel) => "channel",
            },
            residual: cfg.residual,
            embedding_reuse: "computed once per image, shared by all layers",
            parameters: count_parameters(cfg),
        }
    }
}

#[cfg(test)]
mod tests;
