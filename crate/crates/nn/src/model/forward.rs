use super::{ConvActivation, FusionAxis, LayerIndex, Layout, ModelConfig, Pair, ResidualMode};
use crate::{Graph, NnError, Real, Result, Tensor, Var};

/// Model parameters bound to one graph.
#[derive(Debug, Clone)]
pub struct BoundModel<'a> {
    cfg: &'a ModelConfig,
    layout: &'a Layout,
    vars: Vec<Var>,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// `[1, num_classes]`
    pub logits: Var,
    /// Attention probabilities, one `[n, n]` matrix per layer and head.
    pub attention: Vec<Var>,
    /// Recalibrated global embedding `E'`, when fusion is enabled.
    pub embedding: Option<Var>,
}

impl<'a> BoundModel<'a> {
    pub(crate) fn new(cfg: &'a ModelConfig, layout: &'a Layout, vars: Vec<Var>) -> Self {
        Self { cfg, layout, vars }
    }

    pub fn config(&self) -> &ModelConfig {
        self.cfg
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    /// Graph variable of a named parameter.
    pub fn var(&self, name: &str) -> Option<Var> {
        self.layout
            .specs
            .iter()
            .position(|s| s.name == name)
            .map(|i| self.vars[i])
    }

    fn pair(&self, p: Pair) -> (Var, Var) {
        (self.vars[p.0], self.vars[p.1])
    }

    fn linear<T: Real>(&self, g: &mut Graph<T>, x: Var, p: Pair) -> Result<Var> {
        let (w, b) = self.pair(p);
        let y = g.matmul(x, w)?;
        g.add_bias(y, b)
    }

    fn norm<T: Real>(&self, g: &mut Graph<T>, x: Var, p: Pair) -> Result<Var> {
        let (gain, bias) = self.pair(p);
        g.layer_norm(x, gain, bias, self.cfg.layer_norm_eps)
    }

    fn layer(&self, i: usize) -> Result<&LayerIndex> {
        self.layout
            .layers
            .get(i)
            .ok_or_else(|| NnError::Config(format!("layer {i} of {}", self.layout.layers.len())))
    }

    /// `[C, H, W]` image to `[N + 1, D]` tokens: non-overlapping patches,
    /// linear projection, class token in row 0, positional embedding added.
    pub fn patch_embed<T: Real>(&self, g: &mut Graph<T>, image: Var) -> Result<Var> {
        let c = self.cfg;
        let (p, n) = (c.patch_size, c.grid());
        let x = g.reshape(image, &[c.in_channels, n, p, n, p])?;
        let x = g.permute(x, &[1, 3, 0, 2, 4])?;
        let x = g.reshape(x, &[n * n, c.in_channels * p * p])?;
        let patches = self.linear(g, x, self.layout.patch)?;
        let tokens = g.concat(&[self.vars[self.layout.cls], patches], 0)?;
        g.add(tokens, self.vars[self.layout.pos])
    }

    /// Multi-head self-attention before the output projection: per head
    /// `softmax(Q K^T / sqrt(d)) V`, heads concatenated along features.
    pub fn mhsa<T: Real>(
        &self,
        g: &mut Graph<T>,
        x: Var,
        layer: usize,
        attention: Option<&mut Vec<Var>>,
    ) -> Result<Var> {
        let li = self.layer(layer)?;
        let q = self.linear(g, x, li.q)?;
        let k = self.linear(g, x, li.k)?;
        let v = self.linear(g, x, li.v)?;
        let d = self.cfg.head_dim();
        let scale = T::of(1.0 / (d as f64).sqrt());
        let mut heads = Vec::with_capacity(self.cfg.num_heads);
        let mut captured = Vec::new();
        for h in 0..self.cfg.num_heads {
            let qh = g.narrow(q, 1, h * d, d)?;
            let kh = g.narrow(k, 1, h * d, d)?;
            let vh = g.narrow(v, 1, h * d, d)?;
            let kt = g.transpose(kh)?;
            let scores = g.matmul(qh, kt)?;
            let scores = g.scale(scores, scale)?;
            let probs = g.softmax_rows(scores)?;
            captured.push(probs);
            heads.push(g.matmul(probs, vh)?);
        }
        if let Some(out) = attention {
            out.extend(captured);
        }
        if heads.len() == 1 {
            return Ok(heads[0]);
        }
        g.concat(&heads, 1)
    }

    /// `A = mhsa(LN(x)) W_p + b_p + x`
    fn attention_residual<T: Real>(
        &self,
        g: &mut Graph<T>,
        x: Var,
        layer: usize,
        attention: Option<&mut Vec<Var>>,
    ) -> Result<Var> {
        let li = self.layer(layer)?;
        let h = self.norm(g, x, li.norm1)?;
        let a = self.mhsa(g, h, layer, attention)?;
        let a = self.linear(g, a, li.proj)?;
        g.add(a, x)
    }

    /// `GELU(LN(a) W_1 + b_1) W_2 + b_2`
    fn mlp<T: Real>(&self, g: &mut Graph<T>, a: Var, layer: usize) -> Result<Var> {
        let li = self.layer(layer)?;
        let h = self.norm(g, a, li.norm2)?;
        let h = self.linear(g, h, li.fc1)?;
        let h = g.gelu(h)?;
        self.linear(g, h, li.fc2)
    }

    /// Plain encoder layer: `A' = mhsa(.) W_p + T`, `Y = MLP(A') + A'`.
    pub fn encoder_layer_plain<T: Real>(
        &self,
        g: &mut Graph<T>,
        tokens: Var,
        layer: usize,
        attention: Option<&mut Vec<Var>>,
    ) -> Result<Var> {
        let a = self.attention_residual(g, tokens, layer, attention)?;
        let m = self.mlp(g, a, layer)?;
        g.add(m, a)
    }

    /// `rows x D` copy of the `[1, D]` embedding.
    fn broadcast_rows<T: Real>(&self, g: &mut Graph<T>, e: Var, rows: usize) -> Result<Var> {
        let ones = g.constant(Tensor::ones([rows, 1]))?;
        g.matmul(ones, e)
    }

    /// Layer input augmented with `E'`. Identity when `e` is `None`.
    pub fn fuse_tokens<T: Real>(
        &self,
        g: &mut Graph<T>,
        tokens: Var,
        e: Option<Var>,
        layer: usize,
    ) -> Result<Var> {
        let Some(e) = e else { return Ok(tokens) };
        match self.cfg.fusion_axis {
            FusionAxis::Token => g.concat(&[tokens, e], 0),
            FusionAxis::Channel => {
                let n = g.shape(tokens)[0];
                let rows = self.broadcast_rows(g, e, n)?;
                let joined = g.concat(&[tokens, rows], 1)?;
                let fuse = self.layer(layer)?.fuse.ok_or_else(|| {
                    NnError::Config("channel fusion needs fusion projection weights".into())
                })?;
                self.linear(g, joined, fuse)
            }
        }
    }

    /// Encoder layer receiving the global embedding: attention over the
    /// fused input, then `Y = MLP(A) + A + E'` (or `MLP(A) + E'` in strict
    /// mode), restored to the incoming token count.
    pub fn encoder_layer_fused<T: Real>(
        &self,
        g: &mut Graph<T>,
        tokens: Var,
        e: Option<Var>,
        layer: usize,
        attention: Option<&mut Vec<Var>>,
    ) -> Result<Var> {
        let n = g.shape(tokens)[0];
        let fused = self.fuse_tokens(g, tokens, e, layer)?;
        let a = self.attention_residual(g, fused, layer, attention)?;
        let m = self.mlp(g, a, layer)?;
        let y = match (e, self.cfg.residual) {
            (None, _) => g.add(m, a)?,
            (Some(e), mode) => {
                let rows = g.shape(a)[0];
                let eb = self.broadcast_rows(g, e, rows)?;
                let base = match mode {
                    ResidualMode::Standard => g.add(m, a)?,
                    ResidualMode::StrictEmbedding => m,
                };
                g.add(base, eb)?
            }
        };
        if g.shape(y)[0] == n {
            Ok(y)
        } else {
            g.narrow(y, 0, 0, n)
        }
    }

    /// Convolutional global embedding `E`: 3x3 stride-2 stages ending in a
    /// global average pool, shape `[1, D]`.
    pub fn conv_embed<T: Real>(&self, g: &mut Graph<T>, image: Var) -> Result<Var> {
        if self.layout.conv.is_empty() {
            return Err(NnError::Config(
                "conv embedding requires fusion_enabled".into(),
            ));
        }
        let mut x = image;
        for &(w, b) in &self.layout.conv {
            x = g.conv2d(x, self.vars[w], b.map(|b| self.vars[b]), 2, 1)?;
            if self.cfg.conv_activation == ConvActivation::Gelu {
                x = g.gelu(x)?;
            }
        }
        let pooled = g.mean(x, &[1, 2])?;
        g.reshape(pooled, &[1, self.cfg.hidden_size])
    }

    /// Squeeze-and-excitation: `E' = sigmoid(relu(z W_1 + b_1) W_2 + b_2) * E`
    /// with `z` the average of `E` over its rows.
    pub fn se_recalibrate<T: Real>(&self, g: &mut Graph<T>, e: Var) -> Result<Var> {
        let se = self
            .layout
            .se
            .as_ref()
            .ok_or_else(|| NnError::Config("SE block requires fusion_enabled".into()))?;
        let d = g.shape(e)[1];
        let z = g.mean(e, &[0])?;
        let z = g.reshape(z, &[1, d])?;
        let h = self.linear(g, z, se.reduce)?;
        let h = g.relu(h)?;
        let s = self.linear(g, h, se.expand)?;
        let gate = g.sigmoid(s)?;
        g.mul(gate, e)
    }

    /// Final norm, class-token row, linear head.
    pub fn classify<T: Real>(&self, g: &mut Graph<T>, tokens: Var) -> Result<Var> {
        let t = self.norm(g, tokens, self.layout.norm)?;
        let cls = g.narrow(t, 0, 0, 1)?;
        self.linear(g, cls, self.layout.head)
    }

    /// Global embedding `E'` of `image`, or `None` with fusion disabled.
    pub fn global_embedding<T: Real>(&self, g: &mut Graph<T>, image: Var) -> Result<Option<Var>> {
        if !self.cfg.fusion_enabled {
            return Ok(None);
        }
        let e = self.conv_embed(g, image)?;
        self.se_recalibrate(g, e).map(Some)
    }

    /// Encoder stack and head applied to prepared tokens.
    pub fn encode<T: Real>(
        &self,
        g: &mut Graph<T>,
        tokens: Var,
        e: Option<Var>,
    ) -> Result<ForwardOutput> {
        let mut attention = Vec::new();
        let mut t = tokens;
        for layer in 0..self.cfg.num_layers {
            t = self.encoder_layer_fused(g, t, e, layer, Some(&mut attention))?;
        }
        Ok(ForwardOutput {
            logits: self.classify(g, t)?,
            attention,
            embedding: e,
        })
    }

    /// ES-ViT forward pass. `E'` is computed once and shared by every layer.
    pub fn forward<T: Real>(&self, g: &mut Graph<T>, image: Var) -> Result<ForwardOutput> {
        let tokens = self.patch_embed(g, image)?;
        let e = self.global_embedding(g, image)?;
        self.encode(g, tokens, e)
    }

    /// Plain ViT forward pass on the shared weights.
    pub fn forward_plain<T: Real>(&self, g: &mut Graph<T>, image: Var) -> Result<ForwardOutput> {
        let mut attention = Vec::new();
        let mut t = self.patch_embed(g, image)?;
        for layer in 0..self.cfg.num_layers {
            t = self.encoder_layer_plain(g, t, layer, Some(&mut attention))?;
        }
        Ok(ForwardOutput {
            logits: self.classify(g, t)?,
            attention,
            embedding: None,
        })
    }
}
