//! The ST-GCN layer and full model: attention-modulated spatial graph
//! convolution, temporal convolution, residual connection, and the
//! GAP + classifier head.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::batchnorm::{BatchNormCache, BatchNormState};
use crate::error::{Error, Result};
use crate::graph::PartitionedAdjacency;
use crate::ops;
use crate::tensor::{Parameter, Tensor};

/// How the learnable attention matrix combines with the normalized
/// adjacency: element-wise product or additive augmentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionMode {
    Elementwise,
    Additive,
}

/// One record of a topology descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub attention: AttentionMode,
}

/// Whole-model topology descriptor, loadable from a TOML document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDescriptor {
    pub in_channels: usize,
    pub n_class: usize,
    pub joints: usize,
    #[serde(default)]
    pub layers: Vec<LayerSpec>,
}

/// Temporal downsampling schedule for grown layers: every 3rd layer
/// starting at layer 4 (1-based) uses stride 2.
pub fn default_stride(layer_index_1based: usize) -> usize {
    if layer_index_1based >= 4 && (layer_index_1based - 4) % 3 == 0 {
        2
    } else {
        1
    }
}

impl ModelDescriptor {
    pub fn new(in_channels: usize, n_class: usize, joints: usize) -> Self {
        ModelDescriptor {
            in_channels,
            n_class,
            joints,
            layers: Vec::new(),
        }
    }

    /// The canonical 10-layer baseline: channels
    /// (64,64,64,64,128,128,128,256,256,256), K=9, stride 2 at layers 5 and 8.
    pub fn canonical_stgcn(in_channels: usize, n_class: usize, joints: usize) -> Self {
        let channels = [64, 64, 64, 64, 128, 128, 128, 256, 256, 256];
        let mut d = Self::new(in_channels, n_class, joints);
        for (i, &c) in channels.iter().enumerate() {
            d.layers.push(LayerSpec {
                channels: c,
                kernel: 9,
                stride: if i == 4 || i == 7 { 2 } else { 1 },
                attention: AttentionMode::Elementwise,
            });
        }
        d
    }

    /// A found topology with the default downsampling schedule and K=9.
    pub fn from_widths(
        in_channels: usize,
        n_class: usize,
        joints: usize,
        widths: &[usize],
        attention: AttentionMode,
    ) -> Self {
        let mut d = Self::new(in_channels, n_class, joints);
        for (i, &c) in widths.iter().enumerate() {
            d.layers.push(LayerSpec {
                channels: c,
                kernel: 9,
                stride: default_stride(i + 1),
                attention,
            });
        }
        d
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text)
            .map_err(|e| Error::BadFormat(format!("descriptor {}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self)
            .map_err(|e| Error::BadFormat(format!("descriptor serialize: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.n_class == 0 || self.joints == 0 {
            return Err(Error::InvalidConfig("descriptor extents must be positive".into()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.channels == 0 || l.stride == 0 {
                return Err(Error::InvalidConfig(format!("layer {i}: zero extent")));
            }
            if l.kernel % 2 == 0 {
                return Err(Error::InvalidConfig(format!(
                    "layer {i}: temporal kernel must be odd, got {}",
                    l.kernel
                )));
            }
        }
        Ok(())
    }
}

/// One ST-GCN layer.
#[derive(Debug, Clone)]
pub struct STGCNLayer {
    /// Three 1×1 channel-mixing kernels W_p, C_out×C_in×1×1.
    pub spatial_weights: [Parameter; 3],
    /// Three learnable V×V attention matrices M_p.
    pub attention: [Parameter; 3],
    pub attention_mode: AttentionMode,
    /// C_out×C_out×K×1 temporal kernel.
    pub temporal_kernel: Parameter,
    pub bn_spatial: BatchNormState,
    pub bn_temporal: BatchNormState,
    /// 1×1 strided projection + batch norm; present iff C_in != C_out or stride != 1.
    pub residual: Option<(Parameter, BatchNormState)>,
    pub stride_t: usize,
    pub kernel_t: usize,
    pub c_in: usize,
    pub c_out: usize,
}

/// Intermediates one training forward pass saves for the backward pass.
pub struct LayerCache {
    input: Tensor,
    mixed: [Tensor; 3],
    bn_spatial: BatchNormCache,
    bn_spatial_out: Tensor,
    spatial_out: Tensor,
    bn_temporal: BatchNormCache,
    residual_bn: Option<BatchNormCache>,
    pre_relu: Tensor,
}

impl STGCNLayer {
    pub fn new<R: Rng>(
        c_in: usize,
        spec: &LayerSpec,
        joints: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if spec.kernel % 2 == 0 {
            return Err(Error::InvalidConfig(format!(
                "temporal kernel must be odd, got {}",
                spec.kernel
            )));
        }
        let c_out = spec.channels;
        let spatial_weights = [0, 1, 2].map(|_| {
            Parameter::new(Tensor::glorot(&[c_out, c_in, 1, 1], c_in, c_out, rng))
        });
        // additive attention starts from the pure normalized graph (zeros);
        // elementwise starts from all-ones
        let attn_init = match spec.attention {
            AttentionMode::Additive => 0.0,
            AttentionMode::Elementwise => 1.0,
        };
        let attention =
            [0, 1, 2].map(|_| Parameter::new(Tensor::full(&[joints, joints], attn_init)));
        let temporal_kernel = Parameter::new(Tensor::glorot(
            &[c_out, c_out, spec.kernel, 1],
            c_out * spec.kernel,
            c_out * spec.kernel,
            rng,
        ));
        let residual = if c_in != c_out || spec.stride != 1 {
            Some((
                Parameter::new(Tensor::glorot(&[c_out, c_in, 1, 1], c_in, c_out, rng)),
                BatchNormState::new(c_out),
            ))
        } else {
            None
        };
        Ok(STGCNLayer {
            spatial_weights,
            attention,
            attention_mode: spec.attention,
            temporal_kernel,
            bn_spatial: BatchNormState::new(c_out),
            bn_temporal: BatchNormState::new(c_out),
            residual,
            stride_t: spec.stride,
            kernel_t: spec.kernel,
            c_in,
            c_out,
        })
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec {
            channels: self.c_out,
            kernel: self.kernel_t,
            stride: self.stride_t,
            attention: self.attention_mode,
        }
    }

    /// G_p: Â_p + M_p (additive) or Â_p ⊗ M_p (elementwise).
    pub fn effective_graph(&self, p: usize, adj: &PartitionedAdjacency) -> Tensor {
        let a = &adj.normalized[p];
        let m = &self.attention[p].value;
        let mut g = a.clone();
        match self.attention_mode {
            AttentionMode::Additive => {
                for (gi, mi) in g.data_mut().iter_mut().zip(m.data()) {
                    *gi += mi;
                }
            }
            AttentionMode::Elementwise => {
                for (gi, mi) in g.data_mut().iter_mut().zip(m.data()) {
                    *gi *= mi;
                }
            }
        }
        g
    }

    fn check_input(&self, h: &Tensor, adj: &PartitionedAdjacency) -> Result<()> {
        let s = h.shape();
        if s.len() != 4 || s[1] != self.c_in {
            return Err(Error::shape(
                format!("N×{}×T×V", self.c_in),
                format!("{s:?}"),
            ));
        }
        if s[3] != adj.joint_count {
            return Err(Error::shape(
                format!("V={}", adj.joint_count),
                format!("V={}", s[3]),
            ));
        }
        if !h.all_finite() {
            return Err(Error::Diverged("layer input".into()));
        }
        Ok(())
    }

    /// Channel mixing by W_p then graph mixing by G_p, summed over p.
    fn spatial_pre_bn(
        &self,
        h: &Tensor,
        adj: &PartitionedAdjacency,
    ) -> Result<(Tensor, [Tensor; 3])> {
        let mut mixed: Vec<Tensor> = Vec::with_capacity(3);
        let mut sum: Option<Tensor> = None;
        for p in 0..3 {
            let u = ops::conv2d(h, &self.spatial_weights[p].value, 1, 0)?;
            let g = self.effective_graph(p, adj);
            let s = graph_mix(&u, &g);
            match &mut sum {
                None => sum = Some(s),
                Some(acc) => acc.add_assign(&s)?,
            }
            mixed.push(u);
        }
        let mixed: [Tensor; 3] = mixed.try_into().expect("3 branches");
        Ok((sum.expect("3 branches"), mixed))
    }

    pub fn forward_train(
        &mut self,
        h: &Tensor,
        adj: &PartitionedAdjacency,
    ) -> Result<(Tensor, LayerCache)> {
        self.check_input(h, adj)?;
        let (pre_bn, mixed) = self.spatial_pre_bn(h, adj)?;
        let (bn_spatial_out, bn_spatial) = self.bn_spatial.forward_train(&pre_bn)?;
        let spatial_out = ops::relu(&bn_spatial_out);

        let pad = (self.kernel_t - 1) / 2;
        let temp = ops::conv2d(&spatial_out, &self.temporal_kernel.value, self.stride_t, pad)?;
        let (temp_bn, bn_temporal) = self.bn_temporal.forward_train(&temp)?;

        let (res_out, residual_bn) = match &mut self.residual {
            None => (h.clone(), None),
            Some((proj, bn)) => {
                let r = ops::conv2d(h, &proj.value, self.stride_t, 0)?;
                let (rb, cache) = bn.forward_train(&r)?;
                (rb, Some(cache))
            }
        };
        let mut pre_relu = temp_bn;
        pre_relu.add_assign(&res_out)?;
        let out = ops::relu(&pre_relu);
        Ok((
            out,
            LayerCache {
                input: h.clone(),
                mixed,
                bn_spatial,
                bn_spatial_out,
                spatial_out,
                bn_temporal,
                residual_bn,
                pre_relu,
            },
        ))
    }

    pub fn forward_eval(&self, h: &Tensor, adj: &PartitionedAdjacency) -> Result<Tensor> {
        self.check_input(h, adj)?;
        let (pre_bn, _) = self.spatial_pre_bn(h, adj)?;
        let bn_out = self.bn_spatial.forward_eval(&pre_bn)?;
        let spatial_out = ops::relu(&bn_out);
        let pad = (self.kernel_t - 1) / 2;
        let temp = ops::conv2d(&spatial_out, &self.temporal_kernel.value, self.stride_t, pad)?;
        let temp_bn = self.bn_temporal.forward_eval(&temp)?;
        let res_out = match &self.residual {
            None => h.clone(),
            Some((proj, bn)) => {
                let r = ops::conv2d(h, &proj.value, self.stride_t, 0)?;
                bn.forward_eval(&r)?
            }
        };
        let mut pre_relu = temp_bn;
        pre_relu.add_assign(&res_out)?;
        Ok(ops::relu(&pre_relu))
    }

    /// Accumulates parameter gradients and returns the gradient w.r.t. the
    /// layer input.
    pub fn backward(
        &mut self,
        cache: &LayerCache,
        grad_out: &Tensor,
        adj: &PartitionedAdjacency,
    ) -> Result<Tensor> {
        let grad_pre_relu = ops::relu_backward(&cache.pre_relu, grad_out);

        // residual branch
        let mut grad_input = match &mut self.residual {
            None => grad_pre_relu.clone(),
            Some((proj, bn)) => {
                let bn_cache = cache.residual_bn.as_ref().expect("cached residual bn");
                let grad_r = bn.backward(bn_cache, &grad_pre_relu)?;
                let (gi, gk) =
                    ops::conv2d_backward(&cache.input, &proj.value, &grad_r, self.stride_t, 0)?;
                proj.grad.add_assign(&gk)?;
                gi
            }
        };

        // temporal branch
        let grad_temp = self.bn_temporal.backward(&cache.bn_temporal, &grad_pre_relu)?;
        let pad = (self.kernel_t - 1) / 2;
        let (grad_spatial_out, grad_tk) = ops::conv2d_backward(
            &cache.spatial_out,
            &self.temporal_kernel.value,
            &grad_temp,
            self.stride_t,
            pad,
        )?;
        self.temporal_kernel.grad.add_assign(&grad_tk)?;

        // spatial branch
        let grad_bn_out = ops::relu_backward(&cache.bn_spatial_out, &grad_spatial_out);
        let grad_pre_bn = self.bn_spatial.backward(&cache.bn_spatial, &grad_bn_out)?;
        for p in 0..3 {
            let g = self.effective_graph(p, adj);
            let (grad_u, grad_g) = graph_mix_backward(&cache.mixed[p], &g, &grad_pre_bn);
            // chain rule into M_p
            match self.attention_mode {
                AttentionMode::Additive => {
                    self.attention[p].grad.add_assign(&grad_g)?;
                }
                AttentionMode::Elementwise => {
                    let mut gm = grad_g;
                    for (x, a) in gm.data_mut().iter_mut().zip(adj.normalized[p].data()) {
                        *x *= a;
                    }
                    self.attention[p].grad.add_assign(&gm)?;
                }
            }
            let (gi, gw) = ops::conv2d_backward(
                &cache.input,
                &self.spatial_weights[p].value,
                &grad_u,
                1,
                0,
            )?;
            self.spatial_weights[p].grad.add_assign(&gw)?;
            grad_input.add_assign(&gi)?;
        }
        Ok(grad_input)
    }

    /// Parameter count of this layer (convolutions, attention, bn affine pairs).
    pub fn param_count(&self) -> usize {
        let mut n = 0;
        for p in &self.spatial_weights {
            n += p.value.numel();
        }
        for m in &self.attention {
            n += m.value.numel();
        }
        n += self.temporal_kernel.value.numel();
        n += 2 * self.bn_spatial.channels() + 2 * self.bn_temporal.channels();
        if let Some((proj, bn)) = &self.residual {
            n += proj.value.numel() + 2 * bn.channels();
        }
        n
    }
}

/// out(n,c,t,i) = Σ_j g(i,j) · u(n,c,t,j)
pub fn graph_mix(u: &Tensor, g: &Tensor) -> Tensor {
    let s = u.shape();
    let (n_b, c, t, v) = (s[0], s[1], s[2], s[3]);
    let mut out = Tensor::zeros(s);
    for n in 0..n_b {
        for ch in 0..c {
            for ti in 0..t {
                let base = u.idx4(n, ch, ti, 0);
                let src = &u.data()[base..base + v];
                let dst = &mut out.data_mut()[base..base + v];
                for i in 0..v {
                    let row = &g.data()[i * v..(i + 1) * v];
                    let mut acc = 0.0;
                    for j in 0..v {
                        acc += row[j] * src[j];
                    }
                    dst[i] = acc;
                }
            }
        }
    }
    out
}

/// Gradients of [`graph_mix`] w.r.t. node features and the mixing matrix.
pub fn graph_mix_backward(u: &Tensor, g: &Tensor, grad_out: &Tensor) -> (Tensor, Tensor) {
    let s = u.shape();
    let (n_b, c, t, v) = (s[0], s[1], s[2], s[3]);
    let mut grad_u = Tensor::zeros(s);
    let mut grad_g = Tensor::zeros(&[v, v]);
    for n in 0..n_b {
        for ch in 0..c {
            for ti in 0..t {
                let base = u.idx4(n, ch, ti, 0);
                let go = &grad_out.data()[base..base + v];
                let src = &u.data()[base..base + v];
                for i in 0..v {
                    let gi = go[i];
                    if gi == 0.0 {
                        continue;
                    }
                    let row = &g.data()[i * v..(i + 1) * v];
                    let gu = &mut grad_u.data_mut()[base..base + v];
                    for j in 0..v {
                        gu[j] += gi * row[j];
                    }
                    let gg = &mut grad_g.data_mut()[i * v..(i + 1) * v];
                    for j in 0..v {
                        gg[j] += gi * src[j];
                    }
                }
            }
        }
    }
    (grad_u, grad_g)
}

/// Full model: optional input batch norm over C_in·V channels, the layer
/// stack, global average pooling, and the affine classifier head.
#[derive(Debug, Clone)]
pub struct STGCNModel {
    pub input_bn: Option<BatchNormState>,
    pub layers: Vec<STGCNLayer>,
    pub head_weight: Parameter,
    pub head_bias: Parameter,
    pub adjacency: PartitionedAdjacency,
    pub topology_name: String,
    pub n_class: usize,
    pub c_in: usize,
}

pub struct ModelCache {
    input_bn: Option<(BatchNormCache, Vec<usize>)>,
    layers: Vec<LayerCache>,
    gap_input_shape: Vec<usize>,
    features: Tensor,
}

impl STGCNModel {
    pub fn new<R: Rng>(
        adjacency: PartitionedAdjacency,
        topology_name: impl Into<String>,
        c_in: usize,
        n_class: usize,
        specs: &[LayerSpec],
        use_input_bn: bool,
        rng: &mut R,
    ) -> Result<Self> {
        if n_class == 0 || c_in == 0 {
            return Err(Error::InvalidConfig("c_in and n_class must be positive".into()));
        }
        let v = adjacency.joint_count;
        let mut layers = Vec::with_capacity(specs.len());
        let mut prev = c_in;
        for spec in specs {
            layers.push(STGCNLayer::new(prev, spec, v, rng)?);
            prev = spec.channels;
        }
        let head_weight = Parameter::new(Tensor::glorot(&[n_class, prev], prev, n_class, rng));
        let head_bias = Parameter::new(Tensor::zeros(&[n_class]));
        Ok(STGCNModel {
            input_bn: if use_input_bn {
                Some(BatchNormState::new(c_in * v))
            } else {
                None
            },
            layers,
            head_weight,
            head_bias,
            adjacency,
            topology_name: topology_name.into(),
            n_class,
            c_in,
        })
    }

    pub fn last_width(&self) -> usize {
        self.layers.last().map(|l| l.c_out).unwrap_or(self.c_in)
    }

    pub fn descriptor(&self) -> ModelDescriptor {
        ModelDescriptor {
            in_channels: self.c_in,
            n_class: self.n_class,
            joints: self.adjacency.joint_count,
            layers: self.layers.iter().map(|l| l.spec()).collect(),
        }
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let s = x.shape();
        if s.len() != 4 || s[1] != self.c_in || s[3] != self.adjacency.joint_count {
            return Err(Error::shape(
                format!("N×{}×T×{}", self.c_in, self.adjacency.joint_count),
                format!("{s:?}"),
            ));
        }
        Ok(())
    }

    pub fn forward_train(&mut self, x: &Tensor) -> Result<(Tensor, ModelCache)> {
        self.check_input(x)?;
        let mut input_bn_cache = None;
        let mut h = match &mut self.input_bn {
            None => x.clone(),
            Some(bn) => {
                let folded = fold_joints(x);
                let (out, cache) = bn.forward_train(&folded)?;
                input_bn_cache = Some((cache, x.shape().to_vec()));
                unfold_joints(&out, x.shape())
            }
        };
        let mut caches = Vec::with_capacity(self.layers.len());
        let adj = self.adjacency.clone();
        for layer in &mut self.layers {
            let (out, cache) = layer.forward_train(&h, &adj)?;
            caches.push(cache);
            h = out;
        }
        let gap_input_shape = h.shape().to_vec();
        let features = ops::global_avg_pool(&h)?;
        let logits = ops::affine(&features, &self.head_weight.value, &self.head_bias.value)?;
        Ok((
            logits,
            ModelCache {
                input_bn: input_bn_cache,
                layers: caches,
                gap_input_shape,
                features,
            },
        ))
    }

    /// Deterministic eval-mode forward; does not mutate any state.
    pub fn forward_eval(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut h = match &self.input_bn {
            None => x.clone(),
            Some(bn) => {
                let folded = fold_joints(x);
                unfold_joints(&bn.forward_eval(&folded)?, x.shape())
            }
        };
        for layer in &self.layers {
            h = layer.forward_eval(&h, &self.adjacency)?;
        }
        let features = ops::global_avg_pool(&h)?;
        ops::affine(&features, &self.head_weight.value, &self.head_bias.value)
    }

    /// Softmax scores in eval mode; rows sum to 1.
    pub fn predict_scores(&self, x: &Tensor) -> Result<Tensor> {
        ops::softmax(&self.forward_eval(x)?)
    }

    /// Accumulates gradients for every parameter; returns the gradient
    /// w.r.t. the model input.
    pub fn backward(&mut self, cache: &ModelCache, grad_logits: &Tensor) -> Result<Tensor> {
        let (grad_features, grad_w, grad_b) =
            ops::affine_backward(&cache.features, &self.head_weight.value, grad_logits)?;
        self.head_weight.grad.add_assign(&grad_w)?;
        self.head_bias.grad.add_assign(&grad_b)?;
        let mut grad = ops::global_avg_pool_backward(&cache.gap_input_shape, &grad_features);
        let adj = self.adjacency.clone();
        for (layer, lcache) in self.layers.iter_mut().zip(&cache.layers).rev() {
            grad = layer.backward(lcache, &grad, &adj)?;
        }
        if let Some(bn) = &mut self.input_bn {
            let (bn_cache, in_shape) = cache.input_bn.as_ref().expect("input bn cache");
            let folded_grad = fold_joints(&grad);
            let g = bn.backward(bn_cache, &folded_grad)?;
            grad = unfold_joints(&g, in_shape);
        }
        Ok(grad)
    }

    /// All trainable parameters with stable names.
    pub fn named_parameters_mut(&mut self) -> Vec<(String, &mut Parameter)> {
        let mut out: Vec<(String, &mut Parameter)> = Vec::new();
        if let Some(bn) = &mut self.input_bn {
            out.push(("input_bn.gamma".into(), &mut bn.gamma));
            out.push(("input_bn.beta".into(), &mut bn.beta));
        }
        for (i, layer) in self.layers.iter_mut().enumerate() {
            for (p, w) in layer.spatial_weights.iter_mut().enumerate() {
                out.push((format!("layers.{i}.spatial_w.{p}"), w));
            }
            for (p, m) in layer.attention.iter_mut().enumerate() {
                out.push((format!("layers.{i}.attention.{p}"), m));
            }
            out.push((format!("layers.{i}.temporal"), &mut layer.temporal_kernel));
            out.push((format!("layers.{i}.bn_s.gamma"), &mut layer.bn_spatial.gamma));
            out.push((format!("layers.{i}.bn_s.beta"), &mut layer.bn_spatial.beta));
            out.push((format!("layers.{i}.bn_t.gamma"), &mut layer.bn_temporal.gamma));
            out.push((format!("layers.{i}.bn_t.beta"), &mut layer.bn_temporal.beta));
            if let Some((proj, bn)) = &mut layer.residual {
                out.push((format!("layers.{i}.residual.proj"), proj));
                out.push((format!("layers.{i}.residual.bn.gamma"), &mut bn.gamma));
                out.push((format!("layers.{i}.residual.bn.beta"), &mut bn.beta));
            }
        }
        out.push(("head.weight".into(), &mut self.head_weight));
        out.push(("head.bias".into(), &mut self.head_bias));
        out
    }

    /// Non-trainable buffers (batch-norm running statistics).
    pub fn named_buffers_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out: Vec<(String, &mut Tensor)> = Vec::new();
        if let Some(bn) = &mut self.input_bn {
            out.push(("input_bn.running_mean".into(), &mut bn.running_mean));
            out.push(("input_bn.running_var".into(), &mut bn.running_var));
        }
        for (i, layer) in self.layers.iter_mut().enumerate() {
            out.push((format!("layers.{i}.bn_s.running_mean"), &mut layer.bn_spatial.running_mean));
            out.push((format!("layers.{i}.bn_s.running_var"), &mut layer.bn_spatial.running_var));
            out.push((format!("layers.{i}.bn_t.running_mean"), &mut layer.bn_temporal.running_mean));
            out.push((format!("layers.{i}.bn_t.running_var"), &mut layer.bn_temporal.running_var));
            if let Some((_, bn)) = &mut layer.residual {
                out.push((format!("layers.{i}.residual.bn.running_mean"), &mut bn.running_mean));
                out.push((format!("layers.{i}.residual.bn.running_var"), &mut bn.running_var));
            }
        }
        out
    }

    pub fn zero_grads(&mut self) {
        for (_, p) in self.named_parameters_mut() {
            p.zero_grad();
        }
    }

    /// Total number of allocated parameter scalars.
    pub fn param_count(&mut self) -> usize {
        self.named_parameters_mut()
            .iter()
            .map(|(_, p)| p.value.numel())
            .sum()
    }
}

/// N×C×T×V → N×(C·V)×T×1, so the input batch norm normalizes each
/// (channel, joint) pair separately.
pub fn fold_joints(x: &Tensor) -> Tensor {
    let s = x.shape();
    let (n_b, c, t, v) = (s[0], s[1], s[2], s[3]);
    let mut out = Tensor::zeros(&[n_b, c * v, t, 1]);
    for n in 0..n_b {
        for ch in 0..c {
            for ti in 0..t {
                let base = x.idx4(n, ch, ti, 0);
                for j in 0..v {
                    let val = x.data()[base + j];
                    let idx = out.idx4(n, ch * v + j, ti, 0);
                    out.data_mut()[idx] = val;
                }
            }
        }
    }
    out
}

pub fn unfold_joints(x: &Tensor, shape: &[usize]) -> Tensor {
    let (n_b, c, t, v) = (shape[0], shape[1], shape[2], shape[3]);
    let mut out = Tensor::zeros(shape);
    for n in 0..n_b {
        for ch in 0..c {
            for ti in 0..t {
                let base = out.idx4(n, ch, ti, 0);
                for j in 0..v {
                    let val = x.data()[x.idx4(n, ch * v + j, ti, 0)];
                    out.data_mut()[base + j] = val;
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_partitions, SkeletonTopology};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_adj(v: usize) -> PartitionedAdjacency {
        let edges = (1..v).map(|i| (i - 1, i)).collect();
        let t = SkeletonTopology::new("chain", v, edges, 0, None).unwrap();
        build_partitions(&t).unwrap()
    }

    fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        let n: usize = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn spec(channels: usize, stride: usize, attention: AttentionMode) -> LayerSpec {
        LayerSpec {
            channels,
            kernel: 3,
            stride,
            attention,
        }
    }

    /// Â_1 = I (only branch), M = 0, W_1 = identity, bn neutral in eval
    /// mode: spatial stage is ReLU(H).
    #[test]
    fn spatial_identity_branch() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = 4;
        let mut adj = toy_adj(v);
        // keep only the exact identity branch
        adj.normalized[0] = {
            let mut i3 = Tensor::zeros(&[v, v]);
            for i in 0..v {
                i3.data_mut()[i * v + i] = 1.0;
            }
            i3
        };
        adj.normalized[1] = Tensor::zeros(&[v, v]);
        adj.normalized[2] = Tensor::zeros(&[v, v]);
        let mut layer =
            STGCNLayer::new(2, &spec(2, 1, AttentionMode::Additive), v, &mut rng).unwrap();
        for p in 0..3 {
            layer.spatial_weights[p].value.fill(0.0);
            layer.attention[p].value.fill(0.0);
        }
        for c in 0..2 {
            let idx = layer.spatial_weights[0].value.idx4(c, c, 0, 0);
            layer.spatial_weights[0].value.data_mut()[idx] = 1.0;
        }
        layer.bn_spatial.eps = 0.0; // neutral eval-mode bn
        let h = rand_tensor(&[1, 2, 3, v], &mut rng);
        let (pre_bn, _) = layer.spatial_pre_bn(&h, &adj).unwrap();
        let got = ops::relu(&layer.bn_spatial.forward_eval(&pre_bn).unwrap());
        let want = ops::relu(&h);
        assert!(got.max_abs_diff(&want) < 1e-12);
    }

    /// Eq. 2 with all-ones attention equals Eq. 3 with zero attention.
    #[test]
    fn attention_mode_bridge() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v = 5;
        let adj = toy_adj(v);
        let mut add =
            STGCNLayer::new(2, &spec(3, 1, AttentionMode::Additive), v, &mut rng).unwrap();
        let mut elem = add.clone();
        elem.attention_mode = AttentionMode::Elementwise;
        for p in 0..3 {
            add.attention[p].value.fill(0.0);
            elem.attention[p].value.fill(1.0);
        }
        let h = rand_tensor(&[2, 2, 4, v], &mut rng);
        let ya = add.forward_eval(&h, &adj).unwrap();
        let ye = elem.forward_eval(&h, &adj).unwrap();
        assert!(ya.max_abs_diff(&ye) <= 1e-12);
    }

    /// The spatial stage matches a direct triple-loop product oracle.
    #[test]
    fn spatial_matches_matrix_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = 4;
        let adj = toy_adj(v);
        let layer =
            STGCNLayer::new(2, &spec(3, 1, AttentionMode::Additive), v, &mut rng).unwrap();
        let h = rand_tensor(&[1, 2, 3, v], &mut rng);
        let (got, _) = layer.spatial_pre_bn(&h, &adj).unwrap();

        // oracle: out(n,c_out,t,i) = Σ_p Σ_j G_p(i,j) Σ_c_in W_p(c_out,c_in) H(n,c_in,t,j)
        let mut want = Tensor::zeros(&[1, 3, 3, v]);
        for p in 0..3 {
            let g = layer.effective_graph(p, &adj);
            for co in 0..3 {
                for t in 0..3 {
                    for i in 0..v {
                        let mut acc = 0.0;
                        for j in 0..v {
                            for ci in 0..2 {
                                acc += g.data()[i * v + j]
                                    * layer.spatial_weights[p].value.data()
                                        [layer.spatial_weights[p].value.idx4(co, ci, 0, 0)]
                                    * h.data()[h.idx4(0, ci, t, j)];
                            }
                        }
                        let idx = want.idx4(0, co, t, i);
                        want.data_mut()[idx] += acc;
                    }
                }
            }
        }
        assert!(got.max_abs_diff(&want) <= 1e-12);
    }

    #[test]
    fn zero_input_zero_layer_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let v = 4;
        let adj = toy_adj(v);
        let mut layer =
            STGCNLayer::new(3, &spec(3, 1, AttentionMode::Additive), v, &mut rng).unwrap();
        let h = Tensor::zeros(&[1, 3, 4, v]);
        let y = layer.forward_eval(&h, &adj).unwrap();
        assert!(y.data().iter().all(|&x| x == 0.0));
        // shape preserved for C_in = C_out, stride 1
        let (yt, _) = layer.forward_train(&rand_tensor(&[2, 3, 4, v], &mut rng), &adj).unwrap();
        assert_eq!(yt.shape(), &[2, 3, 4, v]);
    }

    #[test]
    fn stride_two_halves_even_t() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v = 4;
        let adj = toy_adj(v);
        let layer =
            STGCNLayer::new(2, &spec(5, 2, AttentionMode::Additive), v, &mut rng).unwrap();
        let h = rand_tensor(&[1, 2, 8, v], &mut rng);
        let y = layer.forward_eval(&h, &adj).unwrap();
        assert_eq!(y.shape(), &[1, 5, 4, v]);
    }

    #[test]
    fn layer_forward_composes_standalone_ops() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let v = 4;
        let adj = toy_adj(v);
        let layer =
            STGCNLayer::new(2, &spec(4, 2, AttentionMode::Elementwise), v, &mut rng).unwrap();
        let h = rand_tensor(&[2, 2, 6, v], &mut rng);
        let y = layer.forward_eval(&h, &adj).unwrap();

        // compose the same ops by hand
        let (pre_bn, _) = layer.spatial_pre_bn(&h, &adj).unwrap();
        let hs = ops::relu(&layer.bn_spatial.forward_eval(&pre_bn).unwrap());
        let temp = ops::conv2d(&hs, &layer.temporal_kernel.value, 2, 1).unwrap();
        let mut pre = layer.bn_temporal.forward_eval(&temp).unwrap();
        let (proj, bn) = layer.residual.as_ref().unwrap();
        let r = bn
            .forward_eval(&ops::conv2d(&h, &proj.value, 2, 0).unwrap())
            .unwrap();
        pre.add_assign(&r).unwrap();
        let want = ops::relu(&pre);
        assert_eq!(y, want);
    }

    #[test]
    fn zero_layer_model_with_zero_head() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let adj = toy_adj(5);
        let mut model =
            STGCNModel::new(adj, "chain", 3, 4, &[], true, &mut rng).unwrap();
        model.head_weight.value.fill(0.0);
        model.head_bias.value.fill(0.0);
        let x = rand_tensor(&[2, 3, 6, 5], &mut rng);
        let y = model.forward_eval(&x).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn batch_permutation_permutes_logits() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let adj = toy_adj(5);
        let model = STGCNModel::new(
            adj,
            "chain",
            2,
            3,
            &[spec(4, 1, AttentionMode::Additive)],
            true,
            &mut rng,
        )
        .unwrap();
        let a = rand_tensor(&[1, 2, 6, 5], &mut rng);
        let b = rand_tensor(&[1, 2, 6, 5], &mut rng);
        let mut ab = Tensor::zeros(&[2, 2, 6, 5]);
        ab.data_mut()[..60].copy_from_slice(a.data());
        ab.data_mut()[60..].copy_from_slice(b.data());
        let mut ba = Tensor::zeros(&[2, 2, 6, 5]);
        ba.data_mut()[..60].copy_from_slice(b.data());
        ba.data_mut()[60..].copy_from_slice(a.data());
        let y_ab = model.forward_eval(&ab).unwrap();
        let y_ba = model.forward_eval(&ba).unwrap();
        assert!(
            Tensor::from_vec(&[3], y_ab.data()[..3].to_vec())
                .unwrap()
                .max_abs_diff(&Tensor::from_vec(&[3], y_ba.data()[3..].to_vec()).unwrap())
                < 1e-12
        );
    }

    #[test]
    fn predict_scores_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let adj = toy_adj(5);
        let model = STGCNModel::new(
            adj,
            "chain",
            2,
            4,
            &[spec(3, 1, AttentionMode::Additive)],
            true,
            &mut rng,
        )
        .unwrap();
        let x = rand_tensor(&[3, 2, 6, 5], &mut rng);
        let s = model.predict_scores(&x).unwrap();
        for n in 0..3 {
            let sum: f64 = s.data()[n * 4..(n + 1) * 4].iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
        // scores match direct softmax of the logits
        let direct = ops::softmax(&model.forward_eval(&x).unwrap()).unwrap();
        assert!(s.max_abs_diff(&direct) < 1e-15);
    }

    #[test]
    fn fold_unfold_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = rand_tensor(&[2, 3, 4, 5], &mut rng);
        let back = unfold_joints(&fold_joints(&x), x.shape());
        assert_eq!(x, back);
    }

    #[test]
    fn descriptor_roundtrip() {
        let d = ModelDescriptor::canonical_stgcn(3, 60, 25);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("canon.toml");
        d.save(&p).unwrap();
        assert_eq!(ModelDescriptor::load(&p).unwrap(), d);
    }

    #[test]
    fn default_stride_schedule() {
        let strides: Vec<usize> = (1..=10).map(default_stride).collect();
        assert_eq!(strides, vec![1, 1, 1, 2, 1, 1, 2, 1, 1, 2]);
    }

    #[test]
    fn model_rejects_wrong_joint_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let adj = toy_adj(5);
        let model = STGCNModel::new(adj, "chain", 2, 3, &[], false, &mut rng).unwrap();
        let x = Tensor::zeros(&[1, 2, 4, 7]);
        assert!(model.forward_eval(&x).is_err());
    }
}
