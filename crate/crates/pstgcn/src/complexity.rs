//! Static parameter and FLOP accounting for a model topology.

use serde::{Deserialize, Serialize};

use crate::net::{ModelDescriptor, STGCNModel};

/// How a multiply-accumulate is reported: as one FLOP or as two.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MacConvention {
    One,
    Two,
}

impl MacConvention {
    pub fn factor(self) -> u64 {
        match self {
            MacConvention::One => 1,
            MacConvention::Two => 2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerComplexity {
    pub layer: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub t_in: usize,
    pub t_out: usize,
    pub spatial_params: u64,
    pub temporal_params: u64,
    pub residual_params: u64,
    pub attention_params: u64,
    pub bn_params: u64,
    pub spatial_flops: u64,
    pub temporal_flops: u64,
    pub residual_flops: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub input_shape: (usize, usize, usize),
    pub convention: MacConvention,
    pub exhaustive: bool,
    pub layers: Vec<LayerComplexity>,
    pub head_params: u64,
    pub head_flops: u64,
    pub input_bn_params: u64,
    pub total_params: u64,
    pub total_flops: u64,
}

impl ComplexityReport {
    pub fn summary_line(&self) -> String {
        format!("params={} flops={}", self.total_params, self.total_flops)
    }
}

/// Options for the accounting; defaults follow the mac=2 convention and
/// exclude normalization/attention arithmetic.
#[derive(Debug, Clone, Copy)]
pub struct ComplexityOptions {
    pub convention: MacConvention,
    /// Count batch-norm, ReLU and attention-combination arithmetic too.
    pub exhaustive: bool,
    /// Include the input batch norm over C_in·V channels.
    pub input_bn: bool,
}

impl Default for ComplexityOptions {
    fn default() -> Self {
        ComplexityOptions {
            convention: MacConvention::Two,
            exhaustive: false,
            input_bn: true,
        }
    }
}

/// Parameter and FLOP report for a descriptor at the given input length.
pub fn analyze(descriptor: &ModelDescriptor, t_in: usize, opts: ComplexityOptions) -> ComplexityReport {
    let v = descriptor.joints as u64;
    let f = opts.convention.factor();
    let mut layers = Vec::with_capacity(descriptor.layers.len());
    let mut c_prev = descriptor.in_channels;
    let mut t = t_in;
    let mut total_params: u64 = 0;
    let mut total_flops: u64 = 0;

    if opts.input_bn {
        total_params += 2 * descriptor.in_channels as u64 * v;
        if opts.exhaustive {
            total_flops += 2 * descriptor.in_channels as u64 * t_in as u64 * v;
        }
    }

    for (i, spec) in descriptor.layers.iter().enumerate() {
        let c = spec.channels;
        let k = spec.kernel as u64;
        let t_out = (t + spec.stride - 1) / spec.stride;
        let has_residual = c_prev != c || spec.stride != 1;
        let (cu, pu, tu, vu) = (c as u64, c_prev as u64, t as u64, t_out as u64);

        let spatial_params = 3 * cu * pu;
        let temporal_params = cu * cu * k;
        let residual_params = if has_residual { cu * pu } else { 0 };
        let attention_params = 3 * v * v;
        let bn_params = 2 * cu + 2 * cu + if has_residual { 2 * cu } else { 0 };

        let spatial_macs = 3 * cu * pu * tu * v + 3 * cu * tu * v * v;
        let temporal_macs = cu * cu * k * vu * v;
        let residual_macs = if has_residual { pu * cu * vu * v } else { 0 };

        let mut spatial_flops = spatial_macs * f;
        let mut temporal_flops = temporal_macs * f;
        let residual_flops = residual_macs * f;
        if opts.exhaustive {
            // attention combine, bn affine passes, relus
            spatial_flops += 3 * v * v + 3 * cu * tu * v + cu * tu * v;
            temporal_flops += 3 * cu * vu * v + cu * vu * v;
        }

        let lc = LayerComplexity {
            layer: i + 1,
            c_in: c_prev,
            c_out: c,
            t_in: t,
            t_out,
            spatial_params,
            temporal_params,
            residual_params,
            attention_params,
            bn_params,
            spatial_flops,
            temporal_flops,
            residual_flops,
        };
        total_params += spatial_params + temporal_params + residual_params + attention_params + bn_params;
        total_flops += spatial_flops + temporal_flops + residual_flops;
        layers.push(lc);
        c_prev = c;
        t = t_out;
    }

    let c_last = c_prev as u64;
    let n_class = descriptor.n_class as u64;
    let head_params = c_last * n_class + n_class;
    let head_flops = c_last * n_class * f;
    total_params += head_params;
    total_flops += head_flops;

    ComplexityReport {
        input_shape: (descriptor.in_channels, t_in, descriptor.joints),
        convention: opts.convention,
        exhaustive: opts.exhaustive,
        layers,
        head_params,
        head_flops,
        input_bn_params: if opts.input_bn {
            2 * descriptor.in_channels as u64 * v
        } else {
            0
        },
        total_params,
        total_flops,
    }
}

/// Static parameter count for a descriptor.
pub fn count_params(descriptor: &ModelDescriptor, opts: ComplexityOptions) -> u64 {
    analyze(descriptor, 1, opts).total_params
}

/// FLOP count for a descriptor at input length `t_in`.
pub fn count_flops(descriptor: &ModelDescriptor, t_in: usize, opts: ComplexityOptions) -> u64 {
    analyze(descriptor, t_in, opts).total_flops
}

/// Parameter count of a live model, from the shapes it actually allocates.
pub fn count_model_params(model: &mut STGCNModel) -> u64 {
    model.param_count() as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{AttentionMode, LayerSpec};

    fn opts() -> ComplexityOptions {
        ComplexityOptions {
            input_bn: false,
            ..Default::default()
        }
    }

    #[test]
    fn single_layer_matches_hand_arithmetic() {
        // C_in=3, C_out=20, K=9, V=25: spatial 180, temporal 3600,
        // residual 60, attention 1875
        let mut d = ModelDescriptor::new(3, 60, 25);
        d.layers.push(LayerSpec {
            channels: 20,
            kernel: 9,
            stride: 1,
            attention: AttentionMode::Additive,
        });
        let r = analyze(&d, 300, opts());
        let l = &r.layers[0];
        assert_eq!(l.spatial_params, 180);
        assert_eq!(l.temporal_params, 3600);
        assert_eq!(l.residual_params, 60);
        assert_eq!(l.attention_params, 1875);
    }

    #[test]
    fn zero_layer_model_is_head_only() {
        let d = ModelDescriptor::new(3, 10, 25);
        let r = analyze(&d, 300, opts());
        assert_eq!(r.total_flops, 3 * 10 * 2);
        assert_eq!(r.total_params, 3 * 10 + 10);
    }

    #[test]
    fn canonical_stgcn_near_reported_value() {
        let d = ModelDescriptor::canonical_stgcn(3, 60, 25);
        let params = count_params(&d, ComplexityOptions::default());
        let rel = (params as f64 - 3.12e6).abs() / 3.12e6;
        assert!(rel < 0.10, "params {params} vs 3.12M (rel {rel:.3})");
        let flops = count_flops(&d, 300, ComplexityOptions::default());
        let relf = (flops as f64 - 16.7e9).abs() / 16.7e9;
        assert!(relf < 0.20, "flops {flops} vs 16.7G (rel {relf:.3})");
    }

    #[test]
    fn flops_linear_in_t_for_stride_free_topology() {
        let d = ModelDescriptor::from_widths(3, 60, 25, &[40, 40, 40], AttentionMode::Additive);
        assert!(d.layers.iter().all(|l| l.stride == 1));
        let base = count_flops(&d, 100, opts());
        let head = 40u64 * 60 * 2;
        assert_eq!(count_flops(&d, 300, opts()) - head, 3 * (base - head));
    }
}
