//! Per-channel batch normalization over N×C×T×V tensors.

use crate::error::{Error, Result};
use crate::tensor::{Parameter, Tensor};

#[derive(Debug, Clone)]
pub struct BatchNormState {
    pub gamma: Parameter,
    pub beta: Parameter,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub momentum: f64,
    pub eps: f64,
}

/// Saved batch statistics needed by the backward pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub input: Tensor,
}

pub const DEFAULT_BN_EPS: f64 = 1e-5;
pub const DEFAULT_BN_MOMENTUM: f64 = 0.1;

impl BatchNormState {
    pub fn new(channels: usize) -> Self {
        BatchNormState {
            gamma: Parameter::new(Tensor::full(&[channels], 1.0)),
            beta: Parameter::new(Tensor::zeros(&[channels])),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], 1.0),
            momentum: DEFAULT_BN_MOMENTUM,
            eps: DEFAULT_BN_EPS,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.value.numel()
    }

    /// Append `extra` channels with identity statistics (gamma 1, beta 0,
    /// running mean 0, running var 1). Existing channels are untouched.
    pub fn grow_channels(&mut self, extra: usize) {
        let grow = |t: &Tensor, fill: f64| {
            let mut d = t.data().to_vec();
            d.extend(std::iter::repeat(fill).take(extra));
            Tensor::from_vec(&[t.numel() + extra], d).expect("1-d growth")
        };
        self.gamma = Parameter::new(grow(&self.gamma.value, 1.0));
        self.beta = Parameter::new(grow(&self.beta.value, 0.0));
        self.running_mean = grow(&self.running_mean, 0.0);
        self.running_var = grow(&self.running_var, 1.0);
    }

    fn check(&self, input: &Tensor) -> Result<(usize, usize, usize, usize)> {
        let s = input.shape();
        if s.len() != 4 || s[1] != self.channels() {
            return Err(Error::shape(
                format!("4-d with C={}", self.channels()),
                format!("{s:?}"),
            ));
        }
        Ok((s[0], s[1], s[2], s[3]))
    }

    /// Training-mode forward: normalize with batch statistics, update the
    /// running averages, and return the cache for the backward pass.
    pub fn forward_train(&mut self, input: &Tensor) -> Result<(Tensor, BatchNormCache)> {
        let (n_b, c, t, v) = self.check(input)?;
        let m = n_b * t * v;
        if m < 2 {
            return Err(Error::shape("N*T*V >= 2 in training mode", format!("{m}")));
        }
        let mut mean = vec![0.0; c];
        let mut var = vec![0.0; c];
        for ch in 0..c {
            let mut sum = 0.0;
            let mut sq = 0.0;
            for n in 0..n_b {
                let base = input.idx4(n, ch, 0, 0);
                for &x in &input.data()[base..base + t * v] {
                    sum += x;
                    sq += x * x;
                }
            }
            let mu = sum / m as f64;
            mean[ch] = mu;
            var[ch] = (sq / m as f64 - mu * mu).max(0.0);
        }
        for ch in 0..c {
            self.running_mean.data_mut()[ch] =
                (1.0 - self.momentum) * self.running_mean.data()[ch] + self.momentum * mean[ch];
            self.running_var.data_mut()[ch] =
                (1.0 - self.momentum) * self.running_var.data()[ch] + self.momentum * var[ch];
        }
        let out = self.apply(input, &mean, &var)?;
        Ok((
            out,
            BatchNormCache {
                mean,
                var,
                input: input.clone(),
            },
        ))
    }

    /// Eval-mode forward using the running statistics; does not mutate.
    pub fn forward_eval(&self, input: &Tensor) -> Result<Tensor> {
        self.check(input)?;
        self.apply(input, self.running_mean.data(), self.running_var.data())
    }

    fn apply(&self, input: &Tensor, mean: &[f64], var: &[f64]) -> Result<Tensor> {
        let (n_b, c, t, v) = self.check(input)?;
        let mut out = Tensor::zeros(input.shape());
        for ch in 0..c {
            let inv = 1.0 / (var[ch] + self.eps).sqrt();
            let g = self.gamma.value.data()[ch];
            let b = self.beta.value.data()[ch];
            let mu = mean[ch];
            for n in 0..n_b {
                let base = input.idx4(n, ch, 0, 0);
                let src = &input.data()[base..base + t * v];
                let dst = &mut out.data_mut()[base..base + t * v];
                for i in 0..t * v {
                    dst[i] = (src[i] - mu) * inv * g + b;
                }
            }
        }
        Ok(out)
    }

    /// Exact gradients w.r.t. input; gamma/beta grads are accumulated in place.
    pub fn backward(&mut self, cache: &BatchNormCache, grad_out: &Tensor) -> Result<Tensor> {
        let (n_b, c, t, v) = self.check(&cache.input)?;
        let m = (n_b * t * v) as f64;
        let mut grad_in = Tensor::zeros(cache.input.shape());
        for ch in 0..c {
            let mu = cache.mean[ch];
            let inv = 1.0 / (cache.var[ch] + self.eps).sqrt();
            let g = self.gamma.value.data()[ch];
            let mut sum_dy = 0.0;
            let mut sum_dy_xhat = 0.0;
            for n in 0..n_b {
                let base = cache.input.idx4(n, ch, 0, 0);
                let x = &cache.input.data()[base..base + t * v];
                let dy = &grad_out.data()[base..base + t * v];
                for i in 0..t * v {
                    let xhat = (x[i] - mu) * inv;
                    sum_dy += dy[i];
                    sum_dy_xhat += dy[i] * xhat;
                }
            }
            self.gamma.grad.data_mut()[ch] += sum_dy_xhat;
            self.beta.grad.data_mut()[ch] += sum_dy;
            for n in 0..n_b {
                let base = cache.input.idx4(n, ch, 0, 0);
                let x = &cache.input.data()[base..base + t * v];
                let dy = &grad_out.data()[base..base + t * v];
                let gi = &mut grad_in.data_mut()[base..base + t * v];
                for i in 0..t * v {
                    let xhat = (x[i] - mu) * inv;
                    gi[i] += g * inv * (dy[i] - sum_dy / m - xhat * sum_dy_xhat / m);
                }
            }
        }
        Ok(grad_in)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn training_mode_normalizes_per_channel() {
        let mut bn = BatchNormState::new(2);
        let data: Vec<f64> = (0..16).map(|i| i as f64 * 0.5 - 3.0).collect();
        let x = Tensor::from_vec(&[1, 2, 2, 4], data).unwrap();
        let (y, _) = bn.forward_train(&x).unwrap();
        for ch in 0..2 {
            let vals: Vec<f64> = (0..8).map(|i| y.data()[ch * 8 + i]).collect();
            let mean: f64 = vals.iter().sum::<f64>() / 8.0;
            let var: f64 = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 8.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-3); // eps_bn shrinks variance slightly
        }
    }

    #[test]
    fn zero_gamma_yields_beta() {
        let mut bn = BatchNormState::new(1);
        bn.gamma.value.fill(0.0);
        bn.beta.value.fill(0.7);
        let x = Tensor::from_vec(&[1, 1, 2, 2], vec![1.0, -2.0, 3.0, 4.0]).unwrap();
        let (y, _) = bn.forward_train(&x).unwrap();
        assert!(y.data().iter().all(|&v| (v - 0.7).abs() < 1e-12));
    }

    #[test]
    fn matches_hand_computation() {
        // 1x2x2x2, channel stats computed by hand
        let mut bn = BatchNormState::new(2);
        bn.eps = 1e-12;
        let x = Tensor::from_vec(&[1, 2, 2, 2], vec![1.0, 2.0, 3.0, 4.0, 0.0, 0.0, 4.0, 4.0])
            .unwrap();
        let (y, _) = bn.forward_train(&x).unwrap();
        // channel 0: mean 2.5, var 1.25; channel 1: mean 2, var 4
        let s0 = 1.25_f64.sqrt();
        let want = [
            (1.0 - 2.5) / s0,
            (2.0 - 2.5) / s0,
            (3.0 - 2.5) / s0,
            (4.0 - 2.5) / s0,
            -1.0,
            -1.0,
            1.0,
            1.0,
        ];
        for (a, b) in y.data().iter().zip(want) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_channel_survives_via_eps() {
        let mut bn = BatchNormState::new(1);
        let x = Tensor::full(&[2, 1, 3, 3], 5.0);
        let (y, _) = bn.forward_train(&x).unwrap();
        assert!(y.all_finite());
        assert!(y.data().iter().all(|&v| v.abs() < 1e-9));
    }

    #[test]
    fn eval_uses_running_stats() {
        let bn = BatchNormState::new(1);
        let x = Tensor::from_vec(&[1, 1, 1, 2], vec![3.0, -1.0]).unwrap();
        let y = bn.forward_eval(&x).unwrap();
        // fresh state: mean 0, var 1 -> near identity
        assert!((y.data()[0] - 3.0).abs() < 1e-4);
        assert!((y.data()[1] + 1.0).abs() < 1e-4);
    }

    #[test]
    fn grow_channels_keeps_old_and_appends_identity() {
        let mut bn = BatchNormState::new(2);
        bn.gamma.value.data_mut()[1] = 3.0;
        bn.running_mean.data_mut()[0] = -1.5;
        bn.grow_channels(3);
        assert_eq!(bn.channels(), 5);
        assert_eq!(bn.gamma.value.data()[1], 3.0);
        assert_eq!(bn.running_mean.data()[0], -1.5);
        assert_eq!(bn.gamma.value.data()[4], 1.0);
        assert_eq!(bn.running_var.data()[4], 1.0);
    }
}
