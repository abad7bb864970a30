//! SGD with momentum and weight decay, plus the milestone learning-rate
//! schedule used for the final fine-tune.

use std::collections::HashMap;

use crate::tensor::{Parameter, Tensor};

pub const DEFAULT_MOMENTUM: f64 = 0.9;
pub const DEFAULT_WEIGHT_DECAY: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct SgdOptimizer {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: HashMap<String, Tensor>,
}

impl SgdOptimizer {
    pub fn new(lr: f64, momentum: f64, weight_decay: f64) -> Self {
        SgdOptimizer {
            lr,
            momentum,
            weight_decay,
            velocity: HashMap::new(),
        }
    }

    /// v <- momentum*v + grad + wd*value; value <- value - lr*v; grad <- 0.
    pub fn step(&mut self, params: &mut [(String, &mut Parameter)]) {
        for (name, p) in params.iter_mut() {
            if !p.trainable {
                p.zero_grad();
                continue;
            }
            let v = self
                .velocity
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(p.value.shape()));
            if v.shape() != p.value.shape() {
                // parameter was reshaped by growth; start momentum fresh
                *v = Tensor::zeros(p.value.shape());
            }
            let lr = self.lr;
            let (mom, wd) = (self.momentum, self.weight_decay);
            for i in 0..p.value.numel() {
                let g = p.grad.data()[i] + wd * p.value.data()[i];
                let vi = mom * v.data()[i] + g;
                v.data_mut()[i] = vi;
                p.value.data_mut()[i] -= lr * vi;
            }
            p.zero_grad();
        }
    }

    pub fn velocity(&self) -> &HashMap<String, Tensor> {
        &self.velocity
    }

    pub fn velocity_mut(&mut self) -> &mut HashMap<String, Tensor> {
        &mut self.velocity
    }
}

/// Base lr divided by 10 at each milestone epoch (0-based epoch index).
pub fn milestone_lr(base: f64, milestones: &[usize], epoch: usize) -> f64 {
    let drops = milestones.iter().filter(|&&m| epoch >= m).count();
    base / 10f64.powi(drops as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_param(value: f64) -> Parameter {
        Parameter::new(Tensor::full(&[1], value))
    }

    #[test]
    fn zero_lr_leaves_parameters_unchanged() {
        let mut opt = SgdOptimizer::new(0.0, 0.9, 0.0);
        let mut p = one_param(1.5);
        p.grad.fill(2.0);
        opt.step(&mut [("p".into(), &mut p)]);
        assert_eq!(p.value.data()[0], 1.5);
    }

    #[test]
    fn vanilla_descent_moves_by_lr_times_grad() {
        let mut opt = SgdOptimizer::new(0.1, 0.0, 0.0);
        let mut p = one_param(1.0);
        p.grad.fill(3.0);
        opt.step(&mut [("p".into(), &mut p)]);
        assert!((p.value.data()[0] - (1.0 - 0.3)).abs() < 1e-15);
        assert_eq!(p.grad.data()[0], 0.0);
    }

    #[test]
    fn two_momentum_steps_unroll() {
        // constant grad g: total update lr*(g + (0.9g + g)) = lr*g*(1 + 1.9)
        let g = 2.0;
        let lr = 0.1;
        let mut opt = SgdOptimizer::new(lr, 0.9, 0.0);
        let mut p = one_param(0.0);
        p.grad.fill(g);
        opt.step(&mut [("p".into(), &mut p)]);
        p.grad.fill(g);
        opt.step(&mut [("p".into(), &mut p)]);
        assert!((p.value.data()[0] + lr * (g + 1.9 * g)).abs() < 1e-12);
    }

    #[test]
    fn weight_decay_pulls_toward_zero() {
        let mut opt = SgdOptimizer::new(0.1, 0.0, 0.5);
        let mut p = one_param(2.0);
        opt.step(&mut [("p".into(), &mut p)]);
        assert!((p.value.data()[0] - (2.0 - 0.1 * 0.5 * 2.0)).abs() < 1e-15);
    }

    #[test]
    fn milestone_schedule_matches_paper_shape() {
        assert_eq!(milestone_lr(0.1, &[30, 40], 29), 0.1);
        assert!((milestone_lr(0.1, &[30, 40], 30) - 0.01).abs() < 1e-15);
        assert!((milestone_lr(0.1, &[30, 40], 40) - 0.001).abs() < 1e-15);
    }
}
