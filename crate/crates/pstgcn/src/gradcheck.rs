//! Central finite-difference gradient checking.

use crate::tensor::Tensor;

pub const DEFAULT_STEP: f64 = 1e-5;

/// Central finite-difference gradient of a scalar function of one tensor.
pub fn numerical_grad<F>(x: &Tensor, step: f64, mut f: F) -> Tensor
where
    F: FnMut(&Tensor) -> f64,
{
    let mut grad = Tensor::zeros(x.shape());
    let mut probe = x.clone();
    for i in 0..x.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + step;
        let up = f(&probe);
        probe.data_mut()[i] = orig - step;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        grad.data_mut()[i] = (up - down) / (2.0 * step);
    }
    grad
}

/// Max relative error between analytic and numerical gradients,
/// with an absolute floor so near-zero entries do not blow up the ratio.
pub fn max_relative_error(analytic: &Tensor, numerical: &Tensor) -> f64 {
    analytic
        .data()
        .iter()
        .zip(numerical.data())
        .map(|(a, n)| {
            let denom = a.abs().max(n.abs()).max(1e-3);
            (a - n).abs() / denom
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient() {
        let x = Tensor::from_vec(&[3], vec![1.0, -2.0, 0.5]).unwrap();
        let g = numerical_grad(&x, 1e-5, |t| t.data().iter().map(|v| v * v).sum());
        for (gi, xi) in g.data().iter().zip(x.data()) {
            assert!((gi - 2.0 * xi).abs() < 1e-8);
        }
    }
}
