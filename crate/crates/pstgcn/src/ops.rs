//! Forward and backward rules for the operator set the model needs.
//!
//! There is no general tape: the layer sequence is fixed, so every op
//! exposes an explicit forward and an explicit backward and the model
//! composes them in order.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// 2D convolution over the (time, joint) axes.
///
/// Input N×C_in×T×V, kernel C_out×C_in×K_t×K_v. Time is zero-padded by
/// `pad_t` on both sides and strided by `stride_t`; the joint axis is a
/// valid convolution.
pub fn conv2d(
    input: &Tensor,
    kernel: &Tensor,
    stride_t: usize,
    pad_t: usize,
) -> Result<Tensor> {
    let (n_b, c_in, t_in, v_in) = dims4(input, "conv2d input")?;
    let (c_out, kc_in, k_t, k_v) = dims4(kernel, "conv2d kernel")?;
    if kc_in != c_in {
        return Err(Error::shape(
            format!("kernel C_in {c_in}"),
            format!("{kc_in} (input {:?}, kernel {:?})", input.shape(), kernel.shape()),
        ));
    }
    if k_t > t_in + 2 * pad_t || k_v > v_in {
        return Err(Error::shape(
            format!("kernel K_t<={} K_v<={}", t_in + 2 * pad_t, v_in),
            format!("K_t={k_t} K_v={k_v}"),
        ));
    }
    let t_out = (t_in + 2 * pad_t - k_t) / stride_t + 1;
    let v_out = v_in - k_v + 1;
    let mut out = Tensor::zeros(&[n_b, c_out, t_out, v_out]);

    for n in 0..n_b {
        for co in 0..c_out {
            for ci in 0..c_in {
                for kt in 0..k_t {
                    for kv in 0..k_v {
                        let w = kernel.data()[kernel.idx4(co, ci, kt, kv)];
                        if w == 0.0 {
                            continue;
                        }
                        for to in 0..t_out {
                            let t_signed = (to * stride_t + kt) as isize - pad_t as isize;
                            if t_signed < 0 || t_signed >= t_in as isize {
                                continue;
                            }
                            let ti = t_signed as usize;
                            let in_base = input.idx4(n, ci, ti, kv);
                            let out_base = out.idx4(n, co, to, 0);
                            let src = &input.data()[in_base..in_base + v_out];
                            let dst = &mut out.data_mut()[out_base..out_base + v_out];
                            for v in 0..v_out {
                                dst[v] += w * src[v];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of [`conv2d`] w.r.t. input and kernel.
pub fn conv2d_backward(
    input: &Tensor,
    kernel: &Tensor,
    grad_out: &Tensor,
    stride_t: usize,
    pad_t: usize,
) -> Result<(Tensor, Tensor)> {
    let (n_b, c_in, t_in, _v_in) = dims4(input, "conv2d input")?;
    let (c_out, _, k_t, k_v) = dims4(kernel, "conv2d kernel")?;
    let (_, _, t_out, v_out) = dims4(grad_out, "conv2d grad_out")?;
    let mut grad_in = Tensor::zeros(input.shape());
    let mut grad_k = Tensor::zeros(kernel.shape());

    for n in 0..n_b {
        for co in 0..c_out {
            for ci in 0..c_in {
                for kt in 0..k_t {
                    for kv in 0..k_v {
                        let w = kernel.data()[kernel.idx4(co, ci, kt, kv)];
                        let mut wg = 0.0;
                        for to in 0..t_out {
                            let t_signed = (to * stride_t + kt) as isize - pad_t as isize;
                            if t_signed < 0 || t_signed >= t_in as isize {
                                continue;
                            }
                            let ti = t_signed as usize;
                            let in_base = input.idx4(n, ci, ti, kv);
                            let go_base = grad_out.idx4(n, co, to, 0);
                            let go = &grad_out.data()[go_base..go_base + v_out];
                            let src = &input.data()[in_base..in_base + v_out];
                            for v in 0..v_out {
                                wg += go[v] * src[v];
                            }
                            let gi = &mut grad_in.data_mut()[in_base..in_base + v_out];
                            for v in 0..v_out {
                                gi[v] += w * go[v];
                            }
                        }
                        grad_k.data_mut()[kernel.idx4(co, ci, kt, kv)] += wg;
                    }
                }
            }
        }
    }
    Ok((grad_in, grad_k))
}

pub fn relu(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    out.data_mut().iter_mut().for_each(|x| {
        if *x < 0.0 {
            *x = 0.0;
        }
    });
    out
}

pub fn relu_backward(input: &Tensor, grad_out: &Tensor) -> Tensor {
    let mut grad_in = grad_out.clone();
    for (g, x) in grad_in.data_mut().iter_mut().zip(input.data()) {
        if *x <= 0.0 {
            *g = 0.0;
        }
    }
    grad_in
}

/// Mean over the (T, V) axes: N×C×T×V → N×C.
pub fn global_avg_pool(input: &Tensor) -> Result<Tensor> {
    let (n_b, c, t, v) = dims4(input, "global_avg_pool input")?;
    let area = (t * v) as f64;
    let mut out = Tensor::zeros(&[n_b, c]);
    for n in 0..n_b {
        for ch in 0..c {
            let base = input.idx4(n, ch, 0, 0);
            let sum: f64 = input.data()[base..base + t * v].iter().sum();
            out.data_mut()[n * c + ch] = sum / area;
        }
    }
    Ok(out)
}

pub fn global_avg_pool_backward(input_shape: &[usize], grad_out: &Tensor) -> Tensor {
    let (t, v) = (input_shape[2], input_shape[3]);
    let area = (t * v) as f64;
    let mut grad_in = Tensor::zeros(input_shape);
    let c = input_shape[1];
    for n in 0..input_shape[0] {
        for ch in 0..c {
            let g = grad_out.data()[n * c + ch] / area;
            let base = grad_in.idx4(n, ch, 0, 0);
            grad_in.data_mut()[base..base + t * v]
                .iter_mut()
                .for_each(|x| *x = g);
        }
    }
    grad_in
}

/// x·Wᵀ + b with input N×C, weight K×C, bias K.
pub fn affine(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (n_b, c) = dims2(input, "affine input")?;
    let (k, wc) = dims2(weight, "affine weight")?;
    if wc != c || bias.numel() != k {
        return Err(Error::shape(
            format!("weight {k}x{c}, bias {k}"),
            format!("weight {:?}, bias {:?}", weight.shape(), bias.shape()),
        ));
    }
    let mut out = Tensor::zeros(&[n_b, k]);
    for n in 0..n_b {
        let x = &input.data()[n * c..(n + 1) * c];
        for j in 0..k {
            let w = &weight.data()[j * c..(j + 1) * c];
            let mut acc = bias.data()[j];
            for i in 0..c {
                acc += x[i] * w[i];
            }
            out.data_mut()[n * k + j] = acc;
        }
    }
    Ok(out)
}

pub fn affine_backward(
    input: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (n_b, c) = dims2(input, "affine input")?;
    let (k, _) = dims2(weight, "affine weight")?;
    let mut grad_in = Tensor::zeros(&[n_b, c]);
    let mut grad_w = Tensor::zeros(&[k, c]);
    let mut grad_b = Tensor::zeros(&[k]);
    for n in 0..n_b {
        let x = &input.data()[n * c..(n + 1) * c];
        for j in 0..k {
            let g = grad_out.data()[n * k + j];
            grad_b.data_mut()[j] += g;
            let w_row = &weight.data()[j * c..(j + 1) * c];
            let gi = &mut grad_in.data_mut()[n * c..(n + 1) * c];
            for i in 0..c {
                gi[i] += g * w_row[i];
            }
            let gw = &mut grad_w.data_mut()[j * c..(j + 1) * c];
            for i in 0..c {
                gw[i] += g * x[i];
            }
        }
    }
    Ok((grad_in, grad_w, grad_b))
}

/// Row-wise softmax with max-subtraction.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    let (n_b, k) = dims2(logits, "softmax logits")?;
    let mut out = Tensor::zeros(&[n_b, k]);
    for n in 0..n_b {
        let row = &logits.data()[n * k..(n + 1) * k];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        let dst = &mut out.data_mut()[n * k..(n + 1) * k];
        for i in 0..k {
            let e = (row[i] - max).exp();
            dst[i] = e;
            sum += e;
        }
        dst.iter_mut().for_each(|x| *x /= sum);
    }
    Ok(out)
}

/// Mean cross-entropy and its gradient (softmax − onehot)/N.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let (n_b, k) = dims2(logits, "loss logits")?;
    if labels.len() != n_b {
        return Err(Error::shape(format!("{n_b} labels"), format!("{}", labels.len())));
    }
    for &l in labels {
        if l >= k {
            return Err(Error::LabelOutOfRange { label: l, n_class: k });
        }
    }
    let probs = softmax(logits)?;
    let mut loss = 0.0;
    let mut grad = probs.clone();
    for n in 0..n_b {
        let p = probs.data()[n * k + labels[n]];
        // ln of a softmax entry computed stably from the logits directly
        let row = &logits.data()[n * k..(n + 1) * k];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let logsum: f64 = row.iter().map(|x| (x - max).exp()).sum::<f64>().ln() + max;
        loss -= row[labels[n]] - logsum;
        let _ = p;
        grad.data_mut()[n * k + labels[n]] -= 1.0;
    }
    grad.scale(1.0 / n_b as f64);
    Ok((loss / n_b as f64, grad))
}

fn dims4(t: &Tensor, what: &str) -> Result<(usize, usize, usize, usize)> {
    let s = t.shape();
    if s.len() != 4 {
        return Err(Error::shape(format!("{what}: 4-d"), format!("{s:?}")));
    }
    Ok((s[0], s[1], s[2], s[3]))
}

fn dims2(t: &Tensor, what: &str) -> Result<(usize, usize)> {
    let s = t.shape();
    if s.len() != 2 {
        return Err(Error::shape(format!("{what}: 2-d"), format!("{s:?}")));
    }
    Ok((s[0], s[1]))
}
