//! Stateless forward/backward kernels for the non-convolutional blocks.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn relu(x: &Tensor) -> Tensor {
    let data = x.data().iter().map(|&v| v.max(0.0)).collect();
    Tensor::new(x.shape(), data).expect("shape preserved")
}

/// Routes `grad` through the positions where the forward output was positive.
pub fn relu_backward(output: &Tensor, grad: &Tensor) -> Result<Tensor> {
    same_shape("relu_backward", output, grad)?;
    let data = output
        .data()
        .iter()
        .zip(grad.data())
        .map(|(&o, &g)| if o > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(grad.shape(), data)
}

/// 2x2 max pooling with stride 2. Returns the pooled map and, per output,
/// the flat input index of the winning element (first maximum in scan order).
pub fn maxpool2x2(x: &Tensor) -> Result<(Tensor, Vec<u32>)> {
    let [n, c, h, w] = x.shape();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::invalid(format!("maxpool2x2: odd extent {h}x{w}")));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros([n, c, oh, ow]);
    let mut argmax = Vec::with_capacity(out.len());
    let src = x.data();
    let mut k = 0;
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + 2 * oy * w + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = base + (2 * oy + dy) * w + 2 * ox + dx;
                    if src[i] > src[best] {
                        best = i;
                    }
                }
                out.data_mut()[k] = src[best];
                argmax.push(best as u32);
                k += 1;
            }
        }
    }
    Ok((out, argmax))
}

pub fn maxpool2x2_backward(grad: &Tensor, argmax: &[u32], in_shape: [usize; 4]) -> Result<Tensor> {
    if grad.len() != argmax.len() {
        return Err(Error::invalid("maxpool2x2_backward: argmax length mismatch"));
    }
    let mut gx = Tensor::zeros(in_shape);
    for (&g, &i) in grad.data().iter().zip(argmax) {
        gx.data_mut()[i as usize] += g;
    }
    Ok(gx)
}

/// Fully connected layer on the flattened sample: `x (N, F..)`, `w (O, F, 1, 1)`.
pub fn linear(x: &Tensor, w: &Tensor, b: &[f32]) -> Result<Tensor> {
    let n = x.n();
    let f = x.sample_len();
    let [o, wf, _, _] = w.shape();
    if wf * w.h() * w.w() != f || b.len() != o {
        return Err(Error::invalid(format!(
            "linear: input features {f}, weight {:?}, bias {}",
            w.shape(),
            b.len()
        )));
    }
    let mut out = Tensor::zeros([n, o, 1, 1]);
    for ni in 0..n {
        let xs = x.sample(ni);
        for oi in 0..o {
            let row = &w.data()[oi * f..(oi + 1) * f];
            let mut acc = b[oi];
            for (a, v) in row.iter().zip(xs) {
                acc += a * v;
            }
            out.data_mut()[ni * o + oi] = acc;
        }
    }
    Ok(out)
}

pub struct LinearGrads {
    pub grad_x: Tensor,
    pub grad_w: Tensor,
    pub grad_b: Vec<f32>,
}

pub fn linear_backward(x: &Tensor, w: &Tensor, grad: &Tensor) -> Result<LinearGrads> {
    let n = x.n();
    let f = x.sample_len();
    let o = w.n();
    if grad.shape() != [n, o, 1, 1] || w.sample_len() != f {
        return Err(Error::invalid(format!(
            "linear_backward: gradient {:?} inconsistent with input {:?} / weight {:?}",
            grad.shape(),
            x.shape(),
            w.shape()
        )));
    }
    let mut gx = Tensor::zeros(x.shape());
    let mut gw = Tensor::zeros(w.shape());
    let mut gb = vec![0.0f32; o];
    for ni in 0..n {
        let gys = &grad.data()[ni * o..(ni + 1) * o];
        let gxs = &mut gx.data_mut()[ni * f..(ni + 1) * f];
        for (oi, &gy) in gys.iter().enumerate() {
            gb[oi] += gy;
            if gy == 0.0 {
                continue;
            }
            let row = &w.data()[oi * f..(oi + 1) * f];
            for (g, a) in gxs.iter_mut().zip(row) {
                *g += gy * a;
            }
        }
    }
    for oi in 0..o {
        let row = &mut gw.data_mut()[oi * f..(oi + 1) * f];
        for ni in 0..n {
            let gy = grad.data()[ni * o + oi];
            if gy == 0.0 {
                continue;
            }
            for (g, v) in row.iter_mut().zip(x.sample(ni)) {
                *g += gy * v;
            }
        }
    }
    Ok(LinearGrads {
        grad_x: gx,
        grad_w: gw,
        grad_b: gb,
    })
}

pub const BN_MOMENTUM: f32 = 0.1;
pub const BN_EPS: f32 = 1e-5;

/// Per-channel state saved by a training-mode batchnorm forward.
#[derive(Clone, Debug)]
pub struct BatchNormCache {
    xhat: Tensor,
    inv_std: Vec<f32>,
}

/// Training-mode batch normalisation. Returns output, cache, and the batch
/// mean and unbiased variance for the running-statistics update.
pub fn batchnorm_train(
    x: &Tensor,
    gamma: &[f32],
    beta: &[f32],
) -> Result<(Tensor, BatchNormCache, Vec<f32>, Vec<f32>)> {
    let [n, c, h, w] = x.shape();
    check_bn(c, gamma, beta)?;
    let m = n * h * w;
    if m < 2 {
        return Err(Error::invalid("batchnorm: need at least two values per channel in train mode"));
    }
    let plane = h * w;
    let mut mean = vec![0.0f32; c];
    let mut var = vec![0.0f32; c];
    for ci in 0..c {
        let mut s = 0.0f64;
        for ni in 0..n {
            let off = (ni * c + ci) * plane;
            s += x.data()[off..off + plane].iter().map(|&v| v as f64).sum::<f64>();
        }
        let mu = s / m as f64;
        let mut ss = 0.0f64;
        for ni in 0..n {
            let off = (ni * c + ci) * plane;
            ss += x.data()[off..off + plane]
                .iter()
                .map(|&v| (v as f64 - mu).powi(2))
                .sum::<f64>();
        }
        mean[ci] = mu as f32;
        var[ci] = (ss / m as f64) as f32;
    }
    let inv_std: Vec<f32> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
    let mut xhat = Tensor::zeros(x.shape());
    let mut out = Tensor::zeros(x.shape());
    for ni in 0..n {
        for ci in 0..c {
            let off = (ni * c + ci) * plane;
            for i in off..off + plane {
                let xh = (x.data()[i] - mean[ci]) * inv_std[ci];
                xhat.data_mut()[i] = xh;
                out.data_mut()[i] = gamma[ci] * xh + beta[ci];
            }
        }
    }
    let unbiased = var.iter().map(|v| v * m as f32 / (m - 1) as f32).collect();
    Ok((out, BatchNormCache { xhat, inv_std }, mean, unbiased))
}

pub fn batchnorm_eval(
    x: &Tensor,
    gamma: &[f32],
    beta: &[f32],
    running_mean: &[f32],
    running_var: &[f32],
) -> Result<Tensor> {
    let [n, c, h, w] = x.shape();
    check_bn(c, gamma, beta)?;
    let plane = h * w;
    let mut out = Tensor::zeros(x.shape());
    for ni in 0..n {
        for ci in 0..c {
            let scale = gamma[ci] / (running_var[ci] + BN_EPS).sqrt();
            let off = (ni * c + ci) * plane;
            for i in off..off + plane {
                out.data_mut()[i] = (x.data()[i] - running_mean[ci]) * scale + beta[ci];
            }
        }
    }
    Ok(out)
}

/// Gradients of [`batchnorm_train`]: `(grad_x, grad_gamma, grad_beta)`.
pub fn batchnorm_train_backward(
    grad: &Tensor,
    cache: &BatchNormCache,
    gamma: &[f32],
) -> Result<(Tensor, Vec<f32>, Vec<f32>)> {
    same_shape("batchnorm_backward", grad, &cache.xhat)?;
    let [n, c, h, w] = grad.shape();
    let plane = h * w;
    let m = (n * plane) as f32;
    let mut ggamma = vec![0.0f32; c];
    let mut gbeta = vec![0.0f32; c];
    for ni in 0..n {
        for ci in 0..c {
            let off = (ni * c + ci) * plane;
            for i in off..off + plane {
                gbeta[ci] += grad.data()[i];
                ggamma[ci] += grad.data()[i] * cache.xhat.data()[i];
            }
        }
    }
    let mut gx = Tensor::zeros(grad.shape());
    for ni in 0..n {
        for ci in 0..c {
            let k = gamma[ci] * cache.inv_std[ci] / m;
            let off = (ni * c + ci) * plane;
            for i in off..off + plane {
                gx.data_mut()[i] =
                    k * (m * grad.data()[i] - gbeta[ci] - cache.xhat.data()[i] * ggamma[ci]);
            }
        }
    }
    Ok((gx, ggamma, gbeta))
}

/// Gradient of [`batchnorm_eval`] with respect to its input (a per-channel affine map).
pub fn batchnorm_eval_backward(grad: &Tensor, gamma: &[f32], running_var: &[f32]) -> Tensor {
    let [n, c, h, w] = grad.shape();
    let plane = h * w;
    let mut gx = grad.clone();
    for ni in 0..n {
        for ci in 0..c {
            let scale = gamma[ci] / (running_var[ci] + BN_EPS).sqrt();
            let off = (ni * c + ci) * plane;
            gx.data_mut()[off..off + plane].iter_mut().for_each(|g| *g *= scale);
        }
    }
    gx
}

pub fn global_avg_pool(x: &Tensor) -> Tensor {
    let [n, c, h, w] = x.shape();
    let plane = h * w;
    let data = x
        .data()
        .chunks_exact(plane)
        .map(|p| p.iter().sum::<f32>() / plane as f32)
        .collect();
    Tensor::new([n, c, 1, 1], data).expect("pooled shape")
}

pub fn global_avg_pool_backward(grad: &Tensor, in_shape: [usize; 4]) -> Tensor {
    let plane = in_shape[2] * in_shape[3];
    let mut gx = Tensor::zeros(in_shape);
    for (dst, &g) in gx.data_mut().chunks_exact_mut(plane).zip(grad.data()) {
        dst.fill(g / plane as f32);
    }
    gx
}

fn check_bn(c: usize, gamma: &[f32], beta: &[f32]) -> Result<()> {
    if gamma.len() != c || beta.len() != c {
        return Err(Error::invalid(format!(
            "batchnorm: {} channels but {} / {} affine parameters",
            c,
            gamma.len(),
            beta.len()
        )));
    }
    Ok(())
}

fn same_shape(op: &str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::invalid(format!(
            "{op}: shape {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_values() {
        let x = Tensor::new([1, 1, 1, 3], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
        let g = Tensor::full([1, 1, 1, 3], 5.0);
        assert_eq!(relu_backward(&relu(&x), &g).unwrap().data(), &[0.0, 0.0, 5.0]);
    }

    #[test]
    fn maxpool_routes_to_winner() {
        let x = Tensor::new([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (out, idx) = maxpool2x2(&x).unwrap();
        assert_eq!(out.data(), &[4.0]);
        let gx = maxpool2x2_backward(&Tensor::full([1, 1, 1, 1], 1.5), &idx, x.shape()).unwrap();
        assert_eq!(gx.data(), &[0.0, 0.0, 0.0, 1.5]);
    }

    #[test]
    fn maxpool_rejects_odd_extent() {
        assert!(maxpool2x2(&Tensor::zeros([1, 1, 3, 4])).is_err());
        assert!(maxpool2x2(&Tensor::zeros([1, 1, 4, 5])).is_err());
    }

    #[test]
    fn linear_known_values() {
        let x = Tensor::new([2, 3, 1, 1], vec![1.0, 2.0, 3.0, -1.0, 0.0, 1.0]).unwrap();
        let w = Tensor::new([2, 3, 1, 1], vec![1.0, 0.0, -1.0, 0.5, 0.5, 0.5]).unwrap();
        let out = linear(&x, &w, &[0.0, 1.0]).unwrap();
        assert_eq!(out.data(), &[-2.0, 4.0, -2.0, 1.0]);
        assert!(linear(&x, &w, &[0.0]).is_err());
    }

    #[test]
    fn batchnorm_train_normalises_batch() {
        let x = Tensor::from_fn([4, 2, 3, 3], |[n, c, y, xx]| (n * 7 + c * 3 + y * 2 + xx) as f32 * 0.3);
        let (out, _, mean, _) = batchnorm_train(&x, &[1.0, 1.0], &[0.0, 0.0]).unwrap();
        assert!(mean.iter().all(|m| m.is_finite()));
        for c in 0..2 {
            let vals: Vec<f64> = (0..4)
                .flat_map(|n| (0..9).map(move |i| (n, i)))
                .map(|(n, i)| out.at(n, c, i / 3, i % 3) as f64)
                .collect();
            let mu = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(mu.abs() < 1e-5);
            assert!((var - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn global_pool_mean() {
        let x = Tensor::from_fn([1, 2, 2, 2], |[_, c, y, xx]| (c * 10 + y * 2 + xx) as f32);
        assert_eq!(global_avg_pool(&x).data(), &[1.5, 11.5]);
        let g = global_avg_pool_backward(&Tensor::full([1, 2, 1, 1], 4.0), x.shape());
        assert!(g.data().iter().all(|&v| v == 1.0));
    }
}
