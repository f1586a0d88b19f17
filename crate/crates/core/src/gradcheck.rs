//! Central finite-difference gradient checks for the differentiable kernels.
//!
//! Each check builds a random small problem, contracts the kernel output with
//! a fixed random tensor `r` to get the scalar `L = sum(out * r)`, and compares
//! the analytic gradient (backward pass fed with `r`) against
//! `(L(x + h) - L(x - h)) / 2h` for every coordinate.

use crate::error::Result;
use crate::nn::conv::{conv2d, conv2d_backward};
use crate::nn::layers::{batchnorm_train, batchnorm_train_backward, linear, linear_backward, maxpool2x2, maxpool2x2_backward};
use crate::nn::loss::softmax_cross_entropy;
use crate::padding::{apply_pad, pad_backward, sample_padding_spec};
use crate::rng::RngStream;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub op: &'static str,
    /// Which input the gradient is taken with respect to, plus the problem shape.
    pub case: String,
    pub rel_error: f64,
}

/// `||a - n|| / max(||a||, ||n||)`, 0 when both vanish.
pub fn relative_error(analytic: &[f32], numeric: &[f64]) -> f64 {
    let (mut diff, mut na, mut nn) = (0.0f64, 0.0f64, 0.0f64);
    for (&a, &n) in analytic.iter().zip(numeric) {
        diff += (a as f64 - n).powi(2);
        na += (a as f64).powi(2);
        nn += n * n;
    }
    let scale = na.sqrt().max(nn.sqrt());
    if scale == 0.0 {
        0.0
    } else {
        diff.sqrt() / scale
    }
}

/// Central differences of `loss` with respect to every element of `x`.
pub fn numeric_gradient(x: &Tensor, step: f32, mut loss: impl FnMut(&Tensor) -> f64) -> Vec<f64> {
    let mut probe = x.clone();
    (0..x.len())
        .map(|i| {
            let orig = probe.data()[i];
            probe.data_mut()[i] = orig + step;
            let up = loss(&probe);
            probe.data_mut()[i] = orig - step;
            let down = loss(&probe);
            probe.data_mut()[i] = orig;
            (up - down) / (2.0 * step as f64)
        })
        .collect()
}

fn contract(out: &Tensor, r: &Tensor) -> f64 {
    out.data().iter().zip(r.data()).map(|(&a, &b)| a as f64 * b as f64).sum()
}

fn normal(shape: [usize; 4], rng: &mut RngStream) -> Tensor {
    Tensor::from_fn(shape, |_| rng.normal() as f32)
}

fn vector(v: &[f32]) -> Tensor {
    Tensor::new([v.len(), 1, 1, 1], v.to_vec()).expect("length matches")
}

pub fn check_conv2d(rng: &mut RngStream, step: f32) -> Result<Vec<GradCheck>> {
    let k = [1, 3][rng.below(2)];
    let stride = rng.between(1, 2);
    let (n, ci, co) = (rng.between(1, 2), rng.between(1, 3), rng.between(1, 3));
    let (h, w) = (rng.between(k.max(3), 6), rng.between(k.max(3), 6));
    let x = normal([n, ci, h, w], rng);
    let wt = normal([co, ci, k, k], rng);
    let b: Vec<f32> = (0..co).map(|_| rng.normal() as f32).collect();
    let out = conv2d(&x, &wt, &b, stride)?;
    let r = normal(out.shape(), rng);
    let g = conv2d_backward(&x, &wt, &r, stride)?;
    let shape = format!("x{:?} w{:?} stride {stride}", x.shape(), wt.shape());
    let nx = numeric_gradient(&x, step, |t| contract(&conv2d(t, &wt, &b, stride).unwrap(), &r));
    let nw = numeric_gradient(&wt, step, |t| contract(&conv2d(&x, t, &b, stride).unwrap(), &r));
    let nb = numeric_gradient(&vector(&b), step, |t| contract(&conv2d(&x, &wt, t.data(), stride).unwrap(), &r));
    Ok(vec![
        GradCheck { op: "conv2d", case: format!("input {shape}"), rel_error: relative_error(g.grad_x.data(), &nx) },
        GradCheck { op: "conv2d", case: format!("weight {shape}"), rel_error: relative_error(g.grad_w.data(), &nw) },
        GradCheck { op: "conv2d", case: format!("bias {shape}"), rel_error: relative_error(&g.grad_b, &nb) },
    ])
}

pub fn check_linear(rng: &mut RngStream, step: f32) -> Result<Vec<GradCheck>> {
    let (n, c, h, w, o) = (rng.between(1, 3), rng.between(1, 3), rng.between(1, 3), rng.between(1, 3), rng.between(1, 4));
    let x = normal([n, c, h, w], rng);
    let wt = normal([o, c * h * w, 1, 1], rng);
    let b: Vec<f32> = (0..o).map(|_| rng.normal() as f32).collect();
    let out = linear(&x, &wt, &b)?;
    let r = normal(out.shape(), rng);
    let g = linear_backward(&x, &wt, &r)?;
    let shape = format!("x{:?} w{:?}", x.shape(), wt.shape());
    let nx = numeric_gradient(&x, step, |t| contract(&linear(t, &wt, &b).unwrap(), &r));
    let nw = numeric_gradient(&wt, step, |t| contract(&linear(&x, t, &b).unwrap(), &r));
    let nb = numeric_gradient(&vector(&b), step, |t| contract(&linear(&x, &wt, t.data()).unwrap(), &r));
    Ok(vec![
        GradCheck { op: "linear", case: format!("input {shape}"), rel_error: relative_error(g.grad_x.data(), &nx) },
        GradCheck { op: "linear", case: format!("weight {shape}"), rel_error: relative_error(g.grad_w.data(), &nw) },
        GradCheck { op: "linear", case: format!("bias {shape}"), rel_error: relative_error(&g.grad_b, &nb) },
    ])
}

pub fn check_maxpool(rng: &mut RngStream, step: f32) -> Result<Vec<GradCheck>> {
    let (n, c, h, w) = (rng.between(1, 2), rng.between(1, 3), 2 * rng.between(1, 3), 2 * rng.between(1, 3));
    let len = n * c * h * w;
    // Distinct values at least 5 steps apart so no perturbation flips a window's maximum.
    let perm = rng.permutation(len);
    let x = Tensor::new([n, c, h, w], perm.iter().map(|&p| p as f32 * 5.0 * step - 1.0).collect())?;
    let (out, argmax) = maxpool2x2(&x)?;
    let r = normal(out.shape(), rng);
    let gx = maxpool2x2_backward(&r, &argmax, x.shape())?;
    let nx = numeric_gradient(&x, step, |t| contract(&maxpool2x2(t).unwrap().0, &r));
    Ok(vec![GradCheck {
        op: "maxpool",
        case: format!("input x{:?}", x.shape()),
        rel_error: relative_error(gx.data(), &nx),
    }])
}

pub fn check_batchnorm(rng: &mut RngStream, step: f32) -> Result<Vec<GradCheck>> {
    let (n, c) = (rng.between(2, 3), rng.between(1, 3));
    let (h, w) = (rng.between(1, 3), rng.between(2, 3));
    let x = normal([n, c, h, w], rng);
    let gamma: Vec<f32> = (0..c).map(|_| 0.5 + rng.uniform() as f32).collect();
    let beta: Vec<f32> = (0..c).map(|_| rng.normal() as f32).collect();
    let (out, cache, _, _) = batchnorm_train(&x, &gamma, &beta)?;
    let r = normal(out.shape(), rng);
    let (gx, gg, gb) = batchnorm_train_backward(&r, &cache, &gamma)?;
    let eval = |t: &Tensor, g: &[f32], b: &[f32]| contract(&batchnorm_train(t, g, b).unwrap().0, &r);
    let shape = format!("x{:?}", x.shape());
    let nx = numeric_gradient(&x, step, |t| eval(t, &gamma, &beta));
    let ng = numeric_gradient(&vector(&gamma), step, |t| eval(&x, t.data(), &beta));
    let nb = numeric_gradient(&vector(&beta), step, |t| eval(&x, &gamma, t.data()));
    Ok(vec![
        GradCheck { op: "batchnorm", case: format!("input {shape}"), rel_error: relative_error(gx.data(), &nx) },
        GradCheck { op: "batchnorm", case: format!("gamma {shape}"), rel_error: relative_error(&gg, &ng) },
        GradCheck { op: "batchnorm", case: format!("beta {shape}"), rel_error: relative_error(&gb, &nb) },
    ])
}

pub fn check_softmax_xent(rng: &mut RngStream, step: f32) -> Result<Vec<GradCheck>> {
    let (n, k) = (rng.between(1, 4), rng.between(2, 6));
    let x = normal([n, k, 1, 1], rng);
    let labels: Vec<usize> = (0..n).map(|_| rng.below(k)).collect();
    let (_, g) = softmax_cross_entropy(&x, &labels)?;
    let nx = numeric_gradient(&x, step, |t| softmax_cross_entropy(t, &labels).unwrap().0 as f64);
    Ok(vec![GradCheck {
        op: "softmax-xent",
        case: format!("logits x{:?}", x.shape()),
        rel_error: relative_error(g.data(), &nx),
    }])
}

pub fn check_apply_pad(rng: &mut RngStream, step: f32) -> Result<Vec<GradCheck>> {
    let (n, c, h, w) = (rng.between(1, 2), rng.between(1, 2), rng.between(2, 5), rng.between(2, 5));
    let spec = sample_padding_spec(rng.between(1, 2), rng)?;
    let x = normal([n, c, h, w], rng);
    let out = apply_pad(&x, spec);
    let r = normal(out.shape(), rng);
    let gx = pad_backward(&r, spec, h, w)?;
    let nx = numeric_gradient(&x, step, |t| contract(&apply_pad(t, spec), &r));
    Ok(vec![GradCheck {
        op: "apply_pad",
        case: format!("input x{:?} spec {spec}", x.shape()),
        rel_error: relative_error(gx.data(), &nx),
    }])
}

pub type CheckFn = fn(&mut RngStream, f32) -> Result<Vec<GradCheck>>;

pub const CHECKS: [(&str, CheckFn); 6] = [
    ("conv2d", check_conv2d),
    ("linear", check_linear),
    ("maxpool", check_maxpool),
    ("batchnorm", check_batchnorm),
    ("softmax-xent", check_softmax_xent),
    ("apply_pad", check_apply_pad),
];

/// Runs `cases` randomized problems per kernel.
pub fn run_suite(seed: u64, cases: usize, step: f32) -> Result<Vec<GradCheck>> {
    let mut out = Vec::new();
    for (name, check) in CHECKS {
        for i in 0..cases {
            let mut rng = RngStream::derive(seed, &format!("gradcheck/{name}"), 0, i as u64);
            out.extend(check(&mut rng, step)?);
        }
    }
    Ok(out)
}
