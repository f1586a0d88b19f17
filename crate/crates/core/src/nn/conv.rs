//! 2-D cross-correlation without padding (padding sites are separate layers).
//!
//! Each sample is unfolded into a column matrix whose rows are ordered
//! (kernel row, kernel col, input channel), so every output accumulates in
//! that fixed order. Samples run in parallel; weight and bias gradients are
//! reduced afterwards in sample order.

use crate::error::{Error, Result};
use crate::exec;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
struct Geometry {
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    k: usize,
    stride: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn new(x: [usize; 4], w: [usize; 4], stride: usize) -> Result<Self> {
        let [n, cin, h, width] = x;
        let [cout, wcin, kh, kw] = w;
        if stride == 0 {
            return Err(Error::invalid("conv2d: stride must be positive"));
        }
        if wcin != cin {
            return Err(Error::invalid(format!(
                "conv2d: weight expects {wcin} input channels, input has {cin}"
            )));
        }
        if kh != kw || kh == 0 {
            return Err(Error::invalid(format!("conv2d: kernel must be square, got {kh}x{kw}")));
        }
        if h < kh || width < kw {
            return Err(Error::invalid(format!(
                "conv2d: {h}x{width} input smaller than {kh}x{kw} kernel"
            )));
        }
        Ok(Self {
            n,
            cin,
            h,
            w: width,
            cout,
            k: kh,
            stride,
            oh: (h - kh) / stride + 1,
            ow: (width - kw) / stride + 1,
        })
    }

    fn kdim(&self) -> usize {
        self.k * self.k * self.cin
    }

    fn positions(&self) -> usize {
        self.oh * self.ow
    }
}

/// Weight `(Cout, Cin, k, k)` reordered to rows of `(kh, kw, ci)`.
fn weight_matrix(w: &Tensor, g: &Geometry) -> Vec<f32> {
    let kd = g.kdim();
    let mut m = vec![0.0; g.cout * kd];
    for co in 0..g.cout {
        for ci in 0..g.cin {
            for kh in 0..g.k {
                for kw in 0..g.k {
                    m[co * kd + (kh * g.k + kw) * g.cin + ci] = w.at(co, ci, kh, kw);
                }
            }
        }
    }
    m
}

fn im2col(x: &[f32], g: &Geometry) -> Vec<f32> {
    let p = g.positions();
    let mut cols = vec![0.0; g.kdim() * p];
    for kh in 0..g.k {
        for kw in 0..g.k {
            for ci in 0..g.cin {
                let row = &mut cols[((kh * g.k + kw) * g.cin + ci) * p..][..p];
                let plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
                for oy in 0..g.oh {
                    let src = &plane[(oy * g.stride + kh) * g.w..];
                    let dst = &mut row[oy * g.ow..(oy + 1) * g.ow];
                    if g.stride == 1 {
                        dst.copy_from_slice(&src[kw..kw + g.ow]);
                    } else {
                        for (ox, d) in dst.iter_mut().enumerate() {
                            *d = src[ox * g.stride + kw];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im(cols: &[f32], g: &Geometry) -> Vec<f32> {
    let p = g.positions();
    let mut x = vec![0.0; g.cin * g.h * g.w];
    for kh in 0..g.k {
        for kw in 0..g.k {
            for ci in 0..g.cin {
                let row = &cols[((kh * g.k + kw) * g.cin + ci) * p..][..p];
                let plane = &mut x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
                for oy in 0..g.oh {
                    let base = (oy * g.stride + kh) * g.w + kw;
                    for ox in 0..g.ow {
                        plane[base + ox * g.stride] += row[oy * g.ow + ox];
                    }
                }
            }
        }
    }
    x
}

#[inline]
fn axpy(y: &mut [f32], a: f32, x: &[f32]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
fn dot(a: &[f32], b: &[f32]) -> f32 {
    // Four partial sums in a fixed pattern; the result is still deterministic.
    let mut acc = [0.0f32; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        for j in 0..4 {
            acc[j] += a[i * 4 + j] * b[i * 4 + j];
        }
    }
    let mut tail = 0.0;
    for i in chunks * 4..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Cross-correlation of `x (N, Cin, H, W)` with `w (Cout, Cin, k, k)` plus bias.
pub fn conv2d(x: &Tensor, w: &Tensor, b: &[f32], stride: usize) -> Result<Tensor> {
    let g = Geometry::new(x.shape(), w.shape(), stride)?;
    if b.len() != g.cout {
        return Err(Error::invalid(format!(
            "conv2d: {} biases for {} filters",
            b.len(),
            g.cout
        )));
    }
    let wm = weight_matrix(w, &g);
    let (kd, p) = (g.kdim(), g.positions());
    let mut out = Tensor::zeros([g.n, g.cout, g.oh, g.ow]);
    exec::for_each_chunk_mut(out.data_mut(), g.cout * p, |ni, dst| {
        let cols = im2col(x.sample(ni), &g);
        for co in 0..g.cout {
            let row = &mut dst[co * p..(co + 1) * p];
            row.fill(b[co]);
            for (kk, &a) in wm[co * kd..(co + 1) * kd].iter().enumerate() {
                if a != 0.0 {
                    axpy(row, a, &cols[kk * p..(kk + 1) * p]);
                }
            }
        }
    });
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct ConvGrads {
    pub grad_x: Tensor,
    pub grad_w: Tensor,
    pub grad_b: Vec<f32>,
}

/// Adjoints of [`conv2d`] with respect to input, weight and bias.
pub fn conv2d_backward(x: &Tensor, w: &Tensor, grad_out: &Tensor, stride: usize) -> Result<ConvGrads> {
    let g = Geometry::new(x.shape(), w.shape(), stride)?;
    if grad_out.shape() != [g.n, g.cout, g.oh, g.ow] {
        return Err(Error::invalid(format!(
            "conv2d_backward: gradient shape {:?}, expected {:?}",
            grad_out.shape(),
            [g.n, g.cout, g.oh, g.ow]
        )));
    }
    let wm = weight_matrix(w, &g);
    let (kd, p) = (g.kdim(), g.positions());

    let per_sample = exec::map_indexed(g.n, |ni| {
        let cols = im2col(x.sample(ni), &g);
        let go = grad_out.sample(ni);
        let mut gw = vec![0.0f32; g.cout * kd];
        let mut gb = vec![0.0f32; g.cout];
        let mut gcols = vec![0.0f32; kd * p];
        for co in 0..g.cout {
            let grow = &go[co * p..(co + 1) * p];
            gb[co] = grow.iter().sum();
            for kk in 0..kd {
                gw[co * kd + kk] = dot(grow, &cols[kk * p..(kk + 1) * p]);
            }
            for (kk, &a) in wm[co * kd..(co + 1) * kd].iter().enumerate() {
                if a != 0.0 {
                    axpy(&mut gcols[kk * p..(kk + 1) * p], a, grow);
                }
            }
        }
        (col2im(&gcols, &g), gw, gb)
    });

    let mut grad_x = Vec::with_capacity(x.len());
    let mut gw_sum = vec![0.0f32; g.cout * kd];
    let mut grad_b = vec![0.0f32; g.cout];
    for (gx, gw, gb) in per_sample {
        grad_x.extend_from_slice(&gx);
        gw_sum.iter_mut().zip(&gw).for_each(|(s, v)| *s += v);
        grad_b.iter_mut().zip(&gb).for_each(|(s, v)| *s += v);
    }

    let mut grad_w = Tensor::zeros(w.shape());
    for co in 0..g.cout {
        for ci in 0..g.cin {
            for kh in 0..g.k {
                for kw in 0..g.k {
                    let i = grad_w.index(co, ci, kh, kw);
                    grad_w.data_mut()[i] = gw_sum[co * kd + (kh * g.k + kw) * g.cin + ci];
                }
            }
        }
    }
    Ok(ConvGrads {
        grad_x: Tensor::new(x.shape(), grad_x)?,
        grad_w,
        grad_b,
    })
}
