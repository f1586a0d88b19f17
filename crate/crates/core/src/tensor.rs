//! Dense rank-4 `f32` arrays in N-C-H-W row-major order.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: [usize; 4],
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: [usize; 4], data: Vec<f32>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if data.len() != len {
            return Err(Error::invalid(format!(
                "tensor data length {} does not match shape {:?} ({} elements)",
                data.len(),
                shape,
                len
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: [usize; 4]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: [usize; 4], value: f32) -> Self {
        Self {
            shape,
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_fn(shape: [usize; 4], mut f: impl FnMut([usize; 4]) -> f32) -> Self {
        let [n, c, h, w] = shape;
        let mut data = Vec::with_capacity(n * c * h * w);
        for ni in 0..n {
            for ci in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        data.push(f([ni, ci, y, x]));
                    }
                }
            }
        }
        Self { shape, data }
    }

    /// Single-sample, single-channel map of extent `h x w`.
    pub fn map(h: usize, w: usize, data: Vec<f32>) -> Result<Self> {
        Self::new([1, 1, h, w], data)
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn n(&self) -> usize {
        self.shape[0]
    }

    pub fn c(&self) -> usize {
        self.shape[1]
    }

    pub fn h(&self) -> usize {
        self.shape[2]
    }

    pub fn w(&self) -> usize {
        self.shape[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Elements per batch entry (`C * H * W`).
    pub fn sample_len(&self) -> usize {
        self.shape[1] * self.shape[2] * self.shape[3]
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        let len = self.sample_len();
        &self.data[i * len..(i + 1) * len]
    }

    pub fn sample_mut(&mut self, i: usize) -> &mut [f32] {
        let len = self.sample_len();
        &mut self.data[i * len..(i + 1) * len]
    }

    /// Copy of batch entry `i` as an `N = 1` tensor.
    pub fn sample_tensor(&self, i: usize) -> Tensor {
        Tensor {
            shape: [1, self.shape[1], self.shape[2], self.shape[3]],
            data: self.sample(i).to_vec(),
        }
    }

    /// Gathers the listed batch entries, in order, into a new tensor.
    pub fn gather(&self, indices: &[usize]) -> Tensor {
        let mut data = Vec::with_capacity(indices.len() * self.sample_len());
        for &i in indices {
            data.extend_from_slice(self.sample(i));
        }
        Tensor {
            shape: [indices.len(), self.shape[1], self.shape[2], self.shape[3]],
            data,
        }
    }

    /// Stacks `N = 1` (or larger) tensors with identical C, H, W along the batch axis.
    pub fn stack(parts: &[Tensor]) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("cannot stack an empty sequence"))?;
        let [_, c, h, w] = first.shape;
        let mut n = 0;
        let mut data = Vec::with_capacity(parts.iter().map(Tensor::len).sum());
        for p in parts {
            if p.shape[1..] != [c, h, w] {
                return Err(Error::invalid(format!(
                    "stack: shape {:?} does not match {:?}",
                    p.shape, first.shape
                )));
            }
            n += p.shape[0];
            data.extend_from_slice(&p.data);
        }
        Ok(Tensor {
            shape: [n, c, h, w],
            data,
        })
    }

    pub fn reshape(self, shape: [usize; 4]) -> Result<Tensor> {
        Tensor::new(shape, self.data)
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.shape[1] + c) * self.shape[2] + y) * self.shape[3] + x
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> f32 {
        self.data[self.index(n, c, y, x)]
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            0.0
        } else {
            self.sum() / self.data.len() as f64
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Bilinear resampling with half-pixel centers and edge clamping.
///
/// Output pixel `i` samples source coordinate `(i + 0.5) * H / out_h - 0.5`,
/// clamped to `[0, H - 1]`; channels are resampled independently.
pub fn bilinear_resize(t: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let [n, c, h, w] = t.shape;
    if h == 0 || w == 0 || out_h == 0 || out_w == 0 {
        return Err(Error::invalid(format!(
            "bilinear_resize: zero extent ({h}x{w} -> {out_h}x{out_w})"
        )));
    }
    if (h, w) == (out_h, out_w) {
        return Ok(t.clone());
    }
    let ys = sample_coords(h, out_h);
    let xs = sample_coords(w, out_w);
    let mut out = Tensor::zeros([n, c, out_h, out_w]);
    let plane_in = h * w;
    let plane_out = out_h * out_w;
    for (src, dst) in t
        .data
        .chunks_exact(plane_in)
        .zip(out.data.chunks_exact_mut(plane_out))
    {
        for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
            let row0 = &src[y0 * w..(y0 + 1) * w];
            let row1 = &src[y1 * w..(y1 + 1) * w];
            for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
                let top = row0[x0] + (row0[x1] - row0[x0]) * fx;
                let bottom = row1[x0] + (row1[x1] - row1[x0]) * fx;
                dst[oy * out_w + ox] = top + (bottom - top) * fy;
            }
        }
    }
    Ok(out)
}

fn sample_coords(src: usize, dst: usize) -> Vec<(usize, usize, f32)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let s = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, (s - i0 as f64) as f32)
        })
        .collect()
}

/// Concatenates along the channel axis in the order given.
pub fn concat_channels(ts: &[Tensor]) -> Result<Tensor> {
    let first = ts
        .first()
        .ok_or_else(|| Error::invalid("concat_channels: empty input"))?;
    let [n, _, h, w] = first.shape;
    for t in ts {
        if t.shape[0] != n || t.shape[2] != h || t.shape[3] != w {
            return Err(Error::invalid(format!(
                "concat_channels: shape {:?} incompatible with {:?}",
                t.shape, first.shape
            )));
        }
    }
    let c_total: usize = ts.iter().map(Tensor::c).sum();
    let mut data = Vec::with_capacity(n * c_total * h * w);
    for ni in 0..n {
        for t in ts {
            data.extend_from_slice(t.sample(ni));
        }
    }
    Ok(Tensor {
        shape: [n, c_total, h, w],
        data,
    })
}

/// Copies the `h x w` window starting at `(top, left)` out of every plane.
pub fn slice_spatial(t: &Tensor, top: usize, left: usize, h: usize, w: usize) -> Result<Tensor> {
    let [n, c, th, tw] = t.shape;
    if top + h > th || left + w > tw {
        return Err(Error::invalid(format!(
            "slice_spatial: window {h}x{w} at ({top},{left}) exceeds {th}x{tw}"
        )));
    }
    let mut data = Vec::with_capacity(n * c * h * w);
    for plane in t.data.chunks_exact(th * tw) {
        for y in top..top + h {
            data.extend_from_slice(&plane[y * tw + left..y * tw + left + w]);
        }
    }
    Ok(Tensor {
        shape: [n, c, h, w],
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(h: usize, w: usize) -> Tensor {
        Tensor::from_fn([1, 1, h, w], |[_, _, y, x]| 0.5 * x as f32 + 0.25 * y as f32)
    }

    #[test]
    fn new_rejects_bad_length() {
        assert!(Tensor::new([1, 2, 3, 4], vec![0.0; 23]).is_err());
    }

    #[test]
    fn resize_identity() {
        let t = Tensor::from_fn([2, 3, 5, 7], |[n, c, y, x]| (n * 100 + c * 10 + y * 3 + x) as f32);
        assert_eq!(bilinear_resize(&t, 5, 7).unwrap(), t);
    }

    #[test]
    fn resize_constant_map() {
        let t = Tensor::full([1, 1, 2, 2], 3.0);
        let out = bilinear_resize(&t, 4, 4).unwrap();
        assert_eq!(out.shape(), [1, 1, 4, 4]);
        assert!(out.data().iter().all(|&v| v == 3.0));
    }

    #[test]
    fn resize_two_by_two_against_half_pixel_oracle() {
        // [[0,1],[2,3]] is the plane v(y, x) = 2y + x, so bilinear sampling at
        // clamped source coordinate (sy, sx) must give 2*sy + sx exactly.
        let t = Tensor::new([1, 1, 2, 2], vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let out = bilinear_resize(&t, 4, 4).unwrap();
        let src = |i: usize| ((i as f64 + 0.5) * 0.5 - 0.5).clamp(0.0, 1.0);
        for y in 0..4 {
            for x in 0..4 {
                let expected = 2.0 * src(y) + src(x);
                assert!((out.at(0, 0, y, x) as f64 - expected).abs() < 1e-6);
            }
        }
        // Frozen corner values from the same oracle.
        assert_eq!(out.at(0, 0, 0, 0), 0.0);
        assert_eq!(out.at(0, 0, 0, 1), 0.25);
        assert_eq!(out.at(0, 0, 1, 1), 0.75);
        assert_eq!(out.at(0, 0, 3, 3), 3.0);
    }

    #[test]
    fn resize_ramp_round_trip_odd_factor() {
        let t = ramp(6, 8);
        for factor in [3, 5] {
            let up = bilinear_resize(&t, 6 * factor, 8 * factor).unwrap();
            let back = bilinear_resize(&up, 6, 8).unwrap();
            for (a, b) in back.data().iter().zip(t.data()) {
                assert!((a - b).abs() < 1e-5, "factor {factor}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn resize_rejects_zero_extent() {
        let t = Tensor::zeros([1, 1, 2, 2]);
        assert!(bilinear_resize(&t, 0, 4).is_err());
        assert!(bilinear_resize(&Tensor::zeros([1, 1, 0, 2]), 2, 2).is_err());
    }

    #[test]
    fn concat_single_is_identity() {
        let t = ramp(4, 4);
        assert_eq!(concat_channels(std::slice::from_ref(&t)).unwrap(), t);
    }

    #[test]
    fn concat_shapes_and_order() {
        let a = Tensor::from_fn([1, 2, 4, 4], |[_, c, y, x]| (c * 16 + y * 4 + x) as f32);
        let b = Tensor::full([1, 3, 4, 4], -1.0);
        let out = concat_channels(&[a.clone(), b]).unwrap();
        assert_eq!(out.shape(), [1, 5, 4, 4]);
        assert_eq!(&out.data()[..16], &a.data()[..16]);
        assert_eq!(&out.data()[16..32], &a.data()[16..32]);
        assert!(out.data()[32..].iter().all(|&v| v == -1.0));
    }

    #[test]
    fn concat_rejects_mismatch() {
        let a = Tensor::zeros([1, 1, 4, 4]);
        let b = Tensor::zeros([1, 1, 4, 5]);
        assert!(concat_channels(&[a.clone(), b]).is_err());
        assert!(concat_channels(&[a, Tensor::zeros([2, 1, 4, 4])]).is_err());
        assert!(concat_channels(&[]).is_err());
    }

    #[test]
    fn concat_multi_batch_interleaves_per_sample() {
        let a = Tensor::from_fn([2, 1, 1, 2], |[n, _, _, x]| (n * 10 + x) as f32);
        let b = Tensor::from_fn([2, 1, 1, 2], |[n, _, _, x]| (100 + n * 10 + x) as f32);
        let out = concat_channels(&[a, b]).unwrap();
        assert_eq!(out.data(), &[0.0, 1.0, 100.0, 101.0, 10.0, 11.0, 110.0, 111.0]);
    }

    #[test]
    fn slice_full_and_zero() {
        let t = ramp(5, 6);
        assert_eq!(slice_spatial(&t, 0, 0, 5, 6).unwrap(), t);
        let z = Tensor::zeros([2, 2, 5, 5]);
        let s = slice_spatial(&z, 1, 2, 3, 3).unwrap();
        assert_eq!(s.shape(), [2, 2, 3, 3]);
        assert!(s.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn slice_window_contents() {
        let t = Tensor::from_fn([1, 1, 4, 4], |[_, _, y, x]| (y * 4 + x) as f32);
        let s = slice_spatial(&t, 1, 2, 2, 2).unwrap();
        assert_eq!(s.data(), &[6.0, 7.0, 10.0, 11.0]);
    }

    #[test]
    fn slice_out_of_bounds() {
        let t = Tensor::zeros([1, 1, 4, 4]);
        assert!(slice_spatial(&t, 2, 0, 3, 4).is_err());
        assert!(slice_spatial(&t, 0, 1, 4, 4).is_err());
    }
}
