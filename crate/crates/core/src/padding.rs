//! Traditional zero-padding and Random Padding.
//!
//! Random Padding of thickness `n` makes `2n` uniform draws over four
//! half-border options. Each option adds one pixel to exactly one of
//! left/right and one of top/bottom, so the padded map always grows by `2n`
//! along each axis, like symmetric padding, but its content lands at a random
//! offset.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tensor::{slice_spatial, Tensor};

/// Whether layers behave stochastically (training) or deterministically.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Train,
    Eval,
}

/// Padding option rows, ordered `(l, r, t, b)`.
pub const PADDING_OPTIONS: [[usize; 4]; 4] = [[1, 0, 1, 0], [1, 0, 0, 1], [0, 1, 1, 0], [0, 1, 0, 1]];

/// Pixels added to the left, right, top and bottom borders.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct PaddingSpec {
    pub l: usize,
    pub r: usize,
    pub t: usize,
    pub b: usize,
}

impl PaddingSpec {
    pub const fn new(l: usize, r: usize, t: usize, b: usize) -> Self {
        Self { l, r, t, b }
    }

    pub const fn symmetric(n: usize) -> Self {
        Self::new(n, n, n, n)
    }

    /// Accumulates the given option-row draws (indices into [`PADDING_OPTIONS`]).
    pub fn from_option_draws(draws: &[usize]) -> Result<Self> {
        let mut spec = PaddingSpec::default();
        for &d in draws {
            let row = PADDING_OPTIONS
                .get(d)
                .ok_or_else(|| Error::invalid(format!("padding option {d} out of range")))?;
            spec.l += row[0];
            spec.r += row[1];
            spec.t += row[2];
            spec.b += row[3];
        }
        Ok(spec)
    }

    pub fn padded_extent(&self, h: usize, w: usize) -> (usize, usize) {
        (h + self.t + self.b, w + self.l + self.r)
    }
}

impl fmt::Display for PaddingSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.l, self.r, self.t, self.b)
    }
}

impl FromStr for PaddingSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').collect();
        if parts.len() != 4 {
            return Err(Error::format(format!("padding spec {s:?}: expected l,r,t,b")));
        }
        let mut v = [0usize; 4];
        for (slot, p) in v.iter_mut().zip(&parts) {
            *slot = p
                .trim()
                .parse()
                .map_err(|_| Error::format(format!("padding spec {s:?}: bad count {p:?}")))?;
        }
        Ok(Self::new(v[0], v[1], v[2], v[3]))
    }
}

/// One uniform pick of a row of [`PADDING_OPTIONS`].
pub fn sample_padding_option(rng: &mut RngStream) -> usize {
    rng.below(PADDING_OPTIONS.len())
}

/// Draws a Random Padding spec of thickness `n`: `2n` independent uniform
/// picks over the four option rows, summed border-wise.
pub fn sample_padding_spec(n: usize, rng: &mut RngStream) -> Result<PaddingSpec> {
    if n == 0 {
        return Err(Error::invalid("random padding thickness must be at least 1"));
    }
    let draws: Vec<usize> = (0..2 * n).map(|_| sample_padding_option(rng)).collect();
    PaddingSpec::from_option_draws(&draws)
}

/// Zero-pads every plane of `x` by `spec`.
pub fn apply_pad(x: &Tensor, spec: PaddingSpec) -> Tensor {
    let [n, c, h, w] = x.shape();
    let (ph, pw) = spec.padded_extent(h, w);
    let mut out = Tensor::zeros([n, c, ph, pw]);
    for (src, dst) in x
        .data()
        .chunks_exact(h * w)
        .zip(out.data_mut().chunks_exact_mut(ph * pw))
    {
        pad_plane(src, dst, w, pw, spec);
    }
    out
}

fn pad_plane(src: &[f32], dst: &mut [f32], w: usize, pw: usize, spec: PaddingSpec) {
    if w == 0 {
        return;
    }
    for (y, row) in src.chunks_exact(w).enumerate() {
        let start = (y + spec.t) * pw + spec.l;
        dst[start..start + w].copy_from_slice(row);
    }
}

/// Symmetric zero-padding of thickness `n` on all four borders.
pub fn traditional_pad(x: &Tensor, n: usize) -> Tensor {
    if n == 0 {
        return x.clone();
    }
    apply_pad(x, PaddingSpec::symmetric(n))
}

/// Adjoint of [`apply_pad`]: keeps the interior window, drops border gradients.
pub fn pad_backward(grad_out: &Tensor, spec: PaddingSpec, in_h: usize, in_w: usize) -> Result<Tensor> {
    let (ph, pw) = spec.padded_extent(in_h, in_w);
    if grad_out.h() != ph || grad_out.w() != pw {
        return Err(Error::invalid(format!(
            "pad_backward: gradient extent {}x{} does not match {}x{} padded by {}",
            grad_out.h(),
            grad_out.w(),
            in_h,
            in_w,
            spec
        )));
    }
    slice_spatial(grad_out, spec.t, spec.l, in_h, in_w)
}

/// Pads each batch entry with its own spec. All specs must produce the same
/// padded extent so the batch stays rectangular.
pub fn apply_pad_per_sample(x: &Tensor, specs: &[PaddingSpec]) -> Result<Tensor> {
    let [n, c, h, w] = x.shape();
    check_batch_specs(n, specs)?;
    let Some(first) = specs.first() else {
        return Ok(x.clone());
    };
    let (ph, pw) = first.padded_extent(h, w);
    let mut out = Tensor::zeros([n, c, ph, pw]);
    let in_len = c * h * w;
    let out_len = c * ph * pw;
    for (i, spec) in specs.iter().enumerate() {
        if spec.padded_extent(h, w) != (ph, pw) {
            return Err(Error::invalid(format!(
                "per-sample padding specs disagree on extent: {first} vs {spec}"
            )));
        }
        let src = &x.data()[i * in_len..(i + 1) * in_len];
        let dst = &mut out.data_mut()[i * out_len..(i + 1) * out_len];
        for (sp, dp) in src.chunks_exact(h * w).zip(dst.chunks_exact_mut(ph * pw)) {
            pad_plane(sp, dp, w, pw, *spec);
        }
    }
    Ok(out)
}

/// Adjoint of [`apply_pad_per_sample`].
pub fn pad_backward_per_sample(
    grad_out: &Tensor,
    specs: &[PaddingSpec],
    in_h: usize,
    in_w: usize,
) -> Result<Tensor> {
    let [n, c, gh, gw] = grad_out.shape();
    check_batch_specs(n, specs)?;
    let mut out = Tensor::zeros([n, c, in_h, in_w]);
    let out_len = c * in_h * in_w;
    for (i, spec) in specs.iter().enumerate() {
        if spec.padded_extent(in_h, in_w) != (gh, gw) {
            return Err(Error::invalid(format!(
                "pad_backward: gradient extent {gh}x{gw} does not match {in_h}x{in_w} padded by {spec}"
            )));
        }
        let g = slice_spatial(&grad_out.sample_tensor(i), spec.t, spec.l, in_h, in_w)?;
        out.data_mut()[i * out_len..(i + 1) * out_len].copy_from_slice(g.data());
    }
    Ok(out)
}

fn check_batch_specs(n: usize, specs: &[PaddingSpec]) -> Result<()> {
    if specs.len() != n {
        return Err(Error::invalid(format!(
            "{} padding specs for a batch of {n}",
            specs.len()
        )));
    }
    Ok(())
}

/// Random Padding in train mode, symmetric padding in eval mode.
///
/// In train mode `streams[i]` drives the spec of batch entry `i`. Eval mode
/// never touches the streams and returns `(n, n, n, n)` for every entry.
pub fn pad_for_mode(
    x: &Tensor,
    n: usize,
    mode: Mode,
    streams: &mut [RngStream],
) -> Result<(Tensor, Vec<PaddingSpec>)> {
    if n == 0 {
        return Err(Error::invalid("random padding thickness must be at least 1"));
    }
    match mode {
        Mode::Eval => Ok((traditional_pad(x, n), vec![PaddingSpec::symmetric(n); x.n()])),
        Mode::Train => {
            if streams.len() != x.n() {
                return Err(Error::invalid(format!(
                    "{} random streams for a batch of {}",
                    streams.len(),
                    x.n()
                )));
            }
            let specs = streams
                .iter_mut()
                .map(|s| sample_padding_spec(n, s))
                .collect::<Result<Vec<_>>>()?;
            let out = apply_pad_per_sample(x, &specs)?;
            Ok((out, specs))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(shape: [usize; 4]) -> Tensor {
        Tensor::from_fn(shape, |[n, c, y, x]| 1.0 + (n * 1000 + c * 100 + y * 10 + x) as f32)
    }

    #[test]
    fn option_rows_pick_one_per_axis() {
        for row in PADDING_OPTIONS {
            assert_eq!(row[0] + row[1], 1);
            assert_eq!(row[2] + row[3], 1);
        }
    }

    #[test]
    fn accumulates_draws() {
        // rows (1,0,1,0) then (0,1,0,1)
        assert_eq!(PaddingSpec::from_option_draws(&[0, 3]).unwrap(), PaddingSpec::new(1, 1, 1, 1));
        assert_eq!(PaddingSpec::from_option_draws(&[1, 1]).unwrap(), PaddingSpec::new(2, 0, 0, 2));
        assert!(PaddingSpec::from_option_draws(&[4]).is_err());
    }

    #[test]
    fn zero_thickness_rejected() {
        let mut rng = RngStream::derive(0, "t", 0, 0);
        assert!(sample_padding_spec(0, &mut rng).is_err());
        let x = Tensor::zeros([1, 1, 3, 3]);
        assert!(pad_for_mode(&x, 0, Mode::Eval, &mut []).is_err());
    }

    #[test]
    fn n1_left_double_probability_by_enumeration() {
        // 16 equally likely draw pairs; l = 2 needs both rows from {0, 1}.
        let hits = (0..4)
            .flat_map(|a| (0..4).map(move |b| [a, b]))
            .filter(|d| PaddingSpec::from_option_draws(d).unwrap().l == 2)
            .count();
        assert_eq!(hits, 4);
        assert_eq!(hits as f64 / 16.0, 0.25);
    }

    #[test]
    fn apply_pad_zero_spec_is_identity() {
        let x = sample([2, 3, 4, 5]);
        assert_eq!(apply_pad(&x, PaddingSpec::default()), x);
    }

    #[test]
    fn apply_pad_grows_by_two_per_unit_thickness() {
        let x = sample([1, 1, 7, 7]);
        let mut rng = RngStream::derive(3, "t", 0, 0);
        let spec = sample_padding_spec(1, &mut rng).unwrap();
        let out = apply_pad(&x, spec);
        assert_eq!((out.h(), out.w()), (9, 9));
        assert_eq!(out.sum(), x.sum());
    }

    #[test]
    fn apply_pad_places_interior() {
        let x = Tensor::full([1, 1, 2, 2], 1.0);
        let out = apply_pad(&x, PaddingSpec::new(2, 0, 0, 2));
        #[rustfmt::skip]
        let expected = [
            0.0, 0.0, 1.0, 1.0,
            0.0, 0.0, 1.0, 1.0,
            0.0, 0.0, 0.0, 0.0,
            0.0, 0.0, 0.0, 0.0,
        ];
        assert_eq!(out.data(), &expected);
    }

    #[test]
    fn traditional_pad_border() {
        let x = Tensor::full([1, 1, 4, 4], 2.0);
        assert_eq!(traditional_pad(&x, 0), x);
        let out = traditional_pad(&x, 1);
        assert_eq!(out.shape(), [1, 1, 6, 6]);
        for y in 0..6 {
            for xx in 0..6 {
                let border = y == 0 || y == 5 || xx == 0 || xx == 5;
                assert_eq!(out.at(0, 0, y, xx), if border { 0.0 } else { 2.0 });
            }
        }
    }

    #[test]
    fn pad_backward_discards_border() {
        let spec = PaddingSpec::new(0, 2, 1, 1);
        let g = Tensor::from_fn([1, 1, 5, 5], |[_, _, y, x]| (y * 5 + x) as f32);
        let back = pad_backward(&g, spec, 3, 3).unwrap();
        assert_eq!(back.data(), &[5.0, 6.0, 7.0, 10.0, 11.0, 12.0, 15.0, 16.0, 17.0]);
        assert_eq!(pad_backward(&g, PaddingSpec::default(), 5, 5).unwrap(), g);
        assert!(pad_backward(&g, spec, 4, 3).is_err());
    }

    #[test]
    fn pad_backward_matches_finite_differences() {
        // Padding is linear, so the directional derivative of <g, pad(x)> along
        // e_i is exact and equals the adjoint entry.
        let spec = PaddingSpec::new(2, 0, 1, 1);
        let x = sample([1, 1, 3, 3]);
        let g = Tensor::from_fn([1, 1, 5, 5], |[_, _, y, x]| ((y * 7 + x * 3) % 5) as f32 - 2.0);
        let objective = |x: &Tensor| -> f64 {
            apply_pad(x, spec)
                .data()
                .iter()
                .zip(g.data())
                .map(|(a, b)| (*a as f64) * (*b as f64))
                .sum()
        };
        let analytic = pad_backward(&g, spec, 3, 3).unwrap();
        for i in 0..9 {
            let mut plus = x.clone();
            let mut minus = x.clone();
            plus.data_mut()[i] += 0.5;
            minus.data_mut()[i] -= 0.5;
            let fd = (objective(&plus) - objective(&minus)) / 1.0;
            assert_eq!(fd as f32, analytic.data()[i]);
        }
    }

    #[test]
    fn eval_mode_is_traditional() {
        let x = sample([3, 2, 5, 5]);
        let (out, specs) = pad_for_mode(&x, 2, Mode::Eval, &mut []).unwrap();
        assert_eq!(out, traditional_pad(&x, 2));
        assert!(specs.iter().all(|s| *s == PaddingSpec::symmetric(2)));
    }

    #[test]
    fn train_mode_per_sample_specs() {
        let x = sample([2, 1, 4, 4]);
        let mut streams = vec![RngStream::derive(5, "pad", 0, 0), RngStream::derive(5, "pad", 0, 1)];
        let (out, specs) = pad_for_mode(&x, 1, Mode::Train, &mut streams).unwrap();
        assert_eq!(out.shape(), [2, 1, 6, 6]);
        for s in &specs {
            assert_eq!(s.l + s.r, 2);
            assert_eq!(s.t + s.b, 2);
        }
        for i in 0..2 {
            let back = slice_spatial(&out.sample_tensor(i), specs[i].t, specs[i].l, 4, 4).unwrap();
            assert_eq!(back, x.sample_tensor(i));
        }
    }

    #[test]
    fn train_mode_deterministic_under_seed() {
        let x = sample([4, 1, 3, 3]);
        let run = || {
            let mut streams: Vec<_> = (0..4).map(|i| RngStream::derive(9, "pad", 2, i)).collect();
            pad_for_mode(&x, 2, Mode::Train, &mut streams).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn train_mode_needs_one_stream_per_sample() {
        let x = sample([2, 1, 3, 3]);
        let mut streams = vec![RngStream::derive(0, "pad", 0, 0)];
        assert!(pad_for_mode(&x, 1, Mode::Train, &mut streams).is_err());
    }

    #[test]
    fn spec_text_round_trip() {
        let s = PaddingSpec::new(3, 1, 0, 4);
        assert_eq!(s.to_string(), "3,1,0,4");
        assert_eq!("3,1,0,4".parse::<PaddingSpec>().unwrap(), s);
        assert!("3,1,0".parse::<PaddingSpec>().is_err());
        assert!("a,1,0,1".parse::<PaddingSpec>().is_err());
    }

    proptest! {
        #[test]
        fn sampled_specs_balance_each_axis(n in 1usize..6, seed in any::<u64>()) {
            let mut rng = RngStream::derive(seed, "prop", 0, 0);
            let s = sample_padding_spec(n, &mut rng).unwrap();
            prop_assert_eq!(s.l + s.r, 2 * n);
            prop_assert_eq!(s.t + s.b, 2 * n);
        }

        #[test]
        fn pad_then_slice_round_trips(
            h in 1usize..9, w in 1usize..9, l in 0usize..4, r in 0usize..4, t in 0usize..4, b in 0usize..4,
            seed in any::<u32>(),
        ) {
            let x = Tensor::from_fn([2, 2, h, w], |[n, c, y, xx]| {
                ((seed as usize + n * 31 + c * 17 + y * 5 + xx) % 97) as f32 - 48.5
            });
            let spec = PaddingSpec::new(l, r, t, b);
            let padded = apply_pad(&x, spec);
            prop_assert_eq!(slice_spatial(&padded, t, l, h, w).unwrap(), x.clone());
            prop_assert_eq!(pad_backward(&padded, spec, h, w).unwrap(), x);
        }

        #[test]
        fn apply_pad_is_linear(a in -4i32..4, b in -4i32..4, l in 0usize..3, t in 0usize..3) {
            let x = Tensor::from_fn([1, 2, 3, 4], |[_, c, y, xx]| (c * 12 + y * 4 + xx) as f32);
            let y = Tensor::from_fn([1, 2, 3, 4], |[_, c, y, xx]| (xx as f32) - (c + y) as f32);
            let spec = PaddingSpec::new(l, 2 - l.min(2), t, 1);
            let (a, b) = (a as f32, b as f32);
            let combo = Tensor::new(
                x.shape(),
                x.data().iter().zip(y.data()).map(|(p, q)| a * p + b * q).collect(),
            ).unwrap();
            let lhs = apply_pad(&combo, spec);
            let px = apply_pad(&x, spec);
            let py = apply_pad(&y, spec);
            for ((v, p), q) in lhs.data().iter().zip(px.data()).zip(py.data()) {
                prop_assert_eq!(*v, a * p + b * q);
            }
        }
    }
}
