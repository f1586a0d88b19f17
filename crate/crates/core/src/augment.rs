//! Stochastic input augmentations: random crop, rotation, flip and erasing.
//!
//! Every function works on a single-sample tensor `(1, C, H, W)` and draws
//! only from the stream it is given.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tensor::Tensor;

pub const CROP_PAD: usize = 4;
pub const FLIP_P: f64 = 0.5;
pub const ROTATION_MAX_DEG: f64 = 30.0;
pub const ERASE_P: f64 = 0.5;
pub const ERASE_AREA: (f64, f64) = (0.02, 0.4);
pub const ERASE_ASPECT: (f64, f64) = (0.3, 3.33);
pub const ERASE_ATTEMPTS: usize = 100;

fn check_single(img: &Tensor) -> Result<()> {
    if img.n() != 1 {
        return Err(Error::invalid(format!("augmentations take one sample, got batch of {}", img.n())));
    }
    Ok(())
}

/// The window at offset `(oy, ox)` of the image zero-padded by `pad`.
pub fn crop_at(img: &Tensor, pad: usize, oy: usize, ox: usize) -> Result<Tensor> {
    check_single(img)?;
    if oy > 2 * pad || ox > 2 * pad {
        return Err(Error::invalid(format!("crop offset ({oy},{ox}) outside 0..={}", 2 * pad)));
    }
    let [_, c, h, w] = img.shape();
    Ok(Tensor::from_fn([1, c, h, w], |[_, ci, y, x]| {
        let (sy, sx) = ((y + oy) as isize - pad as isize, (x + ox) as isize - pad as isize);
        if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
            0.0
        } else {
            img.at(0, ci, sy as usize, sx as usize)
        }
    }))
}

pub fn random_crop(img: &Tensor, pad: usize, rng: &mut RngStream) -> Result<Tensor> {
    let oy = rng.below(2 * pad + 1);
    let ox = rng.below(2 * pad + 1);
    crop_at(img, pad, oy, ox)
}

/// Reverses the width axis.
pub fn flip_horizontal(img: &Tensor) -> Tensor {
    let [n, c, h, w] = img.shape();
    Tensor::from_fn([n, c, h, w], |[ni, ci, y, x]| img.at(ni, ci, y, w - 1 - x))
}

pub fn random_flip(img: &Tensor, p: f64, rng: &mut RngStream) -> Result<Tensor> {
    check_single(img)?;
    Ok(if rng.bernoulli(p) { flip_horizontal(img) } else { img.clone() })
}

/// Rotates about the image centre by `degrees` with nearest-neighbour
/// sampling; source pixels outside the image read as zero.
pub fn rotate(img: &Tensor, degrees: f64) -> Result<Tensor> {
    check_single(img)?;
    let [_, c, h, w] = img.shape();
    let (sin, cos) = degrees.to_radians().sin_cos();
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    Ok(Tensor::from_fn([1, c, h, w], |[_, ci, y, x]| {
        let (du, dv) = (x as f64 - cx, y as f64 - cy);
        let sx = (cos * du - sin * dv + cx).round();
        let sy = (sin * du + cos * dv + cy).round();
        if sx < 0.0 || sy < 0.0 || sx >= w as f64 || sy >= h as f64 {
            0.0
        } else {
            img.at(0, ci, sy as usize, sx as usize)
        }
    }))
}

pub fn random_rotation(img: &Tensor, max_deg: f64, rng: &mut RngStream) -> Result<Tensor> {
    let angle = rng.uniform_in(-max_deg, max_deg);
    rotate(img, angle)
}

/// An erased rectangle, in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Rect {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErasingParams {
    pub p: f64,
    pub area: (f64, f64),
    pub aspect: (f64, f64),
    pub attempts: usize,
    /// Per-channel `(lo, hi)` of the fill noise; one entry is broadcast.
    pub fill_range: Vec<(f32, f32)>,
}

impl Default for ErasingParams {
    fn default() -> Self {
        Self {
            p: ERASE_P,
            area: ERASE_AREA,
            aspect: ERASE_ASPECT,
            attempts: ERASE_ATTEMPTS,
            fill_range: vec![(0.0, 1.0)],
        }
    }
}

/// Rejection-samples a rectangle; `None` once the attempts run out.
pub fn sample_erase_rect(h: usize, w: usize, params: &ErasingParams, rng: &mut RngStream) -> Option<Rect> {
    let area = (h * w) as f64;
    let (la, lb) = (params.aspect.0.ln(), params.aspect.1.ln());
    for _ in 0..params.attempts {
        let target = rng.uniform_in(params.area.0, params.area.1) * area;
        let ratio = rng.uniform_in(la, lb).exp();
        let eh = (target * ratio).sqrt().round() as usize;
        let ew = (target / ratio).sqrt().round() as usize;
        if eh >= 1 && ew >= 1 && eh < h && ew < w {
            let top = rng.below(h - eh + 1);
            let left = rng.below(w - ew + 1);
            return Some(Rect {
                top,
                left,
                height: eh,
                width: ew,
            });
        }
    }
    None
}

/// Returns the augmented image and the erased rectangle, if any.
pub fn random_erasing(img: &Tensor, params: &ErasingParams, rng: &mut RngStream) -> Result<(Tensor, Option<Rect>)> {
    check_single(img)?;
    if !rng.bernoulli(params.p) {
        return Ok((img.clone(), None));
    }
    let [_, c, h, w] = img.shape();
    let Some(rect) = sample_erase_rect(h, w, params, rng) else {
        return Ok((img.clone(), None));
    };
    if params.fill_range.is_empty() || (params.fill_range.len() != 1 && params.fill_range.len() != c) {
        return Err(Error::invalid(format!(
            "erasing fill range has {} entries for {c} channels",
            params.fill_range.len()
        )));
    }
    let mut out = img.clone();
    for ci in 0..c {
        let (lo, hi) = params.fill_range[ci.min(params.fill_range.len() - 1)];
        for y in rect.top..rect.top + rect.height {
            for x in rect.left..rect.left + rect.width {
                let i = out.index(0, ci, y, x);
                out.data_mut()[i] = rng.uniform_in(lo as f64, hi as f64) as f32;
            }
        }
    }
    Ok((out, Some(rect)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AugmentKind {
    Rc,
    Rr,
    Rf,
    Re,
}

impl AugmentKind {
    pub fn tag(self) -> &'static str {
        match self {
            AugmentKind::Rc => "rc",
            AugmentKind::Rr => "rr",
            AugmentKind::Rf => "rf",
            AugmentKind::Re => "re",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentPipeline {
    kinds: Vec<AugmentKind>,
    pub crop_pad: usize,
    pub max_deg: f64,
    pub flip_p: f64,
    pub erasing: ErasingParams,
    pub stream_tag: String,
}

impl Default for AugmentPipeline {
    fn default() -> Self {
        Self::new(&[])
    }
}

impl AugmentPipeline {
    /// Builds a pipeline; order is always crop, rotation, flip, erasing.
    pub fn new(kinds: &[AugmentKind]) -> Self {
        let mut kinds = kinds.to_vec();
        kinds.sort();
        kinds.dedup();
        Self {
            kinds,
            crop_pad: CROP_PAD,
            max_deg: ROTATION_MAX_DEG,
            flip_p: FLIP_P,
            erasing: ErasingParams::default(),
            stream_tag: "augment".into(),
        }
    }

    pub fn kinds(&self) -> &[AugmentKind] {
        &self.kinds
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    /// Sets the erasing fill range from normalisation statistics so noise
    /// covers the image of `[0, 1]` under `(x - mean) / std`.
    pub fn with_normalized_fill(mut self, mean: &[f32], std: &[f32]) -> Self {
        self.erasing.fill_range = mean.iter().zip(std).map(|(m, s)| (-m / s, (1.0 - m) / s)).collect();
        self
    }

    /// The stream for one sample of one epoch.
    pub fn stream(&self, seed: u64, epoch: u64, sample_index: u64) -> RngStream {
        RngStream::derive(seed, &self.stream_tag, epoch, sample_index)
    }

    pub fn apply(&self, img: &Tensor, rng: &mut RngStream) -> Result<Tensor> {
        check_single(img)?;
        let mut out = img.clone();
        for kind in &self.kinds {
            out = match kind {
                AugmentKind::Rc => random_crop(&out, self.crop_pad, rng)?,
                AugmentKind::Rr => random_rotation(&out, self.max_deg, rng)?,
                AugmentKind::Rf => random_flip(&out, self.flip_p, rng)?,
                AugmentKind::Re => random_erasing(&out, &self.erasing, rng)?.0,
            };
        }
        Ok(out)
    }

    /// Augments every sample of a batch with its own `(seed, epoch, id)` stream.
    pub fn apply_batch(&self, batch: &Tensor, seed: u64, epoch: u64, sample_ids: &[u64]) -> Result<Tensor> {
        if sample_ids.len() != batch.n() {
            return Err(Error::invalid("one sample id per batch entry required"));
        }
        if self.is_empty() {
            return Ok(batch.clone());
        }
        let parts = crate::exec::map_indexed(batch.n(), |i| {
            self.apply(&batch.sample_tensor(i), &mut self.stream(seed, epoch, sample_ids[i]))
        });
        Tensor::stack(&parts.into_iter().collect::<Result<Vec<_>>>()?)
    }
}

impl fmt::Display for AugmentPipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.kinds.is_empty() {
            return f.write_str("none");
        }
        let tags: Vec<&str> = self.kinds.iter().map(|k| k.tag()).collect();
        f.write_str(&tags.join(","))
    }
}

impl FromStr for AugmentPipeline {
    type Err = Error;

    /// Comma-separated lowercase tags; `none` or an empty string disables augmentation.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s == "none" {
            return Ok(Self::new(&[]));
        }
        let kinds = s
            .split(',')
            .map(|t| match t.trim() {
                "rc" => Ok(AugmentKind::Rc),
                "rr" => Ok(AugmentKind::Rr),
                "rf" => Ok(AugmentKind::Rf),
                "re" => Ok(AugmentKind::Re),
                other => Err(Error::invalid(format!(
                    "unknown augmentation tag {other:?} (expected rc, rr, rf, re)"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(&kinds))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(c: usize, h: usize, w: usize) -> Tensor {
        Tensor::from_fn([1, c, h, w], |[_, ci, y, x]| (ci * 1000 + y * w + x + 1) as f32)
    }

    #[test]
    fn centre_crop_is_identity() {
        let img = ramp(2, 8, 8);
        assert_eq!(crop_at(&img, 4, 4, 4).unwrap(), img);
    }

    #[test]
    fn corner_crop_has_zero_border() {
        let img = ramp(1, 8, 8);
        let out = crop_at(&img, 4, 0, 0).unwrap();
        for y in 0..8 {
            for x in 0..8 {
                let v = out.at(0, 0, y, x);
                if y < 4 || x < 4 {
                    assert_eq!(v, 0.0);
                } else {
                    assert_eq!(v, img.at(0, 0, y - 4, x - 4));
                }
            }
        }
    }

    #[test]
    fn flip_maps_columns_and_is_involution() {
        let img = ramp(1, 3, 5);
        let f = flip_horizontal(&img);
        for x in 0..5 {
            assert_eq!(f.at(0, 0, 1, x), img.at(0, 0, 1, 4 - x));
        }
        assert_eq!(flip_horizontal(&f), img);
    }

    #[test]
    fn flip_frequency() {
        let img = ramp(1, 2, 2);
        let flips = (0..10_000)
            .filter(|&i| {
                let mut r = RngStream::derive(5, "flip", 0, i);
                random_flip(&img, 0.5, &mut r).unwrap() != img
            })
            .count();
        assert!((flips as f64 / 10_000.0 - 0.5).abs() < 0.02, "{flips}");
    }

    #[test]
    fn zero_rotation_is_identity() {
        let img = ramp(2, 7, 7);
        assert_eq!(rotate(&img, 0.0).unwrap(), img);
    }

    #[test]
    fn quarter_turn_permutes_pixels() {
        for w in [4, 5, 8] {
            let img = ramp(1, w, w);
            let out = rotate(&img, 90.0).unwrap();
            for y in 0..w {
                for x in 0..w {
                    assert_eq!(out.at(0, 0, w - 1 - x, y), img.at(0, 0, y, x), "w={w} ({x},{y})");
                }
            }
        }
    }

    #[test]
    fn rotation_never_gains_mass() {
        let img = ramp(1, 12, 12);
        for i in 0..50 {
            let mut r = RngStream::derive(1, "rot", 0, i);
            let out = random_rotation(&img, 30.0, &mut r).unwrap();
            assert!(out.sum() <= img.sum() + 1e-3);
        }
    }

    #[test]
    fn erasing_rect_inside_and_area_in_range() {
        let params = ErasingParams::default();
        let (mut n, mut total) = (0usize, 0.0f64);
        for i in 0..10_000 {
            let mut r = RngStream::derive(2, "erase", 0, i);
            let img = Tensor::zeros([1, 1, 32, 32]);
            let (out, rect) = random_erasing(&img, &params, &mut r).unwrap();
            match rect {
                None => assert_eq!(out, img),
                Some(rect) => {
                    assert!(rect.top + rect.height <= 32 && rect.left + rect.width <= 32);
                    n += 1;
                    total += (rect.height * rect.width) as f64 / 1024.0;
                }
            }
        }
        let mean = total / n as f64;
        assert!((0.02..=0.4).contains(&mean), "{mean}");
        assert!((n as f64 / 10_000.0 - 0.5).abs() < 0.02);
    }

    #[test]
    fn erasing_fill_within_range() {
        let params = ErasingParams {
            p: 1.0,
            fill_range: vec![(-2.0, -1.0)],
            ..ErasingParams::default()
        };
        let mut r = RngStream::derive(3, "erase", 0, 0);
        let (out, rect) = random_erasing(&Tensor::full([1, 1, 16, 16], 5.0), &params, &mut r).unwrap();
        let rect = rect.unwrap();
        let erased = out.data().iter().filter(|&&v| v != 5.0).count();
        assert_eq!(erased, rect.height * rect.width);
        assert!(out.data().iter().all(|&v| v == 5.0 || (-2.0..-1.0).contains(&v)));
    }

    #[test]
    fn parse_orders_and_rejects_unknown() {
        let p: AugmentPipeline = "re,rc,rf".parse().unwrap();
        assert_eq!(p.kinds(), &[AugmentKind::Rc, AugmentKind::Rf, AugmentKind::Re]);
        assert_eq!(p.to_string(), "rc,rf,re");
        assert!("none".parse::<AugmentPipeline>().unwrap().is_empty());
        assert!(matches!("rc,xx".parse::<AugmentPipeline>(), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn empty_pipeline_is_identity_and_all_preserve_shape() {
        let img = ramp(3, 10, 10);
        let mut r = RngStream::derive(0, "a", 0, 0);
        assert_eq!(AugmentPipeline::default().apply(&img, &mut r).unwrap(), img);
        let full: AugmentPipeline = "rc,rr,rf,re".parse().unwrap();
        for i in 0..20 {
            assert_eq!(full.apply(&img, &mut full.stream(9, 1, i)).unwrap().shape(), img.shape());
        }
    }

    #[test]
    fn batch_matches_per_sample_streams() {
        let batch = Tensor::from_fn([4, 1, 8, 8], |[n, _, y, x]| (n * 64 + y * 8 + x) as f32);
        let p: AugmentPipeline = "rc,rr,rf,re".parse().unwrap();
        let ids = [7, 3, 9, 1];
        let out = p.apply_batch(&batch, 11, 2, &ids).unwrap();
        for (i, &id) in ids.iter().enumerate() {
            let single = p.apply(&batch.sample_tensor(i), &mut p.stream(11, 2, id)).unwrap();
            assert_eq!(out.sample(i), single.data());
        }
        crate::exec::set_sequential(true);
        let seq = p.apply_batch(&batch, 11, 2, &ids).unwrap();
        crate::exec::set_sequential(false);
        assert_eq!(seq, out);
    }
}
