//! Benchmark loaders (IDX and CIFAR binary), synthetic probe inputs, and the
//! ground-truth position patterns.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tensor::{bilinear_resize, Tensor};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Per-channel normalisation statistics, fitted once on a training split.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalization {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    /// `(N, C, H, W)`, in `[0, 1]` until normalised.
    pub images: Tensor,
    pub labels: Vec<usize>,
    pub class_count: usize,
    /// Set once [`LabeledDataset::normalized`] has been applied.
    pub normalization: Option<Normalization>,
}

impl LabeledDataset {
    pub fn new(images: Tensor, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if labels.len() != images.n() {
            return Err(Error::format(format!(
                "{} labels for {} images",
                labels.len(),
                images.n()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::format(format!("label {bad} >= class count {class_count}")));
        }
        Ok(Self {
            images,
            labels,
            class_count,
            normalization: None,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// `(C, H, W)` of one sample.
    pub fn sample_shape(&self) -> [usize; 3] {
        let [_, c, h, w] = self.images.shape();
        [c, h, w]
    }

    /// The first `n` samples (or all of them if fewer).
    pub fn take(&self, n: usize) -> LabeledDataset {
        let n = n.min(self.len());
        let idx: Vec<usize> = (0..n).collect();
        LabeledDataset {
            images: self.images.gather(&idx),
            labels: self.labels[..n].to_vec(),
            class_count: self.class_count,
            normalization: self.normalization.clone(),
        }
    }

    /// Bilinearly resamples every image to `h x w`.
    pub fn resized(&self, h: usize, w: usize) -> Result<LabeledDataset> {
        Ok(LabeledDataset {
            images: bilinear_resize(&self.images, h, w)?,
            ..self.clone()
        })
    }

    /// Fits per-channel mean and standard deviation over this (training) split.
    pub fn fit_normalization(&self) -> Result<Normalization> {
        let [n, c, h, w] = self.images.shape();
        let plane = h * w;
        let count = (n * plane) as f64;
        let mut mean = Vec::with_capacity(c);
        let mut std = Vec::with_capacity(c);
        for ci in 0..c {
            let mut s = 0.0f64;
            let mut ss = 0.0f64;
            for ni in 0..n {
                let off = (ni * c + ci) * plane;
                for &v in &self.images.data()[off..off + plane] {
                    s += v as f64;
                    ss += (v as f64) * (v as f64);
                }
            }
            let mu = s / count;
            let var = (ss / count - mu * mu).max(0.0);
            if var.sqrt() < 1e-12 {
                return Err(Error::format(format!(
                    "channel {ci} has zero standard deviation; cannot normalise"
                )));
            }
            mean.push(mu as f32);
            std.push(var.sqrt() as f32);
        }
        Ok(Normalization { mean, std })
    }

    /// Applies `(x - mean) / std` per channel and records the statistics.
    pub fn normalized(&self, norm: &Normalization) -> Result<LabeledDataset> {
        let [n, c, h, w] = self.images.shape();
        if norm.mean.len() != c || norm.std.len() != c {
            return Err(Error::invalid(format!(
                "normalisation has {} channels, dataset {c}",
                norm.mean.len()
            )));
        }
        if norm.std.iter().any(|&s| s == 0.0) {
            return Err(Error::format("zero standard deviation in normalisation"));
        }
        let plane = h * w;
        let mut images = self.images.clone();
        for ni in 0..n {
            for ci in 0..c {
                let off = (ni * c + ci) * plane;
                for v in &mut images.data_mut()[off..off + plane] {
                    *v = (*v - norm.mean[ci]) / norm.std[ci];
                }
            }
        }
        Ok(LabeledDataset {
            images,
            labels: self.labels.clone(),
            class_count: self.class_count,
            normalization: Some(norm.clone()),
        })
    }
}

/// Fits statistics on `train` and applies them to both splits.
pub fn normalize(train: &LabeledDataset, test: &LabeledDataset) -> Result<(LabeledDataset, LabeledDataset)> {
    let norm = train.fit_normalization()?;
    Ok((train.normalized(&norm)?, test.normalized(&norm)?))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn be_u32(bytes: &[u8], offset: usize, field: &str, file: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| {
            Error::format(format!(
                "{}: truncated header, missing {field} at byte offset {offset}",
                file.display()
            ))
        })
}

/// Loads a big-endian IDX image/label file pair (MNIST, Fashion-MNIST).
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let ib = read_file(ip)?;
    let lb = read_file(lp)?;
    parse_idx(&ib, &lb, ip, lp)
}

pub fn parse_idx(images: &[u8], labels: &[u8], ip: &Path, lp: &Path) -> Result<LabeledDataset> {
    let magic = be_u32(images, 0, "magic", ip)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::format(format!(
            "{}: image magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}",
            ip.display()
        )));
    }
    let count = be_u32(images, 4, "count", ip)? as usize;
    let rows = be_u32(images, 8, "rows", ip)? as usize;
    let cols = be_u32(images, 12, "cols", ip)? as usize;
    let expected = 16 + count * rows * cols;
    if images.len() != expected {
        return Err(Error::format(format!(
            "{}: pixel data has {} bytes, header promises {count} x {rows} x {cols} ({} bytes)",
            ip.display(),
            images.len().saturating_sub(16),
            expected - 16
        )));
    }

    let lmagic = be_u32(labels, 0, "magic", lp)?;
    if lmagic != IDX_LABELS_MAGIC {
        return Err(Error::format(format!(
            "{}: label magic 0x{lmagic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}",
            lp.display()
        )));
    }
    let lcount = be_u32(labels, 4, "count", lp)? as usize;
    if lcount != count {
        return Err(Error::format(format!(
            "count mismatch: {} holds {count} images, {} holds {lcount} labels",
            ip.display(),
            lp.display()
        )));
    }
    if labels.len() != 8 + lcount {
        return Err(Error::format(format!(
            "{}: label data has {} bytes, header promises {lcount}",
            lp.display(),
            labels.len().saturating_sub(8)
        )));
    }
    let pixels = images[16..].iter().map(|&b| b as f32 / 255.0).collect();
    let labels: Vec<usize> = labels[8..].iter().map(|&b| b as usize).collect();
    let class_count = labels.iter().max().map_or(0, |m| m + 1).max(10);
    LabeledDataset::new(Tensor::new([count, 1, rows, cols], pixels)?, labels, class_count)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CifarVariant {
    C10,
    C100,
}

impl CifarVariant {
    pub fn record_len(self) -> usize {
        match self {
            CifarVariant::C10 => 1 + 3072,
            CifarVariant::C100 => 2 + 3072,
        }
    }

    pub fn class_count(self) -> usize {
        match self {
            CifarVariant::C10 => 10,
            CifarVariant::C100 => 100,
        }
    }
}

/// Parses one CIFAR binary batch. CIFAR-100 keeps the fine label.
pub fn parse_cifar(bytes: &[u8], variant: CifarVariant, file: &Path) -> Result<LabeledDataset> {
    let rec = variant.record_len();
    if bytes.len() % rec != 0 {
        return Err(Error::format(format!(
            "{}: {} bytes is not a multiple of the {rec}-byte record size",
            file.display(),
            bytes.len()
        )));
    }
    let n = bytes.len() / rec;
    let label_bytes = rec - 3072;
    let mut pixels = Vec::with_capacity(n * 3072);
    let mut labels = Vec::with_capacity(n);
    for r in bytes.chunks_exact(rec) {
        labels.push(r[label_bytes - 1] as usize);
        pixels.extend(r[label_bytes..].iter().map(|&b| b as f32 / 255.0));
    }
    LabeledDataset::new(Tensor::new([n, 3, 32, 32], pixels)?, labels, variant.class_count())
}

pub fn load_cifar_file(path: impl AsRef<Path>, variant: CifarVariant) -> Result<LabeledDataset> {
    let path = path.as_ref();
    parse_cifar(&read_file(path)?, variant, path)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Loads a split from the standard binary distribution directory
/// (`data_batch_{1..5}.bin` / `test_batch.bin`, or `train.bin` / `test.bin`).
pub fn load_cifar(dir: impl AsRef<Path>, variant: CifarVariant, split: Split) -> Result<LabeledDataset> {
    let dir = dir.as_ref();
    let files: Vec<String> = match (variant, split) {
        (CifarVariant::C10, Split::Train) => (1..=5).map(|i| format!("data_batch_{i}.bin")).collect(),
        (CifarVariant::C10, Split::Test) => vec!["test_batch.bin".into()],
        (CifarVariant::C100, Split::Train) => vec!["train.bin".into()],
        (CifarVariant::C100, Split::Test) => vec!["test.bin".into()],
    };
    let parts = files
        .iter()
        .map(|f| load_cifar_file(dir.join(f), variant))
        .collect::<Result<Vec<_>>>()?;
    let images = Tensor::stack(&parts.iter().map(|p| p.images.clone()).collect::<Vec<_>>())?;
    let labels = parts.iter().flat_map(|p| p.labels.iter().copied()).collect();
    LabeledDataset::new(images, labels, variant.class_count())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum InputKind {
    Natural,
    Black,
    White,
    Noise,
}

impl InputKind {
    pub const ALL: [InputKind; 4] = [InputKind::Natural, InputKind::Black, InputKind::White, InputKind::Noise];
}

impl fmt::Display for InputKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InputKind::Natural => "natural",
            InputKind::Black => "black",
            InputKind::White => "white",
            InputKind::Noise => "noise",
        })
    }
}

impl FromStr for InputKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "natural" => Ok(InputKind::Natural),
            "black" => Ok(InputKind::Black),
            "white" => Ok(InputKind::White),
            "noise" => Ok(InputKind::Noise),
            other => Err(Error::invalid(format!("unknown input kind {other:?}"))),
        }
    }
}

/// Synthetic probe input in `[0, 1]`: all zeros, all ones, or standard
/// Gaussian noise clipped to `[-3, 3]` and mapped affinely onto `[0, 1]`.
pub fn make_synthetic(kind: InputKind, shape: [usize; 4], rng: Option<&mut RngStream>) -> Result<Tensor> {
    match kind {
        InputKind::Black => Ok(Tensor::zeros(shape)),
        InputKind::White => Ok(Tensor::full(shape, 1.0)),
        InputKind::Noise => {
            let rng = rng.ok_or_else(|| Error::invalid("noise input needs a random stream"))?;
            Ok(Tensor::from_fn(shape, |_| ((rng.normal().clamp(-3.0, 3.0) + 3.0) / 6.0) as f32))
        }
        InputKind::Natural => Err(Error::invalid("natural inputs come from a dataset, not a generator")),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PatternKind {
    /// Horizontal gradient: ramps left to right.
    Hg,
    /// Vertical gradient: ramps top to bottom.
    Vg,
    /// Centred 2-D Gaussian.
    G,
    /// Horizontal stripes.
    Hs,
    /// Vertical stripes.
    Vs,
}

impl PatternKind {
    pub const ALL: [PatternKind; 5] = [PatternKind::Hg, PatternKind::Vg, PatternKind::G, PatternKind::Hs, PatternKind::Vs];
}

impl fmt::Display for PatternKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PatternKind::Hg => "HG",
            PatternKind::Vg => "VG",
            PatternKind::G => "G",
            PatternKind::Hs => "HS",
            PatternKind::Vs => "VS",
        })
    }
}

impl FromStr for PatternKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "HG" | "H" => Ok(PatternKind::Hg),
            "VG" | "V" => Ok(PatternKind::Vg),
            "G" => Ok(PatternKind::G),
            "HS" => Ok(PatternKind::Hs),
            "VS" => Ok(PatternKind::Vs),
            _ => Err(Error::invalid(format!("unknown pattern {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroundTruthPattern {
    pub kind: PatternKind,
    /// Gaussian width; `None` means a quarter of the map width.
    pub sigma: Option<f64>,
    /// Stripe period in pixels (half on, half off).
    pub period: usize,
}

impl GroundTruthPattern {
    pub fn new(kind: PatternKind) -> Self {
        Self {
            kind,
            sigma: None,
            period: 8,
        }
    }
}

/// Generates the `h x w` position map for `p`, values in `[0, 1]`.
pub fn make_gt_pattern(p: &GroundTruthPattern, h: usize, w: usize) -> Result<Tensor> {
    if h == 0 || w == 0 {
        return Err(Error::invalid("pattern extent must be positive"));
    }
    match p.kind {
        PatternKind::Hg if w < 2 => return Err(Error::invalid("HG pattern needs width >= 2")),
        PatternKind::Vg if h < 2 => return Err(Error::invalid("VG pattern needs height >= 2")),
        PatternKind::G if h < 2 || w < 2 => return Err(Error::invalid("G pattern needs extents >= 2")),
        PatternKind::Hs | PatternKind::Vs if p.period < 2 => {
            return Err(Error::invalid("stripe period must be at least 2"))
        }
        _ => {}
    }
    let half = p.period / 2;
    let sigma = p.sigma.unwrap_or(w as f64 / 4.0);
    let (cx, cy) = ((w - 1) as f64 / 2.0, (h - 1) as f64 / 2.0);
    Ok(Tensor::from_fn([1, 1, h, w], |[_, _, y, x]| match p.kind {
        PatternKind::Hg => x as f32 / (w - 1) as f32,
        PatternKind::Vg => y as f32 / (h - 1) as f32,
        PatternKind::G => {
            let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
            (-d2 / (2.0 * sigma * sigma)).exp() as f32
        }
        PatternKind::Hs => ((y % p.period) < half) as u8 as f32,
        PatternKind::Vs => ((x % p.period) < half) as u8 as f32,
    }))
}
