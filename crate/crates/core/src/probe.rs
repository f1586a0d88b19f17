//! Position-information probe: frozen encoder features are resized to a
//! common extent, concatenated, and read out by a single unpadded 3x3
//! convolution trained to regress a ground-truth position map.

use crate::datasets::{make_gt_pattern, GroundTruthPattern, InputKind, PatternKind};
use crate::error::{Error, Result};
use crate::nn::{extract_features, mse, Conv, ForwardCtx, Layer, Model, Sgd};
use crate::rng::RngStream;
use crate::tensor::{bilinear_resize, concat_channels, Tensor};

pub const CSV_HEADER: &str = "encoder_id,padding,pattern,input_kind,spc,mae,seed";

/// Images pushed through the encoder at once while assembling features.
const FEATURE_CHUNK: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeConfig {
    /// Common side length the tap activations are resized to.
    pub resize: usize,
    pub epochs: usize,
    pub lr: f32,
    pub momentum: f32,
    pub weight_decay: f32,
    pub batch_size: usize,
    pub pattern: GroundTruthPattern,
    pub input_kind: InputKind,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            resize: 16,
            epochs: 15,
            lr: 0.05,
            momentum: 0.9,
            weight_decay: 1e-4,
            batch_size: 32,
            pattern: GroundTruthPattern::new(PatternKind::Hg),
            input_kind: InputKind::Natural,
            seed: 0,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("probe epochs must be at least 1"));
        }
        if self.resize < 3 {
            return Err(Error::invalid(format!("probe resize {} is smaller than the 3x3 readout", self.resize)));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("probe batch size must be positive"));
        }
        Ok(())
    }

    /// Side length of the readout output.
    pub fn output_extent(&self) -> usize {
        self.resize - 2
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeResult {
    pub encoder_id: String,
    pub padding: String,
    pub pattern: PatternKind,
    pub input_kind: InputKind,
    pub spc: f64,
    pub mae: f64,
    pub seed: u64,
}

impl ProbeResult {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.6},{:.6},{}",
            self.encoder_id, self.padding, self.pattern, self.input_kind, self.spc, self.mae, self.seed
        )
    }
}

/// The readout: one zero-initialised 3x3 convolution, no padding, no nonlinearity.
pub fn build_posenet(in_channels: usize) -> Result<Model> {
    if in_channels == 0 {
        return Err(Error::invalid("posenet needs at least one input channel"));
    }
    Model::from_layers(
        "posenet",
        vec![Layer::Conv(Conv::zeros("readout", in_channels, 1, 3))],
        Vec::new(),
    )
}

/// Encoder taps resized to `resize x resize` and stacked shallow to deep.
/// Without an encoder the images themselves are resized (raw baseline).
pub fn assemble_probe_input(encoder: Option<&mut Model>, images: &Tensor, resize: usize) -> Result<Tensor> {
    let Some(encoder) = encoder else {
        return bilinear_resize(images, resize, resize);
    };
    let mut chunks = Vec::new();
    let n = images.n();
    for start in (0..n).step_by(FEATURE_CHUNK) {
        let idx: Vec<usize> = (start..(start + FEATURE_CHUNK).min(n)).collect();
        let taps = extract_features(encoder, &images.gather(&idx))?;
        let resized = taps
            .iter()
            .map(|t| bilinear_resize(t, resize, resize))
            .collect::<Result<Vec<_>>>()?;
        chunks.push(concat_channels(&resized)?);
    }
    Tensor::stack(&chunks)
}

/// Ground truth at image resolution, resampled to the readout extent.
pub fn probe_target(pattern: &GroundTruthPattern, image_hw: (usize, usize), extent: usize) -> Result<Tensor> {
    let full = make_gt_pattern(pattern, image_hw.0, image_hw.1)?;
    bilinear_resize(&full, extent, extent)
}

fn channel_stats(x: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let [n, c, h, w] = x.shape();
    let plane = h * w;
    let count = (n * plane) as f64;
    let mut mean = vec![0.0f64; c];
    let mut sq = vec![0.0f64; c];
    for ni in 0..n {
        for ci in 0..c {
            let off = (ni * c + ci) * plane;
            for &v in &x.data()[off..off + plane] {
                mean[ci] += v as f64;
                sq[ci] += (v as f64) * (v as f64);
            }
        }
    }
    let std = mean
        .iter_mut()
        .zip(&sq)
        .map(|(m, s)| {
            *m /= count;
            let var = s / count - *m * *m;
            if var > 1e-12 {
                var.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    (mean, std)
}

fn standardize(x: &Tensor, mean: &[f64], std: &[f64]) -> Tensor {
    let [_, c, h, w] = x.shape();
    let plane = h * w;
    let mut out = x.clone();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        let ci = (i / plane) % c;
        *v = ((*v as f64 - mean[ci]) / std[ci]) as f32;
    }
    out
}

/// Trains a fresh readout on precomputed probe inputs against one target map
/// and returns it with the per-epoch mean loss.
///
/// Optimisation runs on per-channel standardised inputs scaled by
/// `1/sqrt(fan-in)`; the learned affine map is folded back into the weights so
/// the returned readout consumes the raw probe inputs.
pub fn fit_readout(features: &Tensor, target: &Tensor, cfg: &ProbeConfig) -> Result<(Model, Vec<f32>)> {
    cfg.validate()?;
    let [n, c, h, w] = features.shape();
    if n == 0 {
        return Err(Error::invalid("probe training set is empty"));
    }
    if h != cfg.resize || w != cfg.resize {
        return Err(Error::invalid(format!("probe inputs are {h}x{w}, config resize {}", cfg.resize)));
    }
    let extent = cfg.output_extent();
    if target.shape() != [1, 1, extent, extent] {
        return Err(Error::invalid(format!("probe target must be 1x1x{extent}x{extent}")));
    }
    let (mean, mut std) = channel_stats(features);
    // Unit total input variance across the 3x3xC receptive field keeps one
    // step size stable for any tap width.
    let fan_in = ((c * 9) as f64).sqrt();
    std.iter_mut().for_each(|s| *s *= fan_in);
    let x = standardize(features, &mean, &std);
    let mut readout = build_posenet(c)?;
    let mut opt = Sgd::new(cfg.lr, cfg.momentum, cfg.weight_decay);
    let ctx = ForwardCtx::eval();
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let order = RngStream::derive(cfg.seed, "probe/shuffle", epoch as u64, 0).permutation(n);
        let mut total = 0.0f64;
        for batch in order.chunks(cfg.batch_size) {
            let xb = x.gather(batch);
            let tb = Tensor::stack(&vec![target.clone(); batch.len()])?;
            let pred = readout.forward(&xb, &ctx)?;
            let (loss, grad) = mse(&pred, &tb)?;
            readout.backward(&grad)?;
            opt.step(&mut readout.params_mut());
            total += loss as f64 * batch.len() as f64;
        }
        losses.push((total / n as f64) as f32);
    }
    fold_standardization(&mut readout, &mean, &std);
    Ok((readout, losses))
}

fn fold_standardization(readout: &mut Model, mean: &[f64], std: &[f64]) {
    let mut params = readout.params_mut();
    let (weight, bias) = params.split_at_mut(1);
    let [_, c, kh, kw] = weight[0].value.shape();
    let taps = kh * kw;
    let mut shift = 0.0f64;
    let wd = weight[0].value.data_mut();
    for ci in 0..c {
        for k in 0..taps {
            let v = &mut wd[ci * taps + k];
            let scaled = *v as f64 / std[ci];
            shift += scaled * mean[ci];
            *v = scaled as f32;
        }
    }
    let b = &mut bias[0].value.data_mut()[0];
    *b = (*b as f64 - shift) as f32;
}

/// Runs the readout over probe inputs; one `(extent x extent)` map per image.
pub fn predict_maps(readout: &mut Model, features: &Tensor) -> Result<Tensor> {
    readout.forward(features, &ForwardCtx::eval())
}

/// Trains a readout for one pattern on encoder features of `images`.
/// The encoder is only run in eval mode, so its parameters stay untouched.
pub fn train_posenet(encoder: Option<&mut Model>, images: &Tensor, cfg: &ProbeConfig) -> Result<(Model, Vec<f32>)> {
    if images.n() == 0 {
        return Err(Error::invalid("probe training set is empty"));
    }
    let features = assemble_probe_input(encoder, images, cfg.resize)?;
    let target = probe_target(&cfg.pattern, (images.h(), images.w()), cfg.output_extent())?;
    fit_readout(&features, &target, cfg)
}

fn average_ranks(v: &[f32]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn check_maps(pred: &[f32], gt: &[f32]) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::invalid(format!("map extents differ: {} vs {}", pred.len(), gt.len())));
    }
    if pred.len() < 2 {
        return Err(Error::invalid("maps need at least two elements"));
    }
    if !pred.iter().chain(gt).all(|v| v.is_finite()) {
        return Err(Error::invalid("maps contain non-finite values"));
    }
    Ok(())
}

/// Spearman rank correlation with average ranks for ties; 0 if either map is constant.
pub fn spearman(pred: &[f32], gt: &[f32]) -> Result<f64> {
    check_maps(pred, gt)?;
    let (a, b) = (average_ranks(pred), average_ranks(gt));
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(&b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return Ok(0.0);
    }
    Ok((cov / (va.sqrt() * vb.sqrt())).clamp(-1.0, 1.0))
}

/// Mean absolute error after min-max normalising `pred` (constant maps become 0.5).
pub fn mae(pred: &[f32], gt: &[f32]) -> Result<f64> {
    check_maps(pred, gt)?;
    let lo = pred.iter().copied().fold(f32::INFINITY, f32::min) as f64;
    let hi = pred.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let total: f64 = pred
        .iter()
        .zip(gt)
        .map(|(&p, &g)| {
            let p = if hi > lo { (p as f64 - lo) / (hi - lo) } else { 0.5 };
            (p - g as f64).abs()
        })
        .sum();
    Ok(total / pred.len() as f64)
}

/// Identifies the encoder in result rows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncoderInfo {
    pub id: String,
    pub padding: String,
}

/// Output of one probe cell: scores plus the predicted maps of the test images.
#[derive(Clone, Debug)]
pub struct ProbeOutcome {
    pub result: ProbeResult,
    pub maps: Tensor,
    pub losses: Vec<f32>,
}

/// Trains the readout on `train_images` and reports SPC and MAE averaged over
/// `test_images`.
pub fn run_probe(
    mut encoder: Option<&mut Model>,
    info: &EncoderInfo,
    cfg: &ProbeConfig,
    train_images: &Tensor,
    test_images: &Tensor,
) -> Result<ProbeOutcome> {
    if test_images.n() == 0 {
        return Err(Error::invalid("probe test set is empty"));
    }
    let (mut readout, losses) = train_posenet(encoder.as_deref_mut(), train_images, cfg)?;
    let features = assemble_probe_input(encoder, test_images, cfg.resize)?;
    let target = probe_target(&cfg.pattern, (test_images.h(), test_images.w()), cfg.output_extent())?;
    let maps = predict_maps(&mut readout, &features)?;
    let (mut spc, mut err) = (0.0, 0.0);
    for i in 0..maps.n() {
        spc += spearman(maps.sample(i), target.data())?;
        err += mae(maps.sample(i), target.data())?;
    }
    let n = maps.n() as f64;
    Ok(ProbeOutcome {
        result: ProbeResult {
            encoder_id: info.id.clone(),
            padding: info.padding.clone(),
            pattern: cfg.pattern.kind,
            input_kind: cfg.input_kind,
            spc: spc / n,
            mae: err / n,
            seed: cfg.seed,
        },
        maps,
        losses,
    })
}
