//! Layer graph, parameters and the desk-scale architecture builders.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::nn::conv::{conv2d, conv2d_backward};
use crate::nn::layers::{self, BatchNormCache, BN_MOMENTUM};
use crate::padding::{
    pad_backward, pad_backward_per_sample, pad_for_mode, traditional_pad, Mode,
    PaddingSpec,
};
use crate::rng::RngStream;
use crate::tensor::Tensor;

/// A named tensor with its gradient. `dims` is the logical shape written to
/// checkpoints; `value` stores it right-padded with unit extents.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub dims: Vec<usize>,
    pub value: Tensor,
    pub grad: Tensor,
    pub trainable: bool,
}

impl Param {
    pub fn new(name: impl Into<String>, dims: Vec<usize>, value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self {
            name: name.into(),
            dims,
            value,
            grad,
            trainable: true,
        }
    }

    fn vector(name: impl Into<String>, values: Vec<f32>) -> Self {
        let n = values.len();
        Self::new(name, vec![n], Tensor::new([n, 1, 1, 1], values).expect("vector shape"))
    }

    fn buffer(name: impl Into<String>, values: Vec<f32>) -> Self {
        let mut p = Self::vector(name, values);
        p.trainable = false;
        p
    }

    pub fn zero_grad(&mut self) {
        self.grad.data_mut().fill(0.0);
    }

    fn accumulate(&mut self, g: &[f32]) {
        for (a, b) in self.grad.data_mut().iter_mut().zip(g) {
            *a += b;
        }
    }
}

/// Per-forward information a stochastic layer needs to derive its streams.
#[derive(Clone, Copy, Debug)]
pub struct ForwardCtx<'a> {
    pub mode: Mode,
    pub seed: u64,
    pub epoch: u64,
    /// Global dataset index of every batch entry.
    pub sample_ids: &'a [u64],
}

impl ForwardCtx<'static> {
    pub fn eval() -> Self {
        Self {
            mode: Mode::Eval,
            seed: 0,
            epoch: 0,
            sample_ids: &[],
        }
    }
}

/// A padding site: symmetric zero-padding, or Random Padding in train mode.
#[derive(Clone, Debug)]
pub struct PadLayer {
    pub site: usize,
    pub thickness: usize,
    pub random: bool,
    specs: Vec<PaddingSpec>,
    in_hw: (usize, usize),
}

impl PadLayer {
    fn new(site: usize, thickness: usize, random: bool) -> Self {
        Self {
            site,
            thickness,
            random,
            specs: Vec::new(),
            in_hw: (0, 0),
        }
    }

    pub fn last_specs(&self) -> &[PaddingSpec] {
        &self.specs
    }

    fn forward(&mut self, x: &Tensor, ctx: &ForwardCtx) -> Result<Tensor> {
        self.in_hw = (x.h(), x.w());
        if self.random && ctx.mode == Mode::Train {
            if ctx.sample_ids.len() != x.n() {
                return Err(Error::invalid(format!(
                    "random padding site {}: {} sample ids for a batch of {}",
                    self.site,
                    ctx.sample_ids.len(),
                    x.n()
                )));
            }
            let tag = format!("random-padding/site-{}", self.site);
            let mut streams: Vec<RngStream> = ctx
                .sample_ids
                .iter()
                .map(|&id| RngStream::derive(ctx.seed, &tag, ctx.epoch, id))
                .collect();
            let (out, specs) = pad_for_mode(x, self.thickness, Mode::Train, &mut streams)?;
            self.specs = specs;
            Ok(out)
        } else {
            self.specs = vec![PaddingSpec::symmetric(self.thickness); x.n()];
            Ok(traditional_pad(x, self.thickness))
        }
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let (h, w) = self.in_hw;
        let symmetric = PaddingSpec::symmetric(self.thickness);
        if self.specs.iter().all(|s| *s == symmetric) {
            pad_backward(grad, symmetric, h, w)
        } else {
            pad_backward_per_sample(grad, &self.specs, h, w)
        }
    }
}

#[derive(Clone, Debug)]
pub struct Conv {
    pub weight: Param,
    pub bias: Param,
    pub stride: usize,
    input: Option<Tensor>,
}

impl Conv {
    fn new(name: &str, cin: usize, cout: usize, k: usize, stride: usize, rng: &mut RngStream) -> Self {
        let std = (2.0 / (cin * k * k) as f64).sqrt();
        let w = Tensor::from_fn([cout, cin, k, k], |_| (rng.normal() * std) as f32);
        Self {
            weight: Param::new(format!("{name}.weight"), vec![cout, cin, k, k], w),
            bias: Param::vector(format!("{name}.bias"), vec![0.0; cout]),
            stride,
            input: None,
        }
    }

    /// Readout-style convolution with all-zero weights.
    pub fn zeros(name: &str, cin: usize, cout: usize, k: usize) -> Self {
        Self {
            weight: Param::new(
                format!("{name}.weight"),
                vec![cout, cin, k, k],
                Tensor::zeros([cout, cin, k, k]),
            ),
            bias: Param::vector(format!("{name}.bias"), vec![0.0; cout]),
            stride: 1,
            input: None,
        }
    }

    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let out = conv2d(x, &self.weight.value, self.bias.value.data(), self.stride)?;
        self.input = Some(x.clone());
        Ok(out)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let x = self.input.as_ref().ok_or_else(|| Error::invalid("conv backward before forward"))?;
        let g = conv2d_backward(x, &self.weight.value, grad, self.stride)?;
        self.weight.accumulate(g.grad_w.data());
        self.bias.accumulate(&g.grad_b);
        Ok(g.grad_x)
    }
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
    input: Option<Tensor>,
}

impl Linear {
    fn new(name: &str, fin: usize, fout: usize, rng: &mut RngStream) -> Self {
        let std = (2.0 / fin as f64).sqrt();
        let w = Tensor::from_fn([fout, fin, 1, 1], |_| (rng.normal() * std) as f32);
        Self {
            weight: Param::new(format!("{name}.weight"), vec![fout, fin], w),
            bias: Param::vector(format!("{name}.bias"), vec![0.0; fout]),
            input: None,
        }
    }

    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let out = layers::linear(x, &self.weight.value, self.bias.value.data())?;
        self.input = Some(x.clone());
        Ok(out)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let x = self.input.as_ref().ok_or_else(|| Error::invalid("linear backward before forward"))?;
        let g = layers::linear_backward(x, &self.weight.value, grad)?;
        self.weight.accumulate(g.grad_w.data());
        self.bias.accumulate(&g.grad_b);
        Ok(g.grad_x)
    }
}

#[derive(Clone, Debug)]
pub struct BatchNorm {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Param,
    pub running_var: Param,
    cache: Option<BatchNormCache>,
}

impl BatchNorm {
    fn new(name: &str, c: usize) -> Self {
        Self {
            gamma: Param::vector(format!("{name}.gamma"), vec![1.0; c]),
            beta: Param::vector(format!("{name}.beta"), vec![0.0; c]),
            running_mean: Param::buffer(format!("{name}.running_mean"), vec![0.0; c]),
            running_var: Param::buffer(format!("{name}.running_var"), vec![1.0; c]),
            cache: None,
        }
    }

    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        match mode {
            Mode::Train => {
                let (out, cache, mean, var) =
                    layers::batchnorm_train(x, self.gamma.value.data(), self.beta.value.data())?;
                for (r, m) in self.running_mean.value.data_mut().iter_mut().zip(&mean) {
                    *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * m;
                }
                for (r, v) in self.running_var.value.data_mut().iter_mut().zip(&var) {
                    *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * v;
                }
                self.cache = Some(cache);
                Ok(out)
            }
            Mode::Eval => {
                self.cache = None;
                layers::batchnorm_eval(
                    x,
                    self.gamma.value.data(),
                    self.beta.value.data(),
                    self.running_mean.value.data(),
                    self.running_var.value.data(),
                )
            }
        }
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        match &self.cache {
            Some(cache) => {
                let (gx, gg, gb) = layers::batchnorm_train_backward(grad, cache, self.gamma.value.data())?;
                self.gamma.accumulate(&gg);
                self.beta.accumulate(&gb);
                Ok(gx)
            }
            None => Ok(layers::batchnorm_eval_backward(
                grad,
                self.gamma.value.data(),
                self.running_var.value.data(),
            )),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Residual {
    pub main: Vec<Layer>,
    /// Empty means identity.
    pub shortcut: Vec<Layer>,
    output: Option<Tensor>,
}

#[derive(Clone, Debug)]
pub enum Layer {
    Pad(PadLayer),
    Conv(Conv),
    Relu(Option<Tensor>),
    MaxPool { argmax: Vec<u32>, in_shape: [usize; 4] },
    BatchNorm(BatchNorm),
    Linear(Linear),
    GlobalAvgPool { in_shape: [usize; 4] },
    Residual(Residual),
}

impl Layer {
    pub fn relu() -> Self {
        Layer::Relu(None)
    }

    pub fn maxpool() -> Self {
        Layer::MaxPool {
            argmax: Vec::new(),
            in_shape: [0; 4],
        }
    }

    pub fn global_avg_pool() -> Self {
        Layer::GlobalAvgPool { in_shape: [0; 4] }
    }

    fn forward(&mut self, x: &Tensor, ctx: &ForwardCtx) -> Result<Tensor> {
        match self {
            Layer::Pad(p) => p.forward(x, ctx),
            Layer::Conv(c) => c.forward(x),
            Layer::Relu(out) => {
                let y = layers::relu(x);
                *out = Some(y.clone());
                Ok(y)
            }
            Layer::MaxPool { argmax, in_shape } => {
                let (y, idx) = layers::maxpool2x2(x)?;
                *argmax = idx;
                *in_shape = x.shape();
                Ok(y)
            }
            Layer::BatchNorm(bn) => bn.forward(x, ctx.mode),
            Layer::Linear(l) => l.forward(x),
            Layer::GlobalAvgPool { in_shape } => {
                *in_shape = x.shape();
                Ok(layers::global_avg_pool(x))
            }
            Layer::Residual(r) => {
                let mut main = x.clone();
                for l in r.main.iter_mut() {
                    main = l.forward(&main, ctx)?;
                }
                let mut short = x.clone();
                for l in r.shortcut.iter_mut() {
                    short = l.forward(&short, ctx)?;
                }
                if main.shape() != short.shape() {
                    return Err(Error::invalid(format!(
                        "residual branch shapes differ: {:?} vs {:?}",
                        main.shape(),
                        short.shape()
                    )));
                }
                let sum: Vec<f32> = main
                    .data()
                    .iter()
                    .zip(short.data())
                    .map(|(a, b)| (a + b).max(0.0))
                    .collect();
                let y = Tensor::new(main.shape(), sum)?;
                r.output = Some(y.clone());
                Ok(y)
            }
        }
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Pad(p) => p.backward(grad),
            Layer::Conv(c) => c.backward(grad),
            Layer::Relu(out) => {
                let out = out.as_ref().ok_or_else(|| Error::invalid("relu backward before forward"))?;
                layers::relu_backward(out, grad)
            }
            Layer::MaxPool { argmax, in_shape } => layers::maxpool2x2_backward(grad, argmax, *in_shape),
            Layer::BatchNorm(bn) => bn.backward(grad),
            Layer::Linear(l) => l.backward(grad),
            Layer::GlobalAvgPool { in_shape } => Ok(layers::global_avg_pool_backward(grad, *in_shape)),
            Layer::Residual(r) => {
                let out = r
                    .output
                    .as_ref()
                    .ok_or_else(|| Error::invalid("residual backward before forward"))?;
                let g = layers::relu_backward(out, grad)?;
                let mut gm = g.clone();
                for l in r.main.iter_mut().rev() {
                    gm = l.backward(&gm)?;
                }
                let mut gs = g;
                for l in r.shortcut.iter_mut().rev() {
                    gs = l.backward(&gs)?;
                }
                let sum = gm.data().iter().zip(gs.data()).map(|(a, b)| a + b).collect();
                Tensor::new(gm.shape(), sum)
            }
        }
    }

    fn collect_params<'a>(&'a self, out: &mut Vec<&'a Param>) {
        match self {
            Layer::Conv(c) => out.extend([&c.weight, &c.bias]),
            Layer::Linear(l) => out.extend([&l.weight, &l.bias]),
            Layer::BatchNorm(b) => out.extend([&b.gamma, &b.beta, &b.running_mean, &b.running_var]),
            Layer::Residual(r) => r
                .main
                .iter()
                .chain(&r.shortcut)
                .for_each(|l| l.collect_params(out)),
            _ => {}
        }
    }

    fn collect_params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Param>) {
        match self {
            Layer::Conv(c) => out.extend([&mut c.weight, &mut c.bias]),
            Layer::Linear(l) => out.extend([&mut l.weight, &mut l.bias]),
            Layer::BatchNorm(b) => out.extend([
                &mut b.gamma,
                &mut b.beta,
                &mut b.running_mean,
                &mut b.running_var,
            ]),
            Layer::Residual(r) => r
                .main
                .iter_mut()
                .chain(r.shortcut.iter_mut())
                .for_each(|l| l.collect_params_mut(out)),
            _ => {}
        }
    }

    fn collect_pads<'a>(&'a self, out: &mut Vec<&'a PadLayer>) {
        match self {
            Layer::Pad(p) => out.push(p),
            Layer::Residual(r) => r.main.iter().chain(&r.shortcut).for_each(|l| l.collect_pads(out)),
            _ => {}
        }
    }

    fn describe(&self, indent: usize, out: &mut String) {
        let pad = " ".repeat(indent);
        let line = match self {
            Layer::Pad(p) if p.random => format!("pad site={} n={} random", p.site, p.thickness),
            Layer::Pad(p) => format!("pad site={} n={} traditional", p.site, p.thickness),
            Layer::Conv(c) => {
                let [o, i, k, _] = c.weight.value.shape();
                format!("conv {} {i}->{o} k={k} stride={}", c.weight.name, c.stride)
            }
            Layer::Relu(_) => "relu".into(),
            Layer::MaxPool { .. } => "maxpool 2x2".into(),
            Layer::BatchNorm(b) => format!("batchnorm {}", b.gamma.name),
            Layer::Linear(l) => {
                let [o, i, _, _] = l.weight.value.shape();
                format!("linear {} {i}->{o}", l.weight.name)
            }
            Layer::GlobalAvgPool { .. } => "global-avg-pool".into(),
            Layer::Residual(r) => {
                out.push_str(&format!("{pad}residual\n"));
                for l in &r.main {
                    l.describe(indent + 2, out);
                }
                if r.shortcut.is_empty() {
                    out.push_str(&format!("{pad}  shortcut identity\n"));
                } else {
                    out.push_str(&format!("{pad}  shortcut\n"));
                    for l in &r.shortcut {
                        l.describe(indent + 4, out);
                    }
                }
                return;
            }
        };
        out.push_str(&pad);
        out.push_str(&line);
        out.push('\n');
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Architecture {
    CnnLite,
    VggLite,
    ResnetLite,
}

impl Architecture {
    pub const ALL: [Architecture; 3] = [Architecture::CnnLite, Architecture::VggLite, Architecture::ResnetLite];

    /// Number of padding sites in the network.
    pub fn padding_sites(self) -> usize {
        match self {
            Architecture::CnnLite => 2,
            Architecture::VggLite => 6,
            Architecture::ResnetLite => 7,
        }
    }

    /// Largest number of leading padding sites that may use Random Padding.
    pub fn max_rp_layers(self) -> usize {
        match self {
            Architecture::ResnetLite => 1,
            other => other.padding_sites(),
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Architecture::CnnLite => "cnn-lite",
            Architecture::VggLite => "vgg-lite",
            Architecture::ResnetLite => "resnet-lite",
        })
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cnn-lite" => Ok(Architecture::CnnLite),
            "vgg-lite" => Ok(Architecture::VggLite),
            "resnet-lite" => Ok(Architecture::ResnetLite),
            other => Err(Error::invalid(format!("unknown architecture {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub arch: Architecture,
    /// Leading padding sites converted to Random Padding (0 = baseline).
    pub rp_layers: usize,
    pub class_count: usize,
    /// `(channels, height, width)` of one input sample.
    pub input: [usize; 3],
    pub init_seed: u64,
}

#[derive(Clone, Debug)]
pub struct Model {
    name: String,
    layers: Vec<Layer>,
    taps: Vec<(String, usize)>,
}

impl Model {
    pub fn from_layers(name: impl Into<String>, layers: Vec<Layer>, taps: Vec<(String, usize)>) -> Result<Self> {
        if let Some((tap, idx)) = taps.iter().find(|(_, i)| *i >= layers.len()) {
            return Err(Error::invalid(format!("tap {tap} points at missing layer {idx}")));
        }
        Ok(Self {
            name: name.into(),
            layers,
            taps,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn tap_names(&self) -> Vec<&str> {
        self.taps.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn forward(&mut self, x: &Tensor, ctx: &ForwardCtx) -> Result<Tensor> {
        let mut h = x.clone();
        for l in self.layers.iter_mut() {
            h = l.forward(&h, ctx)?;
        }
        Ok(h)
    }

    /// Forward pass that also returns the activations at every tap point.
    pub fn forward_with_taps(&mut self, x: &Tensor, ctx: &ForwardCtx) -> Result<(Tensor, Vec<Tensor>)> {
        let mut taps = vec![None; self.taps.len()];
        let mut h = x.clone();
        for (i, l) in self.layers.iter_mut().enumerate() {
            h = l.forward(&h, ctx)?;
            for (slot, (_, t)) in taps.iter_mut().zip(&self.taps) {
                if *t == i {
                    *slot = Some(h.clone());
                }
            }
        }
        Ok((h, taps.into_iter().map(|t| t.expect("tap filled")).collect()))
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let mut g = grad.clone();
        for l in self.layers.iter_mut().rev() {
            g = l.backward(&g)?;
        }
        Ok(g)
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut out = Vec::new();
        self.layers.iter().for_each(|l| l.collect_params(&mut out));
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = Vec::new();
        self.layers.iter_mut().for_each(|l| l.collect_params_mut(&mut out));
        out
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Param::zero_grad);
    }

    pub fn padding_layers(&self) -> Vec<&PadLayer> {
        let mut out = Vec::new();
        self.layers.iter().for_each(|l| l.collect_pads(&mut out));
        out
    }

    /// One line per layer; padding sites show whether they are random.
    pub fn summary(&self) -> String {
        let mut s = format!("model {}\n", self.name);
        for l in &self.layers {
            l.describe(2, &mut s);
        }
        for (name, idx) in &self.taps {
            s.push_str(&format!("  tap {name} -> layer {idx}\n"));
        }
        s
    }
}

/// The activations at the model's five tap points from one eval-mode forward.
pub fn extract_features(model: &mut Model, x: &Tensor) -> Result<Vec<Tensor>> {
    if model.taps.is_empty() {
        return Err(Error::invalid(format!("model {} has no tap points", model.name)));
    }
    let (_, taps) = model.forward_with_taps(x, &ForwardCtx::eval())?;
    Ok(taps)
}

const CNN_LITE_CHANNELS: [usize; 2] = [16, 32];
const VGG_LITE_CHANNELS: [usize; 6] = [8, 8, 16, 16, 32, 32];
const VGG_LITE_HIDDEN: usize = 64;
const RESNET_LITE_CHANNELS: [usize; 4] = [8, 8, 16, 32];

pub fn build_model(cfg: &ModelConfig) -> Result<Model> {
    let max = cfg.arch.max_rp_layers();
    if cfg.rp_layers > max {
        let why = if cfg.arch == Architecture::ResnetLite {
            " (residual shortcuts limit Random Padding to the stem)"
        } else {
            ""
        };
        return Err(Error::invalid(format!(
            "{} has {} padding sites that may use random padding, rp_layers={} requested{why}",
            cfg.arch, max, cfg.rp_layers
        )));
    }
    let [c, h, w] = cfg.input;
    if c == 0 || cfg.class_count == 0 {
        return Err(Error::invalid("model needs at least one input channel and one class"));
    }
    let divisor = match cfg.arch {
        Architecture::CnnLite => 4,
        Architecture::VggLite => 8,
        Architecture::ResnetLite => 4,
    };
    if h == 0 || w == 0 || h % divisor != 0 || w % divisor != 0 {
        return Err(Error::invalid(format!(
            "{} needs input extents divisible by {divisor}, got {h}x{w}",
            cfg.arch
        )));
    }
    let mut b = Builder {
        cfg,
        site: 0,
        layers: Vec::new(),
    };
    let taps = match cfg.arch {
        Architecture::CnnLite => b.cnn_lite(),
        Architecture::VggLite => b.vgg_lite(),
        Architecture::ResnetLite => b.resnet_lite(),
    };
    let name = format!("{}-rp{}", cfg.arch, cfg.rp_layers);
    Model::from_layers(name, b.layers, taps)
}

struct Builder<'a> {
    cfg: &'a ModelConfig,
    site: usize,
    layers: Vec<Layer>,
}

impl Builder<'_> {
    fn init_stream(&self, name: &str) -> RngStream {
        RngStream::derive(self.cfg.init_seed, &format!("init/{name}"), 0, 0)
    }

    fn pad_layer(&mut self) -> Layer {
        let site = self.site;
        self.site += 1;
        Layer::Pad(PadLayer::new(site, 1, site < self.cfg.rp_layers))
    }

    fn conv(&self, name: &str, cin: usize, cout: usize, k: usize, stride: usize) -> Layer {
        Layer::Conv(Conv::new(name, cin, cout, k, stride, &mut self.init_stream(name)))
    }

    fn linear(&self, name: &str, fin: usize, fout: usize) -> Layer {
        Layer::Linear(Linear::new(name, fin, fout, &mut self.init_stream(name)))
    }

    fn push(&mut self, l: Layer) -> usize {
        self.layers.push(l);
        self.layers.len() - 1
    }

    fn cnn_lite(&mut self) -> Vec<(String, usize)> {
        let [c, h, w] = self.cfg.input;
        let [c1, c2] = CNN_LITE_CHANNELS;
        let pad = self.pad_layer();
        self.push(pad);
        self.push(self.conv("conv1", c, c1, 3, 1));
        let relu1 = self.push(Layer::relu());
        let pool1 = self.push(Layer::maxpool());
        let pad = self.pad_layer();
        self.push(pad);
        self.push(self.conv("conv2", c1, c2, 3, 1));
        let relu2 = self.push(Layer::relu());
        let pool2 = self.push(Layer::maxpool());
        let fc = self.push(self.linear("fc", c2 * (h / 4) * (w / 4), self.cfg.class_count));
        taps([("conv1", relu1), ("pool1", pool1), ("conv2", relu2), ("pool2", pool2), ("logits", fc)])
    }

    fn vgg_lite(&mut self) -> Vec<(String, usize)> {
        let [c, h, w] = self.cfg.input;
        let mut cin = c;
        let mut marks = Vec::new();
        for (i, &cout) in VGG_LITE_CHANNELS.iter().enumerate() {
            let pad = self.pad_layer();
            self.push(pad);
            self.push(self.conv(&format!("conv{}", i + 1), cin, cout, 3, 1));
            let relu = self.push(Layer::relu());
            marks.push(relu);
            if i % 2 == 1 {
                let pool = self.push(Layer::maxpool());
                marks.push(pool);
            }
            cin = cout;
        }
        let feat = cin * (h / 8) * (w / 8);
        self.push(self.linear("fc1", feat, VGG_LITE_HIDDEN));
        self.push(Layer::relu());
        self.push(self.linear("fc2", VGG_LITE_HIDDEN, self.cfg.class_count));
        // marks: relu1 relu2 pool1 relu3 relu4 pool2 relu5 relu6 pool3
        taps([
            ("conv1", marks[0]),
            ("conv3", marks[3]),
            ("pool2", marks[5]),
            ("conv5", marks[6]),
            ("pool3", marks[8]),
        ])
    }

    fn resnet_lite(&mut self) -> Vec<(String, usize)> {
        let [c, _, _] = self.cfg.input;
        let [stem, c1, c2, c3] = RESNET_LITE_CHANNELS;
        let pad = self.pad_layer();
        self.push(pad);
        self.push(self.conv("stem.conv", c, stem, 3, 1));
        self.push(Layer::BatchNorm(BatchNorm::new("stem.bn", stem)));
        let stem_out = self.push(Layer::relu());
        let mut cin = stem;
        let mut outs = Vec::new();
        for (i, (&cout, stride)) in [c1, c2, c3].iter().zip([1, 2, 2]).enumerate() {
            let block = self.residual(&format!("block{}", i + 1), cin, cout, stride);
            outs.push(self.push(block));
            cin = cout;
        }
        let gap = self.push(Layer::global_avg_pool());
        self.push(self.linear("fc", cin, self.cfg.class_count));
        taps([
            ("stem", stem_out),
            ("block1", outs[0]),
            ("block2", outs[1]),
            ("block3", outs[2]),
            ("pool", gap),
        ])
    }

    fn residual(&mut self, name: &str, cin: usize, cout: usize, stride: usize) -> Layer {
        let mut main = Vec::new();
        main.push(self.pad_layer());
        main.push(self.conv(&format!("{name}.conv1"), cin, cout, 3, stride));
        main.push(Layer::BatchNorm(BatchNorm::new(&format!("{name}.bn1"), cout)));
        main.push(Layer::relu());
        main.push(self.pad_layer());
        main.push(self.conv(&format!("{name}.conv2"), cout, cout, 3, 1));
        main.push(Layer::BatchNorm(BatchNorm::new(&format!("{name}.bn2"), cout)));
        let shortcut = if stride != 1 || cin != cout {
            vec![
                self.conv(&format!("{name}.proj"), cin, cout, 1, stride),
                Layer::BatchNorm(BatchNorm::new(&format!("{name}.proj_bn"), cout)),
            ]
        } else {
            Vec::new()
        };
        Layer::Residual(Residual {
            main,
            shortcut,
            output: None,
        })
    }
}

fn taps<const N: usize>(list: [(&str, usize); N]) -> Vec<(String, usize)> {
    list.iter().map(|(n, i)| (n.to_string(), *i)).collect()
}

/// Copies every parameter value from `src` into `dst` (matching order and shapes).
pub fn copy_weights(src: &Model, dst: &mut Model) -> Result<()> {
    let from = src.params();
    let mut to = dst.params_mut();
    if from.len() != to.len() {
        return Err(Error::invalid(format!(
            "copy_weights: {} vs {} parameters",
            from.len(),
            to.len()
        )));
    }
    for (f, t) in from.iter().zip(to.iter_mut()) {
        if f.value.shape() != t.value.shape() {
            return Err(Error::invalid(format!("copy_weights: shape mismatch at {}", f.name)));
        }
        t.value = f.value.clone();
    }
    Ok(())
}
