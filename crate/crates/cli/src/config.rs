//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use randpad_core::augment::AugmentPipeline;
use randpad_core::datasets::{InputKind, PatternKind};
use randpad_core::nn::Architecture;

use crate::failure::{fail, Failure};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetKind {
    FashionMnist,
    Mnist,
    Cifar10,
    Cifar100,
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::FashionMnist => "fashion-mnist",
            DatasetKind::Mnist => "mnist",
            DatasetKind::Cifar10 => "cifar10",
            DatasetKind::Cifar100 => "cifar100",
        }
    }
}

impl FromStr for DatasetKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "fashion-mnist" => Ok(DatasetKind::FashionMnist),
            "mnist" => Ok(DatasetKind::Mnist),
            "cifar10" => Ok(DatasetKind::Cifar10),
            "cifar100" => Ok(DatasetKind::Cifar100),
            other => Err(format!("unknown dataset {other:?} (fashion-mnist, mnist, cifar10, cifar100)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Table1Desk,
    Table2Desk,
    Table3Desk,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Table1Desk => "table1-desk",
            Preset::Table2Desk => "table2-desk",
            Preset::Table3Desk => "table3-desk",
        }
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "table1-desk" => Ok(Preset::Table1Desk),
            "table2-desk" => Ok(Preset::Table2Desk),
            "table3-desk" => Ok(Preset::Table3Desk),
            other => Err(format!("unknown preset {other:?} (table1-desk, table2-desk, table3-desk)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub dataset: DatasetKind,
    pub data_dir: PathBuf,
    /// 0 keeps the whole split.
    pub train_subset: usize,
    pub test_subset: usize,
    /// Square side images are resampled to; 0 keeps the native extent.
    pub input_size: usize,

    pub arch: Architecture,
    pub rp_layers: usize,
    pub augment: AugmentPipeline,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f32,
    pub momentum: f32,
    pub weight_decay: f32,
    pub seed: u64,

    pub checkpoint: Option<PathBuf>,
    pub encoders: Vec<PathBuf>,
    pub encoder_rp_layers: Vec<usize>,

    pub probe_patterns: Vec<PatternKind>,
    pub probe_inputs: Vec<InputKind>,
    pub probe_resize: usize,
    pub probe_epochs: usize,
    pub probe_lr: f32,
    pub probe_batch_size: usize,
    pub probe_train_images: usize,
    pub probe_test_images: usize,
    pub probe_raw_baseline: bool,
    pub probe_dump_maps: bool,

    pub preset: Option<Preset>,
    pub seeds: usize,
    pub archs: Vec<Architecture>,
    /// Random Padding sites of the second encoder in `table1-desk`.
    pub rp_encoder_layers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetKind::FashionMnist,
            data_dir: PathBuf::from("data/fashion-mnist"),
            train_subset: 0,
            test_subset: 0,
            input_size: 0,
            arch: Architecture::CnnLite,
            rp_layers: 0,
            augment: AugmentPipeline::default(),
            epochs: 15,
            batch_size: 64,
            lr: 1e-3,
            momentum: 0.9,
            weight_decay: 5e-4,
            seed: 0,
            checkpoint: None,
            encoders: Vec::new(),
            encoder_rp_layers: Vec::new(),
            probe_patterns: PatternKind::ALL.to_vec(),
            probe_inputs: InputKind::ALL.to_vec(),
            probe_resize: 16,
            probe_epochs: 15,
            probe_lr: 0.05,
            probe_batch_size: 32,
            probe_train_images: 200,
            probe_test_images: 50,
            probe_raw_baseline: false,
            probe_dump_maps: true,
            preset: None,
            seeds: 3,
            archs: Architecture::ALL.to_vec(),
            rp_encoder_layers: 2,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, Failure>
where
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| fail("config", format!("{key}: cannot parse {value:?}: {e}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, Failure>
where
    T::Err: Display,
{
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool, Failure> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(fail("config", format!("{key}: expected true or false, got {other:?}"))),
    }
}

fn join<T: Display>(items: &[T]) -> String {
    items.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",")
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), Failure> {
        let v = value.trim();
        match key {
            "dataset" => self.dataset = parse(key, v)?,
            "data_dir" => self.data_dir = PathBuf::from(v),
            "train_subset" => self.train_subset = parse(key, v)?,
            "test_subset" => self.test_subset = parse(key, v)?,
            "input_size" => self.input_size = parse(key, v)?,
            "arch" => self.arch = parse(key, v)?,
            "rp_layers" => self.rp_layers = parse(key, v)?,
            "augment" => self.augment = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "lr" => self.lr = parse(key, v)?,
            "momentum" => self.momentum = parse(key, v)?,
            "weight_decay" => self.weight_decay = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "checkpoint" => self.checkpoint = (!v.is_empty()).then(|| PathBuf::from(v)),
            "encoders" => self.encoders = parse_list(key, v)?,
            "encoder_rp_layers" => self.encoder_rp_layers = parse_list(key, v)?,
            "probe_patterns" => self.probe_patterns = parse_list(key, v)?,
            "probe_inputs" => self.probe_inputs = parse_list(key, v)?,
            "probe_resize" => self.probe_resize = parse(key, v)?,
            "probe_epochs" => self.probe_epochs = parse(key, v)?,
            "probe_lr" => self.probe_lr = parse(key, v)?,
            "probe_batch_size" => self.probe_batch_size = parse(key, v)?,
            "probe_train_images" => self.probe_train_images = parse(key, v)?,
            "probe_test_images" => self.probe_test_images = parse(key, v)?,
            "probe_raw_baseline" => self.probe_raw_baseline = parse_bool(key, v)?,
            "probe_dump_maps" => self.probe_dump_maps = parse_bool(key, v)?,
            "preset" => self.preset = (!v.is_empty()).then(|| parse(key, v)).transpose()?,
            "seeds" => self.seeds = parse(key, v)?,
            "archs" => self.archs = parse_list(key, v)?,
            "rp_encoder_layers" => self.rp_encoder_layers = parse(key, v)?,
            other => return Err(fail("config", format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Parses config text; later lines override earlier ones.
    pub fn parse_text(text: &str) -> Result<Self, Failure> {
        let mut cfg = RunConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), Failure> {
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| fail("config", format!("line {}: expected key = value, got {line:?}", no + 1)))?;
            self.set(k.trim(), v)
                .map_err(|e| fail("config", format!("line {}: {}", no + 1, e.message)))?;
        }
        Ok(())
    }

    /// Applies one `key=value` command-line override.
    pub fn apply_override(&mut self, kv: &str) -> Result<(), Failure> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| fail("config", format!("override {kv:?} is not key=value")))?;
        self.set(k.trim(), v)
    }

    /// Every effective setting, as canonical strings, in key order.
    pub fn echo(&self) -> BTreeMap<&'static str, String> {
        let opt_path = |p: &Option<PathBuf>| p.as_deref().map(path_str).unwrap_or_default();
        let paths = |ps: &[PathBuf]| ps.iter().map(|p| path_str(p)).collect::<Vec<_>>().join(",");
        BTreeMap::from([
            ("dataset", self.dataset.name().to_string()),
            ("data_dir", path_str(&self.data_dir)),
            ("train_subset", self.train_subset.to_string()),
            ("test_subset", self.test_subset.to_string()),
            ("input_size", self.input_size.to_string()),
            ("arch", self.arch.to_string()),
            ("rp_layers", self.rp_layers.to_string()),
            ("augment", self.augment.to_string()),
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("lr", self.lr.to_string()),
            ("momentum", self.momentum.to_string()),
            ("weight_decay", self.weight_decay.to_string()),
            ("seed", self.seed.to_string()),
            ("checkpoint", opt_path(&self.checkpoint)),
            ("encoders", paths(&self.encoders)),
            ("encoder_rp_layers", join(&self.encoder_rp_layers)),
            ("probe_patterns", join(&self.probe_patterns)),
            ("probe_inputs", join(&self.probe_inputs)),
            ("probe_resize", self.probe_resize.to_string()),
            ("probe_epochs", self.probe_epochs.to_string()),
            ("probe_lr", self.probe_lr.to_string()),
            ("probe_batch_size", self.probe_batch_size.to_string()),
            ("probe_train_images", self.probe_train_images.to_string()),
            ("probe_test_images", self.probe_test_images.to_string()),
            ("probe_raw_baseline", self.probe_raw_baseline.to_string()),
            ("probe_dump_maps", self.probe_dump_maps.to_string()),
            ("preset", self.preset.map(Preset::name).unwrap_or("").to_string()),
            ("seeds", self.seeds.to_string()),
            ("archs", join(&self.archs)),
            ("rp_encoder_layers", self.rp_encoder_layers.to_string()),
        ])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_overrides() {
        let text = "# desk run\narch = vgg-lite\nrp_layers=2 # first two\n\naugment = re,rc\n";
        let mut cfg = RunConfig::parse_text(text).unwrap();
        assert_eq!(cfg.arch, Architecture::VggLite);
        assert_eq!(cfg.rp_layers, 2);
        assert_eq!(cfg.augment.to_string(), "rc,re");
        cfg.apply_override("epochs=3").unwrap();
        assert_eq!(cfg.epochs, 3);
    }

    #[test]
    fn unknown_key_rejected_with_line() {
        let err = RunConfig::parse_text("epochs = 2\nlearning_rate = 0.1\n").unwrap_err();
        assert_eq!(err.kind, "config");
        assert!(err.message.contains("line 2") && err.message.contains("learning_rate"), "{}", err.message);
    }

    #[test]
    fn bad_values_rejected() {
        assert!(RunConfig::parse_text("epochs = many").is_err());
        assert!(RunConfig::parse_text("augment = rc,zz").is_err());
        assert!(RunConfig::parse_text("no equals sign").is_err());
        assert!(RunConfig::default().apply_override("epochs").is_err());
    }

    #[test]
    fn echo_covers_every_key() {
        let cfg = RunConfig::default();
        let mut copy = RunConfig::default();
        for (k, v) in cfg.echo() {
            copy.set(k, &v).unwrap();
        }
        assert_eq!(copy, cfg);
    }
}
