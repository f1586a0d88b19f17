//! Dataset loading as configured: subset, resample, normalise.

use anyhow::{Context, Result};
use randpad_core::datasets::{load_cifar, load_idx, normalize, CifarVariant, LabeledDataset, Normalization, Split};

use crate::config::{DatasetKind, RunConfig};
use crate::failure::fail;

#[derive(Clone, Debug)]
pub struct Splits {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
}

impl Splits {
    pub fn normalization(&self) -> &Normalization {
        self.train.normalization.as_ref().expect("splits are normalised on load")
    }
}

fn load_raw(cfg: &RunConfig) -> Result<(LabeledDataset, LabeledDataset)> {
    let dir = &cfg.data_dir;
    Ok(match cfg.dataset {
        DatasetKind::FashionMnist | DatasetKind::Mnist => (
            load_idx(dir.join("train-images-idx3-ubyte"), dir.join("train-labels-idx1-ubyte"))?,
            load_idx(dir.join("t10k-images-idx3-ubyte"), dir.join("t10k-labels-idx1-ubyte"))?,
        ),
        DatasetKind::Cifar10 => (
            load_cifar(dir, CifarVariant::C10, Split::Train)?,
            load_cifar(dir, CifarVariant::C10, Split::Test)?,
        ),
        DatasetKind::Cifar100 => (
            load_cifar(dir, CifarVariant::C100, Split::Train)?,
            load_cifar(dir, CifarVariant::C100, Split::Test)?,
        ),
    })
}

fn prepare(ds: LabeledDataset, subset: usize, size: usize) -> Result<LabeledDataset> {
    let ds = if subset > 0 { ds.take(subset) } else { ds };
    if ds.is_empty() {
        return Err(fail("data", "dataset split is empty").into());
    }
    if size > 0 && (ds.images.h() != size || ds.images.w() != size) {
        Ok(ds.resized(size, size)?)
    } else {
        Ok(ds)
    }
}

/// Loads both splits, keeps the configured subsets, resamples to
/// `input_size`, and normalises with training-split statistics.
pub fn load_splits(cfg: &RunConfig) -> Result<Splits> {
    let (train, test) = load_raw(cfg).with_context(|| format!("loading {} from {}", cfg.dataset.name(), cfg.data_dir.display()))?;
    let train = prepare(train, cfg.train_subset, cfg.input_size)?;
    let test = prepare(test, cfg.test_subset, cfg.input_size)?;
    let (train, test) = normalize(&train, &test)?;
    Ok(Splits { train, test })
}
