//! The `train`, `eval` and `probe` commands and the pieces presets reuse.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::{json, Value};

use randpad_core::datasets::{make_synthetic, GroundTruthPattern, InputKind, PatternKind};
use randpad_core::nn::{build_model, load_checkpoint, save_checkpoint, Model, ModelConfig};
use randpad_core::pgm::write_pgm;
use randpad_core::probe::{probe_target, run_probe, EncoderInfo, ProbeConfig, ProbeOutcome, CSV_HEADER};
use randpad_core::train::{evaluate, train_classifier, EpochLog, TrainConfig};
use randpad_core::{RngStream, Tensor};

use crate::config::RunConfig;
use crate::data::{load_splits, Splits};
use crate::failure::fail;
use crate::report::{fmt6, prepare_out_dir, write_csv, write_json, write_text};

pub const METRICS_HEADER: &str = "epoch,train_loss,test_error";

pub fn model_config(cfg: &RunConfig, splits: &Splits) -> ModelConfig {
    ModelConfig {
        arch: cfg.arch,
        rp_layers: cfg.rp_layers,
        class_count: splits.train.class_count,
        input: splits.train.sample_shape(),
        init_seed: cfg.seed,
    }
}

pub fn train_config(cfg: &RunConfig, splits: &Splits) -> TrainConfig {
    let norm = splits.normalization();
    TrainConfig {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        lr: cfg.lr,
        momentum: cfg.momentum,
        weight_decay: cfg.weight_decay,
        seed: cfg.seed,
        augment: cfg.augment.clone().with_normalized_fill(&norm.mean, &norm.std),
    }
}

pub struct TrainOutcome {
    pub model: Model,
    pub logs: Vec<EpochLog>,
    pub test_error: f64,
}

/// Builds and trains one model; `label` prefixes progress lines on stderr.
pub fn train_run(cfg: &RunConfig, splits: &Splits, label: &str, per_epoch_eval: bool) -> Result<TrainOutcome> {
    let mut model = build_model(&model_config(cfg, splits))?;
    let test = per_epoch_eval.then_some(&splits.test);
    let logs = train_classifier(&mut model, &splits.train, test, &train_config(cfg, splits), |l| {
        eprintln!("[{label}] epoch {} train_loss {:.4}", l.epoch + 1, l.train_loss);
    })?;
    let test_error = match logs.last().and_then(|l| l.test_error) {
        Some(e) => e,
        None => evaluate(&mut model, &splits.test)?,
    };
    eprintln!("[{label}] test_error {test_error:.4}");
    Ok(TrainOutcome { model, logs, test_error })
}

fn write_timing(out: &Path, started: std::time::Instant) -> Result<()> {
    write_text(&out.join("timing.txt"), &format!("wall_seconds {:.3}\n", started.elapsed().as_secs_f64()))
}

pub fn cmd_train(cfg: &RunConfig, out: &Path) -> Result<()> {
    let started = std::time::Instant::now();
    prepare_out_dir(out)?;
    let splits = load_splits(cfg)?;
    let label = format!("{}-rp{}", cfg.arch, cfg.rp_layers);
    let run = train_run(cfg, &splits, &label, true)?;
    let rows: Vec<String> = run
        .logs
        .iter()
        .map(|l| format!("{},{},{}", l.epoch + 1, fmt6(l.train_loss), fmt6(l.test_error.unwrap_or(f64::NAN))))
        .collect();
    write_csv(&out.join("metrics.csv"), METRICS_HEADER, &rows)?;
    save_checkpoint(out.join("model.rplb"), &run.model)?;
    write_text(&out.join("model.txt"), &run.model.summary())?;
    write_json(
        &out.join("summary.json"),
        &json!({
            "command": "train",
            "config": cfg.echo(),
            "model": run.model.name(),
            "train_samples": splits.train.len(),
            "test_samples": splits.test.len(),
            "epochs": run
                .logs
                .iter()
                .map(|l| json!({"epoch": l.epoch + 1, "train_loss": l.train_loss, "test_error": l.test_error}))
                .collect::<Vec<_>>(),
            "final_test_error": run.test_error,
        }),
    )?;
    write_timing(out, started)
}

fn load_model(cfg: &RunConfig, splits: &Splits, rp_layers: usize, path: &Path) -> Result<Model> {
    let mut model = build_model(&ModelConfig {
        rp_layers,
        ..model_config(cfg, splits)
    })?;
    load_checkpoint(path, &mut model).with_context(|| format!("loading checkpoint {}", path.display()))?;
    Ok(model)
}

pub fn cmd_eval(cfg: &RunConfig, out: &Path) -> Result<()> {
    let path = cfg
        .checkpoint
        .clone()
        .ok_or_else(|| fail("config", "eval needs checkpoint = PATH"))?;
    prepare_out_dir(out)?;
    let splits = load_splits(cfg)?;
    let mut model = load_model(cfg, &splits, cfg.rp_layers, &path)?;
    let err = evaluate(&mut model, &splits.test)?;
    eprintln!("[eval] {} test_error {err:.4}", model.name());
    write_json(
        &out.join("summary.json"),
        &json!({
            "command": "eval",
            "config": cfg.echo(),
            "model": model.name(),
            "test_samples": splits.test.len(),
            "test_error": err,
        }),
    )
}

pub fn padding_label(rp_layers: usize) -> &'static str {
    if rp_layers == 0 {
        "traditional"
    } else {
        "random"
    }
}

/// Readout training and evaluation images for one input kind, normalised
/// like the classifier inputs.
pub fn probe_images(cfg: &RunConfig, splits: &Splits, kind: InputKind) -> Result<(Tensor, Tensor)> {
    let (n_train, n_test) = (cfg.probe_train_images, cfg.probe_test_images);
    if n_train == 0 || n_test == 0 {
        return Err(fail("config", "probe_train_images and probe_test_images must be positive").into());
    }
    let [c, h, w] = splits.test.sample_shape();
    if kind == InputKind::Natural {
        if splits.test.len() < n_train + n_test {
            return Err(fail(
                "config",
                format!("natural probe needs {} test images, split has {}", n_train + n_test, splits.test.len()),
            )
            .into());
        }
        let idx: Vec<usize> = (0..n_train + n_test).collect();
        let all = splits.test.images.gather(&idx);
        let train: Vec<usize> = (0..n_train).collect();
        let test: Vec<usize> = (n_train..n_train + n_test).collect();
        return Ok((all.gather(&train), all.gather(&test)));
    }
    let norm = splits.normalization();
    let make = |n: usize, index: u64| -> Result<Tensor> {
        let mut rng = RngStream::derive(cfg.seed, &format!("probe/input/{kind}"), 0, index);
        let mut t = make_synthetic(kind, [n, c, h, w], Some(&mut rng))?;
        let plane = h * w;
        for (i, v) in t.data_mut().iter_mut().enumerate() {
            let ci = (i / plane) % c;
            *v = (*v - norm.mean[ci]) / norm.std[ci];
        }
        Ok(t)
    };
    Ok((make(n_train, 0)?, make(n_test, 1)?))
}

pub fn probe_config(cfg: &RunConfig, pattern: PatternKind, input_kind: InputKind) -> ProbeConfig {
    ProbeConfig {
        resize: cfg.probe_resize,
        epochs: cfg.probe_epochs,
        lr: cfg.probe_lr,
        momentum: 0.9,
        weight_decay: 1e-4,
        batch_size: cfg.probe_batch_size,
        pattern: GroundTruthPattern::new(pattern),
        input_kind,
        seed: cfg.seed,
    }
}

/// A probed encoder; `None` model means the raw-image readout baseline.
#[derive(Clone)]
pub struct ProbeSubject {
    pub info: EncoderInfo,
    pub model: Option<Model>,
}

pub fn raw_subject() -> ProbeSubject {
    ProbeSubject {
        info: EncoderInfo {
            id: "posenet-raw".into(),
            padding: "none".into(),
        },
        model: None,
    }
}

/// Runs every (subject, pattern, input kind) cell; rows come back in grid order.
pub fn probe_grid(cfg: &RunConfig, splits: &Splits, subjects: &[ProbeSubject]) -> Result<Vec<ProbeOutcome>> {
    let mut images = Vec::new();
    for &kind in &cfg.probe_inputs {
        images.push((kind, probe_images(cfg, splits, kind)?));
    }
    let mut cells = Vec::new();
    for (si, _) in subjects.iter().enumerate() {
        for &pattern in &cfg.probe_patterns {
            for (ki, _) in images.iter().enumerate() {
                cells.push((si, pattern, ki));
            }
        }
    }
    let run = |&(si, pattern, ki): &(usize, PatternKind, usize)| -> Result<ProbeOutcome> {
        let subject = &subjects[si];
        let (kind, (train, test)) = &images[ki];
        let mut model = subject.model.clone();
        let pcfg = probe_config(cfg, pattern, *kind);
        let out = run_probe(model.as_mut(), &subject.info, &pcfg, train, test)?;
        eprintln!(
            "[probe] {} {} {} spc {:.4} mae {:.4}",
            subject.info.id, pattern, kind, out.result.spc, out.result.mae
        );
        Ok(out)
    };
    crate::par_map(&cells, run).into_iter().collect()
}

pub fn probe_rows(outcomes: &[ProbeOutcome]) -> Vec<String> {
    outcomes.iter().map(|o| o.result.csv_row()).collect()
}

/// Ground-truth maps and the first predicted test map of every cell as P5 files.
pub fn dump_maps(cfg: &RunConfig, splits: &Splits, outcomes: &[ProbeOutcome], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let e = cfg.probe_resize - 2;
    let [_, h, w] = splits.test.sample_shape();
    for &p in &cfg.probe_patterns {
        let gt = probe_target(&GroundTruthPattern::new(p), (h, w), e)?;
        write_pgm(dir.join(format!("gt_{p}.pgm")), gt.data(), e, e)?;
    }
    for o in outcomes {
        let r = &o.result;
        let name = format!("{}_{}_{}.pgm", r.encoder_id, r.pattern, r.input_kind);
        write_pgm(dir.join(name), o.maps.sample(0), e, e)?;
    }
    Ok(())
}

fn encoder_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "encoder".into())
}

pub fn cmd_probe(cfg: &RunConfig, out: &Path) -> Result<()> {
    if cfg.encoders.is_empty() && !cfg.probe_raw_baseline {
        return Err(fail("config", "probe needs encoders = PATH[,PATH] or probe_raw_baseline = true").into());
    }
    let rps: Vec<usize> = if cfg.encoder_rp_layers.is_empty() {
        vec![0; cfg.encoders.len()]
    } else {
        cfg.encoder_rp_layers.clone()
    };
    if rps.len() != cfg.encoders.len() {
        return Err(fail(
            "config",
            format!("{} encoders but {} encoder_rp_layers entries", cfg.encoders.len(), rps.len()),
        )
        .into());
    }
    for p in &cfg.encoders {
        if !p.is_file() {
            return Err(fail("io", format!("encoder checkpoint {} not found", p.display())).into());
        }
    }
    prepare_out_dir(out)?;
    let splits = load_splits(cfg)?;
    let mut subjects = Vec::new();
    for (path, &rp) in cfg.encoders.iter().zip(&rps) {
        subjects.push(ProbeSubject {
            info: EncoderInfo {
                id: encoder_id(path),
                padding: padding_label(rp).into(),
            },
            model: Some(load_model(cfg, &splits, rp, path)?),
        });
    }
    if cfg.probe_raw_baseline {
        subjects.push(raw_subject());
    }
    let outcomes = probe_grid(cfg, &splits, &subjects)?;
    write_csv(&out.join("probe.csv"), CSV_HEADER, &probe_rows(&outcomes))?;
    if cfg.probe_dump_maps {
        dump_maps(cfg, &splits, &outcomes, &out.join("maps"))?;
    }
    write_json(
        &out.join("summary.json"),
        &json!({
            "command": "probe",
            "config": cfg.echo(),
            "rows": outcomes.iter().map(|o| result_json(&o.result)).collect::<Vec<_>>(),
        }),
    )
}

pub fn result_json(r: &randpad_core::probe::ProbeResult) -> Value {
    json!({
        "encoder_id": r.encoder_id,
        "padding": r.padding,
        "pattern": r.pattern.to_string(),
        "input_kind": r.input_kind.to_string(),
        "spc": r.spc,
        "mae": r.mae,
        "seed": r.seed,
    })
}

/// Default output directory when `--out` is not given.
pub fn default_out(command: &str, seed: u64) -> PathBuf {
    PathBuf::from(format!("randpad-out/{command}-seed{seed}"))
}
