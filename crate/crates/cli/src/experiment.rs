//! Desk-scale experiment presets.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Result;
use serde_json::json;

use randpad_core::augment::{AugmentKind, AugmentPipeline};
use randpad_core::datasets::{InputKind, PatternKind};
use randpad_core::nn::{save_checkpoint, Architecture, Model};
use randpad_core::probe::{EncoderInfo, ProbeOutcome, ProbeResult, CSV_HEADER};

use crate::commands::{dump_maps, padding_label, probe_grid, probe_rows, raw_subject, result_json, train_run, ProbeSubject};
use crate::config::{Preset, RunConfig};
use crate::data::{load_splits, Splits};
use crate::failure::fail;
use crate::report::{fmt6, mean_std, prepare_out_dir, write_csv, write_json};

pub const CELLS_HEADER: &str = "preset,arch,rp_layers,augment,seed,test_error";
pub const AGGREGATE_HEADER: &str = "arch,rp_layers,augment,mean_test_error,std_test_error,seeds";
pub const ENCODERS_HEADER: &str = "encoder_id,arch,rp_layers,seed,test_error";

/// Augmentation combinations swept by `table3-desk`.
pub const TABLE3_COMBOS: [&[AugmentKind]; 9] = {
    use AugmentKind::*;
    [&[], &[Rc], &[Rr], &[Rf], &[Re], &[Rf, Re], &[Rc, Re], &[Rc, Rf], &[Rc, Rf, Re]]
};
pub const TABLE3_RP_LAYERS: [usize; 2] = [0, 2];

fn augment_label(p: &AugmentPipeline) -> String {
    if p.is_empty() {
        "none".into()
    } else {
        p.kinds().iter().map(|k| k.tag()).collect::<Vec<_>>().join("+")
    }
}

/// One training run of a sweep.
#[derive(Clone, Debug)]
pub struct Cell {
    pub cfg: RunConfig,
}

impl Cell {
    pub fn name(&self) -> String {
        format!(
            "{}-rp{}-{}-s{}",
            self.cfg.arch,
            self.cfg.rp_layers,
            augment_label(&self.cfg.augment),
            self.cfg.seed
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellResult {
    pub arch: Architecture,
    pub rp_layers: usize,
    pub augment: String,
    pub seed: u64,
    pub test_error: f64,
}

fn seeded(cfg: &RunConfig, s: usize) -> RunConfig {
    RunConfig {
        seed: cfg.seed + s as u64,
        ..cfg.clone()
    }
}

/// `rp_layers` 0..=3 (capped by what each architecture allows) per architecture.
pub fn table2_cells(cfg: &RunConfig) -> Vec<Cell> {
    let mut cells = Vec::new();
    for &arch in &cfg.archs {
        for k in 0..=arch.max_rp_layers().min(3) {
            for s in 0..cfg.seeds {
                cells.push(Cell {
                    cfg: RunConfig {
                        arch,
                        rp_layers: k,
                        ..seeded(cfg, s)
                    },
                });
            }
        }
    }
    cells
}

/// Nine augmentation combinations, each without and with Random Padding on
/// the first two sites, on `vgg-lite`.
pub fn table3_cells(cfg: &RunConfig) -> Vec<Cell> {
    let mut cells = Vec::new();
    for combo in TABLE3_COMBOS {
        for k in TABLE3_RP_LAYERS {
            for s in 0..cfg.seeds {
                cells.push(Cell {
                    cfg: RunConfig {
                        arch: Architecture::VggLite,
                        rp_layers: k,
                        augment: AugmentPipeline::new(combo),
                        ..seeded(cfg, s)
                    },
                });
            }
        }
    }
    cells
}

/// Trains every cell (in parallel when enabled); results keep cell order.
pub fn run_cells(cells: &[Cell], splits: &Splits) -> Result<Vec<(CellResult, Model)>> {
    crate::par_map(cells, |cell| {
        let run = train_run(&cell.cfg, splits, &cell.name(), false)?;
        Ok((
            CellResult {
                arch: cell.cfg.arch,
                rp_layers: cell.cfg.rp_layers,
                augment: augment_label(&cell.cfg.augment),
                seed: cell.cfg.seed,
                test_error: run.test_error,
            },
            run.model,
        ))
    })
    .into_iter()
    .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub arch: Architecture,
    pub rp_layers: usize,
    pub augment: String,
    pub mean: f64,
    pub std: f64,
    pub errors: Vec<f64>,
}

/// Groups results by `(arch, rp_layers, augment)` in first-seen order.
pub fn aggregate(results: &[CellResult]) -> Vec<Aggregate> {
    let mut out: Vec<Aggregate> = Vec::new();
    for r in results {
        match out
            .iter_mut()
            .find(|a| a.arch == r.arch && a.rp_layers == r.rp_layers && a.augment == r.augment)
        {
            Some(a) => a.errors.push(r.test_error),
            None => out.push(Aggregate {
                arch: r.arch,
                rp_layers: r.rp_layers,
                augment: r.augment.clone(),
                mean: 0.0,
                std: 0.0,
                errors: vec![r.test_error],
            }),
        }
    }
    for a in &mut out {
        (a.mean, a.std) = mean_std(&a.errors);
    }
    out
}

fn write_sweep(preset: Preset, cfg: &RunConfig, results: &[(CellResult, Model)], cells: &[Cell], out: &Path) -> Result<()> {
    let ckpt = out.join("checkpoints");
    std::fs::create_dir_all(&ckpt)?;
    for (cell, (_, model)) in cells.iter().zip(results) {
        save_checkpoint(ckpt.join(format!("{}.rplb", cell.name())), model)?;
    }
    let plain: Vec<CellResult> = results.iter().map(|(r, _)| r.clone()).collect();
    let rows: Vec<String> = plain
        .iter()
        .map(|r| format!("{},{},{},{},{},{}", preset.name(), r.arch, r.rp_layers, r.augment, r.seed, fmt6(r.test_error)))
        .collect();
    write_csv(&out.join("cells.csv"), CELLS_HEADER, &rows)?;
    let aggs = aggregate(&plain);
    let agg_rows: Vec<String> = aggs
        .iter()
        .map(|a| format!("{},{},{},{},{},{}", a.arch, a.rp_layers, a.augment, fmt6(a.mean), fmt6(a.std), a.errors.len()))
        .collect();
    write_csv(&out.join("summary.csv"), AGGREGATE_HEADER, &agg_rows)?;
    write_json(
        &out.join("summary.json"),
        &json!({
            "command": "experiment",
            "preset": preset.name(),
            "scale": "desk",
            "config": cfg.echo(),
            "cells": plain.iter().map(|r| json!({
                "arch": r.arch.to_string(),
                "rp_layers": r.rp_layers,
                "augment": r.augment,
                "seed": r.seed,
                "test_error": r.test_error,
            })).collect::<Vec<_>>(),
            "aggregates": aggs.iter().map(|a| json!({
                "arch": a.arch.to_string(),
                "rp_layers": a.rp_layers,
                "augment": a.augment,
                "mean_test_error": a.mean,
                "std_test_error": a.std,
                "test_errors": a.errors,
            })).collect::<Vec<_>>(),
        }),
    )
}

#[derive(Clone, Debug)]
pub struct TrainedEncoder {
    pub id: String,
    pub rp_layers: usize,
    pub seed: u64,
    pub test_error: f64,
    pub model: Model,
}

#[derive(Clone, Debug)]
pub struct Table1Report {
    pub encoders: Vec<TrainedEncoder>,
    pub outcomes: Vec<ProbeOutcome>,
}

/// Mean SPC over natural-image rows of the horizontal and vertical gradients.
pub fn natural_gradient_spc(rows: &[ProbeResult], padding: &str) -> Option<f64> {
    let v: Vec<f64> = rows
        .iter()
        .filter(|r| r.padding == padding && r.input_kind == InputKind::Natural)
        .filter(|r| matches!(r.pattern, PatternKind::Hg | PatternKind::Vg))
        .map(|r| r.spc)
        .collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

impl Table1Report {
    pub fn results(&self) -> Vec<ProbeResult> {
        self.outcomes.iter().map(|o| o.result.clone()).collect()
    }
}

/// Per seed: trains a traditional and a Random Padding `vgg-lite` encoder
/// identically, then probes both and the raw-image readout.
pub fn run_table1(cfg: &RunConfig, splits: &Splits) -> Result<Table1Report> {
    if cfg.rp_encoder_layers == 0 {
        return Err(fail("config", "rp_encoder_layers must be at least 1 for table1-desk").into());
    }
    let mut jobs = Vec::new();
    for s in 0..cfg.seeds {
        for k in [0, cfg.rp_encoder_layers] {
            jobs.push(RunConfig {
                arch: Architecture::VggLite,
                rp_layers: k,
                ..seeded(cfg, s)
            });
        }
    }
    let trained: Vec<TrainedEncoder> = crate::par_map(&jobs, |c| {
        let id = format!("{}-rp{}-s{}", c.arch, c.rp_layers, c.seed);
        let run = train_run(c, splits, &id, false)?;
        Ok(TrainedEncoder {
            id,
            rp_layers: c.rp_layers,
            seed: c.seed,
            test_error: run.test_error,
            model: run.model,
        })
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let mut outcomes = Vec::new();
    for s in 0..cfg.seeds {
        let scfg = seeded(cfg, s);
        let mut subjects: Vec<ProbeSubject> = trained
            .iter()
            .filter(|e| e.seed == scfg.seed)
            .map(|e| ProbeSubject {
                info: EncoderInfo {
                    id: e.id.clone(),
                    padding: padding_label(e.rp_layers).into(),
                },
                model: Some(e.model.clone()),
            })
            .collect();
        subjects.push(raw_subject());
        outcomes.extend(probe_grid(&scfg, splits, &subjects)?);
    }
    Ok(Table1Report {
        encoders: trained,
        outcomes,
    })
}

fn write_table1(cfg: &RunConfig, splits: &Splits, report: &Table1Report, out: &Path) -> Result<()> {
    let enc_dir = out.join("encoders");
    std::fs::create_dir_all(&enc_dir)?;
    let mut rows = Vec::new();
    for e in &report.encoders {
        save_checkpoint(enc_dir.join(format!("{}.rplb", e.id)), &e.model)?;
        rows.push(format!("{},vgg-lite,{},{},{}", e.id, e.rp_layers, e.seed, fmt6(e.test_error)));
    }
    write_csv(&out.join("encoders.csv"), ENCODERS_HEADER, &rows)?;
    write_csv(&out.join("probe.csv"), CSV_HEADER, &probe_rows(&report.outcomes))?;
    if cfg.probe_dump_maps {
        dump_maps(cfg, splits, &report.outcomes, &out.join("maps"))?;
    }
    let results = report.results();
    let mut cells: BTreeMap<(String, String, String), Vec<(f64, f64)>> = BTreeMap::new();
    for r in &results {
        cells
            .entry((r.padding.clone(), r.pattern.to_string(), r.input_kind.to_string()))
            .or_default()
            .push((r.spc, r.mae));
    }
    let means: Vec<_> = cells
        .iter()
        .map(|((padding, pattern, input), v)| {
            let spc: Vec<f64> = v.iter().map(|x| x.0).collect();
            let mae: Vec<f64> = v.iter().map(|x| x.1).collect();
            json!({
                "padding": padding,
                "pattern": pattern,
                "input_kind": input,
                "mean_spc": mean_std(&spc).0,
                "mean_mae": mean_std(&mae).0,
                "seeds": v.len(),
            })
        })
        .collect();
    let trad = natural_gradient_spc(&results, "traditional");
    let rand = natural_gradient_spc(&results, "random");
    let raw = natural_gradient_spc(&results, "none");
    write_json(
        &out.join("summary.json"),
        &json!({
            "command": "experiment",
            "preset": "table1-desk",
            "scale": "desk",
            "config": cfg.echo(),
            "encoders": report.encoders.iter().map(|e| json!({
                "encoder_id": e.id,
                "rp_layers": e.rp_layers,
                "seed": e.seed,
                "test_error": e.test_error,
            })).collect::<Vec<_>>(),
            "rows": results.iter().map(result_json).collect::<Vec<_>>(),
            "means": means,
            "natural_gradient_spc": {
                "traditional": trad,
                "random": rand,
                "raw": raw,
                "gap": trad.zip(rand).map(|(t, r)| t - r),
            },
        }),
    )
}

pub fn cmd_experiment(cfg: &RunConfig, out: &Path) -> Result<()> {
    let preset = cfg
        .preset
        .ok_or_else(|| fail("config", "experiment needs preset = table1-desk | table2-desk | table3-desk"))?;
    if cfg.seeds == 0 {
        return Err(fail("config", "seeds must be at least 1").into());
    }
    prepare_out_dir(out)?;
    let started = std::time::Instant::now();
    let splits = load_splits(cfg)?;
    match preset {
        Preset::Table1Desk => {
            let report = run_table1(cfg, &splits)?;
            write_table1(cfg, &splits, &report, out)?;
        }
        Preset::Table2Desk | Preset::Table3Desk => {
            let cells = if preset == Preset::Table2Desk {
                table2_cells(cfg)
            } else {
                table3_cells(cfg)
            };
            let results = run_cells(&cells, &splits)?;
            write_sweep(preset, cfg, &results, &cells, out)?;
        }
    }
    crate::report::write_text(
        &out.join("timing.txt"),
        &format!("wall_seconds {:.3}\n", started.elapsed().as_secs_f64()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table3_has_eighteen_cells_per_seed() {
        let cfg = RunConfig {
            seeds: 1,
            ..RunConfig::default()
        };
        let cells = table3_cells(&cfg);
        assert_eq!(cells.len(), 18);
        assert!(cells.iter().all(|c| c.cfg.arch == Architecture::VggLite));
        let names: std::collections::BTreeSet<String> = cells.iter().map(Cell::name).collect();
        assert_eq!(names.len(), 18);
        assert!(names.contains("vgg-lite-rp2-rc+rf+re-s0"));
    }

    #[test]
    fn table2_caps_rp_layers_per_architecture() {
        let cfg = RunConfig {
            seeds: 2,
            ..RunConfig::default()
        };
        let cells = table2_cells(&cfg);
        let count = |a| cells.iter().filter(|c| c.cfg.arch == a).count();
        assert_eq!(count(Architecture::CnnLite), 3 * 2);
        assert_eq!(count(Architecture::VggLite), 4 * 2);
        assert_eq!(count(Architecture::ResnetLite), 2 * 2);
    }

    #[test]
    fn aggregate_groups_in_order() {
        let r = |k, seed, e| CellResult {
            arch: Architecture::CnnLite,
            rp_layers: k,
            augment: "none".into(),
            seed,
            test_error: e,
        };
        let aggs = aggregate(&[r(0, 0, 0.2), r(2, 0, 0.1), r(0, 1, 0.4)]);
        assert_eq!(aggs.len(), 2);
        assert_eq!(aggs[0].errors, vec![0.2, 0.4]);
        assert!((aggs[0].mean - 0.3).abs() < 1e-12);
    }
}
