//! Command-line harness: run configuration, dataset plumbing, commands,
//! experiment presets and report writers.

pub mod commands;
pub mod config;
pub mod data;
pub mod experiment;
pub mod failure;
pub mod report;

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use config::RunConfig;
use failure::fail;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Train,
    Eval,
    Probe,
    Experiment,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::Eval => "eval",
            Command::Probe => "probe",
            Command::Experiment => "experiment",
        }
    }
}

/// Order-preserving map over independent jobs, parallel when built with `parallel`.
pub fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    #[cfg(feature = "parallel")]
    {
        if randpad_core::exec::is_parallel() {
            use rayon::prelude::*;
            return items.par_iter().map(f).collect();
        }
    }
    items.iter().map(f).collect()
}

/// Reads the config file, then applies overrides in order, then `--seed`.
pub fn resolve_config(path: &Path, overrides: &[String], seed: Option<u64>) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| fail("io", format!("cannot read config {}: {e}", path.display())))?;
    let mut cfg = RunConfig::parse_text(&text).with_context(|| format!("in {}", path.display()))?;
    for o in overrides {
        cfg.apply_override(o)?;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

pub fn run(command: Command, cfg: &RunConfig, out: Option<PathBuf>) -> Result<PathBuf> {
    let out = out.unwrap_or_else(|| commands::default_out(command.name(), cfg.seed));
    match command {
        Command::Train => commands::cmd_train(cfg, &out)?,
        Command::Eval => commands::cmd_eval(cfg, &out)?,
        Command::Probe => commands::cmd_probe(cfg, &out)?,
        Command::Experiment => experiment::cmd_experiment(cfg, &out)?,
    }
    Ok(out)
}
