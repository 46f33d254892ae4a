use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use vta_core::aligner::align_pair;
use vta_core::export::{write_grid_csv, write_json, write_pgm};
use vta_core::priors::psi_at;
use vta_core::seqcore::read_embedding_file;
use vta_core::synthgen::{generate_pair, read_truth, write_pair, GroundTruthAlignment};
use vta_core::trainer::{self, loss_curve_csv, RawPair};
use vta_core::vavaloss::loss_with_plan;
use vta_core::{EmbeddingSequence, Error, LossBreakdown};

use crate::config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),

    #[error("no sequence pairs (<stem>_x.csv / <stem>_y.csv) found in {0}")]
    NoPairs(String),
}

impl CliError {
    /// 2 for unreadable or invalid input and configuration, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::NoPairs(_) => 2,
            CliError::Core(e) => match e {
                Error::Parse { .. }
                | Error::Io { .. }
                | Error::Config(_)
                | Error::Param(_)
                | Error::Dimension(_)
                | Error::NonFinite { .. }
                | Error::EmptySequence
                | Error::Json(_) => 2,
                _ => 1,
            },
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Whether every transport problem of a command converged.
pub type Converged = bool;

pub(crate) fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.display().to_string(),
        source: e,
    })?;
    Ok(())
}

pub(crate) fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(())
}

fn write_config(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    write_text(&out.join("config.txt"), &cfg.to_text())
}

#[derive(Debug, Serialize)]
struct AlignLoss {
    converged: bool,
    sinkhorn_iterations: usize,
    marginal_violation: f64,
    psi: f64,
    loss: LossBreakdown,
}

pub fn align(cfg: &RunConfig, x_path: &Path, y_path: &Path, out: &Path) -> CliResult<Converged> {
    let x: EmbeddingSequence = read_embedding_file(x_path)?;
    let y: EmbeddingSequence = read_embedding_file(y_path)?;
    let (alignment, plan) = align_pair(&x, &y, &cfg.hp)?;
    let psi = psi_at(&cfg.hp.psi_schedule(), cfg.hp.psi_decay_steps);
    let loss = loss_with_plan(&x, &y, &plan, &cfg.hp, psi)?;
    let report = AlignLoss {
        converged: plan.converged(),
        sinkhorn_iterations: plan.iterations(),
        marginal_violation: plan.marginal_violation(),
        psi,
        loss,
    };
    let (vx, vy) = alignment.virtual_count();
    log::info!(
        "aligned {} x {} frames, {vx} + {vy} virtual, total loss {:.6}",
        x.len(),
        y.len(),
        loss.total
    );

    create_dir(out)?;
    write_json(out.join("alignment.json"), &alignment)?;
    write_grid_csv(out.join("plan.csv"), plan.entries())?;
    write_pgm(out.join("plan.pgm"), plan.entries())?;
    write_json(out.join("loss.json"), &report)?;
    write_config(cfg, out)?;
    Ok(report.converged)
}

pub fn synth(cfg: &RunConfig, out: &Path) -> CliResult<Converged> {
    let pairs: Vec<_> = (0..cfg.pairs)
        .into_par_iter()
        .map(|k| generate_pair(&cfg.pair_config(k)))
        .collect::<Result<_, _>>()?;
    create_dir(out)?;
    for (k, (x, y, truth)) in pairs.iter().enumerate() {
        write_pair(out, &format!("pair_{k:03}"), x, y, truth)?;
    }
    log::info!("wrote {} pairs to {}", pairs.len(), out.display());
    write_config(cfg, out)?;
    Ok(true)
}

pub fn train(cfg: &RunConfig, data: &Path, out: &Path) -> CliResult<Converged> {
    let raw: Vec<RawPair> = load_pairs(data)?.into_iter().map(|p| (p.x, p.y)).collect();
    log::info!("training on {} pairs for {} steps", raw.len(), cfg.steps);
    let outcome = trainer::train(&raw, &cfg.train_config())?;
    if let (Some(first), Some(last)) = (outcome.curve.first(), outcome.curve.last()) {
        log::info!("mean total loss {:.6} -> {:.6}", first.total, last.total);
    }
    create_dir(out)?;
    outcome.encoder.save(out.join("encoder.json"))?;
    write_text(&out.join("loss.csv"), &loss_curve_csv(&outcome.curve))?;
    write_config(cfg, out)?;
    Ok(true)
}

/// One sequence pair from a data directory.
pub struct LoadedPair {
    pub stem: String,
    pub x: EmbeddingSequence,
    pub y: EmbeddingSequence,
    pub truth: Option<GroundTruthAlignment>,
}

fn sibling(dir: &Path, stem: &str, side: &str) -> Option<PathBuf> {
    ["csv", "json"]
        .iter()
        .map(|ext| dir.join(format!("{stem}_{side}.{ext}")))
        .find(|p| p.is_file())
}

/// Pairs `<stem>_x.{csv,json}` / `<stem>_y.{csv,json}` with an optional
/// `<stem>_truth.json`, sorted by stem.
pub fn load_pairs(dir: &Path) -> CliResult<Vec<LoadedPair>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::Io {
        path: dir.display().to_string(),
        source: e,
    })?;
    let mut stems: Vec<String> = entries
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter_map(|name| {
            name.strip_suffix("_x.csv")
                .or_else(|| name.strip_suffix("_x.json"))
                .map(str::to_string)
        })
        .collect();
    stems.sort();
    stems.dedup();
    if stems.is_empty() {
        return Err(CliError::NoPairs(dir.display().to_string()));
    }
    stems
        .into_iter()
        .map(|stem| {
            let x_path = sibling(dir, &stem, "x").expect("listed above");
            let y_path = sibling(dir, &stem, "y").ok_or_else(|| Error::Parse {
                path: dir.join(format!("{stem}_y.csv")).display().to_string(),
                message: "missing partner sequence".into(),
            })?;
            let truth_path = dir.join(format!("{stem}_truth.json"));
            let truth = if truth_path.is_file() {
                Some(read_truth(&truth_path)?)
            } else {
                None
            };
            Ok(LoadedPair {
                x: read_embedding_file(&x_path)?,
                y: read_embedding_file(&y_path)?,
                stem,
                truth,
            })
        })
        .collect()
}
