//! The `eval` command: embedding-quality and alignment metrics over a data directory.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use vta_core::aligner::align_pair;
use vta_core::export::write_json;
use vta_core::metrics::{
    alignment_accuracy, kendalls_tau, phase_classification, phase_progression, AccuracyReport,
    LabeledSequence,
};
use vta_core::trainer::ToyEncoder;
use vta_core::EmbeddingSequence;

use crate::commands::{create_dir, load_pairs, write_text, CliResult, Converged};
use crate::config::RunConfig;

pub const NON_MONOTONIC_NOTE: &str = "not meaningful for non-monotonic data";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TauReport {
    pub mean: f64,
    pub per_pair: Vec<f64>,
    /// Set when the ground truth contains reordered actions.
    pub note: Option<String>,
}

/// `value` or the reason it could not be computed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Measured {
    pub value: Option<f64>,
    pub error: Option<String>,
}

impl Measured {
    fn from(r: vta_core::Result<f64>) -> Self {
        match r {
            Ok(v) => Measured {
                value: Some(v),
                error: None,
            },
            Err(e) => Measured {
                value: None,
                error: Some(e.to_string()),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FractionAccuracy {
    pub fraction: f64,
    pub accuracy: Measured,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub pairs: usize,
    pub encoder: String,
    pub kendalls_tau: TauReport,
    pub phase_classification: Option<Vec<FractionAccuracy>>,
    pub phase_progression_r2: Option<Measured>,
    pub alignment: Option<AccuracyReport>,
    pub converged: bool,
}

impl EvalReport {
    pub fn table(&self) -> String {
        let mut out = String::new();
        let mut row = |name: &str, value: String| {
            let _ = writeln!(out, "{name:<32} {value}");
        };
        let show = |m: &Measured| match m.value {
            Some(v) => format!("{v:.4}"),
            None => "n/a".to_string(),
        };
        row("pairs", self.pairs.to_string());
        row("encoder", self.encoder.clone());
        let note = self.kendalls_tau.note.as_deref().map(|n| format!(" ({n})")).unwrap_or_default();
        row("kendalls_tau", format!("{:.4}{note}", self.kendalls_tau.mean));
        for f in self.phase_classification.iter().flatten() {
            row(&format!("phase_classification@{}", f.fraction), show(&f.accuracy));
        }
        if let Some(p) = &self.phase_progression_r2 {
            row("phase_progression_r2", show(p));
        }
        if let Some(a) = &self.alignment {
            row("alignment_accuracy", format!("{:.4}", a.accuracy));
            row("virtual_precision", format!("{:.4}", a.virtual_precision));
            row("virtual_recall", format!("{:.4}", a.virtual_recall));
        }
        row("converged", self.converged.to_string());
        out
    }
}

struct PairResult {
    tau: f64,
    converged: bool,
    accuracy: Option<AccuracyReport>,
    labeled: Option<(LabeledSequence, LabeledSequence)>,
}

fn embed(encoder: Option<&ToyEncoder>, seq: &EmbeddingSequence) -> vta_core::Result<EmbeddingSequence> {
    match encoder {
        Some(e) => e.forward(seq),
        None => Ok(seq.clone()),
    }
}

/// Evaluates every pair in `data`; without ground truth only Kendall's tau is computed.
pub fn evaluate(cfg: &RunConfig, data: &Path, encoder: Option<&ToyEncoder>) -> CliResult<EvalReport> {
    let pairs = load_pairs(data)?;
    let labeled = pairs.iter().all(|p| p.truth.is_some());
    let results: Vec<PairResult> = pairs
        .par_iter()
        .map(|p| -> CliResult<PairResult> {
            let x = embed(encoder, &p.x)?;
            let y = embed(encoder, &p.y)?;
            let tau = kendalls_tau(&x, &y)?;
            log::debug!("{}: tau {tau:.4}", p.stem);
            let mut out = PairResult {
                tau,
                converged: true,
                accuracy: None,
                labeled: None,
            };
            if let (true, Some(truth)) = (labeled, &p.truth) {
                let (alignment, plan) = align_pair(&x, &y, &cfg.hp)?;
                out.converged = plan.converged();
                out.accuracy = Some(alignment_accuracy(&alignment, truth)?);
                out.labeled = Some(LabeledSequence::pair_from_truth(x, y, truth)?);
            }
            Ok(out)
        })
        .collect::<CliResult<_>>()?;

    let per_pair: Vec<f64> = results.iter().map(|r| r.tau).collect();
    let reordered = pairs
        .iter()
        .any(|p| p.truth.as_ref().is_some_and(|t| !t.swaps.is_empty()));
    let kendalls_tau = TauReport {
        mean: per_pair.iter().sum::<f64>() / per_pair.len() as f64,
        per_pair,
        note: reordered.then(|| NON_MONOTONIC_NOTE.to_string()),
    };
    let mut report = EvalReport {
        pairs: pairs.len(),
        encoder: if encoder.is_some() { "toy".into() } else { "identity".into() },
        kendalls_tau,
        phase_classification: None,
        phase_progression_r2: None,
        alignment: None,
        converged: results.iter().all(|r| r.converged),
    };
    if labeled {
        let accuracies: Vec<AccuracyReport> = results.iter().filter_map(|r| r.accuracy).collect();
        report.alignment = Some(AccuracyReport::pooled(&accuracies));
        // x sequences train the probes, y sequences are scored.
        let seqs: Vec<LabeledSequence> = results
            .into_iter()
            .flat_map(|r| {
                let (x, y) = r.labeled.expect("labeled pair");
                [x, y]
            })
            .collect();
        let train: Vec<LabeledSequence> = seqs.iter().step_by(2).cloned().collect();
        let test: Vec<LabeledSequence> = seqs.iter().skip(1).step_by(2).cloned().collect();
        report.phase_classification = Some(
            cfg.fractions
                .iter()
                .map(|&fraction| FractionAccuracy {
                    fraction,
                    accuracy: Measured::from(phase_classification(&train, &test, fraction, cfg.seed)),
                })
                .collect(),
        );
        report.phase_progression_r2 = Some(Measured::from(phase_progression(&seqs)));
    }
    Ok(report)
}

/// Writes `metrics.json` and prints the report as JSON and as a table.
pub fn eval(cfg: &RunConfig, data: &Path, encoder_file: Option<&Path>, out: &Path) -> CliResult<Converged> {
    let encoder = encoder_file.map(ToyEncoder::load).transpose()?;
    let report = evaluate(cfg, data, encoder.as_ref())?;
    create_dir(out)?;
    write_json(out.join("metrics.json"), &report)?;
    write_text(&out.join("config.txt"), &cfg.to_text())?;
    println!("{}", serde_json::to_string_pretty(&report).map_err(vta_core::Error::from)?);
    print!("{}", report.table());
    Ok(report.converged)
}
