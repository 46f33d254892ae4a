//! `vta`: align, generate, train and evaluate from the command line.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 unreadable or invalid input or
//! configuration, 3 a transport problem did not converge (outputs are still
//! written).

mod commands;
mod config;
mod eval;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::CliResult;
use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "vta", version, about = "Variation-aware temporal alignment of embedding sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Align two embedding files.
    Align {
        x: PathBuf,
        y: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Generate synthetic sequence pairs with ground truth.
    Synth {
        #[arg(long, short)]
        out: PathBuf,
        /// Start the generator from a named scenario preset.
        #[arg(long)]
        scenario: Option<String>,
        /// Number of pairs to generate.
        #[arg(long)]
        pairs: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Train a toy encoder on the pairs in a data directory.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate the pairs in a data directory, optionally through an encoder.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        encoder: Option<PathBuf>,
        /// Defaults to the data directory.
        #[arg(long, short)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// Flat key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any configuration key, e.g. `--set noise_std=0.1`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    upsilon: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    zeta: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    #[arg(long)]
    lambda3: Option<f64>,
    #[arg(long)]
    delta: Option<usize>,
    #[arg(long)]
    psi_start: Option<f64>,
    #[arg(long)]
    psi_end: Option<f64>,
    #[arg(long)]
    psi_steps: Option<usize>,
}

impl Common {
    /// File entries first, then `--set`, then named flags.
    fn resolve(&self, extra: &[(&str, Option<String>)]) -> CliResult<RunConfig> {
        let mut owned: Vec<(String, String)> = Vec::new();
        if let Some(path) = &self.config {
            let base = RunConfig::load(path)?;
            owned.extend(base.entries().into_iter().map(|(k, v)| (k.to_string(), v)));
        }
        for s in &self.set {
            let (k, v) = s.split_once('=').ok_or_else(|| {
                vta_core::Error::Config(format!("--set expects KEY=VALUE, got {s:?}"))
            })?;
            owned.push((k.trim().to_string(), v.trim().to_string()));
        }
        let flags = [
            ("seed", self.seed.map(|v| v.to_string())),
            ("upsilon", self.upsilon.map(|v| v.to_string())),
            ("sigma", self.sigma.map(|v| v.to_string())),
            ("zeta", self.zeta.map(|v| v.to_string())),
            ("rho", self.rho.map(|v| v.to_string())),
            ("gamma", self.gamma.map(|v| v.to_string())),
            ("lambda1", self.lambda1.map(|v| v.to_string())),
            ("lambda2", self.lambda2.map(|v| v.to_string())),
            ("lambda3", self.lambda3.map(|v| v.to_string())),
            ("delta", self.delta.map(|v| v.to_string())),
            ("psi_start", self.psi_start.map(|v| v.to_string())),
            ("psi_end", self.psi_end.map(|v| v.to_string())),
            ("psi_decay_steps", self.psi_steps.map(|v| v.to_string())),
        ];
        for (k, v) in flags.iter().chain(extra) {
            if let Some(v) = v {
                owned.push((k.to_string(), v.clone()));
            }
        }
        let cfg = RunConfig::from_assignments(owned.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
        if let Some(jobs) = self.jobs.filter(|&j| j > 0) {
            // Fails only if the pool already exists, which cannot happen here.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> CliResult<bool> {
    match cli.command {
        Command::Align { x, y, out, common } => {
            let cfg = common.resolve(&[])?;
            commands::align(&cfg, &x, &y, &out)
        }
        Command::Synth {
            out,
            scenario,
            pairs,
            common,
        } => {
            let cfg = common.resolve(&[("scenario", scenario), ("pairs", pairs.map(|p| p.to_string()))])?;
            commands::synth(&cfg, &out)
        }
        Command::Train {
            data,
            out,
            steps,
            learning_rate,
            common,
        } => {
            let cfg = common.resolve(&[
                ("steps", steps.map(|s| s.to_string())),
                ("learning_rate", learning_rate.map(|l| l.to_string())),
            ])?;
            commands::train(&cfg, &data, &out)
        }
        Command::Eval {
            data,
            encoder,
            out,
            common,
        } => {
            let cfg = common.resolve(&[])?;
            let out = out.unwrap_or_else(|| data.clone());
            eval::eval(&cfg, &data, encoder.as_deref(), Path::new(&out))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("VTA_LOG", "error"))
        .format_timestamp(None)
        .init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("vta: a transport problem did not converge; outputs were written and flagged");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("vta: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

