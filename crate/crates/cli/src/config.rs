//! Flat `key = value` run configuration.
//!
//! One file covers the alignment hyperparameters, the trainer and the
//! synthetic generator. `#` starts a comment. Unknown keys are rejected and
//! every value is validated after loading. When `scenario` is set, the
//! generator starts from that preset and the other generator keys override it,
//! no matter where `scenario` appears.

use std::fs;
use std::path::Path;

use vta_core::synthgen::{scenario, FrameRange, SynthConfig};
use vta_core::trainer::TrainConfig;
use vta_core::{Error, Hyperparams};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Single source of all randomness.
    pub seed: u64,
    pub hp: Hyperparams,
    pub learning_rate: f64,
    pub steps: usize,
    pub batch_pairs: usize,
    pub embed_dim: usize,
    pub hidden_dim: Option<usize>,
    pub adaptive_step: bool,
    pub scenario: Option<String>,
    /// Generator settings; the per-pair seed is derived from `seed`.
    pub synth: SynthConfig,
    pub pairs: usize,
    /// All pairs of a run share action anchors drawn from `seed`.
    pub shared_anchors: bool,
    pub fractions: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        Self {
            seed: 0,
            hp: Hyperparams::default(),
            learning_rate: train.learning_rate,
            steps: train.steps,
            batch_pairs: train.batch_pairs,
            embed_dim: train.embed_dim,
            hidden_dim: train.hidden_dim,
            adaptive_step: train.adaptive_step,
            scenario: None,
            synth: SynthConfig::default(),
            pairs: 10,
            shared_anchors: true,
            fractions: vec![0.1, 0.5, 1.0],
        }
    }
}

fn bad(key: &str, value: &str, why: impl std::fmt::Display) -> Error {
    Error::Config(format!("{key} = {value:?}: {why}"))
}

fn num<V: std::str::FromStr>(key: &str, value: &str) -> Result<V, Error>
where
    V::Err: std::fmt::Display,
{
    value.parse().map_err(|e| bad(key, value, e))
}

fn optional(value: &str) -> Option<&str> {
    match value {
        "" | "none" => None,
        v => Some(v),
    }
}

impl RunConfig {
    /// Builds a configuration from ordered assignments; later ones win.
    pub fn from_assignments<'a, I>(assignments: I) -> Result<Self, Error>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let assignments: Vec<(&str, &str)> = assignments.into_iter().collect();
        let mut cfg = RunConfig::default();
        if let Some((_, v)) = assignments.iter().rev().find(|(k, _)| *k == "scenario") {
            if let Some(name) = optional(v) {
                cfg.synth = scenario(name, 0)?;
                cfg.scenario = Some(name.to_string());
            }
        }
        for (k, v) in assignments.iter().filter(|(k, _)| *k != "scenario") {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self, Error> {
        let mut assignments = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: origin.to_string(),
                message: format!("line {}: expected key = value", n + 1),
            })?;
            assignments.push((k.trim(), v.trim()));
        }
        Self::from_assignments(assignments)
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), Error> {
        let hp = &mut self.hp;
        let s = &mut self.synth;
        match key {
            "seed" => self.seed = num(key, value)?,
            "upsilon" => hp.upsilon = num(key, value)?,
            "sigma" => hp.sigma = num(key, value)?,
            "psi_start" => hp.psi_start = num(key, value)?,
            "psi_end" => hp.psi_end = num(key, value)?,
            "psi_decay_steps" => hp.psi_decay_steps = num(key, value)?,
            "lambda1" => hp.lambda1 = num(key, value)?,
            "lambda2" => hp.lambda2 = num(key, value)?,
            "lambda3" => hp.lambda3 = num(key, value)?,
            "delta" => hp.delta = num(key, value)?,
            "zeta" => hp.zeta = num(key, value)?,
            "gamma" => hp.gamma = num(key, value)?,
            "rho" => hp.rho = num(key, value)?,
            "virtual_cost_factor" => hp.virtual_cost_factor = num(key, value)?,
            "sinkhorn_max_iter" => hp.sinkhorn_max_iter = num(key, value)?,
            "sinkhorn_tol" => hp.sinkhorn_tol = num(key, value)?,
            "learning_rate" => self.learning_rate = num(key, value)?,
            "steps" => self.steps = num(key, value)?,
            "batch_pairs" => self.batch_pairs = num(key, value)?,
            "embed_dim" => self.embed_dim = num(key, value)?,
            "hidden_dim" => {
                self.hidden_dim = optional(value).map(|v| num(key, v)).transpose()?
            }
            "adaptive_step" => self.adaptive_step = num(key, value)?,
            "num_actions" => s.num_actions = num(key, value)?,
            "frames_min" => s.frames_per_action.min = num(key, value)?,
            "frames_max" => s.frames_per_action.max = num(key, value)?,
            "synth_embed_dim" => s.embed_dim = num(key, value)?,
            "noise_std" => s.noise_std = num(key, value)?,
            "background_rate" => s.background_rate = num(key, value)?,
            "redundant_rate" => s.redundant_rate = num(key, value)?,
            "nonmonotonic_rate" => s.nonmonotonic_rate = num(key, value)?,
            "speed_ratio" => s.speed_ratio = num(key, value)?,
            "offset_frames" => s.offset_frames = num(key, value)?,
            "drift" => s.drift = num(key, value)?,
            "nuisance_dims" => s.nuisance_dims = num(key, value)?,
            "nuisance_std" => s.nuisance_std = num(key, value)?,
            "pairs" => self.pairs = num(key, value)?,
            "shared_anchors" => self.shared_anchors = num(key, value)?,
            "fractions" => {
                self.fractions = value
                    .split(',')
                    .map(|f| num(key, f.trim()))
                    .collect::<Result<_, _>>()?
            }
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), Error> {
        self.train_config().validate()?;
        self.synth.validate()?;
        if self.pairs == 0 {
            return Err(Error::Config("pairs must be at least 1".into()));
        }
        if self.fractions.is_empty() || self.fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
            return Err(Error::Config("fractions must be a nonempty list in (0, 1]".into()));
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            steps: self.steps,
            batch_pairs: self.batch_pairs,
            hp: self.hp,
            seed: self.seed,
            embed_dim: self.embed_dim,
            hidden_dim: self.hidden_dim,
            adaptive_step: self.adaptive_step,
        }
    }

    /// Generator settings for the `k`-th pair of a run.
    pub fn pair_config(&self, k: usize) -> SynthConfig {
        SynthConfig {
            seed: self.seed.wrapping_mul(1000).wrapping_add(k as u64),
            anchor_seed: self.shared_anchors.then_some(self.seed),
            ..self.synth.clone()
        }
    }

    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let hp = &self.hp;
        let s = &self.synth;
        let FrameRange { min, max } = s.frames_per_action;
        let opt = |v: Option<String>| v.unwrap_or_else(|| "none".into());
        let fractions: Vec<String> = self.fractions.iter().map(f64::to_string).collect();
        vec![
            ("seed", self.seed.to_string()),
            ("upsilon", hp.upsilon.to_string()),
            ("sigma", hp.sigma.to_string()),
            ("psi_start", hp.psi_start.to_string()),
            ("psi_end", hp.psi_end.to_string()),
            ("psi_decay_steps", hp.psi_decay_steps.to_string()),
            ("lambda1", hp.lambda1.to_string()),
            ("lambda2", hp.lambda2.to_string()),
            ("lambda3", hp.lambda3.to_string()),
            ("delta", hp.delta.to_string()),
            ("zeta", hp.zeta.to_string()),
            ("gamma", hp.gamma.to_string()),
            ("rho", hp.rho.to_string()),
            ("virtual_cost_factor", hp.virtual_cost_factor.to_string()),
            ("sinkhorn_max_iter", hp.sinkhorn_max_iter.to_string()),
            ("sinkhorn_tol", hp.sinkhorn_tol.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("steps", self.steps.to_string()),
            ("batch_pairs", self.batch_pairs.to_string()),
            ("embed_dim", self.embed_dim.to_string()),
            ("hidden_dim", opt(self.hidden_dim.map(|h| h.to_string()))),
            ("adaptive_step", self.adaptive_step.to_string()),
            ("scenario", opt(self.scenario.clone())),
            ("num_actions", s.num_actions.to_string()),
            ("frames_min", min.to_string()),
            ("frames_max", max.to_string()),
            ("synth_embed_dim", s.embed_dim.to_string()),
            ("noise_std", s.noise_std.to_string()),
            ("background_rate", s.background_rate.to_string()),
            ("redundant_rate", s.redundant_rate.to_string()),
            ("nonmonotonic_rate", s.nonmonotonic_rate.to_string()),
            ("speed_ratio", s.speed_ratio.to_string()),
            ("offset_frames", s.offset_frames.to_string()),
            ("drift", s.drift.to_string()),
            ("nuisance_dims", s.nuisance_dims.to_string()),
            ("nuisance_std", s.nuisance_std.to_string()),
            ("pairs", self.pairs.to_string()),
            ("shared_anchors", self.shared_anchors.to_string()),
            ("fractions", fractions.join(",")),
        ]
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# effective vta configuration\n");
        for (k, v) in self.entries() {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }
}
