//! Synthetic sequence pairs with known temporal variations.
//!
//! Each action has an anchor vector; its frames sit at the anchor plus a drift
//! along a fixed per-action direction (proportional to progress through the
//! action) plus Gaussian noise. The second sequence is derived from the first
//! action order by block swaps, speed changes, a start offset, background
//! insertions and redundant actions. Optional nuisance dimensions of pure noise
//! are appended to every frame.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seqcore::{write_embedding_csv, EmbeddingSequence};

/// Inclusive range of block lengths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRange {
    pub min: usize,
    pub max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_actions: usize,
    pub frames_per_action: FrameRange,
    pub embed_dim: usize,
    pub noise_std: f64,
    pub background_rate: f64,
    pub redundant_rate: f64,
    pub nonmonotonic_rate: f64,
    pub speed_ratio: f64,
    pub offset_frames: usize,
    /// Length of the within-action trajectory.
    pub drift: f64,
    /// Extra dimensions carrying only noise.
    pub nuisance_dims: usize,
    pub nuisance_std: f64,
    pub seed: u64,
    /// When set, action anchors and drift directions come from this seed
    /// instead of `seed`, so pairs generated with different seeds share
    /// the meaning of their action labels.
    #[serde(default)]
    pub anchor_seed: Option<u64>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_actions: 5,
            frames_per_action: FrameRange { min: 6, max: 10 },
            embed_dim: 8,
            noise_std: 0.05,
            background_rate: 0.0,
            redundant_rate: 0.0,
            nonmonotonic_rate: 0.0,
            speed_ratio: 1.0,
            offset_frames: 0,
            drift: 1.5,
            nuisance_dims: 0,
            nuisance_std: 0.0,
            seed: 0,
            anchor_seed: None,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.num_actions == 0 {
            return bad("num_actions must be at least 1".into());
        }
        if self.embed_dim == 0 {
            return bad("embed_dim must be at least 1".into());
        }
        let r = self.frames_per_action;
        if r.min == 0 || r.min > r.max {
            return bad(format!("frames_per_action range {}..={} is invalid", r.min, r.max));
        }
        for (name, v) in [
            ("noise_std", self.noise_std),
            ("drift", self.drift),
            ("nuisance_std", self.nuisance_std),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and nonnegative, got {v}"));
            }
        }
        let rates = [
            ("background_rate", self.background_rate),
            ("redundant_rate", self.redundant_rate),
            ("nonmonotonic_rate", self.nonmonotonic_rate),
        ];
        for (name, v) in rates {
            if !(0.0..1.0).contains(&v) && !(name == "nonmonotonic_rate" && v == 1.0) {
                return bad(format!("{name} must lie in [0, 1), got {v}"));
            }
        }
        if self.background_rate + self.redundant_rate >= 1.0 {
            return bad("background_rate + redundant_rate must be below 1".into());
        }
        if !(self.speed_ratio.is_finite() && self.speed_ratio > 0.0) {
            return bad(format!("speed_ratio must be positive, got {}", self.speed_ratio));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn raw_dim(&self) -> usize {
        self.embed_dim + self.nuisance_dims
    }
}

/// Per-frame truth for a generated pair. Partners are 0-based, `None` marks
/// frames that should align to the virtual frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthAlignment {
    #[serde(with = "partner_list")]
    pub x_partner: Vec<Option<usize>>,
    #[serde(with = "partner_list")]
    pub y_partner: Vec<Option<usize>>,
    /// Action id per frame, `-1` for background.
    pub x_action: Vec<i64>,
    pub y_action: Vec<i64>,
    pub x_progress: Vec<f64>,
    pub y_progress: Vec<f64>,
    /// Block pairs `(k, k + 1)` of the shared action order swapped in `y`.
    pub swaps: Vec<usize>,
}

impl GroundTruthAlignment {
    pub fn unmatched(&self) -> (usize, usize) {
        let count = |v: &[Option<usize>]| v.iter().filter(|p| p.is_none()).count();
        (count(&self.x_partner), count(&self.y_partner))
    }
}

/// Serde for partner lists with `-1` standing for the virtual frame.
pub mod partner_list {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Option<usize>], s: S) -> Result<S::Ok, S::Error> {
        let raw: Vec<i64> = v.iter().map(|p| p.map_or(-1, |j| j as i64)).collect();
        raw.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Option<usize>>, D::Error> {
        let raw = Vec::<i64>::deserialize(d)?;
        raw.into_iter()
            .map(|p| match p {
                -1 => Ok(None),
                p if p >= 0 => Ok(Some(p as usize)),
                p => Err(serde::de::Error::custom(format!("invalid partner index {p}"))),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
struct Block {
    action: usize,
    len: usize,
}

struct Frames {
    rows: Vec<Array1<f64>>,
    action: Vec<i64>,
    progress: Vec<f64>,
}

fn gaussian_vec(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Array1<f64> {
    Array1::from_shape_fn(dim, |_| scale * rng.sample::<f64, _>(StandardNormal))
}

fn unit_vec(rng: &mut ChaCha8Rng, dim: usize) -> Array1<f64> {
    loop {
        let v = gaussian_vec(rng, dim, 1.0);
        let norm = v.dot(&v).sqrt();
        if norm > 1e-6 {
            return v / norm;
        }
    }
}

const MIN_SEPARATION: f64 = 1.0;
const MAX_DRAWS: usize = 10_000;
const BACKGROUND_FACTOR: f64 = 5.0;

fn distance(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    (a - b).mapv(|v| v * v).sum().sqrt()
}

fn draw_anchor(rng: &mut ChaCha8Rng, dim: usize, existing: &[Array1<f64>]) -> Result<Array1<f64>> {
    for _ in 0..MAX_DRAWS {
        let a = gaussian_vec(rng, dim, 1.0);
        if existing.iter().all(|b| distance(&a, b) >= MIN_SEPARATION) {
            return Ok(a);
        }
    }
    Err(Error::Config(format!(
        "could not place {} anchors at separation {MIN_SEPARATION} in {dim} dimensions",
        existing.len() + 1
    )))
}

fn block_frames(
    rng: &mut ChaCha8Rng,
    cfg: &SynthConfig,
    anchors: &[Array1<f64>],
    drifts: &[Array1<f64>],
    blocks: &[Block],
) -> Frames {
    let mut out = Frames {
        rows: Vec::new(),
        action: Vec::new(),
        progress: Vec::new(),
    };
    for b in blocks {
        for t in 0..b.len {
            let p = if b.len > 1 { t as f64 / (b.len - 1) as f64 } else { 0.0 };
            let frame = &anchors[b.action] + &(&drifts[b.action] * (p - 0.5))
                + gaussian_vec(rng, cfg.embed_dim, cfg.noise_std);
            out.rows.push(frame);
            out.action.push(b.action as i64);
            out.progress.push(p);
        }
    }
    out
}

fn to_sequence(
    rng: &mut ChaCha8Rng,
    cfg: &SynthConfig,
    rows: &[Array1<f64>],
    id: &str,
) -> Result<EmbeddingSequence<f64>> {
    let dim = cfg.raw_dim();
    let mut frames = Array2::zeros((rows.len(), dim));
    for (i, r) in rows.iter().enumerate() {
        frames.row_mut(i).slice_mut(ndarray::s![..cfg.embed_dim]).assign(r);
        for k in cfg.embed_dim..dim {
            frames[[i, k]] = cfg.nuisance_std * rng.sample::<f64, _>(StandardNormal);
        }
    }
    EmbeddingSequence::new(frames, id)
}

/// Nearest-progress partner in the block of `action` inside the other sequence.
fn partners(
    action: &[i64],
    progress: &[f64],
    other_action: &[i64],
    other_progress: &[f64],
) -> Vec<Option<usize>> {
    action
        .iter()
        .zip(progress)
        .map(|(&a, &p)| {
            if a < 0 {
                return None;
            }
            let mut best: Option<(usize, f64)> = None;
            for (j, (&b, &q)) in other_action.iter().zip(other_progress).enumerate() {
                if b == a {
                    let d = (p - q).abs();
                    if best.is_none_or(|(_, bd)| d < bd) {
                        best = Some((j, d));
                    }
                }
            }
            best.map(|(j, _)| j)
        })
        .collect()
}

/// Generates a pair and its ground truth. Deterministic in `cfg`.
pub fn generate_pair(
    cfg: &SynthConfig,
) -> Result<(EmbeddingSequence<f64>, EmbeddingSequence<f64>, GroundTruthAlignment)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dim = cfg.embed_dim;

    let mut anchors: Vec<Array1<f64>> = Vec::new();
    let mut shared_drifts: Vec<Array1<f64>> = Vec::new();
    if let Some(anchor_seed) = cfg.anchor_seed {
        let mut arng = ChaCha8Rng::seed_from_u64(anchor_seed);
        for _ in 0..cfg.num_actions {
            let a = draw_anchor(&mut arng, dim, &anchors)?;
            anchors.push(a);
        }
        shared_drifts = (0..cfg.num_actions)
            .map(|_| unit_vec(&mut arng, dim) * cfg.drift)
            .collect();
    } else {
        for _ in 0..cfg.num_actions {
            let a = draw_anchor(&mut rng, dim, &anchors)?;
            anchors.push(a);
        }
    }
    let range = cfg.frames_per_action;
    let draw_len = |rng: &mut ChaCha8Rng| rng.random_range(range.min..=range.max);

    // shared order, with redundant actions spliced into one of the sequences
    let mut x_blocks = Vec::new();
    let mut shared = Vec::new();
    let mut y_extra: Vec<(usize, Block)> = Vec::new();
    for k in 0..cfg.num_actions {
        let len = draw_len(&mut rng);
        let block = Block { action: k, len };
        x_blocks.push(block);
        shared.push(block);
        if cfg.redundant_rate > 0.0 && rng.random_bool(cfg.redundant_rate) {
            let anchor = draw_anchor(&mut rng, dim, &anchors)?;
            anchors.push(anchor);
            let extra = Block {
                action: anchors.len() - 1,
                len: draw_len(&mut rng),
            };
            if rng.random_bool(0.5) {
                x_blocks.push(extra);
            } else {
                y_extra.push((shared.len(), extra));
            }
        }
    }
    let own = anchors.len() - shared_drifts.len();
    let mut drifts = shared_drifts;
    drifts.extend((0..own).map(|_| unit_vec(&mut rng, dim) * cfg.drift));

    let mut y_order = shared.clone();
    let mut swaps = Vec::new();
    let mut k = 0;
    while k + 1 < y_order.len() {
        if cfg.nonmonotonic_rate > 0.0 && rng.random_bool(cfg.nonmonotonic_rate) {
            y_order.swap(k, k + 1);
            swaps.push(k);
        }
        k += 2;
    }
    for b in y_order.iter_mut() {
        b.len = ((b.len as f64 * cfg.speed_ratio).round() as usize).max(1);
    }
    if cfg.offset_frames > 0 {
        let first = y_order[0].len;
        let moved = cfg.offset_frames.min(first - 1);
        y_order[0].len -= moved;
        let last = y_order.len() - 1;
        y_order[last].len += moved;
    }
    let mut y_blocks = Vec::new();
    let mut extras = y_extra.into_iter().peekable();
    for (pos, b) in y_order.into_iter().enumerate() {
        y_blocks.push(b);
        while let Some((_, extra)) = extras.next_if(|(after, _)| *after == pos + 1) {
            y_blocks.push(extra);
        }
    }

    let xf = block_frames(&mut rng, cfg, &anchors, &drifts, &x_blocks);
    let mut yf = block_frames(&mut rng, cfg, &anchors, &drifts, &y_blocks);

    if cfg.background_rate > 0.0 {
        let spacing = min_spacing(&anchors[..cfg.num_actions]);
        let radius = anchors.iter().map(|a| a.dot(a).sqrt()).fold(0.0, f64::max);
        let reach = radius + BACKGROUND_FACTOR * spacing;
        let mut out = Frames {
            rows: Vec::new(),
            action: Vec::new(),
            progress: Vec::new(),
        };
        let content = std::mem::take(&mut yf.rows);
        let mut i = 0;
        while i < content.len() {
            if rng.random_bool(cfg.background_rate) {
                let far = unit_vec(&mut rng, dim) * reach + gaussian_vec(&mut rng, dim, cfg.noise_std);
                out.rows.push(far);
                out.action.push(-1);
                out.progress.push(0.0);
            } else {
                out.rows.push(content[i].clone());
                out.action.push(yf.action[i]);
                out.progress.push(yf.progress[i]);
                i += 1;
            }
        }
        yf = out;
    }

    let gt = GroundTruthAlignment {
        x_partner: partners(&xf.action, &xf.progress, &yf.action, &yf.progress),
        y_partner: partners(&yf.action, &yf.progress, &xf.action, &xf.progress),
        x_action: xf.action,
        y_action: yf.action,
        x_progress: xf.progress,
        y_progress: yf.progress,
        swaps,
    };
    let x = to_sequence(&mut rng, cfg, &xf.rows, &format!("x{}", cfg.seed))?;
    let y = to_sequence(&mut rng, cfg, &yf.rows, &format!("y{}", cfg.seed))?;
    Ok((x, y, gt))
}

fn min_spacing(anchors: &[Array1<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..anchors.len() {
        for j in i + 1..anchors.len() {
            best = best.min(distance(&anchors[i], &anchors[j]));
        }
    }
    if best.is_finite() {
        best
    } else {
        MIN_SEPARATION
    }
}

pub const SCENARIOS: [&str; 7] = [
    "identical",
    "offset",
    "speed",
    "nonmonotonic",
    "background",
    "redundant",
    "mixed",
];

/// The fixed benchmark scenarios, all seeded with `seed`.
pub fn scenario_suite(seed: u64) -> Vec<(String, SynthConfig)> {
    let base = SynthConfig {
        seed,
        ..SynthConfig::default()
    };
    SCENARIOS
        .iter()
        .map(|&name| {
            let cfg = match name {
                "identical" => base.clone(),
                "offset" => SynthConfig { offset_frames: 3, ..base.clone() },
                "speed" => SynthConfig { speed_ratio: 1.5, ..base.clone() },
                "nonmonotonic" => SynthConfig {
                    nonmonotonic_rate: 0.5,
                    noise_std: 0.2,
                    ..base.clone()
                },
                "background" => SynthConfig { background_rate: 0.2, ..base.clone() },
                "redundant" => SynthConfig { redundant_rate: 0.3, ..base.clone() },
                _ => SynthConfig {
                    background_rate: 0.15,
                    redundant_rate: 0.10,
                    nonmonotonic_rate: 0.25,
                    ..base.clone()
                },
            };
            (name.to_string(), cfg)
        })
        .collect()
}

pub fn scenario(name: &str, seed: u64) -> Result<SynthConfig> {
    scenario_suite(seed)
        .into_iter()
        .find(|(n, _)| n == name)
        .map(|(_, c)| c)
        .ok_or_else(|| Error::Config(format!("unknown scenario {name:?}")))
}

/// Writes `<stem>_x.csv`, `<stem>_y.csv` and `<stem>_truth.json` into `dir`.
pub fn write_pair(
    dir: impl AsRef<Path>,
    stem: &str,
    x: &EmbeddingSequence<f64>,
    y: &EmbeddingSequence<f64>,
    truth: &GroundTruthAlignment,
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_embedding_csv(dir.join(format!("{stem}_x.csv")), x)?;
    write_embedding_csv(dir.join(format!("{stem}_y.csv")), y)?;
    let path = dir.join(format!("{stem}_truth.json"));
    let text = serde_json::to_string_pretty(truth)?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

pub fn read_truth(path: impl AsRef<Path>) -> Result<GroundTruthAlignment> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}
