//! Toy encoder trained by gradient descent on the total loss.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::priors::psi_at;
use crate::seqcore::{EmbeddingSequence, Hyperparams};
use crate::vavaloss::{
    loss_gradient, loss_with_plan, term_gradients_with_plan, vava_loss, LossBreakdown, LossGradient,
};

/// One affine map `z = W x + b`; `weights` is `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    fn apply(&self, input: &Array2<f64>) -> Array2<f64> {
        input.dot(&self.weights.t()) + &self.bias
    }
}

/// Affine map, or two affine maps with `tanh` in between, applied per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyEncoder {
    layers: Vec<Layer>,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
struct LayerJson {
    rows: usize,
    cols: usize,
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct EncoderJson {
    input_dim: usize,
    hidden_dim: Option<usize>,
    output_dim: usize,
    seed: u64,
    layers: Vec<LayerJson>,
}

fn random_layer(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Layer {
    let scale = 1.0 / (cols as f64).sqrt();
    Layer {
        weights: Array2::from_shape_fn((rows, cols), |_| scale * rng.sample::<f64, _>(StandardNormal)),
        bias: Array1::zeros(rows),
    }
}

impl ToyEncoder {
    /// Gaussian weights with variance `1 / fan_in`, zero biases.
    pub fn new(input_dim: usize, hidden_dim: Option<usize>, output_dim: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 || hidden_dim == Some(0) {
            return Err(Error::param("encoder dimensions must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = match hidden_dim {
            None => vec![random_layer(&mut rng, output_dim, input_dim)],
            Some(h) => vec![
                random_layer(&mut rng, h, input_dim),
                random_layer(&mut rng, output_dim, h),
            ],
        };
        Ok(Self { layers, seed })
    }

    /// Identity on the first `output_dim` inputs.
    pub fn projection(input_dim: usize, output_dim: usize) -> Result<Self> {
        if output_dim == 0 || output_dim > input_dim {
            return Err(Error::param("projection needs 0 < output_dim <= input_dim"));
        }
        let weights = Array2::from_shape_fn((output_dim, input_dim), |(r, c)| (r == c) as u8 as f64);
        Ok(Self {
            layers: vec![Layer {
                weights,
                bias: Array1::zeros(output_dim),
            }],
            seed: 0,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weights.nrows()
    }

    pub fn hidden_dim(&self) -> Option<usize> {
        (self.layers.len() == 2).then(|| self.layers[0].weights.nrows())
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Parameters flattened layer by layer, weights (row-major) then bias.
    pub fn params(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn set_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::dim(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                values.len()
            )));
        }
        let mut it = values.iter().copied();
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|v| *v = it.next().unwrap());
        }
        Ok(())
    }

    fn activations(&self, input: &Array2<f64>) -> (Option<Array2<f64>>, Array2<f64>) {
        match self.layers.as_slice() {
            [only] => (None, only.apply(input)),
            [first, second] => {
                let hidden = first.apply(input).mapv(f64::tanh);
                let out = second.apply(&hidden);
                (Some(hidden), out)
            }
            _ => unreachable!("encoders have one or two layers"),
        }
    }

    pub fn forward(&self, x: &EmbeddingSequence<f64>) -> Result<EmbeddingSequence<f64>> {
        if x.dim() != self.input_dim() {
            return Err(Error::dim(format!(
                "encoder expects {} features, sequence has {}",
                self.input_dim(),
                x.dim()
            )));
        }
        EmbeddingSequence::new(self.activations(x.frames()).1, x.source_id())
    }

    /// Parameter gradient given the gradient with respect to the outputs.
    pub fn backward(&self, x: &EmbeddingSequence<f64>, grad_out: &Array2<f64>) -> Vec<Layer> {
        let input = x.frames();
        match self.activations(input) {
            (None, _) => vec![Layer {
                weights: grad_out.t().dot(input),
                bias: grad_out.sum_axis(Axis(0)),
            }],
            (Some(hidden), _) => {
                let second = &self.layers[1];
                let grad_hidden = grad_out.dot(&second.weights) * hidden.mapv(|h| 1.0 - h * h);
                vec![
                    Layer {
                        weights: grad_hidden.t().dot(input),
                        bias: grad_hidden.sum_axis(Axis(0)),
                    },
                    Layer {
                        weights: grad_out.t().dot(&hidden),
                        bias: grad_out.sum_axis(Axis(0)),
                    },
                ]
            }
        }
    }

    fn chain(&self, x: &EmbeddingSequence<f64>, y: &EmbeddingSequence<f64>, g: &LossGradient<f64>) -> Vec<f64> {
        let mut out = flatten(&self.backward(x, &g.x));
        for (o, v) in out.iter_mut().zip(flatten(&self.backward(y, &g.y))) {
            *o += v;
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        let file = EncoderJson {
            input_dim: self.input_dim(),
            hidden_dim: self.hidden_dim(),
            output_dim: self.output_dim(),
            seed: self.seed,
            layers: self
                .layers
                .iter()
                .map(|l| LayerJson {
                    rows: l.weights.nrows(),
                    cols: l.weights.ncols(),
                    weights: l.weights.rows().into_iter().map(|r| r.to_vec()).collect(),
                    bias: l.bias.to_vec(),
                })
                .collect(),
        };
        let mut text = serde_json::to_string_pretty(&file)?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: EncoderJson = serde_json::from_str(text)?;
        let expected = match file.hidden_dim {
            None => vec![(file.output_dim, file.input_dim)],
            Some(h) => vec![(h, file.input_dim), (file.output_dim, h)],
        };
        if file.layers.len() != expected.len() {
            return Err(Error::Config("layer count does not match the declared shape".into()));
        }
        let mut layers = Vec::new();
        for (l, &(rows, cols)) in file.layers.into_iter().zip(&expected) {
            let ok = l.rows == rows
                && l.cols == cols
                && l.bias.len() == rows
                && l.weights.len() == rows
                && l.weights.iter().all(|r| r.len() == cols);
            if !ok {
                return Err(Error::Config(format!("layer shape does not match {rows}x{cols}")));
            }
            let flat: Vec<f64> = l.weights.into_iter().flatten().collect();
            if flat.iter().chain(&l.bias).any(|v| !v.is_finite()) {
                return Err(Error::Config("encoder parameters must be finite".into()));
            }
            layers.push(Layer {
                weights: Array2::from_shape_vec((rows, cols), flat).map_err(|e| Error::Config(e.to_string()))?,
                bias: Array1::from(l.bias),
            });
        }
        Ok(Self { layers, seed: file.seed })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

fn flatten(layers: &[Layer]) -> Vec<f64> {
    layers
        .iter()
        .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub steps: usize,
    /// Pairs per step; batches walk through the dataset in order.
    pub batch_pairs: usize,
    pub hp: Hyperparams,
    pub seed: u64,
    pub embed_dim: usize,
    pub hidden_dim: Option<usize>,
    /// Grow the step by 5% after a decrease of the mean loss, halve it after an increase.
    pub adaptive_step: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            steps: 500,
            batch_pairs: 10,
            hp: Hyperparams::default(),
            seed: 0,
            embed_dim: 4,
            hidden_dim: None,
            adaptive_step: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config(format!("learning_rate must be >= 0, got {}", self.learning_rate)));
        }
        if self.steps == 0 || self.batch_pairs == 0 || self.embed_dim == 0 || self.hidden_dim == Some(0) {
            return Err(Error::Config("steps, batch_pairs and dimensions must be at least 1".into()));
        }
        self.hp.validate()
    }
}

/// Batch-mean loss terms at one step (before that step's update).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossRecord {
    pub step: usize,
    pub total: f64,
    pub ot: f64,
    pub idm: f64,
    pub kl: f64,
    pub intra: f64,
    pub inter: f64,
}

impl LossRecord {
    fn mean(step: usize, losses: &[LossBreakdown<f64>]) -> Self {
        let k = losses.len() as f64;
        let sum = |f: fn(&LossBreakdown<f64>) -> f64| losses.iter().map(f).sum::<f64>() / k;
        LossRecord {
            step,
            total: sum(|l| l.total),
            ot: sum(|l| l.ot_term),
            idm: sum(|l| l.idm_term),
            kl: sum(|l| l.kl_term),
            intra: sum(|l| l.intra_x + l.intra_y),
            inter: sum(|l| l.inter),
        }
    }
}

pub fn loss_curve_csv(curve: &[LossRecord]) -> String {
    let mut out = String::from("step,total,ot,idm,kl,intra,inter\n");
    for r in curve {
        let _ = writeln!(out, "{},{},{},{},{},{},{}", r.step, r.total, r.ot, r.idm, r.kl, r.intra, r.inter);
    }
    out
}

pub type RawPair = (EmbeddingSequence<f64>, EmbeddingSequence<f64>);

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub encoder: ToyEncoder,
    pub curve: Vec<LossRecord>,
    pub final_learning_rate: f64,
}

fn pair_step(
    encoder: &ToyEncoder,
    pair: &RawPair,
    hp: &Hyperparams,
    step: usize,
) -> Result<(LossBreakdown<f64>, Vec<f64>)> {
    let diverged = |e: Error| Error::Divergence {
        step,
        message: e.to_string(),
    };
    let ex = encoder.forward(&pair.0).map_err(diverged)?;
    let ey = encoder.forward(&pair.1).map_err(diverged)?;
    let (g, loss, _) = loss_gradient(&ex, &ey, hp, step)?;
    Ok((loss, encoder.chain(&pair.0, &pair.1, &g)))
}

/// Gradient descent on the mean total loss of each batch.
pub fn train(pairs: &[RawPair], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let first = pairs.first().ok_or_else(|| Error::Config("training needs at least one pair".into()))?;
    let mut encoder = ToyEncoder::new(first.0.dim(), cfg.hidden_dim, cfg.embed_dim, cfg.seed)?;
    let batch = cfg.batch_pairs.min(pairs.len());
    let mut lr = cfg.learning_rate;
    let mut curve = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let start = (step * batch) % pairs.len();
        let chosen: Vec<&RawPair> = (0..batch).map(|k| &pairs[(start + k) % pairs.len()]).collect();
        let results: Vec<(LossBreakdown<f64>, Vec<f64>)> = chosen
            .par_iter()
            .map(|p| pair_step(&encoder, p, &cfg.hp, step))
            .collect::<Result<_>>()?;
        let losses: Vec<LossBreakdown<f64>> = results.iter().map(|r| r.0).collect();
        let record = LossRecord::mean(step, &losses);
        if !record.total.is_finite() {
            return Err(Error::Divergence {
                step,
                message: format!("mean total loss is {}", record.total),
            });
        }
        if cfg.adaptive_step {
            if let Some(prev) = curve.last().map(|r: &LossRecord| r.total) {
                lr *= if record.total > prev { 0.5 } else { 1.05 };
            }
        }
        curve.push(record);
        log::debug!("step {step} total {:.6} lr {lr:e}", record.total);

        let mut grad = vec![0.0; encoder.param_count()];
        for (_, g) in &results {
            for (a, b) in grad.iter_mut().zip(g) {
                *a += b;
            }
        }
        let scale = lr / batch as f64;
        let updated: Vec<f64> = encoder.params().iter().zip(&grad).map(|(p, g)| p - scale * g).collect();
        encoder.set_params(&updated)?;
    }
    Ok(TrainOutcome {
        encoder,
        curve,
        final_learning_rate: lr,
    })
}

/// Instance description for [`grad_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckConfig {
    pub n: usize,
    pub m: usize,
    pub raw_dim: usize,
    pub embed_dim: usize,
    pub hidden_dim: Option<usize>,
    pub hp: Hyperparams,
    /// `y` is `x` plus noise of this size when `m == n`; otherwise independent.
    pub noise_std: f64,
    pub step: usize,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            n: 6,
            m: 7,
            raw_dim: 5,
            embed_dim: 3,
            hidden_dim: None,
            hp: Hyperparams::default(),
            noise_std: 0.3,
            step: 0,
        }
    }
}

/// Norm-wise relative errors `|a - n| / max(|a|, |n|)` between analytic and
/// central-difference parameter gradients, per term and for the total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub ot: f64,
    pub idm: f64,
    pub kl: f64,
    pub intra: f64,
    pub inter: f64,
    pub total: f64,
    pub max: f64,
}

pub const FD_STEP: f64 = 1e-5;

fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// Compares analytic encoder gradients with central differences of the loss
/// evaluated on the plan solved at the starting parameters.
pub fn grad_check(cfg: &GradCheckConfig, seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |rows: usize, scale: f64| {
        Array2::from_shape_fn((rows, cfg.raw_dim), |_| scale * rng.sample::<f64, _>(StandardNormal))
    };
    let xr = draw(cfg.n, 1.0);
    let yr = if cfg.m == cfg.n {
        &xr + &draw(cfg.m, cfg.noise_std)
    } else {
        draw(cfg.m, 1.0)
    };
    let x = EmbeddingSequence::new(xr, "x")?;
    let y = EmbeddingSequence::new(yr, "y")?;
    let mut encoder = ToyEncoder::new(cfg.raw_dim, cfg.hidden_dim, cfg.embed_dim, seed ^ 0x9e37_79b9)?;
    let hp = cfg.hp;

    let ex = encoder.forward(&x)?;
    let ey = encoder.forward(&y)?;
    let (_, plan) = vava_loss(&ex, &ey, &hp, cfg.step)?;
    let psi = psi_at(&hp.psi_schedule(), cfg.step);
    let terms = term_gradients_with_plan(&ex, &ey, &plan, &hp)?;
    let zeros_x = Array2::zeros(terms.intra_x.dim());
    let zeros_y = Array2::zeros(terms.intra_y.dim());
    let analytic_ot = encoder.chain(&x, &y, &terms.ot);
    let analytic_intra = encoder.chain(
        &x,
        &y,
        &LossGradient {
            x: terms.intra_x.clone(),
            y: terms.intra_y.clone(),
        },
    );
    let analytic_inter = encoder.chain(&x, &y, &terms.inter);
    let analytic_total = encoder.chain(&x, &y, &terms.combine(&hp));
    let analytic_zero = encoder.chain(&x, &y, &LossGradient { x: zeros_x, y: zeros_y });

    let base = encoder.params();
    let evaluate = |enc: &ToyEncoder| -> Result<LossBreakdown<f64>> {
        loss_with_plan(&enc.forward(&x)?, &enc.forward(&y)?, &plan, &hp, psi)
    };
    let count = base.len();
    let mut numeric = vec![[0.0f64; 6]; count];
    for k in 0..count {
        let mut p = base.clone();
        p[k] = base[k] + FD_STEP;
        encoder.set_params(&p)?;
        let up = evaluate(&encoder)?;
        p[k] = base[k] - FD_STEP;
        encoder.set_params(&p)?;
        let down = evaluate(&encoder)?;
        let d = |f: fn(&LossBreakdown<f64>) -> f64| (f(&up) - f(&down)) / (2.0 * FD_STEP);
        numeric[k] = [
            d(|l| l.ot_term),
            d(|l| l.idm_term),
            d(|l| l.kl_term),
            d(|l| l.intra_x + l.intra_y),
            d(|l| l.inter),
            d(|l| l.total),
        ];
    }
    encoder.set_params(&base)?;
    let column = |c: usize| -> Vec<f64> { numeric.iter().map(|r| r[c]).collect() };
    let mut report = GradCheckReport {
        ot: relative_error(&analytic_ot, &column(0)),
        idm: relative_error(&analytic_zero, &column(1)),
        kl: relative_error(&analytic_zero, &column(2)),
        intra: relative_error(&analytic_intra, &column(3)),
        inter: relative_error(&analytic_inter, &column(4)),
        total: relative_error(&analytic_total, &column(5)),
        max: 0.0,
    };
    report.max = [report.ot, report.idm, report.kl, report.intra, report.inter, report.total]
        .into_iter()
        .fold(0.0, f64::max);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(count: u64) -> Vec<RawPair> {
        (0..count)
            .map(|s| {
                let cfg = crate::synthgen::SynthConfig {
                    embed_dim: 3,
                    nuisance_dims: 2,
                    nuisance_std: 0.5,
                    num_actions: 3,
                    frames_per_action: crate::synthgen::FrameRange { min: 3, max: 4 },
                    seed: s,
                    ..Default::default()
                };
                let (x, y, _) = crate::synthgen::generate_pair(&cfg).unwrap();
                (x, y)
            })
            .collect()
    }

    #[test]
    fn backward_matches_manual_affine_gradient() {
        let enc = ToyEncoder::new(3, None, 2, 1).unwrap();
        let x = EmbeddingSequence::from_rows(&[vec![1.0, 2.0, 3.0], vec![-1.0, 0.5, 0.0]], "x").unwrap();
        let g = ndarray::array![[1.0, 0.0], [0.0, 2.0]];
        let grads = enc.backward(&x, &g);
        assert_eq!(grads[0].weights, ndarray::array![[1.0, 2.0, 3.0], [-2.0, 1.0, 0.0]]);
        assert_eq!(grads[0].bias, ndarray::array![1.0, 2.0]);
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let data = pairs(2);
        let cfg = TrainConfig {
            learning_rate: 0.0,
            steps: 4,
            embed_dim: 2,
            hp: Hyperparams {
                psi_decay_steps: 0,
                ..Hyperparams::default()
            },
            ..TrainConfig::default()
        };
        let out = train(&data, &cfg).unwrap();
        let fresh = ToyEncoder::new(5, None, 2, cfg.seed).unwrap();
        assert_eq!(out.encoder, fresh);
        let totals: Vec<f64> = out.curve.iter().map(|r| r.total).collect();
        assert!(totals.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn training_is_reproducible() {
        let data = pairs(3);
        let cfg = TrainConfig {
            learning_rate: 1e-4,
            steps: 5,
            batch_pairs: 2,
            embed_dim: 2,
            hidden_dim: Some(3),
            ..TrainConfig::default()
        };
        let a = train(&data, &cfg).unwrap();
        let b = train(&data, &cfg).unwrap();
        assert_eq!(a.curve, b.curve);
        assert_eq!(a.encoder, b.encoder);
    }

    #[test]
    fn divergence_reports_the_step() {
        let data = pairs(1);
        let cfg = TrainConfig {
            learning_rate: 1e200,
            steps: 10,
            embed_dim: 2,
            ..TrainConfig::default()
        };
        match train(&data, &cfg) {
            Err(Error::Divergence { step, .. }) => assert!(step >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn encoder_json_round_trip_and_shape_checks() {
        for hidden in [None, Some(4)] {
            let enc = ToyEncoder::new(5, hidden, 3, 9).unwrap();
            let back = ToyEncoder::from_json(&enc.to_json().unwrap()).unwrap();
            assert_eq!(back, enc);
        }
        let text = ToyEncoder::new(5, None, 3, 9).unwrap().to_json().unwrap();
        let broken = text.replacen("\"output_dim\": 3", "\"output_dim\": 2", 1);
        assert!(matches!(ToyEncoder::from_json(&broken), Err(Error::Config(_))));
    }

    #[test]
    fn loss_csv_header() {
        let csv = loss_curve_csv(&[LossRecord {
            step: 0,
            total: 1.5,
            ot: 1.0,
            idm: 0.5,
            kl: 0.25,
            intra: 2.0,
            inter: -1.0,
        }]);
        assert_eq!(csv, "step,total,ot,idm,kl,intra,inter\n0,1.5,1,0.5,0.25,2,-1\n");
    }

    #[test]
    fn grad_check_default_instance() {
        let r = grad_check(&GradCheckConfig::default(), 3).unwrap();
        assert!(r.max <= 1e-4, "{r:?}");
        assert_eq!((r.idm, r.kl), (0.0, 0.0));
        let hidden = GradCheckConfig {
            hidden_dim: Some(4),
            ..GradCheckConfig::default()
        };
        let r = grad_check(&hidden, 4).unwrap();
        assert!(r.max <= 1e-4, "{r:?}");
    }

    #[test]
    fn grad_check_ot_only_and_identical_pair() {
        let ot_only = GradCheckConfig {
            hp: Hyperparams {
                gamma: 0.0,
                ..Hyperparams::default().prior_free()
            },
            ..GradCheckConfig::default()
        };
        let r = grad_check(&ot_only, 5).unwrap();
        assert!(r.total <= 1e-5, "{r:?}");
        let identical = GradCheckConfig {
            n: 6,
            m: 6,
            noise_std: 0.0,
            ..GradCheckConfig::default()
        };
        let r = grad_check(&identical, 6).unwrap();
        assert!(r.max <= 1e-4, "{r:?}");
    }
}
