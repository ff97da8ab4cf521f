//! Losses, the full-model backward pass, AdamW and the micro-training and
//! gradient-check harnesses.

pub mod gradcheck;
mod loss;
mod optim;

pub use gradcheck::{gradcheck_all, gradcheck_layers, gradcheck_model, rel_err, GradcheckReport, LayerCheck};
pub use loss::{loss_bce, loss_comp, loss_mag, total_loss, LossParts, BCE_CLAMP};
pub use optim::{clip_grad_norm, AdamW, AdamWConfig};

use serde::{Deserialize, Serialize};

use crate::dsp::{self, ComplexSpectrum};
use crate::error::{check_dim, Error, Result};
use crate::model::{featurize, mel_features, Grads, Model, Tape};
use crate::tensor::{FeatureMap, Matrix};

/// Which part of the network a training run updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// Enhancer only, spectral losses.
    #[default]
    Enhancer,
    /// Detector only, BCE against frame labels.
    Detector,
    /// Both, with all three loss terms.
    Joint,
}

impl TrainMode {
    fn enhancer(self) -> bool {
        matches!(self, Self::Enhancer | Self::Joint)
    }

    fn detector(self) -> bool {
        matches!(self, Self::Detector | Self::Joint)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lr0: f64,
    /// Multiplier applied once per epoch.
    pub lr_decay: f64,
    pub steps_per_epoch: usize,
    pub clip_norm: f64,
    pub adamw: AdamWConfig,
    pub mode: TrainMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda1: 0.9,
            lambda2: 0.1,
            lr0: 5e-4,
            lr_decay: 0.98,
            steps_per_epoch: 100,
            clip_norm: 5.0,
            adamw: AdamWConfig::default(),
            mode: TrainMode::Enhancer,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.lambda1 >= 0.0 && self.lambda2 >= 0.0) {
            return bad("loss weights must be non-negative");
        }
        if !(self.clip_norm > 0.0) {
            return bad("clip_norm must be positive");
        }
        if !(self.lr0 >= 0.0) || !(self.lr_decay > 0.0) {
            return bad("learning rate and decay must be non-negative and positive");
        }
        if self.steps_per_epoch == 0 {
            return bad("steps_per_epoch must be at least 1");
        }
        let a = &self.adamw;
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.eps > 0.0) || a.weight_decay < 0.0 {
            return bad("invalid AdamW hyper-parameters");
        }
        Ok(())
    }

    /// Learning rate for a zero-based step index.
    pub fn lr_at(&self, step: usize) -> f64 {
        self.lr0 * self.lr_decay.powi((step / self.steps_per_epoch) as i32)
    }
}

/// Frame labels from the noise component `noisy − clean`: a frame is noisy
/// when its noise energy exceeds 1e-3 of the mean clean frame energy.
pub fn frame_labels(model: &Model, noisy: &[f64], clean: &[f64]) -> Result<Vec<u8>> {
    check_dim("frame_labels", "samples", noisy.len(), clean.len())?;
    let stft = &model.config().stft;
    let noise: Vec<f64> = noisy.iter().zip(clean).map(|(a, b)| a - b).collect();
    let energy = |s: &ComplexSpectrum| -> Vec<f64> {
        (0..s.frames()).map(|t| s.row(t).iter().map(|z| z.norm_sqr()).sum()).collect()
    };
    let en = energy(&dsp::stft(&noise, stft)?);
    let ec = energy(&dsp::stft(clean, stft)?);
    let floor = 1e-3 * ec.iter().sum::<f64>() / ec.len().max(1) as f64 + 1e-12;
    Ok(en.iter().map(|&e| u8::from(e > floor)).collect())
}

/// One noisy/clean pair converted into everything a training step needs.
#[derive(Debug, Clone)]
pub struct TrainExample {
    feats: FeatureMap,
    mel: FeatureMap,
    /// `|X|^c`, T × bins.
    noisy_c: Matrix,
    /// `|Y|^c`, T × bins.
    clean_c: Matrix,
    /// `cos(P_y − P_x)`, T × bins.
    cos_dphi: Matrix,
    labels: Vec<u8>,
}

impl TrainExample {
    pub fn new(model: &Model, noisy: &[f64], clean: &[f64]) -> Result<Self> {
        if noisy.is_empty() {
            return Err(Error::EmptyInput);
        }
        let labels = frame_labels(model, noisy, clean)?;
        let cfg = model.config();
        let x = dsp::stft(noisy, &cfg.stft)?;
        let y = dsp::stft(clean, &cfg.stft)?;
        let c = cfg.compress_c;
        let (t, f) = (x.frames(), x.bins());
        let noisy_c = Matrix::from_fn(t, f, |i, j| x.get(i, j).norm().powf(c));
        let clean_c = Matrix::from_fn(t, f, |i, j| y.get(i, j).norm().powf(c));
        let cos_dphi = Matrix::from_fn(t, f, |i, j| (dsp::angle(y.get(i, j)) - dsp::angle(x.get(i, j))).cos());
        Ok(Self {
            feats: featurize(&x, cfg)?,
            mel: mel_features(model, &x)?,
            noisy_c,
            clean_c,
            cos_dphi,
            labels,
        })
    }

    pub fn frames(&self) -> usize {
        self.noisy_c.rows()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// Compressed estimate `mask · |X|^c`, with bins above the mask passed
    /// through.
    fn estimate(&self, mask: &FeatureMap) -> Matrix {
        let f0 = mask.freqs();
        Matrix::from_fn(self.noisy_c.rows(), self.noisy_c.cols(), |t, f| {
            let a = self.noisy_c.get(t, f);
            if f < f0 {
                mask.get(0, 0, t, f) * a
            } else {
                a
            }
        })
    }
}

/// Result of a loss evaluation with gradients.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub parts: LossParts,
    pub total: f64,
    pub grads: Grads,
}

/// Parameter gradients of the enhancer for a mask gradient `d_mask`, which
/// must have the mask's shape.
pub fn model_backward(model: &Model, tape: Tape, d_mask: &FeatureMap) -> Result<Grads> {
    let mut grads = Grads::zeros_like(model.weights());
    model.enhancer_backward(tape, d_mask, &mut grads)?;
    Ok(grads)
}

/// Loss terms without gradients, from the same forward pass the training
/// step uses.
pub fn evaluate(model: &Model, ex: &TrainExample, cfg: &TrainConfig) -> Result<(LossParts, f64)> {
    let mut parts = LossParts {
        mag: 0.0,
        comp: 0.0,
        bce: None,
    };
    if cfg.mode.enhancer() {
        let mask = model.enhancer_step(&ex.feats, &mut model.new_state())?;
        let (m, c, _) = loss::spectral_terms(cfg, &ex.clean_c, &ex.cos_dphi, &ex.estimate(&mask));
        parts.mag = m;
        parts.comp = c;
    }
    if cfg.mode.detector() {
        let p = model.detector_step(&ex.mel, &mut model.new_detector_state())?;
        parts.bce = Some(loss_bce(&p, &ex.labels)?);
    }
    Ok((parts, total_loss(cfg, &parts)))
}

/// Loss terms and gradients for every trainable tensor.
pub fn loss_and_grads(model: &Model, ex: &TrainExample, cfg: &TrainConfig) -> Result<StepOutput> {
    let mut grads = Grads::zeros_like(model.weights());
    let mut parts = LossParts {
        mag: 0.0,
        comp: 0.0,
        bce: None,
    };
    if cfg.mode.enhancer() {
        let (mask, tape) = model.enhancer_forward_cached(&ex.feats)?;
        let est = ex.estimate(&mask);
        let (m, c, g_est) = loss::spectral_terms(cfg, &ex.clean_c, &ex.cos_dphi, &est);
        parts.mag = m;
        parts.comp = c;
        let g_mask = FeatureMap::from_fn(mask.dims(), |_, _, t, f| g_est.get(t, f) * ex.noisy_c.get(t, f));
        model.enhancer_backward(tape, &g_mask, &mut grads)?;
    }
    if cfg.mode.detector() {
        let (p, tape) = model.detector_forward_cached(&ex.mel)?;
        let (l, g) = loss::bce_terms(&p, &ex.labels);
        parts.bce = Some(l);
        model.detector_backward(tape, &g, &mut grads)?;
    }
    Ok(StepOutput {
        total: total_loss(cfg, &parts),
        parts,
        grads,
    })
}

/// Per-step record of a training run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Total loss before each update.
    pub losses: Vec<f64>,
    /// Global gradient norm before clipping.
    pub grad_norms: Vec<f64>,
    /// Global gradient norm after clipping.
    pub clipped_norms: Vec<f64>,
}

/// Tensor ids a mode updates.
pub fn trainable_ids(model: &Model, mode: TrainMode) -> Vec<usize> {
    let nd = model.detector_param_ids();
    (0..model.weights().len())
        .filter(|i| {
            let is_nd = nd.contains(i);
            (is_nd && mode.detector()) || (!is_nd && mode.enhancer())
        })
        .collect()
}

/// Holds the optimizer state for a sequence of steps on one model.
#[derive(Debug, Clone)]
pub struct Trainer {
    cfg: TrainConfig,
    opt: AdamW,
    ids: Vec<usize>,
    step: usize,
}

impl Trainer {
    pub fn new(model: &Model, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            opt: AdamW::new(cfg.adamw, model.weights()),
            ids: trainable_ids(model, cfg.mode),
            cfg,
            step: 0,
        })
    }

    /// Evaluates the loss, clips, and applies one AdamW update. Parameters
    /// are stored at single precision after the update. Returns the loss
    /// before the update with the pre- and post-clip gradient norms.
    pub fn step(&mut self, model: &mut Model, ex: &TrainExample) -> Result<(f64, f64, f64)> {
        let mut out = loss_and_grads(model, ex, &self.cfg)?;
        let norm = out.grads.global_norm();
        if !out.total.is_finite() || !norm.is_finite() {
            return Err(Error::Diverged {
                step: self.step,
                loss: if out.total.is_finite() { norm } else { out.total },
            });
        }
        let scale = clip_grad_norm(&mut out.grads, self.cfg.clip_norm);
        let lr = self.cfg.lr_at(self.step);
        self.opt.step(model.weights_mut(), &out.grads, lr, &self.ids);
        model.weights_mut().round_to_f32();
        self.step += 1;
        Ok((out.total, norm, norm * scale))
    }
}

/// Trains on a single pair for `steps` updates and records the curve.
pub fn micro_train(model: &mut Model, noisy: &[f64], clean: &[f64], cfg: &TrainConfig, steps: usize) -> Result<TrainReport> {
    let mut report = TrainReport::default();
    if steps == 0 {
        return Ok(report);
    }
    let ex = TrainExample::new(model, noisy, clean)?;
    let mut trainer = Trainer::new(model, *cfg)?;
    for _ in 0..steps {
        let (loss, pre, post) = trainer.step(model, &ex)?;
        report.losses.push(loss);
        report.grad_norms.push(pre);
        report.clipped_norms.push(post);
    }
    Ok(report)
}

/// Mean over each window of `w` consecutive values.
pub fn moving_average(xs: &[f64], w: usize) -> Vec<f64> {
    if w == 0 || xs.len() < w {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(xs.len() - w + 1);
    let mut s: f64 = xs[..w].iter().sum();
    out.push(s / w as f64);
    for i in w..xs.len() {
        s += xs[i] - xs[i - w];
        out.push(s / w as f64);
    }
    out
}
