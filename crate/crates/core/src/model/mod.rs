//! The enhancement network (encoder, dual-path recurrent core, decoder,
//! mask) and the mel-domain noise detector.

mod config;
mod count;
mod features;
mod layout;
mod net;
mod weights;

pub use config::{ModelConfig, INPUT_CHANNELS};
pub use count::{count_macs, count_params, MacCount, ParamCount};
pub use features::{apply_mask_row, featurize, mask_matrix, FrameFeaturizer};
pub use net::{DetectorState, NetState, Tape};
pub use weights::{Grads, Tensor, WeightStore};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::{self, ComplexSpectrum};
use crate::error::{Error, Result};
use crate::nn::init::uniform;
use crate::tensor::{FeatureMap, Matrix};
use layout::{Init, Layout};
use net::{Back, Net, Rec};

/// A configured network with its parameters.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    weights: WeightStore,
    layout: Layout,
    mel_fb: Matrix,
}

/// Per-frame noise decisions; 1 marks a noisy frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseFlags {
    pub flags: Vec<u8>,
    pub probs: Vec<f64>,
}

pub const NOISE_THRESHOLD: f64 = 0.5;

pub fn flag_of(prob: f64) -> u8 {
    u8::from(prob >= NOISE_THRESHOLD)
}

/// Mask and enhanced magnitude for a whole spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct Enhanced {
    /// T × F0, inside (0, β).
    pub mask: Matrix,
    /// T × bins, non-negative.
    pub mag_hat: Matrix,
}

impl Model {
    /// Builds a model with freshly initialized parameters; deterministic in `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (layout, planned) = layout::plan(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = WeightStore::new();
        for p in planned {
            let n = p.shape.iter().product();
            let data = match p.init {
                Init::Uniform(bound) => uniform(&mut rng, n, bound),
                Init::Const(v) => vec![v; n],
            };
            weights.push(p.name, p.shape, data)?;
        }
        let mel_fb = dsp::mel_filterbank(&config.mel, &config.stft)?;
        Ok(Self {
            config,
            weights,
            layout,
            mel_fb,
        })
    }

    /// Wraps existing parameters; every tensor the configuration implies must
    /// be present, in order, with the implied shape.
    pub fn from_weights(config: ModelConfig, weights: WeightStore) -> Result<Self> {
        config.validate()?;
        let (layout, planned) = layout::plan(&config);
        if planned.len() != weights.len() {
            return Err(Error::Header(format!(
                "configuration implies {} tensors, found {}",
                planned.len(),
                weights.len()
            )));
        }
        for (p, t) in planned.iter().zip(weights.tensors()) {
            if p.name != t.name {
                return Err(Error::Tensor {
                    name: t.name.clone(),
                    reason: format!("expected tensor {}", p.name),
                });
            }
            if p.shape != t.shape {
                return Err(Error::Tensor {
                    name: t.name.clone(),
                    reason: format!("shape {:?}, expected {:?}", t.shape, p.shape),
                });
            }
            if let Some(i) = t.data.iter().position(|v| !v.is_finite()) {
                return Err(Error::Tensor {
                    name: t.name.clone(),
                    reason: format!("non-finite value at {i}"),
                });
            }
        }
        let mel_fb = dsp::mel_filterbank(&config.mel, &config.stft)?;
        Ok(Self {
            config,
            weights,
            layout,
            mel_fb,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn weights(&self) -> &WeightStore {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut WeightStore {
        &mut self.weights
    }

    pub fn mel_filterbank(&self) -> &Matrix {
        &self.mel_fb
    }

    /// Ids of the detector's tensors.
    pub fn detector_param_ids(&self) -> Vec<usize> {
        self.weights
            .tensors()
            .iter()
            .enumerate()
            .filter(|(_, t)| t.name.starts_with("nd."))
            .map(|(i, _)| i)
            .collect()
    }

    fn net(&self) -> Net<'_> {
        Net {
            ws: &self.weights,
            layout: &self.layout,
            beta: self.config.lsigmoid_beta,
        }
    }

    pub fn new_state(&self) -> NetState {
        NetState::fresh(&self.layout, self.config.gru_hidden)
    }

    pub fn new_detector_state(&self) -> DetectorState {
        DetectorState::fresh(&self.layout)
    }

    /// Mask (1, 1, T, F0) for features (1, 3, T, F0), continuing from `state`.
    pub fn enhancer_step(&self, feats: &FeatureMap, state: &mut NetState) -> Result<FeatureMap> {
        self.net().enhancer(feats, state, &mut Rec(None))
    }

    /// Mask from a fresh state, recording what the backward pass needs.
    pub fn enhancer_forward_cached(&self, feats: &FeatureMap) -> Result<(FeatureMap, Tape)> {
        let mut tape = Tape::new();
        let mut st = self.new_state();
        let mask = self.net().enhancer(feats, &mut st, &mut Rec(Some(&mut tape)))?;
        Ok((mask, tape))
    }

    /// Accumulates parameter gradients for a mask gradient.
    pub fn enhancer_backward(&self, tape: Tape, grad_mask: &FeatureMap, grads: &mut Grads) -> Result<()> {
        let net = self.net();
        let mut back = Back::new(tape, grads);
        net.enhancer_back(grad_mask, &mut back)
    }

    /// Noise probabilities for log-mel frames (1, 1, T, M), continuing from `state`.
    pub fn detector_step(&self, mel: &FeatureMap, state: &mut DetectorState) -> Result<Vec<f64>> {
        self.net().detector(mel, state, &mut Rec(None))
    }

    pub fn detector_forward_cached(&self, mel: &FeatureMap) -> Result<(Vec<f64>, Tape)> {
        let mut tape = Tape::new();
        let mut st = self.new_detector_state();
        let p = self.net().detector(mel, &mut st, &mut Rec(Some(&mut tape)))?;
        Ok((p, tape))
    }

    pub fn detector_backward(&self, tape: Tape, grad_prob: &[f64], grads: &mut Grads) -> Result<()> {
        let net = self.net();
        let mut back = Back::new(tape, grads);
        net.detector_back(grad_prob, &mut back)
    }
}

pub fn build_model(cfg: &ModelConfig, seed: u64) -> Result<Model> {
    Model::new(cfg.clone(), seed)
}

fn check_signal(x: &[f64]) -> Result<()> {
    if x.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::Config(format!("non-finite sample at index {i}")));
    }
    Ok(())
}

pub fn enhance_spectrum(model: &Model, spec: &ComplexSpectrum) -> Result<Enhanced> {
    let cfg = model.config();
    let feats = featurize(spec, cfg)?;
    let mut st = model.new_state();
    let mask = mask_matrix(&model.enhancer_step(&feats, &mut st)?);
    let mut mag_hat = Matrix::zeros(spec.frames(), spec.bins());
    for t in 0..spec.frames() {
        apply_mask_row(mask.row(t), spec.row(t), cfg.compress_c, mag_hat.row_mut(t));
    }
    Ok(Enhanced { mask, mag_hat })
}

/// Enhances a waveform using the configured number of Griffin-Lim iterations.
pub fn enhance_waveform(model: &Model, x: &[f64]) -> Result<Vec<f64>> {
    enhance_waveform_with(model, x, model.config().gla_iters)
}

/// Enhances a waveform with `gla_iters` phase-refinement iterations
/// starting from the noisy phase; the output has the input's length.
pub fn enhance_waveform_with(model: &Model, x: &[f64], gla_iters: usize) -> Result<Vec<f64>> {
    check_signal(x)?;
    let cfg = model.config();
    let spec = dsp::stft(x, &cfg.stft)?;
    let e = enhance_spectrum(model, &spec)?;
    let phase = dsp::griffin_lim_refine(&e.mag_hat, &spec.phase(), gla_iters, &cfg.stft)?;
    let y_spec = ComplexSpectrum::from_polar(&e.mag_hat, &phase)?;
    let mut y = dsp::istft(&y_spec, &cfg.stft)?;
    y.truncate(x.len());
    Ok(y)
}

/// Log-mel map (1, 1, T, M) of a spectrum.
pub fn mel_features(model: &Model, spec: &ComplexSpectrum) -> Result<FeatureMap> {
    let cfg = model.config();
    let m = dsp::mel_spectrogram(spec, &cfg.mel, &cfg.stft)?;
    FeatureMap::from_vec([1, 1, m.rows(), m.cols()], m.into_vec())
}

pub fn noise_detect(model: &Model, x: &[f64]) -> Result<NoiseFlags> {
    check_signal(x)?;
    let spec = dsp::stft(x, &model.config().stft)?;
    let mel = mel_features(model, &spec)?;
    let probs = model.detector_step(&mel, &mut model.new_detector_state())?;
    Ok(NoiseFlags {
        flags: probs.iter().map(|&p| flag_of(p)).collect(),
        probs,
    })
}
