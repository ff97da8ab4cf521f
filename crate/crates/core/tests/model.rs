use lisennet_core::dsp::{self, consistency_error, griffin_lim_refine};
use lisennet_core::model::{
    build_model, count_macs, count_params, enhance_spectrum, enhance_waveform_with, featurize, noise_detect, Model,
    ModelConfig, WeightStore,
};
use lisennet_core::tensor::FeatureMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn noise(n: usize, seed: u64, amp: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-amp..amp)).collect()
}

/// Copy of `model` with every tensor whose name starts with one of
/// `prefixes` set to zero.
fn zeroed(model: &Model, prefixes: &[&str]) -> Model {
    let mut ws = WeightStore::new();
    for t in model.weights().tensors() {
        let data = if prefixes.iter().any(|p| t.name.starts_with(p)) {
            vec![0.0; t.len()]
        } else {
            t.data.clone()
        };
        ws.push(t.name.clone(), t.shape.clone(), data).unwrap();
    }
    Model::from_weights(model.config().clone(), ws).unwrap()
}

#[test]
fn default_footprint() {
    let m = build_model(&ModelConfig::default(), 0).unwrap();
    let p = count_params(&m);
    let macs = count_macs(&m, 1.0);
    println!("{p:?}\n{macs:?}");
    assert!((18_000..=56_000).contains(&p.enhancer));
    assert!((28e6..=112e6).contains(&macs.enhancer));
    assert_eq!(macs.enhancer_per_frame, 740_352);
    assert!(macs.detector / macs.total() < 0.5);
}

#[test]
fn one_more_dpr_adds_one_module() {
    let cfg2 = ModelConfig::default();
    let cfg3 = ModelConfig {
        dpr_repeats: 3,
        ..ModelConfig::default()
    };
    let p2 = count_params(&build_model(&cfg2, 0).unwrap());
    let p3 = count_params(&build_model(&cfg3, 0).unwrap());
    assert_eq!(p3.total - p2.total, p2.dpr / 2);
}

#[test]
fn deterministic_per_seed() {
    let cfg = ModelConfig::default();
    let a = build_model(&cfg, 5).unwrap();
    let b = build_model(&cfg, 5).unwrap();
    let c = build_model(&cfg, 6).unwrap();
    assert_eq!(a.weights(), b.weights());
    assert_ne!(a.weights(), c.weights());
    for (x, y) in a.weights().tensors().iter().zip(c.weights().tensors()) {
        assert_eq!(x.shape, y.shape);
    }
}

#[test]
fn feature_shape_and_zero_signal() {
    let cfg = ModelConfig::default();
    let spec = dsp::stft(&vec![0.0; 3000], &cfg.stft).unwrap();
    let f = featurize(&spec, &cfg).unwrap();
    assert_eq!(f.dims(), [1, 3, spec.frames(), 256]);
    assert!(f.data()[..spec.frames() * 256].iter().all(|&v| v == 0.0));
}

#[test]
fn mask_range_and_bound() {
    let cfg = ModelConfig::default();
    let m = build_model(&cfg, 1).unwrap();
    let x = noise(8000, 2, 0.5);
    let spec = dsp::stft(&x, &cfg.stft).unwrap();
    let e = enhance_spectrum(&m, &spec).unwrap();
    assert!(e.mask.data().iter().all(|&v| v > 0.0 && v < 2.0));
    let a = spec.magnitude();
    let k = 2f64.powf(1.0 / cfg.compress_c);
    for (h, a) in e.mag_hat.data().iter().zip(a.data()) {
        assert!(*h >= 0.0 && *h <= k * a * (1.0 + 1e-12) + 1e-300);
    }
}

#[test]
fn zero_final_conv_passes_magnitude_through() {
    let cfg = ModelConfig::default();
    let m = zeroed(&build_model(&cfg, 3).unwrap(), &["out.conv"]);
    let x = noise(4000, 4, 0.3);
    let spec = dsp::stft(&x, &cfg.stft).unwrap();
    let e = enhance_spectrum(&m, &spec).unwrap();
    assert!(e.mask.data().iter().all(|&v| (v - 1.0).abs() < 1e-15));
    assert!(e.mag_hat.max_abs_diff(&spec.magnitude()) <= 1e-5);
}

#[test]
fn zeroed_dpr_is_identity() {
    let cfg = ModelConfig::default();
    let full = zeroed(&build_model(&cfg, 7).unwrap(), &["dpr."]);
    let none_cfg = ModelConfig {
        dpr_repeats: 0,
        ..cfg.clone()
    };
    let mut ws = WeightStore::new();
    for t in full.weights().tensors().iter().filter(|t| !t.name.starts_with("dpr.")) {
        ws.push(t.name.clone(), t.shape.clone(), t.data.clone()).unwrap();
    }
    let none = Model::from_weights(none_cfg, ws).unwrap();
    let x = noise(4000, 8, 0.3);
    let spec = dsp::stft(&x, &cfg.stft).unwrap();
    let a = enhance_spectrum(&full, &spec).unwrap();
    let b = enhance_spectrum(&none, &spec).unwrap();
    assert_eq!(a, b);
}

#[test]
fn zero_input_gives_zero_output() {
    let cfg = ModelConfig::default();
    let m = build_model(&cfg, 0).unwrap();
    let y = enhance_waveform_with(&m, &vec![0.0; 2000], 2).unwrap();
    assert_eq!(y.len(), 2000);
    assert!(y.iter().all(|&v| v == 0.0));
    assert!(enhance_waveform_with(&m, &[], 0).is_err());
}

#[test]
fn gla_does_not_increase_inconsistency() {
    let cfg = ModelConfig::default();
    let m = build_model(&cfg, 0).unwrap();
    let x = noise(6000, 9, 0.4);
    let spec = dsp::stft(&x, &cfg.stft).unwrap();
    let e = enhance_spectrum(&m, &spec).unwrap();
    let p0 = spec.phase();
    let p2 = griffin_lim_refine(&e.mag_hat, &p0, 2, &cfg.stft).unwrap();
    let c0 = consistency_error(&e.mag_hat, &p0, &cfg.stft).unwrap();
    let c2 = consistency_error(&e.mag_hat, &p2, &cfg.stft).unwrap();
    assert!(c2 <= c0);
}

#[test]
fn future_samples_do_not_change_past_output() {
    let cfg = ModelConfig::default();
    let m = build_model(&cfg, 11).unwrap();
    let x = noise(6400, 12, 0.4);
    let mut x2 = x.clone();
    let cut = 4000;
    for v in &mut x2[cut..] {
        *v = -*v * 3.0;
    }
    let y = enhance_waveform_with(&m, &x, 0).unwrap();
    let y2 = enhance_waveform_with(&m, &x2, 0).unwrap();
    // one frame of look-ahead: samples before cut − fft_len are settled
    let safe = cut - cfg.stft.fft_len;
    assert_eq!(&y[..safe], &y2[..safe]);
    assert_ne!(&y[..cut + 256], &y2[..cut + 256]);
}

#[test]
fn frame_by_frame_equals_whole_sequence() {
    let cfg = ModelConfig::default();
    let m = build_model(&cfg, 13).unwrap();
    let x = noise(5000, 14, 0.4);
    let spec = dsp::stft(&x, &cfg.stft).unwrap();
    let feats = featurize(&spec, &cfg).unwrap();
    let whole = m.enhancer_step(&feats, &mut m.new_state()).unwrap();
    let mut st = m.new_state();
    let mut parts = Vec::new();
    for t in 0..feats.frames() {
        parts.push(m.enhancer_step(&feats.slice_time(t, t + 1), &mut st).unwrap());
    }
    let mut joined = parts[0].clone();
    for p in &parts[1..] {
        joined = FeatureMap::concat_time(&joined, p).unwrap();
    }
    assert_eq!(joined, whole);
}

#[test]
fn detector_flags_cover_every_frame_and_are_causal() {
    let cfg = ModelConfig::default();
    let m = build_model(&cfg, 15).unwrap();
    let x = noise(8000, 16, 0.4);
    let flags = noise_detect(&m, &x).unwrap();
    assert_eq!(flags.flags.len(), cfg.stft.num_frames(x.len()));
    assert!(flags.flags.iter().all(|&f| f <= 1));
    let mut x2 = x.clone();
    for v in &mut x2[5000..] {
        *v = 0.0;
    }
    let f2 = noise_detect(&m, &x2).unwrap();
    // frames whose analysis window ends before sample 5000
    let settled = (5000 + cfg.stft.front_pad() - cfg.stft.fft_len) / cfg.stft.hop;
    assert_eq!(flags.probs[..settled], f2.probs[..settled]);
}

#[test]
fn tiny_config_runs() {
    let cfg = ModelConfig::tiny();
    let m = build_model(&cfg, 0).unwrap();
    let y = enhance_waveform_with(&m, &noise(200, 1, 0.5), 1).unwrap();
    assert_eq!(y.len(), 200);
    assert!(noise_detect(&m, &noise(200, 2, 0.5)).is_ok());
}
