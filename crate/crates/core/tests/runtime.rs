use std::sync::Arc;

use lisennet_core::model::{enhance_waveform_with, Model, ModelConfig};
use lisennet_core::runtime::{
    enhance_gated, enhance_streaming, gate_and_splice, measure_rtf, GlaMode, Stream, StreamOptions,
};
use lisennet_core::synth::{white_noise, NoisyPair};
use lisennet_core::tensor::max_abs_diff;

fn model(cfg: ModelConfig, seed: u64) -> Arc<Model> {
    Arc::new(Model::new(cfg, seed).unwrap())
}

fn run_chunks(m: &Arc<Model>, x: &[f64], opts: StreamOptions, sizes: &[usize]) -> Vec<f64> {
    let mut s = Stream::new(m.clone(), opts).unwrap();
    let mut y = Vec::new();
    let mut pos = 0;
    let mut k = 0;
    while pos < x.len() {
        let n = sizes[k % sizes.len()].min(x.len() - pos);
        y.extend(s.push(&x[pos..pos + n]).unwrap());
        pos += n;
        k += 1;
    }
    y.extend(s.finish().unwrap());
    y
}

/// Forces the detector output to a constant decision.
fn with_constant_detector(cfg: ModelConfig, seed: u64, noisy: bool) -> Arc<Model> {
    let mut m = Model::new(cfg, seed).unwrap();
    let ws = m.weights_mut();
    let w = ws.id("nd.head.weight").unwrap();
    let b = ws.id("nd.head.bias").unwrap();
    ws.data_mut(w).iter_mut().for_each(|v| *v = 0.0);
    ws.data_mut(b)[0] = if noisy { 50.0 } else { -50.0 };
    Arc::new(m)
}

#[test]
fn chunking_does_not_change_output() {
    let m = model(ModelConfig::default(), 1);
    let x = white_noise(16000, 0.1, 2);
    let whole = run_chunks(&m, &x, StreamOptions::default(), &[16000]);
    let small = run_chunks(&m, &x, StreamOptions::default(), &[160]);
    assert_eq!(whole.len(), x.len());
    assert!(max_abs_diff(&whole, &small) <= 1e-6);

    let odd = run_chunks(&m, &x, StreamOptions::default(), &[0, 1, 0, 333, 7, 0, 1024]);
    assert!(max_abs_diff(&whole, &odd) <= 1e-6);
}

#[test]
fn streaming_matches_offline_without_gla() {
    for (cfg, len) in [(ModelConfig::default(), 16000), (ModelConfig::tiny(), 700), (ModelConfig::default(), 300)] {
        let m = model(cfg, 3);
        let x = white_noise(len, 0.2, 4);
        let offline = enhance_waveform_with(&m, &x, 0).unwrap();
        let streamed = run_chunks(&m, &x, StreamOptions::default(), &[100]);
        assert_eq!(streamed.len(), offline.len());
        let d = max_abs_diff(&offline, &streamed);
        assert!(d <= 1e-5, "len {len}: {d}");
    }
}

#[test]
fn identical_streams_are_bitwise_identical() {
    let m = model(ModelConfig::default(), 5);
    let x = white_noise(5000, 0.1, 6);
    let opts = StreamOptions {
        gla: GlaMode::Buffered(2),
        ..Default::default()
    };
    assert_eq!(run_chunks(&m, &x, opts, &[97]), run_chunks(&m, &x, opts, &[97]));
}

#[test]
fn output_lags_input_by_the_declared_latency() {
    let m = with_constant_detector(ModelConfig::default(), 7, true);
    let x = white_noise(8000, 0.1, 8);
    for (nd, gla) in [(false, GlaMode::Off), (false, GlaMode::Buffered(2)), (true, GlaMode::Off)] {
        let mut s = Stream::new(m.clone(), StreamOptions { nd, gla, hangover: 3 }).unwrap();
        let lat = s.latency();
        let hop = 256;
        let (mut out, mut received) = (0, 0);
        for chunk in x.chunks(hop) {
            out += s.push(chunk).unwrap().len();
            received += chunk.len();
            let expected = received.saturating_sub(lat) / hop * hop;
            assert_eq!(out, expected, "nd {nd} gla {gla:?} after {received}");
        }
        out += s.finish().unwrap().len();
        assert_eq!(out, x.len());
    }
}

#[test]
fn buffered_gla_is_chunk_invariant_and_complete() {
    let m = model(ModelConfig::default(), 9);
    let p = NoisyPair::tone_in_noise(1.0, 16000, 5.0, 1.0, 1);
    let opts = StreamOptions {
        gla: GlaMode::Buffered(2),
        ..Default::default()
    };
    let a = run_chunks(&m, &p.noisy, opts, &[16000]);
    let b = run_chunks(&m, &p.noisy, opts, &[128, 300]);
    assert_eq!(a.len(), p.noisy.len());
    assert!(max_abs_diff(&a, &b) <= 1e-6);
    assert!(a.iter().all(|v| v.is_finite()));
    // local refinement stays close to the noisy-phase synthesis
    let plain = enhance_waveform_with(&m, &p.noisy, 0).unwrap();
    let diff: f64 = a.iter().zip(&plain).map(|(u, v)| (u - v) * (u - v)).sum::<f64>();
    let energy: f64 = plain.iter().map(|v| v * v).sum();
    assert!(diff < energy, "{diff} vs {energy}");
}

#[test]
fn all_noisy_detector_matches_ungated_stream() {
    let m = with_constant_detector(ModelConfig::default(), 11, true);
    let x = white_noise(6000, 0.1, 12);
    let plain = enhance_streaming(&m, &x, StreamOptions::default()).unwrap();
    let gated = enhance_streaming(
        &m,
        &x,
        StreamOptions {
            nd: true,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(plain, gated);
    assert_eq!(enhance_gated(&m, &x, 0, 3).unwrap(), enhance_waveform_with(&m, &x, 0).unwrap());
}

#[test]
fn all_clean_detector_passes_input_verbatim() {
    let m = with_constant_detector(ModelConfig::default(), 13, false);
    let x = white_noise(6000, 0.1, 14);
    let opts = StreamOptions {
        nd: true,
        ..Default::default()
    };
    let mut s = Stream::new(m.clone(), opts).unwrap();
    let mut y = s.push(&x).unwrap();
    let stats = s.stats();
    y.extend(s.finish().unwrap());
    assert_eq!(y, x);
    assert_eq!(stats.enhanced_frames, 0);
    assert_eq!(enhance_gated(&m, &x, 2, 3).unwrap(), x);
}

#[test]
fn gating_flags_must_cover_the_signal() {
    let x = vec![0.0; 1000];
    assert!(gate_and_splice(&x, &[0, 1], &x, 256, 3).is_err());
}

#[test]
fn rtf_report_charges_detector_and_enhanced_frames() {
    let x = white_noise(16000, 0.1, 15);
    let clean = with_constant_detector(ModelConfig::default(), 16, false);
    let r = measure_rtf(&clean, &x, true, 1).unwrap();
    let macs = lisennet_core::model::count_macs(&clean, 1.0);
    assert_eq!(r.enhanced_fraction, 0.0, "{r:?}");
    assert_eq!(r.macs_effective, macs.detector);
    assert!(r.rtf > 0.0);

    let noisy = with_constant_detector(ModelConfig::default(), 16, true);
    let r = measure_rtf(&noisy, &x, true, 1).unwrap();
    assert_eq!(r.enhanced_fraction, 1.0);
    assert_eq!(r.noise_proportion, 1.0);
    assert!((r.macs_effective - (macs.detector + macs.enhancer)).abs() < 1e-6);
}

#[test]
fn push_after_finish_is_rejected() {
    let m = model(ModelConfig::tiny(), 17);
    let mut s = Stream::new(m, StreamOptions::default()).unwrap();
    assert_eq!(s.push(&[0.1; 100]).unwrap().len() % 16, 0);
    s.finish().unwrap();
    assert!(s.is_finished());
    assert!(s.push(&[0.0]).is_err());
    assert!(s.finish().unwrap().is_empty());
}
