use std::path::Path;
use std::sync::atomic::Ordering;
use std::sync::{Arc, Mutex};

use axum::extract::{Path as UrlPath, State};
use axum::http::{StatusCode, Uri};
use axum::Json;
use lisennet_api as api;
use lisennet_core::io::{decode_lsnw, encode_lsnw};
use lisennet_core::model::{count_macs, count_params, enhance_waveform_with, noise_detect, Model, ModelConfig};
use lisennet_core::runtime::{
    bench_threads, enhance_gated, enhance_streaming, fit_bench_detector, run_bench, GlaMode, Stream, StreamOptions,
    StreamStats,
};
use lisennet_core::synth::NoisyPair;
use lisennet_core::training::{gradcheck_all, micro_train, TrainConfig, TrainMode};
use lisennet_core::Error;

use crate::error::{ApiJson, Failure};
use crate::{AppState, MAX_STREAMS};

type Reply<T> = Result<Json<T>, Failure>;

/// Detector training steps used by the benchmark when no weights are uploaded.
const BENCH_FIT_STEPS: usize = 150;

async fn blocking<T, F>(f: F) -> Result<T, Failure>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, Failure> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| Failure::internal(format!("worker failed: {e}")))?
}

fn resolve(state: &AppState, r: &api::ModelRef) -> Result<Arc<Model>, Failure> {
    if let Some(w) = &r.weights {
        return Ok(Arc::new(decode_lsnw(&w.0, Path::new("<uploaded weights>"))?));
    }
    match r.preset {
        Some(api::Preset::Default) => Ok(Arc::new(Model::new(ModelConfig::default(), r.seed)?)),
        Some(api::Preset::Tiny) => Ok(Arc::new(Model::new(ModelConfig::tiny(), r.seed)?)),
        None => Ok(state.model().clone()),
    }
}

fn check_audio(model: &Model, samples: &[f64], rate: u32) -> Result<(), Failure> {
    let want = model.config().stft.sample_rate;
    if rate != want {
        return Err(Error::SampleRate(rate).into());
    }
    if samples.is_empty() {
        return Err(Error::EmptyInput.into());
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Failure::bad_request("samples must be finite"));
    }
    Ok(())
}

fn gla_mode(g: api::StreamGla) -> GlaMode {
    match g {
        api::StreamGla::Off => GlaMode::Off,
        api::StreamGla::Buffered(k) => GlaMode::Buffered(k),
    }
}

fn stats_dto(s: StreamStats) -> api::StreamStats {
    api::StreamStats {
        samples_in: s.samples_in,
        samples_out: s.samples_out,
        frames: s.frames,
        enhanced_frames: s.enhanced_frames,
        noisy_frames: s.noisy_frames,
    }
}

pub async fn health() -> Json<api::Health> {
    Json(api::Health {
        status: "ok".into(),
        version: env!("CARGO_PKG_VERSION").into(),
    })
}

pub async fn no_route(uri: Uri) -> Failure {
    Failure::not_found(format!("no route for {uri}"))
}

fn params_of(m: &Model) -> api::ParamsResponse {
    let p = count_params(m);
    api::ParamsResponse {
        encoder: p.encoder,
        dpr: p.dpr,
        decoder: p.decoder,
        mask: p.mask,
        detector: p.detector,
        enhancer: p.enhancer,
        total: p.total,
    }
}

pub async fn params_default(State(st): State<Arc<AppState>>) -> Json<api::ParamsResponse> {
    Json(params_of(st.model()))
}

pub async fn params(State(st): State<Arc<AppState>>, ApiJson(req): ApiJson<api::ParamsRequest>) -> Reply<api::ParamsResponse> {
    Ok(Json(params_of(&*resolve(&st, &req.model)?)))
}

fn macs_of(m: &Model, seconds: f64) -> Result<api::MacsResponse, Failure> {
    if !(seconds.is_finite() && seconds >= 0.0) {
        return Err(Failure::bad_request("seconds must be a non-negative number"));
    }
    let c = count_macs(m, seconds);
    Ok(api::MacsResponse {
        enhancer_per_frame: c.enhancer_per_frame,
        detector_per_frame: c.detector_per_frame,
        frames_per_second: c.frames_per_second,
        seconds: c.seconds,
        enhancer: c.enhancer,
        detector: c.detector,
        total: c.total(),
    })
}

pub async fn macs_default(State(st): State<Arc<AppState>>) -> Reply<api::MacsResponse> {
    Ok(Json(macs_of(st.model(), 1.0)?))
}

pub async fn macs(State(st): State<Arc<AppState>>, ApiJson(req): ApiJson<api::MacsRequest>) -> Reply<api::MacsResponse> {
    Ok(Json(macs_of(&*resolve(&st, &req.model)?, req.seconds)?))
}

pub async fn enhance(State(st): State<Arc<AppState>>, ApiJson(req): ApiJson<api::EnhanceRequest>) -> Reply<api::EnhanceResponse> {
    let model = resolve(&st, &req.model)?;
    check_audio(&model, &req.samples, req.sample_rate)?;
    let rate = req.sample_rate;
    let samples = blocking(move || {
        let y = if req.streaming {
            let opts = StreamOptions {
                nd: req.nd,
                gla: gla_mode(req.stream_gla),
                hangover: req.hangover,
            };
            enhance_streaming(&model, &req.samples, opts)?
        } else if req.nd {
            enhance_gated(&model, &req.samples, req.gla_iters, req.hangover)?
        } else {
            enhance_waveform_with(&model, &req.samples, req.gla_iters)?
        };
        Ok(y)
    })
    .await?;
    Ok(Json(api::EnhanceResponse {
        samples,
        sample_rate: rate,
    }))
}

pub async fn detect(State(st): State<Arc<AppState>>, ApiJson(req): ApiJson<api::DetectRequest>) -> Reply<api::DetectResponse> {
    let model = resolve(&st, &req.model)?;
    check_audio(&model, &req.samples, req.sample_rate)?;
    let flags = blocking(move || Ok(noise_detect(&model, &req.samples)?)).await?;
    Ok(Json(api::DetectResponse {
        flags: flags.flags,
        probs: flags.probs,
    }))
}

pub async fn bench_rtf(State(st): State<Arc<AppState>>, ApiJson(req): ApiJson<api::BenchRequest>) -> Reply<api::BenchResponse> {
    if req.noise_proportions.is_empty() {
        return Err(Failure::bad_request("at least one noise proportion is required"));
    }
    let model = resolve(&st, &req.model)?;
    let threads = req.threads.unwrap_or_else(bench_threads).max(1);
    let fit = req
        .fit_detector_steps
        .unwrap_or(if req.model.weights.is_none() { BENCH_FIT_STEPS } else { 0 });
    let rows = blocking(move || {
        let model = if req.nd && fit > 0 {
            let mut owned = Model::clone(&model);
            fit_bench_detector(&mut owned, fit, req.seed)?;
            Arc::new(owned)
        } else {
            model
        };
        let reports = run_bench(&model, &req.noise_proportions, req.seconds, req.nd, req.repeats, threads, req.seed)?;
        Ok(req
            .noise_proportions
            .iter()
            .zip(reports)
            .map(|(&p, r)| api::BenchRow {
                proportion: p,
                rtf: r.rtf,
                macs_effective: r.macs_effective,
                wall_seconds: r.wall_seconds,
                audio_seconds: r.audio_seconds,
                detected_proportion: r.noise_proportion,
                enhanced_fraction: r.enhanced_fraction,
                repeats: r.repeats,
            })
            .collect())
    })
    .await?;
    Ok(Json(api::BenchResponse { rows, threads }))
}

pub async fn gradcheck(ApiJson(req): ApiJson<api::GradcheckRequest>) -> Reply<api::GradcheckResponse> {
    if req.probes == 0 {
        return Err(Failure::bad_request("probes must be at least 1"));
    }
    let rep = blocking(move || Ok(gradcheck_all(req.seed, req.probes)?)).await?;
    Ok(Json(api::GradcheckResponse {
        layers: rep
            .layers
            .into_iter()
            .map(|l| api::LayerError {
                kind: l.kind,
                max_rel_err: l.max_rel_err,
                entries: l.entries,
            })
            .collect(),
        model: rep.model,
        probes: rep.probes,
    }))
}

pub async fn train_micro(State(st): State<Arc<AppState>>, ApiJson(req): ApiJson<api::TrainRequest>) -> Reply<api::TrainResponse> {
    if !(0.0..=1.0).contains(&req.noise_proportion) {
        return Err(Failure::bad_request("noise_proportion must lie in [0, 1]"));
    }
    if !(req.seconds.is_finite() && req.seconds > 0.0 && req.seconds <= 600.0) {
        return Err(Failure::bad_request("seconds must lie in (0, 600]"));
    }
    if !req.snr_db.is_finite() {
        return Err(Failure::bad_request("snr_db must be finite"));
    }
    let model = resolve(&st, &req.model)?;
    let cfg = TrainConfig {
        lr0: req.lr0,
        mode: match req.mode {
            api::TrainMode::Enhancer => TrainMode::Enhancer,
            api::TrainMode::Detector => TrainMode::Detector,
            api::TrainMode::Joint => TrainMode::Joint,
        },
        ..Default::default()
    };
    cfg.validate()?;
    blocking(move || {
        let mut model = Model::clone(&model);
        let sr = model.config().stft.sample_rate;
        let pair = NoisyPair::tone_in_noise(req.seconds, sr, req.snr_db, req.noise_proportion, req.seed);
        let rep = micro_train(&mut model, &pair.noisy, &pair.clean, &cfg, req.steps)?;
        let weights = if req.return_weights {
            Some(api::Lsnw(encode_lsnw(&model)?))
        } else {
            None
        };
        Ok(Json(api::TrainResponse {
            losses: rep.losses,
            grad_norms: rep.grad_norms,
            clipped_norms: rep.clipped_norms,
            weights,
        }))
    })
    .await
}

pub async fn open_stream(
    State(st): State<Arc<AppState>>,
    ApiJson(req): ApiJson<api::OpenStreamRequest>,
) -> Result<(StatusCode, Json<api::OpenStreamResponse>), Failure> {
    let model = resolve(&st, &req.model)?;
    let stream = Stream::new(
        model,
        StreamOptions {
            nd: req.nd,
            gla: gla_mode(req.gla),
            hangover: req.hangover,
        },
    )?;
    let latency = stream.latency();
    let mut map = st.streams.lock().map_err(|_| Failure::internal("stream table poisoned"))?;
    if map.len() >= MAX_STREAMS {
        return Err(Failure::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "too_many_streams",
            format!("at most {MAX_STREAMS} streams may be open"),
        ));
    }
    let id = st.next_stream.fetch_add(1, Ordering::Relaxed);
    map.insert(id, Arc::new(Mutex::new(stream)));
    tracing::debug!(id, latency, "stream opened");
    Ok((
        StatusCode::CREATED,
        Json(api::OpenStreamResponse {
            id,
            latency_samples: latency,
        }),
    ))
}

fn lookup(st: &AppState, id: u64) -> Result<Arc<Mutex<Stream>>, Failure> {
    st.streams
        .lock()
        .map_err(|_| Failure::internal("stream table poisoned"))?
        .get(&id)
        .cloned()
        .ok_or_else(|| Failure::not_found(format!("no open stream {id}")))
}

pub async fn push_stream(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<u64>,
    ApiJson(req): ApiJson<api::PushRequest>,
) -> Reply<api::PushResponse> {
    let stream = lookup(&st, id)?;
    blocking(move || {
        let mut s = stream.lock().map_err(|_| Failure::internal("stream poisoned"))?;
        let samples = s.push(&req.samples)?;
        Ok(Json(api::PushResponse {
            samples,
            sample_clock: s.sample_clock(),
        }))
    })
    .await
}

pub async fn finish_stream(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<u64>) -> Reply<api::FinishResponse> {
    let stream = lookup(&st, id)?;
    let reply = blocking(move || {
        let mut s = stream.lock().map_err(|_| Failure::internal("stream poisoned"))?;
        let samples = s.finish()?;
        Ok(Json(api::FinishResponse {
            samples,
            stats: stats_dto(s.stats()),
        }))
    })
    .await?;
    if let Ok(mut map) = st.streams.lock() {
        map.remove(&id);
    }
    Ok(reply)
}

pub async fn close_stream(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<u64>) -> Result<StatusCode, Failure> {
    let removed = st
        .streams
        .lock()
        .map_err(|_| Failure::internal("stream table poisoned"))?
        .remove(&id);
    match removed {
        Some(_) => Ok(StatusCode::NO_CONTENT),
        None => Err(Failure::not_found(format!("no open stream {id}"))),
    }
}
