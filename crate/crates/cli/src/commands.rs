use std::error::Error;
use std::io::Write;
use std::net::SocketAddr;
use std::path::Path;

use lisennet_api as api;
use lisennet_client::Client;
use lisennet_core::io::{load_weights, read_wav, save_weights, write_wav};
use lisennet_core::model::{Model, ModelConfig};
use lisennet_server::AppState;

use crate::args::{Cli, Command, ModeArg, ModelArgs, PresetArg};

type Res<T = ()> = Result<T, Box<dyn Error>>;

/// Samples per push in streaming mode.
const STREAM_CHUNK: usize = 16_000;

fn preset(p: PresetArg) -> api::Preset {
    match p {
        PresetArg::Default => api::Preset::Default,
        PresetArg::Tiny => api::Preset::Tiny,
    }
}

/// Reads and validates a weight file locally so errors name the file,
/// then ships its bytes.
fn model_ref(m: &ModelArgs) -> Res<api::ModelRef> {
    if let Some(path) = &m.weights {
        load_weights(path).map_err(|e| format!("{}: {e}", path.display()))?;
        return Ok(api::ModelRef {
            weights: Some(api::Lsnw(std::fs::read(path)?)),
            ..Default::default()
        });
    }
    Ok(api::ModelRef {
        weights: None,
        preset: m.preset.map(preset),
        seed: m.model_seed,
    })
}

fn local_model(m: &ModelArgs) -> Res<Model> {
    if let Some(path) = &m.weights {
        return Ok(load_weights(path).map_err(|e| format!("{}: {e}", path.display()))?);
    }
    let cfg = match m.preset {
        Some(PresetArg::Tiny) => ModelConfig::tiny(),
        _ => ModelConfig::default(),
    };
    Ok(Model::new(cfg, m.model_seed)?)
}

fn read_input(path: &Path) -> Res<Vec<f64>> {
    let (x, _) = read_wav(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(x)
}

async fn connect(server: Option<String>) -> Res<Client> {
    if let Some(url) = server {
        return Ok(Client::new(url));
    }
    let addr: SocketAddr = ([127, 0, 0, 1], 0).into();
    let state = AppState::new(Model::new(ModelConfig::default(), 0)?);
    let (local, _task) = lisennet_server::spawn(addr, state).await?;
    Ok(Client::new(format!("http://{local}")))
}

pub async fn run(cli: Cli, out: &mut impl Write) -> Res {
    if let Command::Serve { addr, model } = &cli.command {
        let state = AppState::new(local_model(model)?);
        let listener = tokio::net::TcpListener::bind(addr).await?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        lisennet_server::serve(listener, state).await?;
        return Ok(());
    }
    let client = connect(cli.server).await?;
    match cli.command {
        Command::Enhance {
            input,
            output,
            model,
            gla_iters,
            nd,
            streaming,
            stream_gla,
            hangover,
        } => {
            let x = read_input(&input)?;
            let model = model_ref(&model)?;
            let gla = if stream_gla == 0 {
                api::StreamGla::Off
            } else {
                api::StreamGla::Buffered(stream_gla)
            };
            let y = if streaming {
                enhance_streamed(&client, model, &x, nd, gla, hangover).await?
            } else {
                let req = api::EnhanceRequest {
                    model,
                    samples: x,
                    gla_iters,
                    nd,
                    hangover,
                    ..Default::default()
                };
                client.enhance(&req).await?.samples
            };
            write_wav(&output, &y, api::SAMPLE_RATE).map_err(|e| format!("{}: {e}", output.display()))?;
        }
        Command::Detect { input, model } => {
            let req = api::DetectRequest {
                model: model_ref(&model)?,
                samples: read_input(&input)?,
                ..Default::default()
            };
            for f in client.detect(&req).await?.flags {
                writeln!(out, "{f}")?;
            }
        }
        Command::BenchRtf {
            noise_proportion,
            repeats,
            nd,
            csv,
            seconds,
            seed,
            threads,
            fit_steps,
            model,
        } => {
            let mut req = api::BenchRequest {
                model: model_ref(&model)?,
                seconds,
                repeats,
                nd,
                fit_detector_steps: fit_steps,
                threads,
                seed,
                ..Default::default()
            };
            if !noise_proportion.is_empty() {
                req.noise_proportions = noise_proportion;
            }
            let rep = client.bench_rtf(&req).await?;
            if csv {
                writeln!(out, "proportion,rtf,macs_effective")?;
                for r in &rep.rows {
                    writeln!(out, "{},{:.6},{:.0}", r.proportion, r.rtf, r.macs_effective)?;
                }
            } else {
                writeln!(out, "{:>10} {:>10} {:>16} {:>9} {:>9}", "proportion", "rtf", "macs_effective", "detected", "enhanced")?;
                for r in &rep.rows {
                    writeln!(
                        out,
                        "{:>10.3} {:>10.5} {:>16.0} {:>9.3} {:>9.3}",
                        r.proportion, r.rtf, r.macs_effective, r.detected_proportion, r.enhanced_fraction
                    )?;
                }
                writeln!(out, "threads {}, repeats {}", rep.threads, repeats)?;
            }
        }
        Command::Params { model } => {
            let p = client.params(&api::ParamsRequest { model: model_ref(&model)? }).await?;
            for (name, n) in [
                ("encoder", p.encoder),
                ("dpr", p.dpr),
                ("decoder", p.decoder),
                ("mask", p.mask),
                ("detector", p.detector),
                ("enhancer", p.enhancer),
                ("total", p.total),
            ] {
                writeln!(out, "{name} {n}")?;
            }
        }
        Command::Macs { model, seconds } => {
            let req = api::MacsRequest {
                model: model_ref(&model)?,
                seconds,
            };
            let m = client.macs(&req).await?;
            writeln!(out, "enhancer_per_frame {}", m.enhancer_per_frame)?;
            writeln!(out, "detector_per_frame {}", m.detector_per_frame)?;
            writeln!(out, "frames_per_second {}", m.frames_per_second)?;
            writeln!(out, "enhancer {:.0}", m.enhancer)?;
            writeln!(out, "detector {:.0}", m.detector)?;
            writeln!(out, "total {:.0}", m.total)?;
        }
        Command::Gradcheck { seed, probes } => {
            let r = client.gradcheck(&api::GradcheckRequest { seed, probes }).await?;
            for l in &r.layers {
                writeln!(out, "{} {:.3e}", l.kind, l.max_rel_err)?;
            }
            writeln!(out, "model {:.3e}", r.model)?;
        }
        Command::TrainMicro {
            steps,
            seed,
            lr,
            mode,
            snr_db,
            noise_proportion,
            save,
            model,
        } => {
            let req = api::TrainRequest {
                model: model_ref(&model)?,
                steps,
                seed,
                snr_db,
                noise_proportion,
                lr0: lr,
                mode: match mode {
                    ModeArg::Enhancer => api::TrainMode::Enhancer,
                    ModeArg::Detector => api::TrainMode::Detector,
                    ModeArg::Joint => api::TrainMode::Joint,
                },
                return_weights: save.is_some(),
                ..Default::default()
            };
            let rep = client.train_micro(&req).await?;
            writeln!(out, "step,loss")?;
            for (i, l) in rep.losses.iter().enumerate() {
                writeln!(out, "{i},{l}")?;
            }
            if let (Some(path), Some(w)) = (save, rep.weights) {
                // validate before writing
                let m = lisennet_core::io::decode_lsnw(&w.0, &path)?;
                save_weights(&m, &path).map_err(|e| format!("{}: {e}", path.display()))?;
            }
        }
        Command::Serve { .. } => unreachable!("handled above"),
    }
    Ok(())
}

async fn enhance_streamed(
    client: &Client,
    model: api::ModelRef,
    x: &[f64],
    nd: bool,
    gla: api::StreamGla,
    hangover: usize,
) -> Res<Vec<f64>> {
    let open = client
        .open_stream(&api::OpenStreamRequest {
            model,
            nd,
            gla,
            hangover,
        })
        .await?;
    let mut y = Vec::with_capacity(x.len());
    for chunk in x.chunks(STREAM_CHUNK) {
        match client.push(open.id, chunk).await {
            Ok(r) => y.extend(r.samples),
            Err(e) => {
                let _ = client.close(open.id).await;
                return Err(e.into());
            }
        }
    }
    y.extend(client.finish(open.id).await?.samples);
    Ok(y)
}
