//! Request and response bodies of the lisennet HTTP/JSON service.
//!
//! Audio travels as plain sample arrays at 16 kHz. Weight files travel as
//! base64-encoded LSNW bytes inside the JSON body.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub const SAMPLE_RATE: u32 = 16_000;

/// Parses a JSON body. Floats are parsed to the nearest `f64`, so sample
/// arrays survive a round trip bit for bit.
pub fn from_json<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, serde_json::Error> {
    serde_json::from_slice(bytes)
}

pub fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>, serde_json::Error> {
    serde_json::to_vec(value)
}

pub mod paths {
    pub const HEALTH: &str = "/health";
    pub const PARAMS: &str = "/v1/model/params";
    pub const MACS: &str = "/v1/model/macs";
    pub const ENHANCE: &str = "/v1/enhance";
    pub const DETECT: &str = "/v1/detect";
    pub const BENCH_RTF: &str = "/v1/bench-rtf";
    pub const GRADCHECK: &str = "/v1/gradcheck";
    pub const TRAIN_MICRO: &str = "/v1/train-micro";
    pub const STREAMS: &str = "/v1/streams";

    pub fn stream_push(id: u64) -> String {
        format!("{STREAMS}/{id}/push")
    }

    pub fn stream_finish(id: u64) -> String {
        format!("{STREAMS}/{id}/finish")
    }

    pub fn stream(id: u64) -> String {
        format!("{STREAMS}/{id}")
    }
}

/// Raw bytes of an LSNW weight file, base64 on the wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lsnw(pub Vec<u8>);

impl Serialize for Lsnw {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&STANDARD.encode(&self.0))
    }
}

impl<'de> Deserialize<'de> for Lsnw {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        STANDARD
            .decode(text.as_bytes())
            .map(Lsnw)
            .map_err(serde::de::Error::custom)
    }
}

/// Built-in model sizes used when no weights are supplied.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    #[default]
    Default,
    Tiny,
}

/// Which model a request runs on. Uploaded weights win over the preset;
/// with neither, the server's own model is used.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelRef {
    pub weights: Option<Lsnw>,
    /// A freshly initialized model of this size and `seed`.
    pub preset: Option<Preset>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParamsRequest {
    pub model: ModelRef,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamsResponse {
    pub encoder: usize,
    pub dpr: usize,
    pub decoder: usize,
    pub mask: usize,
    pub detector: usize,
    pub enhancer: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MacsRequest {
    pub model: ModelRef,
    pub seconds: f64,
}

impl Default for MacsRequest {
    fn default() -> Self {
        Self {
            model: ModelRef::default(),
            seconds: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacsResponse {
    pub enhancer_per_frame: usize,
    pub detector_per_frame: usize,
    pub frames_per_second: f64,
    pub seconds: f64,
    pub enhancer: f64,
    pub detector: f64,
    pub total: f64,
}

/// Phase refinement in streaming mode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamGla {
    #[default]
    Off,
    /// Local Griffin-Lim over a one-frame look-ahead window.
    Buffered(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnhanceRequest {
    pub model: ModelRef,
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    /// Griffin-Lim iterations for the offline path.
    pub gla_iters: usize,
    /// Gate the enhancer with the noise detector.
    pub nd: bool,
    /// Run through the frame-by-frame streaming engine.
    pub streaming: bool,
    /// Griffin-Lim mode for the streaming path.
    pub stream_gla: StreamGla,
    pub hangover: usize,
}

impl Default for EnhanceRequest {
    fn default() -> Self {
        Self {
            model: ModelRef::default(),
            samples: Vec::new(),
            sample_rate: SAMPLE_RATE,
            gla_iters: 2,
            nd: false,
            streaming: false,
            stream_gla: StreamGla::Off,
            hangover: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnhanceResponse {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectRequest {
    pub model: ModelRef,
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Default for DetectRequest {
    fn default() -> Self {
        Self {
            model: ModelRef::default(),
            samples: Vec::new(),
            sample_rate: SAMPLE_RATE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectResponse {
    pub flags: Vec<u8>,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchRequest {
    pub model: ModelRef,
    pub noise_proportions: Vec<f64>,
    pub seconds: f64,
    pub repeats: usize,
    pub nd: bool,
    /// Detector training steps on synthetic signals before timing; `None`
    /// trains only when no weights were uploaded.
    pub fit_detector_steps: Option<usize>,
    /// Worker cap; the server's `LISEN_THREADS` setting when absent.
    pub threads: Option<usize>,
    pub seed: u64,
}

impl Default for BenchRequest {
    fn default() -> Self {
        Self {
            model: ModelRef::default(),
            noise_proportions: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            seconds: 2.0,
            repeats: 5,
            nd: false,
            fit_detector_steps: None,
            threads: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub proportion: f64,
    pub rtf: f64,
    pub macs_effective: f64,
    pub wall_seconds: f64,
    pub audio_seconds: f64,
    /// Fraction of frames the detector flagged.
    pub detected_proportion: f64,
    pub enhanced_fraction: f64,
    pub repeats: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResponse {
    pub rows: Vec<BenchRow>,
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GradcheckRequest {
    pub seed: u64,
    pub probes: usize,
}

impl Default for GradcheckRequest {
    fn default() -> Self {
        Self { seed: 0, probes: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerError {
    pub kind: String,
    pub max_rel_err: f64,
    pub entries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckResponse {
    pub layers: Vec<LayerError>,
    pub model: f64,
    pub probes: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    #[default]
    Enhancer,
    Detector,
    Joint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainRequest {
    pub model: ModelRef,
    pub steps: usize,
    /// Seed of the synthetic training pair.
    pub seed: u64,
    pub seconds: f64,
    pub snr_db: f64,
    pub noise_proportion: f64,
    pub lr0: f64,
    pub mode: TrainMode,
    /// Return the trained weights as an LSNW file.
    pub return_weights: bool,
}

impl Default for TrainRequest {
    fn default() -> Self {
        Self {
            model: ModelRef::default(),
            steps: 500,
            seed: 1,
            seconds: 1.0,
            snr_db: 0.0,
            noise_proportion: 1.0,
            lr0: 5e-4,
            mode: TrainMode::Enhancer,
            return_weights: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainResponse {
    pub losses: Vec<f64>,
    pub grad_norms: Vec<f64>,
    pub clipped_norms: Vec<f64>,
    pub weights: Option<Lsnw>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OpenStreamRequest {
    pub model: ModelRef,
    pub nd: bool,
    pub gla: StreamGla,
    pub hangover: usize,
}

impl Default for OpenStreamRequest {
    fn default() -> Self {
        Self {
            model: ModelRef::default(),
            nd: false,
            gla: StreamGla::Off,
            hangover: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpenStreamResponse {
    pub id: u64,
    pub latency_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PushRequest {
    pub samples: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PushResponse {
    pub samples: Vec<f64>,
    /// Input samples received so far.
    pub sample_clock: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamStats {
    pub samples_in: usize,
    pub samples_out: usize,
    pub frames: usize,
    pub enhanced_frames: usize,
    pub noisy_frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinishResponse {
    pub samples: Vec<f64>,
    pub stats: StreamStats,
}

/// Body of every non-2xx response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    /// Stable machine-readable category, e.g. `bad_request`, `not_found`.
    pub kind: String,
    pub message: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lsnw_travels_as_base64() {
        let w = Lsnw(vec![0, 1, 2, 250]);
        let json = serde_json::to_string(&w).unwrap();
        assert_eq!(json, "\"AAEC+g==\"");
        assert_eq!(serde_json::from_str::<Lsnw>(&json).unwrap(), w);
        assert!(serde_json::from_str::<Lsnw>("\"***\"").is_err());
    }

    #[test]
    fn floats_round_trip_exactly() {
        let xs: Vec<f64> = (1..2000).map(|i| (i as f64 * 0.7311).sin() / 3.0).collect();
        let back: Vec<f64> = from_json(&to_json(&xs).unwrap()).unwrap();
        assert!(xs.iter().zip(&back).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn omitted_fields_take_defaults() {
        let r: EnhanceRequest = serde_json::from_str(r#"{"samples":[0.5]}"#).unwrap();
        assert_eq!(r.gla_iters, 2);
        assert_eq!(r.sample_rate, SAMPLE_RATE);
        assert_eq!(r.hangover, 3);
        let b: BenchRequest = serde_json::from_str("{}").unwrap();
        assert_eq!(b.repeats, 5);
        let g: StreamGla = serde_json::from_str(r#"{"buffered":2}"#).unwrap();
        assert_eq!(g, StreamGla::Buffered(2));
    }
}
