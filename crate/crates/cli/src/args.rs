use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "lisennet", version, about = "Lightweight speech enhancement with noise-gated inference")]
pub struct Cli {
    /// Service to talk to; when omitted an in-process service is started.
    #[arg(long, global = true, env = "LISEN_SERVER")]
    pub server: Option<String>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PresetArg {
    Default,
    Tiny,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Enhancer,
    Detector,
    Joint,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// LSNW weight file.
    #[arg(long, value_name = "FILE")]
    pub weights: Option<PathBuf>,

    /// Freshly initialized model of this size (ignored with --weights).
    #[arg(long, value_enum)]
    pub preset: Option<PresetArg>,

    /// Initialization seed for --preset.
    #[arg(long = "model-seed", default_value_t = 0)]
    pub model_seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Enhance a 16 kHz WAV file.
    Enhance {
        input: PathBuf,
        output: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        /// Griffin-Lim iterations (offline path).
        #[arg(long, default_value_t = 2)]
        gla_iters: usize,
        /// Gate the enhancer with the noise detector.
        #[arg(long)]
        nd: bool,
        /// Run through the streaming engine in one-second pushes.
        #[arg(long)]
        streaming: bool,
        /// Look-ahead Griffin-Lim iterations in streaming mode (0 disables).
        #[arg(long, default_value_t = 0)]
        stream_gla: usize,
        /// Frames of hang-over around detected noise.
        #[arg(long, default_value_t = 3)]
        hangover: usize,
    },
    /// Print per-frame noise flags, one 0/1 line per frame.
    Detect {
        input: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Measure the streaming real-time factor.
    BenchRtf {
        /// Proportion of the signal covered by noise; repeat for several points.
        #[arg(long = "noise-proportion", value_delimiter = ',')]
        noise_proportion: Vec<f64>,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        /// Enable the noise detector.
        #[arg(long)]
        nd: bool,
        /// Print "proportion,rtf,macs_effective" rows.
        #[arg(long)]
        csv: bool,
        /// Length of each benchmark signal in seconds.
        #[arg(long, default_value_t = 2.0)]
        seconds: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Worker cap.
        #[arg(long, env = "LISEN_THREADS")]
        threads: Option<usize>,
        /// Detector fitting steps before timing (defaults to the service's choice).
        #[arg(long)]
        fit_steps: Option<usize>,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Print parameter counts per module.
    Params {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Print multiply-accumulate counts.
    Macs {
        #[command(flatten)]
        model: ModelArgs,
        /// Audio duration the totals refer to.
        #[arg(long, default_value_t = 1.0)]
        seconds: f64,
    },
    /// Compare analytic gradients with finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        probes: usize,
    },
    /// Train on one synthetic pair and print the loss curve as CSV.
    TrainMicro {
        #[arg(long, default_value_t = 500)]
        steps: usize,
        /// Seed of the synthetic pair.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 5e-4)]
        lr: f64,
        #[arg(long, value_enum, default_value_t = ModeArg::Enhancer)]
        mode: ModeArg,
        #[arg(long, default_value_t = 0.0)]
        snr_db: f64,
        #[arg(long, default_value_t = 1.0)]
        noise_proportion: f64,
        /// Write the trained weights here.
        #[arg(long, value_name = "FILE")]
        save: Option<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Run the HTTP service in the foreground.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        #[command(flatten)]
        model: ModelArgs,
    },
}
