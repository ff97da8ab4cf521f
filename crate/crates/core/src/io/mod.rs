//! Weight files and WAV audio.

mod lsnw;
mod wav;

pub use lsnw::{decode_lsnw, encode_lsnw, load_weights, load_weights_expecting, save_weights, LSNW_MAGIC, LSNW_VERSION};
pub use wav::{quantize_pcm16, read_wav, write_wav, REQUIRED_SAMPLE_RATE};
