//! Binary input formats and report writers.

mod formats;
mod output;

pub use formats::{
    decode_classifier, decode_object, decode_scene, encode_classifier, encode_object,
    encode_scene, load_classifier, load_inputs, load_object, load_scene, save_classifier,
    save_object, save_scene, CLASSIFIER_MAGIC, OBJECT_MAGIC, SCENE_MAGIC,
};
pub use output::{marginal_csv, particle_jsonl, read_marginal_csv, read_particles_jsonl, ParticleLine};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: Vec<u8> },

    #[error("truncated payload: need {needed} bytes, have {available}")]
    TruncatedPayload { needed: u64, available: u64 },

    #[error("{trailing} unexpected bytes after payload")]
    TrailingBytes { trailing: u64 },

    #[error("non-finite or out-of-range value: {0}")]
    NonFiniteValue(String),

    #[error("invalid header: {0}")]
    InvalidHeader(String),

    #[error("malformed record: {0}")]
    Malformed(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
