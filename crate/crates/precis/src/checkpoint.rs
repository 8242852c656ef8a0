//! Versioned checkpoint container.
//!
//! A checkpoint is a JSON envelope carrying a format version, the hash of
//! the vocabulary the payload was trained under, and the payload itself.
//! Loading rejects unknown versions; callers that already hold a
//! vocabulary pass its hash and mismatches are rejected before any
//! parameter is touched. JSON round-trips f64 exactly (shortest-repr
//! printing), which the bitwise resume guarantees rely on.

use crate::error::{Error, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    version: u32,
    vocab_hash: u64,
    payload: T,
}

pub fn save<T: Serialize>(path: &Path, vocab_hash: u64, payload: &T) -> Result<()> {
    let f = BufWriter::new(File::create(path)?);
    serde_json::to_writer(
        f,
        &Envelope {
            version: FORMAT_VERSION,
            vocab_hash,
            payload,
        },
    )
    .map_err(|e| Error::Checkpoint(e.to_string()))
}

/// Loads a checkpoint, returning `(vocab_hash, payload)`. When
/// `expected_hash` is given, a mismatch is an error.
pub fn load<T: DeserializeOwned>(path: &Path, expected_hash: Option<u64>) -> Result<(u64, T)> {
    let f = BufReader::new(File::open(path)?);
    let env: Envelope<T> =
        serde_json::from_reader(f).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if env.version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {} (expected {FORMAT_VERSION})",
            env.version
        )));
    }
    if let Some(expected) = expected_hash {
        if env.vocab_hash != expected {
            return Err(Error::VocabHashMismatch {
                expected,
                found: env.vocab_hash,
            });
        }
    }
    Ok((env.vocab_hash, env.payload))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use crate::seq2seq::{Seq2SeqConfig, Seq2SeqParams};

    #[test]
    fn parameters_roundtrip_bitwise() {
        let mut rng = SeededRng::new(1);
        let p = Seq2SeqParams::init(
            Seq2SeqConfig {
                vocab_size: 7,
                embed_dim: 3,
                hidden_dim: 4,
            },
            &mut rng,
        );
        let f = tempfile::NamedTempFile::new().unwrap();
        save(f.path(), 0xabcd, &p).unwrap();
        let (h, q): (u64, Seq2SeqParams) = load(f.path(), Some(0xabcd)).unwrap();
        assert_eq!(h, 0xabcd);
        for (a, b) in p.tensors().iter().zip(q.tensors().iter()) {
            assert_eq!(a, b, "tensors must round-trip exactly");
        }
    }

    #[test]
    fn hash_mismatch_rejected() {
        let f = tempfile::NamedTempFile::new().unwrap();
        save(f.path(), 7, &vec![1.0f64]).unwrap();
        let r: Result<(u64, Vec<f64>)> = load(f.path(), Some(8));
        assert!(matches!(r, Err(Error::VocabHashMismatch { .. })));
        let ok: (u64, Vec<f64>) = load(f.path(), None).unwrap();
        assert_eq!(ok.0, 7);
    }

    #[test]
    fn awkward_floats_roundtrip_exactly() {
        let vals = vec![
            0.1f64,
            1.0 / 3.0,
            f64::MIN_POSITIVE,
            1e-300,
            -2.2250738585072014e-308,
            123456789.123456789,
        ];
        let f = tempfile::NamedTempFile::new().unwrap();
        save(f.path(), 0, &vals).unwrap();
        let (_, back): (u64, Vec<f64>) = load(f.path(), None).unwrap();
        for (a, b) in vals.iter().zip(&back) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
