//! Unpaired abstractive summarization.
//!
//! A text auto-encoder whose latent code is a short human-readable word
//! sequence: a generator compresses a document into the short sequence, a
//! reconstructor recovers the document from it, and a discriminator (one of
//! two interchangeable adversarial methods) keeps the short sequence close
//! to human-written sentences. Taking the generator output as the summary
//! yields abstractive summarization without document-summary pairs.
//!
//! Modules:
//! - [`corpus`]: vocabularies, documents, unpaired batching
//! - [`ad`]: reverse-mode autodiff graph (double-backward capable)
//! - [`seq2seq`]: hybrid pointer-generator encoder-decoder shared by
//!   generator and reconstructor, plus sampling/greedy/beam decoding
//! - [`recon`]: reconstruction losses, self-critical reward, baseline
//! - [`wgan`]: method 1 — residual-CNN critic over distribution sequences
//!   with gradient penalty
//! - [`advrl`]: method 2 — recurrent per-step critic, self-critical
//!   step rewards, discounted returns
//! - [`pretrain`]: self-supervised pre-training recipes and fits
//! - [`trainer`]: joint adversarial loop, optimizer, checkpoints, metrics
//! - [`rouge`]: ROUGE-1/2/L scoring and lead-k baselines

pub mod ad;
pub mod advrl;
pub mod beam;
pub mod checkpoint;
pub mod corpus;
pub mod error;
pub mod optim;
pub mod par;
pub mod pretrain;
pub mod recon;
pub mod rng;
pub mod rouge;
pub mod seq2seq;
pub mod synth;
pub mod trainer;
pub mod wgan;

pub use error::{Error, Result};
pub use rng::SeededRng;
