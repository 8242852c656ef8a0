//! Self-supervised pre-training: pair recipes and fits.
//!
//! Three recipes build (input, target) pairs without labels:
//! - shuffle: corrupt a document by permuting 70% of its positions; the
//!   target is a 6-11 word span of the original in correct order
//!   (single-sentence corpora);
//! - next-sentences: given leading sentences, predict the next k
//!   (k=4 long-text, k=1 character-level Chinese), filtered when more
//!   than 40% of target words never occur in the input;
//! - transfer: the first 35-45 words of a source-domain article paired
//!   with one uniformly chosen sentence of its summary.
//!
//! The generator pre-trains teacher-forced on such pairs; the
//! reconstructor and the active discriminator then pre-train against the
//! frozen pre-trained generator's samples.

use crate::ad::{Arr, Graph};
use crate::corpus::{Document, RealSummaryPool, TokenId, BOS, EOS};
use crate::error::{Error, Result};
use crate::optim::RmsProp;
use crate::par;
use crate::recon::reconstruct_loss;
use crate::rng::SeededRng;
use crate::seq2seq::{
    decode_sample, encode, sequence_nll, teacher_forced_dists, PgenMode, Seq2SeqParams,
};
use crate::trainer::Mode;
use crate::wgan::one_hot_rows;
use crate::{advrl, wgan};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Recipe {
    Shuffle,
    NextSentences,
    Transfer,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PretrainPair {
    pub input: Vec<TokenId>,
    pub target: Vec<TokenId>,
    pub recipe: Recipe,
}

pub const SHUFFLE_FRACTION: f64 = 0.7;
pub const SPAN_MIN: usize = 6;
pub const SPAN_MAX: usize = 11;
pub const NOVEL_WORD_LIMIT: f64 = 0.4;

/// Positions that participate in the corruption shuffle:
/// round(fraction * T) of them, chosen uniformly.
pub fn choose_shuffle_positions(rng: &mut SeededRng, len: usize, fraction: f64) -> Vec<usize> {
    let k = (fraction * len as f64).round() as usize;
    rng.choose_indices(len, k.min(len))
}

/// Shuffle recipe with an explicit corruption fraction (the production
/// value is [`SHUFFLE_FRACTION`]; 0.0 leaves the input untouched).
pub fn make_shuffle_pair_with_fraction(
    doc: &Document,
    rng: &mut SeededRng,
    fraction: f64,
) -> Option<PretrainPair> {
    let t = doc.len();
    if t < SPAN_MIN {
        return None;
    }
    let span_len = rng.int_inclusive(SPAN_MIN, SPAN_MAX).min(t);
    let start = rng.int_inclusive(0, t - span_len);
    let target = doc.tokens[start..start + span_len].to_vec();

    let mut input = doc.tokens.clone();
    let positions = choose_shuffle_positions(rng, t, fraction);
    let mut values: Vec<TokenId> = positions.iter().map(|&p| input[p]).collect();
    rng.shuffle(&mut values);
    for (&p, &v) in positions.iter().zip(&values) {
        input[p] = v;
    }

    Some(PretrainPair {
        input,
        target,
        recipe: Recipe::Shuffle,
    })
}

/// Corrupt-and-reorder pair for single-sentence corpora.
pub fn make_shuffle_pair(doc: &Document, rng: &mut SeededRng) -> Option<PretrainPair> {
    make_shuffle_pair_with_fraction(doc, rng, SHUFFLE_FRACTION)
}

/// Fraction of target tokens whose id never occurs in the input.
fn novel_fraction(input: &[TokenId], target: &[TokenId]) -> f64 {
    let novel = target.iter().filter(|t| !input.contains(t)).count();
    novel as f64 / target.len() as f64
}

/// Next-sentences recipe: input = sentences 0..i, target = sentences
/// i..i+k. Returns Ok(None) when the pair is filtered by the novel-word
/// rule (strictly more than 40% novel).
pub fn make_next_sentences_pair(
    sentences: &[Vec<TokenId>],
    i: usize,
    k: usize,
) -> Result<Option<PretrainPair>> {
    if i == 0 || i + k > sentences.len() {
        return Err(Error::IndexOutOfRange {
            index: i + k,
            len: sentences.len(),
        });
    }
    let input: Vec<TokenId> = sentences[..i].iter().flatten().copied().collect();
    let target: Vec<TokenId> = sentences[i..i + k].iter().flatten().copied().collect();
    if target.is_empty() {
        return Err(Error::EmptySequence("next-sentences target"));
    }
    if novel_fraction(&input, &target) > NOVEL_WORD_LIMIT {
        return Ok(None);
    }
    Ok(Some(PretrainPair {
        input,
        target,
        recipe: Recipe::NextSentences,
    }))
}

pub const TRANSFER_PREFIX_MIN: usize = 35;
pub const TRANSFER_PREFIX_MAX: usize = 45;

/// Transfer recipe: first 35-45 article words as input, one uniformly
/// chosen summary sentence as target. Skips articles shorter than 35
/// words.
pub fn make_transfer_pair(
    article: &Document,
    summary_sentences: &[Vec<TokenId>],
    rng: &mut SeededRng,
) -> Option<PretrainPair> {
    if article.len() < TRANSFER_PREFIX_MIN || summary_sentences.is_empty() {
        return None;
    }
    let l = rng
        .int_inclusive(TRANSFER_PREFIX_MIN, TRANSFER_PREFIX_MAX)
        .min(article.len());
    let target = summary_sentences[rng.below(summary_sentences.len())].clone();
    Some(PretrainPair {
        input: article.tokens[..l].to_vec(),
        target,
        recipe: Recipe::Transfer,
    })
}

/// Teacher-forced fit of target-given-input over the pair set. Returns
/// the mean per-token loss of each epoch. An EOS target is appended so
/// the model learns to stop.
pub fn pretrain_generator(
    params: &mut Seq2SeqParams,
    pairs: &[PretrainPair],
    epochs: usize,
    batch_size: usize,
    lr: f64,
    rng: &mut SeededRng,
) -> Result<Vec<f64>> {
    if pairs.is_empty() {
        return Err(Error::EmptySequence("pre-training pair stream"));
    }
    let mut opt = RmsProp::new(lr);
    let mut epoch_losses = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        rng.shuffle(&mut order);
        let mut total = 0.0;
        for chunk in order.chunks(batch_size.max(1)) {
            let inv = 1.0 / chunk.len() as f64;
            let results: Vec<(f64, Vec<Arr>)> = par::map_batch(chunk, |&i| {
                let pair = &pairs[i];
                let mut g = Graph::new();
                let m = params.bind(&mut g, true);
                let enc = encode(&mut g, &m, &pair.input).expect("non-empty input");
                let mut targets = pair.target.clone();
                targets.push(EOS);
                let dists = teacher_forced_dists(&mut g, &m, &enc, &targets, BOS, PgenMode::Learned);
                let nll = sequence_nll(&mut g, &dists, &targets);
                let scaled = g.scale(nll, inv);
                let grads = g.backward(scaled, &m.vars);
                (
                    g.scalar_value(nll),
                    grads.iter().map(|&v| g.value(v).clone()).collect(),
                )
            });
            let mut grand: Option<Vec<Arr>> = None;
            for (loss, gv) in results {
                total += loss;
                grand = Some(match grand {
                    None => gv,
                    Some(mut acc) => {
                        for (a, b) in acc.iter_mut().zip(&gv) {
                            *a += b;
                        }
                        acc
                    }
                });
            }
            let grads = grand.unwrap();
            let mut tensors = params.tensors_mut();
            opt.step(&mut tensors, &grads);
        }
        epoch_losses.push(total / pairs.len() as f64);
    }
    Ok(epoch_losses)
}

/// Loss traces from critic pre-training.
pub struct CriticPretrainLog {
    pub r_losses: Vec<f64>,
    pub d_losses: Vec<f64>,
}

/// One frozen-generator sample: the discrete rollout and its stacked
/// distribution rows.
pub struct GeneratorSample {
    pub tokens: Vec<TokenId>,
    pub dists: Arr,
}

/// Samples one summary per listed document from a frozen generator.
pub fn sample_generator(
    generator: &Seq2SeqParams,
    docs: &[Document],
    doc_idx: &[usize],
    max_sum_len: usize,
    rng: &mut SeededRng,
) -> Vec<GeneratorSample> {
    let rngs: Vec<SeededRng> = (0..doc_idx.len()).map(|_| rng.split()).collect();
    let items: Vec<(usize, SeededRng)> = doc_idx.iter().copied().zip(rngs).collect();
    par::map_batch(&items, |(di, r)| {
        let mut r = r.clone();
        let mut g = Graph::new();
        let m = generator.bind(&mut g, false);
        let enc = encode(&mut g, &m, &docs[*di].tokens).expect("non-empty doc");
        let out = decode_sample(
            &mut g,
            &m,
            &enc,
            max_sum_len,
            BOS,
            Some(EOS),
            PgenMode::Learned,
            &mut r,
        );
        let mut stacked = Arr::zeros((out.dists.len(), generator.cfg.vocab_size));
        for (i, &d) in out.dists.iter().enumerate() {
            stacked.row_mut(i).assign(&g.value(d).row(0));
        }
        GeneratorSample {
            tokens: out.sampled,
            dists: stacked,
        }
    })
}

fn reconstructor_step(
    reconstructor: &mut Seq2SeqParams,
    opt: &mut RmsProp,
    samples: &[GeneratorSample],
    docs: &[Document],
    doc_idx: &[usize],
) -> f64 {
    let k = samples.len();
    let inv = 1.0 / k as f64;
    let r_items: Vec<usize> = (0..k).collect();
    let results: Vec<(f64, Vec<Arr>)> = par::map_batch(&r_items, |&i| {
        let mut g = Graph::new();
        let m = reconstructor.bind(&mut g, true);
        let loss = reconstruct_loss(&mut g, &m, &samples[i].tokens, &docs[doc_idx[i]].tokens, BOS)
            .expect("sampled summary non-empty");
        let scaled = g.scale(loss, inv);
        let grads = g.backward(scaled, &m.vars);
        (
            g.scalar_value(loss),
            grads.iter().map(|&v| g.value(v).clone()).collect(),
        )
    });
    let mut total = 0.0;
    let mut grand: Option<Vec<Arr>> = None;
    for (loss, gv) in results {
        total += loss;
        grand = Some(match grand {
            None => gv,
            Some(mut acc) => {
                for (a, b) in acc.iter_mut().zip(&gv) {
                    *a += b;
                }
                acc
            }
        });
    }
    let grads = grand.unwrap();
    let mut tensors = reconstructor.tensors_mut();
    opt.step(&mut tensors, &grads);
    total / k as f64
}

/// Real summaries carry an appended EOS to mirror generated sequences.
fn draw_real(pool: &RealSummaryPool, k: usize, rng: &mut SeededRng) -> Vec<Vec<TokenId>> {
    (0..k)
        .map(|_| {
            let mut v = pool.sentences[rng.below(pool.sentences.len())].clone();
            v.push(EOS);
            v
        })
        .collect()
}

fn discriminator_step(
    d1: &mut wgan::D1Params,
    d2: &mut advrl::D2Params,
    opt: &mut RmsProp,
    mode: Mode,
    samples: &[GeneratorSample],
    real: &[Vec<TokenId>],
    vocab_size: usize,
    beta: f64,
    rng: &mut SeededRng,
) -> Result<f64> {
    match mode {
        Mode::Wgan => {
            let fake: Vec<Arr> = samples.iter().map(|s| s.dists.clone()).collect();
            let real_rows: Vec<Arr> = real.iter().map(|r| one_hot_rows(r, vocab_size)).collect();
            let out = wgan::wgan_d_loss(d1, &fake, &real_rows, beta, rng)?;
            let mut tensors = d1.tensors_mut();
            opt.step(&mut tensors, &out.grads);
            Ok(out.loss)
        }
        Mode::AdvReinforce => {
            let fake: Vec<Vec<TokenId>> = samples.iter().map(|s| s.tokens.clone()).collect();
            let out = advrl::d2_loss(d2, &fake, real, beta, rng)?;
            let mut tensors = d2.tensors_mut();
            opt.step(&mut tensors, &out.grads);
            Ok(out.loss)
        }
    }
}

/// Fits the reconstructor alone against a frozen generator.
pub fn pretrain_reconstructor(
    generator: &Seq2SeqParams,
    reconstructor: &mut Seq2SeqParams,
    docs: &[Document],
    updates: usize,
    batch_size: usize,
    max_sum_len: usize,
    lr: f64,
    rng: &mut SeededRng,
) -> Result<Vec<f64>> {
    if docs.is_empty() {
        return Err(Error::EmptySequence("pre-training documents"));
    }
    let mut opt = RmsProp::new(lr);
    let mut losses = Vec::with_capacity(updates);
    for _ in 0..updates {
        let doc_idx: Vec<usize> = (0..batch_size).map(|_| rng.below(docs.len())).collect();
        let samples = sample_generator(generator, docs, &doc_idx, max_sum_len, rng);
        losses.push(reconstructor_step(reconstructor, &mut opt, &samples, docs, &doc_idx));
    }
    Ok(losses)
}

/// Fits the active discriminator alone against a frozen generator.
#[allow(clippy::too_many_arguments)]
pub fn pretrain_discriminator(
    generator: &Seq2SeqParams,
    d1: &mut wgan::D1Params,
    d2: &mut advrl::D2Params,
    mode: Mode,
    docs: &[Document],
    pool: &RealSummaryPool,
    updates: usize,
    batch_size: usize,
    max_sum_len: usize,
    lr: f64,
    beta: f64,
    rng: &mut SeededRng,
) -> Result<Vec<f64>> {
    if docs.is_empty() {
        return Err(Error::EmptySequence("pre-training documents"));
    }
    let mut opt = RmsProp::new(lr);
    let mut losses = Vec::with_capacity(updates);
    for _ in 0..updates {
        let doc_idx: Vec<usize> = (0..batch_size).map(|_| rng.below(docs.len())).collect();
        let samples = sample_generator(generator, docs, &doc_idx, max_sum_len, rng);
        let real = draw_real(pool, batch_size, rng);
        losses.push(discriminator_step(
            d1,
            d2,
            &mut opt,
            mode,
            &samples,
            &real,
            generator.cfg.vocab_size,
            beta,
            rng,
        )?);
    }
    Ok(losses)
}

/// Pre-trains the reconstructor and the active discriminator together
/// against a frozen generator, sharing each update's samples.
#[allow(clippy::too_many_arguments)]
pub fn pretrain_critics(
    generator: &Seq2SeqParams,
    reconstructor: &mut Seq2SeqParams,
    d1: &mut wgan::D1Params,
    d2: &mut advrl::D2Params,
    mode: Mode,
    docs: &[Document],
    pool: &RealSummaryPool,
    updates: usize,
    batch_size: usize,
    max_sum_len: usize,
    lr: f64,
    beta: f64,
    rng: &mut SeededRng,
) -> Result<CriticPretrainLog> {
    if docs.is_empty() {
        return Err(Error::EmptySequence("pre-training documents"));
    }
    let mut opt_r = RmsProp::new(lr);
    let mut opt_d = RmsProp::new(lr);
    let mut r_losses = Vec::with_capacity(updates);
    let mut d_losses = Vec::with_capacity(updates);

    for _ in 0..updates {
        let doc_idx: Vec<usize> = (0..batch_size).map(|_| rng.below(docs.len())).collect();
        let samples = sample_generator(generator, docs, &doc_idx, max_sum_len, rng);
        r_losses.push(reconstructor_step(
            reconstructor,
            &mut opt_r,
            &samples,
            docs,
            &doc_idx,
        ));
        let real = draw_real(pool, batch_size, rng);
        d_losses.push(discriminator_step(
            d1,
            d2,
            &mut opt_d,
            mode,
            &samples,
            &real,
            generator.cfg.vocab_size,
            beta,
            rng,
        )?);
    }

    Ok(CriticPretrainLog { r_losses, d_losses })
}
