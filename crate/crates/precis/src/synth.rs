//! Synthetic keyword corpus for end-to-end experiments.
//!
//! Each document is filler text with a few planted keyword tokens; the
//! only information a short summary can carry about a document is which
//! keywords it holds. The unpaired "real summary" pool comes from a
//! keyword-sentence grammar, so adversarial training pushes the generator
//! toward short keyword sentences while reconstruction ties them to the
//! input document. Reference summaries for scoring are the planted
//! keywords themselves.

use crate::ad::Graph;
use crate::beam::{beam_search, RepetitionFilter};
use crate::corpus::{
    build_vocabulary_from_lines, Document, Language, Provenance, RealSummaryPool, TokenId,
    Vocabulary, EOS, NUM_SPECIALS,
};
use crate::error::Result;
use crate::par;
use crate::pretrain::{self, make_shuffle_pair, PretrainPair};
use crate::rng::SeededRng;
use crate::rouge::rouge_n;
use crate::seq2seq::{encode, PgenMode, Seq2SeqParams, Seq2SeqStepper};
use crate::trainer::{Mode, TrainConfig, TrainState, Trainer};

#[derive(Clone, Copy, Debug)]
pub struct SynthConfig {
    pub num_docs: usize,
    pub num_real_summaries: usize,
    /// Distinct filler word types.
    pub num_fillers: usize,
    /// Distinct keyword word types.
    pub num_keywords: usize,
    pub keywords_per_doc: usize,
    pub doc_len: (usize, usize),
    /// Keyword count range of grammar sentences in the real pool.
    pub summary_len: (usize, usize),
}

impl Default for SynthConfig {
    /// 500 documents over 60 word types, 3 planted keywords each.
    fn default() -> Self {
        SynthConfig {
            num_docs: 500,
            num_real_summaries: 400,
            num_fillers: 48,
            num_keywords: 12,
            keywords_per_doc: 3,
            doc_len: (15, 25),
            summary_len: (3, 5),
        }
    }
}

/// Generated corpus as text lines, ready for the standard file pipeline.
pub struct SynthCorpus {
    /// One document per line.
    pub articles: Vec<String>,
    /// One line of planted keywords per document (scoring references).
    pub references: Vec<String>,
    /// Unpaired keyword-grammar sentences for the discriminator.
    pub real_summaries: Vec<String>,
}

fn keyword(i: usize) -> String {
    format!("kw{i:02}")
}

fn filler(i: usize) -> String {
    format!("w{i:02}")
}

pub fn generate(cfg: &SynthConfig, seed: u64) -> SynthCorpus {
    let mut rng = SeededRng::new(seed);
    let mut articles = Vec::with_capacity(cfg.num_docs);
    let mut references = Vec::with_capacity(cfg.num_docs);
    for _ in 0..cfg.num_docs {
        let len = rng.int_inclusive(cfg.doc_len.0, cfg.doc_len.1);
        let kws = rng.choose_indices(cfg.num_keywords, cfg.keywords_per_doc);
        let mut tokens: Vec<String> = (0..len).map(|_| filler(rng.below(cfg.num_fillers))).collect();
        let positions = rng.choose_indices(len, cfg.keywords_per_doc);
        for (&pos, &kw) in positions.iter().zip(&kws) {
            tokens[pos] = keyword(kw);
        }
        articles.push(tokens.join(" "));
        references.push(kws.iter().map(|&k| keyword(k)).collect::<Vec<_>>().join(" "));
    }

    let mut real_summaries = Vec::with_capacity(cfg.num_real_summaries);
    for _ in 0..cfg.num_real_summaries {
        let len = rng.int_inclusive(cfg.summary_len.0, cfg.summary_len.1);
        let kws = rng.choose_indices(cfg.num_keywords, len.min(cfg.num_keywords));
        real_summaries.push(kws.iter().map(|&k| keyword(k)).collect::<Vec<_>>().join(" "));
    }

    SynthCorpus {
        articles,
        references,
        real_summaries,
    }
}

/// Training configuration scaled to the synthetic corpus: small models,
/// learning rates sized for a short 2000-update run.
pub fn train_config(mode: Mode, seed: u64) -> TrainConfig {
    TrainConfig {
        mode,
        alpha: 25.0,
        gamma: 0.9,
        g_lr: 3e-4,
        d_lr: 1e-3,
        batch_size: 8,
        embed_dim: 24,
        hidden_dim: 40,
        d1_hidden: 32,
        d1_blocks: 2,
        d2_embed_dim: 24,
        d2_hidden: 32,
        max_sum_len: 6,
        max_updates: 2000,
        seed,
        ..TrainConfig::default()
    }
}

/// Mean ROUGE-1 F1 of beam-decoded (beam 5, repetition filter on)
/// summaries against reference token lists, specials stripped.
pub fn rouge1_of_generator(
    params: &Seq2SeqParams,
    docs: &[Document],
    references: &[Vec<TokenId>],
    max_len: usize,
) -> f64 {
    let scores: Vec<f64> = par::map_batch(docs, |doc| {
        let mut g = Graph::new();
        let m = params.bind(&mut g, false);
        let enc = encode(&mut g, &m, &doc.tokens).expect("non-empty doc");
        let mut stepper = Seq2SeqStepper {
            g: &mut g,
            model: &m,
            enc: &enc,
            start: crate::corpus::BOS,
            pgen_mode: PgenMode::Learned,
        };
        let out = beam_search(&mut stepper, 5, max_len, Some(EOS), RepetitionFilter::On);
        out
    })
    .into_iter()
    .zip(references)
    .map(|(cand, reference)| {
        let surface: Vec<TokenId> = cand.into_iter().filter(|&t| t >= NUM_SPECIALS).collect();
        rouge_n(&surface, reference, 1).expect("non-empty reference").f1
    })
    .collect();
    scores.iter().sum::<f64>() / scores.len() as f64
}

/// Mean ROUGE-1 F1 of the lead-k baseline.
pub fn rouge1_of_lead_k(docs: &[Document], references: &[Vec<TokenId>], k: usize) -> f64 {
    let total: f64 = docs
        .iter()
        .zip(references)
        .map(|(d, reference)| {
            let lead = crate::rouge::lead_k(&d.tokens, k);
            rouge_n(&lead, reference, 1).expect("non-empty reference").f1
        })
        .sum();
    total / docs.len() as f64
}

/// Outcome of the scaled unpaired-training experiment.
pub struct ExperimentReport {
    pub pretrained_f1: f64,
    pub trained_f1: f64,
    pub lead_f1: f64,
    pub state: TrainState,
    pub docs: Vec<Document>,
    pub references: Vec<Vec<TokenId>>,
}

/// Encoded corpus plus a generator pre-trained with the shuffle recipe.
/// Both adversarial modes start from this same checkpoint.
pub struct PretrainedSetup {
    pub vocab: Vocabulary,
    pub docs: Vec<Document>,
    pub references: Vec<Vec<TokenId>>,
    pub pool: RealSummaryPool,
    pub generator: Seq2SeqParams,
    pub pretrained_f1: f64,
    pub lead_f1: f64,
}

pub fn prepare(synth_cfg: &SynthConfig, base: &TrainConfig, seed: u64) -> Result<PretrainedSetup> {
    let corpus = generate(synth_cfg, seed);
    let lang = Language::English;
    let vocab = build_vocabulary_from_lines(
        corpus
            .articles
            .iter()
            .chain(corpus.real_summaries.iter())
            .map(String::as_str),
        4 + synth_cfg.num_fillers + synth_cfg.num_keywords,
        lang,
    )?;
    let docs: Vec<Document> = corpus
        .articles
        .iter()
        .map(|l| Document::new(vocab.encode(&lang.tokenize(l))))
        .collect();
    let references: Vec<Vec<TokenId>> = corpus
        .references
        .iter()
        .map(|l| vocab.encode(&lang.tokenize(l)))
        .collect();
    let pool = RealSummaryPool::new(
        corpus
            .real_summaries
            .iter()
            .map(|l| vocab.encode(&lang.tokenize(l)))
            .collect(),
        Provenance::SameDomain,
    )?;

    // Shuffle-recipe pre-training, shared by both modes.
    let mut rng = SeededRng::new(seed ^ 0x5eed_0001);
    let mut generator = Seq2SeqParams::init(
        crate::seq2seq::Seq2SeqConfig {
            vocab_size: vocab.size(),
            embed_dim: base.embed_dim,
            hidden_dim: base.hidden_dim,
        },
        &mut rng,
    );
    let mut pairs: Vec<PretrainPair> = Vec::new();
    for _ in 0..2 {
        for d in &docs {
            if let Some(p) = make_shuffle_pair(d, &mut rng) {
                pairs.push(p);
            }
        }
    }
    pretrain::pretrain_generator(&mut generator, &pairs, 12, 16, 1e-3, &mut rng)?;

    let pretrained_f1 = rouge1_of_generator(&generator, &docs, &references, base.max_sum_len);
    let lead_f1 = rouge1_of_lead_k(&docs, &references, 8);
    Ok(PretrainedSetup {
        vocab,
        docs,
        references,
        pool,
        generator,
        pretrained_f1,
        lead_f1,
    })
}

/// Runs critic pre-training plus `config.max_updates` joint updates in the
/// given mode, starting from the shared pre-trained generator.
pub fn run_mode(setup: &PretrainedSetup, config: TrainConfig) -> Result<ExperimentReport> {
    let mut state = TrainState::new(
        config,
        setup.vocab.clone(),
        setup.docs.len(),
        setup.pool.sentences.len(),
    )?;
    state.generator = setup.generator.clone();

    let mut rng = SeededRng::new(state.config.seed ^ 0x5eed_0002);
    pretrain::pretrain_critics(
        &state.generator,
        &mut state.reconstructor,
        &mut state.d1,
        &mut state.d2,
        state.config.mode,
        &setup.docs,
        &setup.pool,
        300,
        state.config.batch_size,
        state.config.max_sum_len,
        1e-3,
        match state.config.mode {
            Mode::Wgan => state.config.beta1,
            Mode::AdvReinforce => state.config.beta2,
        },
        &mut rng,
    )?;

    let mut tr = Trainer::new(state, &setup.docs, &setup.pool, None);
    tr.run()?;

    let trained_f1 = rouge1_of_generator(
        &tr.state.generator,
        &setup.docs,
        &setup.references,
        tr.state.config.max_sum_len,
    );
    Ok(ExperimentReport {
        pretrained_f1: setup.pretrained_f1,
        trained_f1,
        lead_f1: setup.lead_f1,
        state: tr.state,
        docs: setup.docs.clone(),
        references: setup.references.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn corpus_shape_and_keyword_planting() {
        let cfg = SynthConfig::default();
        let c = generate(&cfg, 1);
        assert_eq!(c.articles.len(), 500);
        assert_eq!(c.references.len(), 500);
        assert_eq!(c.real_summaries.len(), 400);

        let mut types = HashSet::new();
        for (art, refs) in c.articles.iter().zip(&c.references) {
            let words: Vec<&str> = art.split_whitespace().collect();
            types.extend(words.iter().map(|w| w.to_string()));
            assert!(words.len() >= 15 && words.len() <= 25);
            let kws: Vec<&str> = refs.split_whitespace().collect();
            assert_eq!(kws.len(), 3);
            for kw in kws {
                assert!(words.contains(&kw), "planted keyword {kw} missing");
            }
        }
        // Word inventory stays within the configured 60 types.
        assert!(types.len() <= 60);
        for s in &c.real_summaries {
            let n = s.split_whitespace().count();
            assert!((3..=5).contains(&n));
            assert!(s.split_whitespace().all(|w| w.starts_with("kw")));
        }
    }

    #[test]
    fn generation_is_seed_deterministic() {
        let cfg = SynthConfig::default();
        let a = generate(&cfg, 7);
        let b = generate(&cfg, 7);
        assert_eq!(a.articles, b.articles);
        assert_eq!(a.real_summaries, b.real_summaries);
        let c = generate(&cfg, 8);
        assert_ne!(a.articles, c.articles);
    }
}
