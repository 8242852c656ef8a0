//! Corpora, vocabularies, and unpaired batching.
//!
//! File format: one whitespace-tokenized document per line (Chinese mode
//! splits lines into characters instead). Paired data is two aligned files.
//! Vocabulary files hold one token per line; the line number is the id
//! after the reserved specials.

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

pub type TokenId = usize;

pub const PAD: TokenId = 0;
pub const UNK: TokenId = 1;
pub const BOS: TokenId = 2;
pub const EOS: TokenId = 3;
pub const NUM_SPECIALS: usize = 4;

const SPECIAL_TOKENS: [&str; NUM_SPECIALS] = ["<pad>", "<unk>", "<s>", "</s>"];

/// How lines are split into tokens.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Language {
    /// Whitespace tokens.
    English,
    /// One token per character; the vocabulary counts characters.
    Chinese,
}

impl Language {
    pub fn tokenize(&self, line: &str) -> Vec<String> {
        match self {
            Language::English => line.split_whitespace().map(str::to_owned).collect(),
            Language::Chinese => line
                .chars()
                .filter(|c| !c.is_whitespace())
                .map(String::from)
                .collect(),
        }
    }
}

/// Bidirectional token<->id map with reserved specials at the lowest ids.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, TokenId>,
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary { tokens, index }
    }

    /// Rebuilds the lookup map after deserialization.
    pub fn rebuild_index(&mut self) {
        self.index = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn lookup(&self, token: &str) -> TokenId {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token_of(&self, id: TokenId) -> &str {
        &self.tokens[id]
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<TokenId> {
        tokens.iter().map(|t| self.lookup(t)).collect()
    }

    pub fn decode(&self, ids: &[TokenId]) -> Vec<String> {
        ids.iter().map(|&i| self.tokens[i].clone()).collect()
    }

    pub fn decode_string(&self, ids: &[TokenId]) -> String {
        self.decode(ids).join(" ")
    }

    /// Stable FNV-1a over the token list; checkpoints embed it so a model
    /// is never decoded under the wrong vocabulary.
    pub fn hash(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for t in &self.tokens {
            for b in t.as_bytes() {
                h ^= *b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
            h ^= 0xff;
            h = h.wrapping_mul(0x100000001b3);
        }
        h
    }

    /// One token per line, specials omitted (line number = id - NUM_SPECIALS).
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = File::create(path)?;
        for t in &self.tokens[NUM_SPECIALS..] {
            writeln!(f, "{t}")?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = BufReader::new(File::open(path)?);
        let mut tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        for line in f.lines() {
            let line = line?;
            if !line.is_empty() {
                tokens.push(line);
            }
        }
        Ok(Vocabulary::from_tokens(tokens))
    }
}

/// Builds a vocabulary of at most `size` entries (specials included) from
/// the `size - NUM_SPECIALS` most frequent tokens. Frequency ties break by
/// first occurrence so the result is deterministic.
pub fn build_vocabulary(corpus_path: &Path, size: usize, lang: Language) -> Result<Vocabulary> {
    let f = BufReader::new(File::open(corpus_path)?);
    let mut lines = Vec::new();
    for line in f.lines() {
        lines.push(line?);
    }
    build_vocabulary_from_lines(lines.iter().map(String::as_str), size, lang)
        .map_err(|e| match e {
            Error::EmptyCorpus(_) => Error::EmptyCorpus(corpus_path.display().to_string()),
            other => other,
        })
}

/// In-memory variant of [`build_vocabulary`].
pub fn build_vocabulary_from_lines<'a>(
    lines: impl Iterator<Item = &'a str>,
    size: usize,
    lang: Language,
) -> Result<Vocabulary> {
    if size <= NUM_SPECIALS {
        return Err(Error::VocabTooSmall {
            size,
            specials: NUM_SPECIALS,
        });
    }
    let mut counts: HashMap<String, (usize, usize)> = HashMap::new(); // token -> (count, first_seen)
    let mut order = 0usize;
    let mut any = false;
    for line in lines {
        for tok in lang.tokenize(line) {
            any = true;
            let e = counts.entry(tok).or_insert((0, order));
            e.0 += 1;
            order += 1;
        }
    }
    if !any {
        return Err(Error::EmptyCorpus("<memory>".into()));
    }
    let mut items: Vec<(String, usize, usize)> =
        counts.into_iter().map(|(t, (c, o))| (t, c, o)).collect();
    items.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    items.truncate(size - NUM_SPECIALS);

    let mut tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
    tokens.extend(items.into_iter().map(|(t, _, _)| t));
    Ok(Vocabulary::from_tokens(tokens))
}

/// A source text: id-encoded, truncated, never padded.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub tokens: Vec<TokenId>,
}

impl Document {
    pub fn new(tokens: Vec<TokenId>) -> Self {
        debug_assert!(!tokens.is_empty());
        debug_assert!(!tokens.contains(&PAD));
        Document { tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LoadStats {
    pub loaded: usize,
    pub skipped_blank: usize,
}

/// Loads one id-encoded document per line, truncating to `max_len`.
/// Blank lines are skipped and counted.
pub fn load_documents(
    path: &Path,
    vocab: &Vocabulary,
    max_len: usize,
    lang: Language,
) -> Result<(Vec<Document>, LoadStats)> {
    let f = BufReader::new(File::open(path)?);
    let mut docs = Vec::new();
    let mut stats = LoadStats::default();
    for line in f.lines() {
        let line = line?;
        let toks = lang.tokenize(&line);
        if toks.is_empty() {
            stats.skipped_blank += 1;
            continue;
        }
        let mut ids = vocab.encode(&toks);
        ids.truncate(max_len);
        docs.push(Document::new(ids));
        stats.loaded += 1;
    }
    if docs.is_empty() {
        return Err(Error::EmptyCorpus(path.display().to_string()));
    }
    Ok((docs, stats))
}

/// Where a real-summary pool came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    SameDomain,
    TransferSource,
}

/// Human-written sentences the discriminator treats as real.
#[derive(Clone, Debug)]
pub struct RealSummaryPool {
    pub sentences: Vec<Vec<TokenId>>,
    pub provenance: Provenance,
}

impl RealSummaryPool {
    pub fn new(sentences: Vec<Vec<TokenId>>, provenance: Provenance) -> Result<Self> {
        if sentences.is_empty() {
            return Err(Error::EmptySequence("real summary pool"));
        }
        Ok(RealSummaryPool {
            sentences,
            provenance,
        })
    }

    pub fn load(
        path: &Path,
        vocab: &Vocabulary,
        max_len: usize,
        lang: Language,
        provenance: Provenance,
    ) -> Result<(Self, LoadStats)> {
        let (docs, stats) = load_documents(path, vocab, max_len, lang)?;
        let pool = RealSummaryPool::new(docs.into_iter().map(|d| d.tokens).collect(), provenance)?;
        Ok((pool, stats))
    }
}

/// Splits paired data into an articles-only half and a summaries-only half,
/// disjoint by pair index, so unpaired training can never see a document
/// next to its own summary.
pub fn split_unpaired(
    pairs: Vec<(Document, Vec<TokenId>)>,
) -> Result<(Vec<Document>, Vec<Vec<TokenId>>)> {
    if pairs.len() < 2 {
        return Err(Error::NotEnoughData(format!(
            "split_unpaired needs >= 2 pairs, got {}",
            pairs.len()
        )));
    }
    let half = pairs.len() / 2;
    let mut docs = Vec::with_capacity(half);
    let mut sums = Vec::with_capacity(pairs.len() - half);
    for (i, (doc, sum)) in pairs.into_iter().enumerate() {
        if i < half {
            docs.push(doc);
        } else {
            sums.push(sum);
        }
    }
    Ok((docs, sums))
}

/// A training batch: K documents and K independently sampled real
/// summaries, each padded to its own common length. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub docs: Vec<Vec<TokenId>>,
    pub doc_lens: Vec<usize>,
    pub summaries: Vec<Vec<TokenId>>,
    pub summary_lens: Vec<usize>,
}

impl Batch {
    pub fn size(&self) -> usize {
        self.docs.len()
    }

    /// Unpadded document row.
    pub fn doc(&self, i: usize) -> &[TokenId] {
        &self.docs[i][..self.doc_lens[i]]
    }

    /// Unpadded real-summary row.
    pub fn summary(&self, i: usize) -> &[TokenId] {
        &self.summaries[i][..self.summary_lens[i]]
    }
}

fn pad_rows(rows: Vec<Vec<TokenId>>) -> (Vec<Vec<TokenId>>, Vec<usize>) {
    let lens: Vec<usize> = rows.iter().map(Vec::len).collect();
    let width = lens.iter().copied().max().unwrap_or(0);
    let padded = rows
        .into_iter()
        .map(|mut r| {
            r.resize(width, PAD);
            r
        })
        .collect();
    (padded, lens)
}

/// Epoch-shuffled sampler over documents and real summaries. The two
/// streams are sampled independently, so rows are unpaired by construction.
/// Serializable so checkpoints can resume mid-epoch bit-for-bit.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BatchSampler {
    doc_order: Vec<usize>,
    doc_pos: usize,
    sum_order: Vec<usize>,
    sum_pos: usize,
    rng: SeededRng,
    pub doc_epochs: usize,
}

impl BatchSampler {
    pub fn new(num_docs: usize, num_summaries: usize, seed: u64) -> Result<Self> {
        if num_docs == 0 || num_summaries == 0 {
            return Err(Error::EmptySequence("batch sampler sources"));
        }
        let mut rng = SeededRng::new(seed);
        let mut doc_order: Vec<usize> = (0..num_docs).collect();
        rng.shuffle(&mut doc_order);
        let mut sum_order: Vec<usize> = (0..num_summaries).collect();
        rng.shuffle(&mut sum_order);
        Ok(BatchSampler {
            doc_order,
            doc_pos: 0,
            sum_order,
            sum_pos: 0,
            rng,
            doc_epochs: 0,
        })
    }

    fn next_doc(&mut self) -> (usize, bool) {
        let mut wrapped = false;
        if self.doc_pos == self.doc_order.len() {
            self.rng.shuffle(&mut self.doc_order);
            self.doc_pos = 0;
            self.doc_epochs += 1;
            wrapped = true;
        }
        let i = self.doc_order[self.doc_pos];
        self.doc_pos += 1;
        (i, wrapped)
    }

    fn next_summary(&mut self) -> usize {
        if self.sum_pos == self.sum_order.len() {
            self.rng.shuffle(&mut self.sum_order);
            self.sum_pos = 0;
        }
        let i = self.sum_order[self.sum_pos];
        self.sum_pos += 1;
        i
    }

    /// Draws the next batch. The boolean reports whether the document
    /// stream crossed an epoch boundary (and was reshuffled) while filling
    /// this batch.
    pub fn next_batch(
        &mut self,
        docs: &[Document],
        pool: &RealSummaryPool,
        k: usize,
    ) -> Result<(Batch, bool)> {
        if k == 0 {
            return Err(Error::NotEnoughData("batch size K must be >= 1".into()));
        }
        let mut doc_rows = Vec::with_capacity(k);
        let mut sum_rows = Vec::with_capacity(k);
        let mut epoch_boundary = false;
        for _ in 0..k {
            let (di, wrapped) = self.next_doc();
            epoch_boundary |= wrapped;
            doc_rows.push(docs[di].tokens.clone());
            sum_rows.push(pool.sentences[self.next_summary()].clone());
        }
        let (docs_padded, doc_lens) = pad_rows(doc_rows);
        let (sums_padded, summary_lens) = pad_rows(sum_rows);
        Ok((
            Batch {
                docs: docs_padded,
                doc_lens,
                summaries: sums_padded,
                summary_lens,
            },
            epoch_boundary,
        ))
    }
}

/// Per-dataset corpus settings.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub language: Language,
    pub vocab_size: usize,
    pub max_src_len: usize,
    /// Decode cap for generated summaries and length cap for the real pool.
    pub max_sum_len: usize,
    pub lead_k: usize,
    pub stem: bool,
}

impl CorpusConfig {
    /// Sentence summarization: 15K vocabulary, lead-8 baseline, 20-token
    /// summaries.
    pub fn english_gigaword() -> Self {
        CorpusConfig {
            language: Language::English,
            vocab_size: 15_000,
            max_src_len: 100,
            max_sum_len: 20,
            lead_k: 8,
            stem: true,
        }
    }

    /// Long-text summarization: articles truncated to 250 tokens, 50-token
    /// summaries.
    pub fn cnn_dailymail() -> Self {
        CorpusConfig {
            language: Language::English,
            vocab_size: 15_000,
            max_src_len: 250,
            max_sum_len: 50,
            lead_k: 8,
            stem: true,
        }
    }

    /// Character-level Chinese: 4K most frequent characters, first 80
    /// characters of the source, lead-15 baseline.
    pub fn chinese_gigaword() -> Self {
        CorpusConfig {
            language: Language::Chinese,
            vocab_size: 4_000,
            max_src_len: 80,
            max_sum_len: 20,
            lead_k: 15,
            stem: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_lines(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn vocabulary_frequency_order_with_ties_by_first_occurrence() {
        let f = write_lines(&["a a b"]);
        let v = build_vocabulary(f.path(), 4 + 3, Language::English).unwrap();
        assert_eq!(v.size(), NUM_SPECIALS + 2);
        assert_eq!(v.token_of(NUM_SPECIALS), "a");
        assert_eq!(v.token_of(NUM_SPECIALS + 1), "b");

        let f2 = write_lines(&["z q z q x"]);
        let v2 = build_vocabulary(f2.path(), 100, Language::English).unwrap();
        // z and q tie at 2; z occurred first.
        assert_eq!(v2.token_of(NUM_SPECIALS), "z");
        assert_eq!(v2.token_of(NUM_SPECIALS + 1), "q");
        assert_eq!(v2.token_of(NUM_SPECIALS + 2), "x");
    }

    #[test]
    fn vocabulary_size_caps_and_errors() {
        let f = write_lines(&["a b c d e"]);
        let v = build_vocabulary(f.path(), NUM_SPECIALS + 2, Language::English).unwrap();
        assert_eq!(v.size(), NUM_SPECIALS + 2);

        assert!(matches!(
            build_vocabulary(f.path(), NUM_SPECIALS, Language::English),
            Err(Error::VocabTooSmall { .. })
        ));

        let empty = write_lines(&[""]);
        assert!(matches!(
            build_vocabulary(empty.path(), 100, Language::English),
            Err(Error::EmptyCorpus(_))
        ));
    }

    #[test]
    fn vocabulary_roundtrip_and_unknowns() {
        let f = write_lines(&["the cat sat"]);
        let v = build_vocabulary(f.path(), 100, Language::English).unwrap();
        for id in 0..v.size() {
            assert_eq!(v.lookup(v.token_of(id)), id);
        }
        assert_eq!(v.lookup("unseen-token"), UNK);
    }

    #[test]
    fn vocabulary_file_roundtrip() {
        let f = write_lines(&["b b a c"]);
        let v = build_vocabulary(f.path(), 100, Language::English).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        v.save(out.path()).unwrap();
        let v2 = Vocabulary::load(out.path()).unwrap();
        assert_eq!(v.size(), v2.size());
        assert_eq!(v.hash(), v2.hash());
        for id in 0..v.size() {
            assert_eq!(v.token_of(id), v2.token_of(id));
        }
    }

    #[test]
    fn load_documents_encodes_truncates_and_skips_blanks() {
        let vf = write_lines(&["the cat sat"]);
        let v = build_vocabulary(vf.path(), 100, Language::English).unwrap();

        let f = write_lines(&["the cat sat", "", "the dog sat"]);
        let (docs, stats) = load_documents(f.path(), &v, 250, Language::English).unwrap();
        assert_eq!(stats.loaded, 2);
        assert_eq!(stats.skipped_blank, 1);
        assert_eq!(docs[0].tokens.len(), 3);
        assert_eq!(
            docs[0].tokens,
            vec![v.lookup("the"), v.lookup("cat"), v.lookup("sat")]
        );
        // "dog" is out of vocabulary
        assert_eq!(docs[1].tokens[1], UNK);
    }

    #[test]
    fn load_documents_truncation_caps() {
        let long: Vec<String> = (0..300).map(|i| format!("w{}", i % 40)).collect();
        let line = long.join(" ");
        let vf = write_lines(&[&line]);
        let v = build_vocabulary(vf.path(), 100, Language::English).unwrap();
        let f = write_lines(&[&line]);
        let (docs, _) = load_documents(f.path(), &v, 250, Language::English).unwrap();
        assert_eq!(docs[0].len(), 250);

        // Chinese mode: first 80 characters.
        let zh_line: String = "字".repeat(200);
        let zf = write_lines(&[&zh_line]);
        let zv = build_vocabulary(zf.path(), 100, Language::Chinese).unwrap();
        let (zdocs, _) = load_documents(zf.path(), &zv, 80, Language::Chinese).unwrap();
        assert_eq!(zdocs[0].len(), 80);
    }

    #[test]
    fn preset_sizes_match_published_configs() {
        assert_eq!(CorpusConfig::english_gigaword().vocab_size, 15_000);
        assert_eq!(CorpusConfig::cnn_dailymail().vocab_size, 15_000);
        assert_eq!(CorpusConfig::cnn_dailymail().max_src_len, 250);
        assert_eq!(CorpusConfig::cnn_dailymail().max_sum_len, 50);
        assert_eq!(CorpusConfig::chinese_gigaword().vocab_size, 4_000);
        assert_eq!(CorpusConfig::chinese_gigaword().max_src_len, 80);
        assert_eq!(CorpusConfig::chinese_gigaword().lead_k, 15);
    }

    fn dummy_pairs(n: usize) -> Vec<(Document, Vec<TokenId>)> {
        (0..n)
            .map(|i| (Document::new(vec![4 + (i % 10)]), vec![4 + (i % 7)]))
            .collect()
    }

    #[test]
    fn split_unpaired_halves_are_index_disjoint() {
        let (docs, sums) = split_unpaired(dummy_pairs(4)).unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(sums.len(), 2);

        let (docs, sums) = split_unpaired(dummy_pairs(3)).unwrap();
        let sizes = (docs.len(), sums.len());
        assert!(sizes == (1, 2) || sizes == (2, 1));

        assert!(split_unpaired(dummy_pairs(1)).is_err());
    }

    #[test]
    fn split_unpaired_cnn_scale_halving() {
        let (docs, sums) = split_unpaired(dummy_pairs(287_227)).unwrap();
        assert_eq!(docs.len().min(sums.len()), 143_613);
        assert_eq!(docs.len().max(sums.len()), 143_614);
    }

    fn toy_docs(n: usize, len: usize) -> Vec<Document> {
        (0..n)
            .map(|i| Document::new((0..len + (i % 3)).map(|t| 4 + (t + i) % 20).collect()))
            .collect()
    }

    #[test]
    fn batches_are_seed_reproducible() {
        let docs = toy_docs(10, 5);
        let pool =
            RealSummaryPool::new(vec![vec![4, 5], vec![6], vec![7, 8, 9]], Provenance::SameDomain)
                .unwrap();
        let mut s1 = BatchSampler::new(docs.len(), pool.sentences.len(), 99).unwrap();
        let mut s2 = BatchSampler::new(docs.len(), pool.sentences.len(), 99).unwrap();
        for _ in 0..7 {
            let (b1, _) = s1.next_batch(&docs, &pool, 4).unwrap();
            let (b2, _) = s2.next_batch(&docs, &pool, 4).unwrap();
            assert_eq!(b1, b2);
        }
    }

    #[test]
    fn batch_rows_distinct_until_epoch_end() {
        let docs: Vec<Document> = (0..100)
            .map(|i| Document::new(vec![4 + i % 60, 4 + (i * 7) % 60, 4 + i]))
            .collect();
        let pool = RealSummaryPool::new(vec![vec![4]], Provenance::SameDomain).unwrap();
        let mut s = BatchSampler::new(100, 1, 7).unwrap();
        // 3 full batches of 32 fit in one 100-doc epoch; rows are distinct
        // documents because sampling is without replacement inside an epoch.
        for _ in 0..3 {
            let (b, wrapped) = s.next_batch(&docs, &pool, 32).unwrap();
            assert!(!wrapped);
            let mut rows: Vec<_> = (0..32).map(|i| b.doc(i).to_vec()).collect();
            rows.sort();
            rows.dedup();
            assert_eq!(rows.len(), 32);
        }
        let (_, wrapped) = s.next_batch(&docs, &pool, 32).unwrap();
        assert!(wrapped, "fourth batch crosses the epoch boundary");
        assert_eq!(s.doc_epochs, 1);
    }

    #[test]
    fn padding_invariants_hold() {
        let docs = toy_docs(6, 3);
        let pool =
            RealSummaryPool::new(vec![vec![4, 5, 6, 7], vec![8]], Provenance::SameDomain).unwrap();
        let mut s = BatchSampler::new(6, 2, 1).unwrap();
        let (b, _) = s.next_batch(&docs, &pool, 6).unwrap();
        let w = b.docs[0].len();
        for (row, &len) in b.docs.iter().zip(&b.doc_lens) {
            assert_eq!(row.len(), w);
            // PAD never precedes a non-PAD token.
            assert!(row[..len].iter().all(|&t| t != PAD));
            assert!(row[len..].iter().all(|&t| t == PAD));
        }
        let sw = b.summaries[0].len();
        for row in &b.summaries {
            assert_eq!(row.len(), sw);
        }
        assert_eq!(b.size(), 6);
    }

    #[test]
    fn trivial_single_pair_batch() {
        let docs = vec![Document::new(vec![5, 6])];
        let pool = RealSummaryPool::new(vec![vec![9]], Provenance::SameDomain).unwrap();
        let mut s = BatchSampler::new(1, 1, 0).unwrap();
        let (b, _) = s.next_batch(&docs, &pool, 1).unwrap();
        assert_eq!(b.doc(0), &[5, 6]);
        assert_eq!(b.summary(0), &[9]);
    }
}
