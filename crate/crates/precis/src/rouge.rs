//! ROUGE-1/2/L F1 scoring and lead-k baselines.
//!
//! Scores are functions of token equality only, so they operate on id
//! sequences; the CLI layer interns (optionally stemmed) strings to ids
//! before scoring. English mode stems with a standard suffix-stripping
//! stemmer before counting; Chinese mode never stems.

use crate::corpus::TokenId;
use crate::error::{Error, Result};
use crate::par;
use std::collections::HashMap;

/// Precision / recall / F1 triple.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Score {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Score {
    fn from_counts(overlap: f64, cand_total: f64, ref_total: f64) -> Score {
        let precision = if cand_total > 0.0 {
            overlap / cand_total
        } else {
            0.0
        };
        let recall = if ref_total > 0.0 {
            overlap / ref_total
        } else {
            0.0
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Score {
            precision,
            recall,
            f1,
        }
    }
}

fn ngram_counts(tokens: &[TokenId], n: usize) -> HashMap<&[TokenId], usize> {
    let mut map = HashMap::new();
    if n == 0 || tokens.len() < n {
        return map;
    }
    for w in tokens.windows(n) {
        *map.entry(w).or_insert(0) += 1;
    }
    map
}

/// Clipped n-gram overlap: recall against the reference, precision against
/// the candidate.
pub fn rouge_n(candidate: &[TokenId], reference: &[TokenId], n: usize) -> Result<Score> {
    if reference.is_empty() {
        return Err(Error::EmptySequence("rouge reference"));
    }
    let ref_ngrams = ngram_counts(reference, n);
    let cand_ngrams = ngram_counts(candidate, n);
    let ref_total: usize = ref_ngrams.values().sum();
    let cand_total: usize = cand_ngrams.values().sum();
    let mut overlap = 0usize;
    for (ng, &c) in &cand_ngrams {
        if let Some(&r) = ref_ngrams.get(ng) {
            overlap += c.min(r);
        }
    }
    Ok(Score::from_counts(
        overlap as f64,
        cand_total as f64,
        ref_total as f64,
    ))
}

/// Two-row LCS dynamic program.
pub fn lcs_len(a: &[TokenId], b: &[TokenId]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let m = b.len();
    let mut prev = vec![0usize; m + 1];
    let mut curr = vec![0usize; m + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            curr[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(curr[j])
            };
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[m]
}

/// ROUGE-L: recall = LCS/|ref|, precision = LCS/|cand|.
pub fn rouge_l(candidate: &[TokenId], reference: &[TokenId]) -> Result<Score> {
    if reference.is_empty() {
        return Err(Error::EmptySequence("rouge reference"));
    }
    let l = lcs_len(candidate, reference) as f64;
    Ok(Score::from_counts(
        l,
        candidate.len() as f64,
        reference.len() as f64,
    ))
}

/// First min(k, len) tokens of a document.
pub fn lead_k(doc: &[TokenId], k: usize) -> Vec<TokenId> {
    doc[..k.min(doc.len())].to_vec()
}

/// Scores for one candidate/reference pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairScores {
    pub r1: Score,
    pub r2: Score,
    pub rl: Score,
}

pub fn score_pair(candidate: &[TokenId], reference: &[TokenId]) -> Result<PairScores> {
    Ok(PairScores {
        r1: rouge_n(candidate, reference, 1)?,
        r2: rouge_n(candidate, reference, 2)?,
        rl: rouge_l(candidate, reference)?,
    })
}

/// Per-document scores plus the corpus mean.
#[derive(Clone, Debug)]
pub struct RougeReport {
    pub per_doc: Vec<PairScores>,
    pub mean: PairScores,
}

fn mean_of(scores: &[PairScores], pick: impl Fn(&PairScores) -> Score) -> Score {
    let n = scores.len() as f64;
    let mut p = 0.0;
    let mut r = 0.0;
    let mut f = 0.0;
    for s in scores {
        let s = pick(s);
        p += s.precision;
        r += s.recall;
        f += s.f1;
    }
    Score {
        precision: p / n,
        recall: r / n,
        f1: f / n,
    }
}

/// Scores each candidate/reference pair (in parallel) and averages.
pub fn evaluate_corpus(
    candidates: &[Vec<TokenId>],
    references: &[Vec<TokenId>],
) -> Result<RougeReport> {
    if candidates.len() != references.len() {
        return Err(Error::LineCountMismatch {
            candidates: candidates.len(),
            references: references.len(),
        });
    }
    if candidates.is_empty() {
        return Err(Error::EmptySequence("evaluation corpus"));
    }
    let pairs: Vec<(Vec<TokenId>, Vec<TokenId>)> = candidates
        .iter()
        .cloned()
        .zip(references.iter().cloned())
        .collect();
    let per_doc: Vec<PairScores> = par::map_batch(&pairs, |(c, r)| score_pair(c, r))
        .into_iter()
        .collect::<Result<_>>()?;
    let mean = PairScores {
        r1: mean_of(&per_doc, |s| s.r1),
        r2: mean_of(&per_doc, |s| s.r2),
        rl: mean_of(&per_doc, |s| s.rl),
    };
    Ok(RougeReport { per_doc, mean })
}

/// Interns whitespace-token lines into shared ids, stemming first when
/// `stem` is set (English suffix stripping; mirrors the usual ROUGE "-m"
/// evaluation option).
pub struct Interner {
    map: HashMap<String, TokenId>,
    stemmer: Option<rust_stemmers::Stemmer>,
}

impl Interner {
    pub fn new(stem: bool) -> Self {
        Interner {
            map: HashMap::new(),
            stemmer: stem
                .then(|| rust_stemmers::Stemmer::create(rust_stemmers::Algorithm::English)),
        }
    }

    pub fn intern_line(&mut self, line: &str) -> Vec<TokenId> {
        line.split_whitespace()
            .map(|tok| {
                let key = match &self.stemmer {
                    Some(st) => st.stem(&tok.to_lowercase()).into_owned(),
                    None => tok.to_owned(),
                };
                let next = self.map.len();
                *self.map.entry(key).or_insert(next)
            })
            .collect()
    }
}
