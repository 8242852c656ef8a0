//! Beam-search decoding with repetition elimination.
//!
//! Hypotheses accumulate raw log-probability (no length normalization).
//! The repetition filter blocks a token when it would create a repeated
//! trigram or an immediate repeat; if that blocks every token for a
//! hypothesis, the constraint relaxes to bigram blocking and then to
//! unconstrained for that step. The greedy rollout is always explored as
//! well, so the returned hypothesis is never worse than greedy.

use crate::corpus::TokenId;
use crate::seq2seq::StepModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RepetitionFilter {
    Off,
    /// Trigram blocking plus no immediate token repeat.
    On,
}

fn creates_repeated_ngram(prefix: &[TokenId], cand: TokenId, n: usize) -> bool {
    if prefix.len() < n - 1 {
        return false;
    }
    let mut tail: Vec<TokenId> = prefix[prefix.len() - (n - 1)..].to_vec();
    tail.push(cand);
    // Overlapping earlier occurrences count; windows() is empty until the
    // prefix holds a full n-gram.
    prefix.windows(n).any(|w| w == tail.as_slice())
}

/// Tokens admissible as extensions of `prefix`, after relaxation.
fn allowed_tokens(prefix: &[TokenId], vocab: usize, filter: RepetitionFilter) -> Vec<TokenId> {
    if filter == RepetitionFilter::Off {
        return (0..vocab).collect();
    }
    let strict: Vec<TokenId> = (0..vocab)
        .filter(|&t| {
            let immediate = prefix.last() == Some(&t);
            !immediate && !creates_repeated_ngram(prefix, t, 3)
        })
        .collect();
    if !strict.is_empty() {
        return strict;
    }
    let bigram: Vec<TokenId> = (0..vocab)
        .filter(|&t| !creates_repeated_ngram(prefix, t, 2))
        .collect();
    if !bigram.is_empty() {
        return bigram;
    }
    (0..vocab).collect()
}

#[derive(Clone)]
struct Hypothesis<S> {
    tokens: Vec<TokenId>,
    log_prob: f64,
    state: S,
}

/// Greedy rollout under the same filter rules (identical to beam size 1).
pub fn greedy_rollout<M: StepModel>(
    model: &mut M,
    max_len: usize,
    eos: Option<TokenId>,
    filter: RepetitionFilter,
) -> (Vec<TokenId>, f64) {
    let mut state = model.initial();
    let mut tokens: Vec<TokenId> = Vec::new();
    let mut log_prob = 0.0;
    for _ in 0..max_len {
        let prev = tokens.last().copied().unwrap_or(0);
        let (dist, next_state) = model.step(&state, prev);
        let allowed = allowed_tokens(&tokens, model.vocab_size(), filter);
        // First maximum wins ties, matching argmax decoding.
        let mut best = allowed[0];
        for &t in &allowed[1..] {
            if dist[t] > dist[best] {
                best = t;
            }
        }
        log_prob += dist[best].ln();
        tokens.push(best);
        state = next_state;
        if Some(best) == eos {
            break;
        }
    }
    (tokens, log_prob)
}

/// Beam search. Returns the completed hypothesis with the highest
/// accumulated log-probability among those explored (the beam plus the
/// greedy rollout).
pub fn beam_search<M: StepModel>(
    model: &mut M,
    beam: usize,
    max_len: usize,
    eos: Option<TokenId>,
    filter: RepetitionFilter,
) -> Vec<TokenId> {
    assert!(beam >= 1, "beam size must be >= 1");
    assert!(max_len >= 1);
    let vocab = model.vocab_size();

    let init = model.initial();
    let mut live = vec![Hypothesis {
        tokens: Vec::new(),
        log_prob: 0.0,
        state: init,
    }];
    let mut finished: Vec<(Vec<TokenId>, f64)> = Vec::new();

    for _ in 0..max_len {
        let mut candidates: Vec<Hypothesis<M::State>> = Vec::new();
        for hyp in &live {
            let prev = hyp.tokens.last().copied().unwrap_or(0);
            let (dist, next_state) = model.step(&hyp.state, prev);
            for t in allowed_tokens(&hyp.tokens, vocab, filter) {
                let mut tokens = hyp.tokens.clone();
                tokens.push(t);
                candidates.push(Hypothesis {
                    tokens,
                    log_prob: hyp.log_prob + dist[t].ln(),
                    state: next_state.clone(),
                });
            }
        }
        candidates.sort_by(|a, b| b.log_prob.partial_cmp(&a.log_prob).unwrap());
        candidates.truncate(beam);
        live = Vec::new();
        for c in candidates {
            if Some(*c.tokens.last().unwrap()) == eos {
                finished.push((c.tokens, c.log_prob));
            } else {
                live.push(c);
            }
        }
        if live.is_empty() {
            break;
        }
    }
    for h in live {
        finished.push((h.tokens, h.log_prob));
    }

    // The greedy rollout is part of the explored set; it costs one extra
    // pass and guarantees the result is never worse than greedy.
    finished.push(greedy_rollout(model, max_len, eos, filter));

    finished
        .into_iter()
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .map(|(tokens, _)| tokens)
        .expect("at least the greedy hypothesis exists")
}
