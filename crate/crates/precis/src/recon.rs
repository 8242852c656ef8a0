//! Reconstructor losses and the reconstruction-driven reward.
//!
//! The reconstructor R reads a summary and is teacher-forced against the
//! source document; `l_s` uses the sampled summary, `l_a` the greedy one.
//! The generator's reward is the self-critical difference
//! `r = -l_s - (-l_a - b) = l_a - l_s + b`, with `b` an exploration bonus
//! decaying linearly to zero. R itself trains only on the sampled path,
//! and only ever sees discrete token sequences, never the generator's
//! distributions.

use crate::ad::{Graph, Var};
use crate::corpus::TokenId;
use crate::error::{Error, Result};
use crate::seq2seq::{encode, sequence_nll, teacher_forced_dists, PgenMode, Seq2SeqVars};
use serde::{Deserialize, Serialize};

/// Mean per-token negative log-likelihood of `source` given `summary`
/// under the reconstructor; differentiable with respect to R's parameters.
pub fn reconstruct_loss(
    g: &mut Graph,
    recon: &Seq2SeqVars,
    summary: &[TokenId],
    source: &[TokenId],
    start: TokenId,
) -> Result<Var> {
    if summary.is_empty() {
        return Err(Error::EmptySequence("reconstructor input summary"));
    }
    let enc = encode(g, recon, summary)?;
    let dists = teacher_forced_dists(g, recon, &enc, source, start, PgenMode::Learned);
    Ok(sequence_nll(g, &dists, source))
}

/// Self-critical reconstruction reward: `l_a - l_s + b`.
pub fn reconstruction_reward(l_s: f64, l_a: f64, b: f64) -> f64 {
    -l_s - (-l_a - b)
}

/// Exploration baseline `b(t)`: linear decay from `b0` to zero across
/// `horizon` generator updates.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct BaselineSchedule {
    pub b0: f64,
    pub horizon: usize,
}

impl Default for BaselineSchedule {
    fn default() -> Self {
        BaselineSchedule {
            b0: 0.25,
            horizon: 10_000,
        }
    }
}

impl BaselineSchedule {
    pub fn value(&self, t: usize) -> f64 {
        if t >= self.horizon {
            0.0
        } else {
            self.b0 * (1.0 - t as f64 / self.horizon as f64)
        }
    }
}

/// REINFORCE surrogate for the reconstruction reward:
/// `-r * sum_i log p(y_i | y_<i, x)`. The reward enters as a constant, so
/// the surrogate's gradient is the likelihood-ratio estimate.
pub fn reinforce_surrogate(g: &mut Graph, log_probs: &[Var], reward: f64) -> Var {
    assert!(!log_probs.is_empty());
    let mut acc = log_probs[0];
    for &lp in &log_probs[1..] {
        acc = g.add(acc, lp);
    }
    g.scale(acc, -reward)
}
