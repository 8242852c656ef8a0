//! Hybrid pointer-generator encoder-decoder.
//!
//! One single-layer unidirectional LSTM encoder, one LSTM decoder with
//! multiplicative attention over encoder states, and a learned copy gate:
//! the output distribution is `p_gen * P_vocab + (1 - p_gen) * copy`, where
//! `copy` aggregates attention mass per source token id. Both the generator
//! and the reconstructor are instances of this model.
//!
//! All forward passes build [`crate::ad::Graph`] nodes, so every loss
//! assembled from them is differentiable with respect to the bound
//! parameters.

use crate::ad::{Arr, Graph, Var};
use crate::corpus::{TokenId, PAD};
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use serde::{Deserialize, Serialize};
use std::rc::Rc;

/// Attention logits at padded positions get this additive mask, which
/// underflows to exactly zero weight after the softmax.
const MASK_NEG: f64 = -1e30;

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct Seq2SeqConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
}

impl Seq2SeqConfig {
    /// Published configuration: 600 hidden units.
    pub fn full(vocab_size: usize) -> Self {
        Seq2SeqConfig {
            vocab_size,
            embed_dim: 128,
            hidden_dim: 600,
        }
    }
}

/// One LSTM cell: four gates, each with input, recurrent, and bias weights.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LstmWeights {
    pub wi: Arr,
    pub wf: Arr,
    pub wo: Arr,
    pub wg: Arr,
    pub ui: Arr,
    pub uf: Arr,
    pub uo: Arr,
    pub ug: Arr,
    pub bi: Arr,
    pub bf: Arr,
    pub bo: Arr,
    pub bg: Arr,
}

impl LstmWeights {
    pub fn init(in_dim: usize, hidden: usize, rng: &mut SeededRng, scale: f64) -> Self {
        let mut m = |r: usize, c: usize| Arr::from_shape_fn((r, c), |_| rng.uniform_range(-scale, scale));
        LstmWeights {
            wi: m(in_dim, hidden),
            wf: m(in_dim, hidden),
            wo: m(in_dim, hidden),
            wg: m(in_dim, hidden),
            ui: m(hidden, hidden),
            uf: m(hidden, hidden),
            uo: m(hidden, hidden),
            ug: m(hidden, hidden),
            bi: Arr::zeros((1, hidden)),
            bf: Arr::zeros((1, hidden)),
            bo: Arr::zeros((1, hidden)),
            bg: Arr::zeros((1, hidden)),
        }
    }

    pub fn tensors(&self) -> Vec<&Arr> {
        vec![
            &self.wi, &self.wf, &self.wo, &self.wg, &self.ui, &self.uf, &self.uo, &self.ug,
            &self.bi, &self.bf, &self.bo, &self.bg,
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Arr> {
        vec![
            &mut self.wi, &mut self.wf, &mut self.wo, &mut self.wg, &mut self.ui, &mut self.uf,
            &mut self.uo, &mut self.ug, &mut self.bi, &mut self.bf, &mut self.bo, &mut self.bg,
        ]
    }
}

/// All parameters of one pointer-generator model.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Seq2SeqParams {
    pub cfg: Seq2SeqConfig,
    pub embedding: Arr, // V x E
    pub encoder: LstmWeights,
    pub decoder: LstmWeights,
    pub attn: Arr,       // H x H, multiplicative attention
    pub pgen_ctx: Arr,   // H x 1
    pub pgen_state: Arr, // H x 1
    pub pgen_input: Arr, // E x 1
    pub pgen_bias: Arr,  // 1 x 1
    pub w_out: Arr,      // 2H x V
    pub b_out: Arr,      // 1 x V
}

impl Seq2SeqParams {
    pub fn init(cfg: Seq2SeqConfig, rng: &mut SeededRng) -> Self {
        let s = 0.08;
        let mut m = |r: usize, c: usize| Arr::from_shape_fn((r, c), |_| rng.uniform_range(-s, s));
        let embedding = m(cfg.vocab_size, cfg.embed_dim);
        let attn = m(cfg.hidden_dim, cfg.hidden_dim);
        let pgen_ctx = m(cfg.hidden_dim, 1);
        let pgen_state = m(cfg.hidden_dim, 1);
        let pgen_input = m(cfg.embed_dim, 1);
        let w_out = m(2 * cfg.hidden_dim, cfg.vocab_size);
        Seq2SeqParams {
            cfg,
            embedding,
            encoder: LstmWeights::init(cfg.embed_dim, cfg.hidden_dim, rng, s),
            decoder: LstmWeights::init(cfg.embed_dim, cfg.hidden_dim, rng, s),
            attn,
            pgen_ctx,
            pgen_state,
            pgen_input,
            pgen_bias: Arr::zeros((1, 1)),
            w_out,
            b_out: Arr::zeros((1, cfg.vocab_size)),
        }
    }

    pub fn tensors(&self) -> Vec<&Arr> {
        let mut v = vec![&self.embedding];
        v.extend(self.encoder.tensors());
        v.extend(self.decoder.tensors());
        v.extend([
            &self.attn,
            &self.pgen_ctx,
            &self.pgen_state,
            &self.pgen_input,
            &self.pgen_bias,
            &self.w_out,
            &self.b_out,
        ]);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Arr> {
        let mut v: Vec<&mut Arr> = vec![&mut self.embedding];
        v.extend(self.encoder.tensors_mut());
        v.extend(self.decoder.tensors_mut());
        v.push(&mut self.attn);
        v.push(&mut self.pgen_ctx);
        v.push(&mut self.pgen_state);
        v.push(&mut self.pgen_input);
        v.push(&mut self.pgen_bias);
        v.push(&mut self.w_out);
        v.push(&mut self.b_out);
        v
    }

    /// Injects the parameters into a graph. `trainable` leaves receive
    /// gradients; frozen models enter as constants.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Seq2SeqVars {
        let mut leaf = |a: &Arr| {
            if trainable {
                g.param(a.clone())
            } else {
                g.constant(a.clone())
            }
        };
        let vars: Vec<Var> = self.tensors().into_iter().map(&mut leaf).collect();
        Seq2SeqVars {
            cfg: self.cfg,
            vars,
        }
    }
}

/// Graph-bound view of [`Seq2SeqParams`]; `vars` is aligned with
/// [`Seq2SeqParams::tensors`].
pub struct Seq2SeqVars {
    pub cfg: Seq2SeqConfig,
    pub vars: Vec<Var>,
}

// Indices into the flattened tensor list.
const EMB: usize = 0;
const ENC: usize = 1; // 12 LSTM tensors
const DEC: usize = 13;
const ATTN: usize = 25;
const PGEN_CTX: usize = 26;
const PGEN_STATE: usize = 27;
const PGEN_INPUT: usize = 28;
const PGEN_BIAS: usize = 29;
const W_OUT: usize = 30;
const B_OUT: usize = 31;

/// Graph-bound LSTM cell over a 12-tensor slice (the [`LstmWeights`]
/// layout order).
pub struct LstmVars<'a>(pub &'a [Var]);

impl LstmVars<'_> {
    pub fn step(&self, g: &mut Graph, x: Var, h: Var, c: Var) -> (Var, Var) {
        let w = self.0;
        let (wi, wf, wo, wg) = (w[0], w[1], w[2], w[3]);
        let (ui, uf, uo, ug) = (w[4], w[5], w[6], w[7]);
        let (bi, bf, bo, bg) = (w[8], w[9], w[10], w[11]);
        let gate = |g: &mut Graph, wx: Var, uh: Var, b: Var| {
            let xa = g.matmul(x, wx);
            let hb = g.matmul(h, uh);
            let s = g.add(xa, hb);
            g.add(s, b)
        };
        let i_pre = gate(g, wi, ui, bi);
        let i = g.sigmoid(i_pre);
        let f_pre = gate(g, wf, uf, bf);
        let f = g.sigmoid(f_pre);
        let o_pre = gate(g, wo, uo, bo);
        let o = g.sigmoid(o_pre);
        let gg_pre = gate(g, wg, ug, bg);
        let gg = g.tanh(gg_pre);
        let fc = g.mul(f, c);
        let ig = g.mul(i, gg);
        let c_new = g.add(fc, ig);
        let ct = g.tanh(c_new);
        let h_new = g.mul(o, ct);
        (h_new, c_new)
    }
}

impl Seq2SeqVars {
    fn encoder(&self) -> LstmVars<'_> {
        LstmVars(&self.vars[ENC..ENC + 12])
    }
    fn decoder(&self) -> LstmVars<'_> {
        LstmVars(&self.vars[DEC..DEC + 12])
    }
    pub fn embedding(&self) -> Var {
        self.vars[EMB]
    }
}

/// Encoder output: one state per source position plus what attention needs.
pub struct Encoded {
    pub states: Var, // T x H
    pub src_ids: Rc<Vec<TokenId>>,
    /// Additive attention mask: 0 at real tokens, MASK_NEG at PAD.
    mask: Arr, // T x 1
    pub final_state: (Var, Var),
}

/// Runs the encoder over the source. PAD positions stay in the state
/// sequence but are masked out of attention.
pub fn encode(g: &mut Graph, model: &Seq2SeqVars, src: &[TokenId]) -> Result<Encoded> {
    if src.is_empty() {
        return Err(Error::EmptySequence("encoder input"));
    }
    let h_dim = model.cfg.hidden_dim;
    let ids = Rc::new(src.to_vec());
    let emb = g.row_select(model.embedding(), ids.clone()); // T x E
    let cell = model.encoder();
    let mut h = g.constant(Arr::zeros((1, h_dim)));
    let mut c = g.constant(Arr::zeros((1, h_dim)));
    let mut states = Vec::with_capacity(src.len());
    for t in 0..src.len() {
        let x = g.slice_rows(emb, t, t + 1);
        let (h2, c2) = cell.step(g, x, h, c);
        h = h2;
        c = c2;
        states.push(h);
    }
    let states = g.concat_rows(&states);
    let mask = Arr::from_shape_fn((src.len(), 1), |(t, _)| {
        if src[t] == PAD {
            MASK_NEG
        } else {
            0.0
        }
    });
    Ok(Encoded {
        states,
        src_ids: ids,
        mask,
        final_state: (h, c),
    })
}

/// Copy-gate behavior for one decode pass.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PgenMode {
    Learned,
    /// Clamp the gate; `Forced(0.0)` yields a copy-only decoder.
    Forced(f64),
}

/// Everything one decoder step produces.
pub struct DecodeStep {
    /// Final mixed distribution over the vocabulary, 1 x V.
    pub dist: Var,
    pub state: (Var, Var),
    /// Attention weights over source positions, 1 x T.
    pub attn: Var,
    pub p_gen: Var,
}

/// One decoder step: attention, vocabulary softmax, copy aggregation, and
/// the p_gen mixture.
pub fn step_distribution(
    g: &mut Graph,
    model: &Seq2SeqVars,
    enc: &Encoded,
    state: &(Var, Var),
    prev: TokenId,
    pgen_mode: PgenMode,
) -> DecodeStep {
    let v_size = model.cfg.vocab_size;
    let t_len = enc.src_ids.len();

    let prev_ids = Rc::new(vec![prev]);
    let x = g.row_select(model.embedding(), prev_ids); // 1 x E
    let (h, c) = model.decoder().step(g, x, state.0, state.1);

    // Multiplicative attention: scores[t] = enc_t . W_a . h^T, PAD masked.
    let proj = g.matmul(enc.states, model.vars[ATTN]); // T x H
    let ht = g.transpose(h); // H x 1
    let scores = g.matmul(proj, ht); // T x 1
    let mask = g.constant(enc.mask.clone());
    let masked = g.add(scores, mask);
    let row = g.transpose(masked); // 1 x T
    let attn = g.softmax_row(row); // 1 x T

    let context = g.matmul(attn, enc.states); // 1 x H

    // Vocabulary distribution from [state; context].
    let hc = g.concat_cols(&[h, context]); // 1 x 2H
    let logits = g.affine_row(hc, model.vars[W_OUT], model.vars[B_OUT]);
    let p_vocab = g.softmax_row(logits); // 1 x V

    // Copy distribution: attention mass aggregated per source token id.
    let attn_col = g.transpose(attn); // T x 1
    let copy_col = g.row_scatter_add(attn_col, enc.src_ids.clone(), v_size);
    let copy = g.transpose(copy_col); // 1 x V
    debug_assert_eq!(g.shape(copy), (1, v_size));
    debug_assert_eq!(t_len, enc.src_ids.len());

    let p_gen = match pgen_mode {
        PgenMode::Learned => {
            let a = g.matmul(context, model.vars[PGEN_CTX]);
            let b = g.matmul(h, model.vars[PGEN_STATE]);
            let cc = g.matmul(x, model.vars[PGEN_INPUT]);
            let ab = g.add(a, b);
            let abc = g.add(ab, cc);
            let pre = g.add(abc, model.vars[PGEN_BIAS]);
            g.sigmoid(pre)
        }
        PgenMode::Forced(v) => g.scalar(v),
    };

    let one = g.scalar(1.0);
    let p_copy = g.sub(one, p_gen);
    let pg = g.broadcast(p_gen, 1, v_size);
    let pc = g.broadcast(p_copy, 1, v_size);
    let gen_part = g.mul(pg, p_vocab);
    let copy_part = g.mul(pc, copy);
    let dist = g.add(gen_part, copy_part);

    DecodeStep {
        dist,
        state: (h, c),
        attn,
        p_gen,
    }
}

/// Output of a free-running decode: the sampled rollout (with its
/// distributions and per-step log-probabilities) plus an argmax rollout
/// decoded under identical state-update rules.
pub struct GeneratorOutput {
    pub dists: Vec<Var>,
    pub sampled: Vec<TokenId>,
    pub log_probs: Vec<Var>,
    pub greedy: Vec<TokenId>,
}

impl GeneratorOutput {
    pub fn sampled_log_prob_values(&self, g: &Graph) -> Vec<f64> {
        self.log_probs.iter().map(|&v| g.scalar_value(v)).collect()
    }

    /// Sum of per-step log-probabilities as a graph node.
    pub fn total_log_prob(&self, g: &mut Graph) -> Var {
        let mut acc = self.log_probs[0];
        for &lp in &self.log_probs[1..] {
            acc = g.add(acc, lp);
        }
        acc
    }
}

pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Free-running decode. The sampled rollout draws each token from its step
/// distribution; the greedy rollout takes the argmax. Each stops at `eos`
/// (when given) or `max_len`. The decoder input at step n+1 is the token
/// chosen at step n.
pub fn decode_sample(
    g: &mut Graph,
    model: &Seq2SeqVars,
    enc: &Encoded,
    max_len: usize,
    start: TokenId,
    eos: Option<TokenId>,
    pgen_mode: PgenMode,
    rng: &mut SeededRng,
) -> GeneratorOutput {
    assert!(max_len >= 1);
    let mut dists = Vec::new();
    let mut sampled = Vec::new();
    let mut log_probs = Vec::new();

    let mut state = enc.final_state;
    let mut prev = start;
    for _ in 0..max_len {
        let step = step_distribution(g, model, enc, &state, prev, pgen_mode);
        let probs: Vec<f64> = g.value(step.dist).iter().cloned().collect();
        let tok = rng.categorical(&probs);
        let p = g.cell(step.dist, 0, tok);
        let lp = g.ln(p);
        dists.push(step.dist);
        log_probs.push(lp);
        sampled.push(tok);
        state = step.state;
        prev = tok;
        if Some(tok) == eos {
            break;
        }
    }

    // Greedy rollout: same update rules, argmax selection.
    let mut greedy = Vec::new();
    let mut state = enc.final_state;
    let mut prev = start;
    for _ in 0..max_len {
        let step = step_distribution(g, model, enc, &state, prev, pgen_mode);
        let probs: Vec<f64> = g.value(step.dist).iter().cloned().collect();
        let tok = argmax(&probs);
        greedy.push(tok);
        state = step.state;
        prev = tok;
        if Some(tok) == eos {
            break;
        }
    }

    GeneratorOutput {
        dists,
        sampled,
        log_probs,
        greedy,
    }
}

/// Pure argmax rollout; equals the greedy half of [`decode_sample`].
pub fn decode_greedy(
    g: &mut Graph,
    model: &Seq2SeqVars,
    enc: &Encoded,
    max_len: usize,
    start: TokenId,
    eos: Option<TokenId>,
    pgen_mode: PgenMode,
) -> Vec<TokenId> {
    let mut out = Vec::new();
    let mut state = enc.final_state;
    let mut prev = start;
    for _ in 0..max_len {
        let step = step_distribution(g, model, enc, &state, prev, pgen_mode);
        let probs: Vec<f64> = g.value(step.dist).iter().cloned().collect();
        let tok = argmax(&probs);
        out.push(tok);
        state = step.state;
        prev = tok;
        if Some(tok) == eos {
            break;
        }
    }
    out
}

/// Teacher-forced decode: feeds `start, targets[0], ..., targets[n-2]` and
/// returns one distribution per target position.
pub fn teacher_forced_dists(
    g: &mut Graph,
    model: &Seq2SeqVars,
    enc: &Encoded,
    targets: &[TokenId],
    start: TokenId,
    pgen_mode: PgenMode,
) -> Vec<Var> {
    let mut state = enc.final_state;
    let mut prev = start;
    let mut dists = Vec::with_capacity(targets.len());
    for &t in targets {
        let step = step_distribution(g, model, enc, &state, prev, pgen_mode);
        dists.push(step.dist);
        state = step.state;
        prev = t;
    }
    dists
}

/// Mean negative log-likelihood of `targets` under per-step distributions.
pub fn sequence_nll(g: &mut Graph, dists: &[Var], targets: &[TokenId]) -> Var {
    assert_eq!(dists.len(), targets.len());
    assert!(!targets.is_empty());
    let mut terms = Vec::with_capacity(targets.len());
    for (d, &t) in dists.iter().zip(targets) {
        let p = g.cell(*d, 0, t);
        let lp = g.ln(p);
        terms.push(lp);
    }
    let mut acc = terms[0];
    for &t in &terms[1..] {
        acc = g.add(acc, t);
    }
    let total = g.neg(acc);
    g.scale(total, 1.0 / targets.len() as f64)
}

/// Step-model interface the beam search and its enumeration oracle share.
pub trait StepModel {
    type State: Clone;
    fn initial(&mut self) -> Self::State;
    /// Returns the next-token distribution and the successor state.
    fn step(&mut self, state: &Self::State, prev: TokenId) -> (Vec<f64>, Self::State);
    fn vocab_size(&self) -> usize;
}

/// [`StepModel`] over a live graph-bound seq2seq instance.
pub struct Seq2SeqStepper<'a> {
    pub g: &'a mut Graph,
    pub model: &'a Seq2SeqVars,
    pub enc: &'a Encoded,
    pub start: TokenId,
    pub pgen_mode: PgenMode,
}

#[derive(Clone)]
pub struct StepperState {
    state: (Var, Var),
    first: bool,
}

impl StepModel for Seq2SeqStepper<'_> {
    type State = StepperState;

    fn initial(&mut self) -> StepperState {
        StepperState {
            state: self.enc.final_state,
            first: true,
        }
    }

    fn step(&mut self, state: &StepperState, prev: TokenId) -> (Vec<f64>, StepperState) {
        let prev = if state.first { self.start } else { prev };
        let out = step_distribution(self.g, self.model, self.enc, &state.state, prev, self.pgen_mode);
        let dist = self.g.value(out.dist).iter().cloned().collect();
        (
            dist,
            StepperState {
                state: out.state,
                first: false,
            },
        )
    }

    fn vocab_size(&self) -> usize {
        self.model.cfg.vocab_size
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ad::{central_diff, rel_error};

    fn tiny(vocab: usize, embed: usize, hidden: usize, seed: u64) -> Seq2SeqParams {
        let mut rng = SeededRng::new(seed);
        Seq2SeqParams::init(
            Seq2SeqConfig {
                vocab_size: vocab,
                embed_dim: embed,
                hidden_dim: hidden,
            },
            &mut rng,
        )
    }

    #[test]
    fn encode_yields_one_state_per_position_deterministically() {
        let p = tiny(10, 4, 600, 1);
        let src = vec![4, 5, 6];
        let mut g = Graph::new();
        let m = p.bind(&mut g, false);
        let enc = encode(&mut g, &m, &src).unwrap();
        assert_eq!(g.shape(enc.states), (3, 600));

        let mut g2 = Graph::new();
        let m2 = p.bind(&mut g2, false);
        let enc2 = encode(&mut g2, &m2, &src).unwrap();
        assert_eq!(g.value(enc.states), g2.value(enc2.states));

        assert!(encode(&mut g, &m, &[]).is_err());
    }

    #[test]
    fn pad_positions_get_zero_attention() {
        let p = tiny(10, 4, 8, 2);
        let src = vec![4, PAD, 5, PAD];
        let mut g = Graph::new();
        let m = p.bind(&mut g, false);
        let enc = encode(&mut g, &m, &src).unwrap();
        let step = step_distribution(&mut g, &m, &enc, &enc.final_state, 4, PgenMode::Learned);
        let attn = g.value(step.attn);
        assert_eq!(attn[[0, 1]], 0.0);
        assert_eq!(attn[[0, 3]], 0.0);
        let s: f64 = attn.iter().sum();
        assert!((s - 1.0).abs() < 1e-9);
        // No copy mass can land on PAD.
        assert_eq!(g.value(step.dist)[[0, PAD]], g.value(step.dist)[[0, PAD]].min(1.0));
    }

    #[test]
    fn forced_pgen_one_recovers_vocab_distribution() {
        let p = tiny(12, 5, 7, 3);
        let src = vec![4, 7, 9];
        let mut g = Graph::new();
        let m = p.bind(&mut g, false);
        let enc = encode(&mut g, &m, &src).unwrap();
        let step = step_distribution(&mut g, &m, &enc, &enc.final_state, 4, PgenMode::Forced(1.0));
        // With p_gen = 1 the mixture equals P_vocab, which must be a
        // normalized positive distribution.
        let d = g.value(step.dist);
        assert!((d.sum() - 1.0).abs() < 1e-9);
        assert!(d.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn forced_pgen_zero_aggregates_copy_mass() {
        let p = tiny(12, 5, 7, 4);
        let src = vec![7, 7, 9];
        let mut g = Graph::new();
        let m = p.bind(&mut g, false);
        let enc = encode(&mut g, &m, &src).unwrap();
        let step = step_distribution(&mut g, &m, &enc, &enc.final_state, 4, PgenMode::Forced(0.0));
        let d = g.value(step.dist);
        let attn = g.value(step.attn);
        // P(7) is the total attention on positions 0 and 1; P(9) the rest.
        assert!((d[[0, 7]] - (attn[[0, 0]] + attn[[0, 1]])).abs() < 1e-12);
        assert!((d[[0, 9]] - attn[[0, 2]]).abs() < 1e-12);
        assert!((d.sum() - 1.0).abs() < 1e-9);
        // Everything off-source is exactly zero.
        for v in 0..12 {
            if v != 7 && v != 9 {
                assert_eq!(d[[0, v]], 0.0);
            }
        }
    }

    /// Direct checks of the copy aggregation and mixture arithmetic from
    /// the contract examples, using hand-built distributions.
    #[test]
    fn mixture_arithmetic_hand_examples() {
        // p_gen = 0, src = [7,7,9], attention [0.5, 0.25, 0.25]:
        // copy aggregation puts 0.75 on 7 and 0.25 on 9.
        let mut g = Graph::new();
        let attn = g.constant(Arr::from_shape_vec((3, 1), vec![0.5, 0.25, 0.25]).unwrap());
        let copy = g.row_scatter_add(attn, Rc::new(vec![7, 7, 9]), 12);
        assert!((g.value(copy)[[7, 0]] - 0.75).abs() < 1e-15);
        assert!((g.value(copy)[[9, 0]] - 0.25).abs() < 1e-15);

        // p_gen = 0.5, uniform P_vocab over V=4, copy mass all on token 2:
        // P(2) = 0.5*0.25 + 0.5*1.0 = 0.625, others 0.125.
        let mut g = Graph::new();
        let pv = g.constant(Arr::from_elem((1, 4), 0.25));
        let cp = g.constant(Arr::from_shape_vec((1, 4), vec![0.0, 0.0, 1.0, 0.0]).unwrap());
        let pgen = g.scalar(0.5);
        let one = g.scalar(1.0);
        let pcopy = g.sub(one, pgen);
        let a = g.broadcast(pgen, 1, 4);
        let b = g.broadcast(pcopy, 1, 4);
        let g1 = g.mul(a, pv);
        let g2 = g.mul(b, cp);
        let mixed = g.add(g1, g2);
        let d = g.value(mixed);
        assert!((d[[0, 2]] - 0.625).abs() < 1e-15);
        assert!((d[[0, 0]] - 0.125).abs() < 1e-15);
        assert!((d[[0, 1]] - 0.125).abs() < 1e-15);
        assert!((d[[0, 3]] - 0.125).abs() < 1e-15);
    }

    #[test]
    fn distributions_normalize_over_random_steps() {
        let mut rng = SeededRng::new(8);
        for trial in 0..20 {
            let p = tiny(9, 4, 6, 100 + trial);
            let len = 1 + rng.below(5);
            let src: Vec<TokenId> = (0..len).map(|_| 4 + rng.below(5)).collect();
            let mut g = Graph::new();
            let m = p.bind(&mut g, false);
            let enc = encode(&mut g, &m, &src).unwrap();
            let mut state = enc.final_state;
            for _ in 0..4 {
                let prev = rng.below(9);
                let step = step_distribution(&mut g, &m, &enc, &state, prev, PgenMode::Learned);
                let d = g.value(step.dist);
                assert!((d.sum() - 1.0).abs() < 1e-6);
                assert!(d.iter().all(|&x| x >= 0.0));
                state = step.state;
            }
        }
    }

    #[test]
    fn sampled_rollout_is_seed_reproducible_and_copy_only_respects_source() {
        let p = tiny(11, 4, 6, 5);
        let src = vec![4, 8, 10, 5];
        let run = |seed: u64| {
            let mut g = Graph::new();
            let m = p.bind(&mut g, false);
            let enc = encode(&mut g, &m, &src).unwrap();
            let mut rng = SeededRng::new(seed);
            let out = decode_sample(&mut g, &m, &enc, 6, 4, None, PgenMode::Forced(0.0), &mut rng);
            out.sampled
        };
        assert_eq!(run(42), run(42));
        for tok in run(42) {
            assert!(src.contains(&tok), "copy-only token {tok} not in source");
        }
    }

    #[test]
    fn one_hot_distributions_make_sampling_equal_greedy() {
        // A single-token source with the gate forced to copy puts all mass
        // on that token, so the sampled and greedy rollouts coincide.
        let p = tiny(9, 4, 6, 6);
        let src = vec![7];
        let mut g = Graph::new();
        let m = p.bind(&mut g, false);
        let enc = encode(&mut g, &m, &src).unwrap();
        let mut rng = SeededRng::new(1);
        let out = decode_sample(&mut g, &m, &enc, 4, 4, None, PgenMode::Forced(0.0), &mut rng);
        assert_eq!(out.sampled, out.greedy);
        assert!(out.sampled.iter().all(|&t| t == 7));
        // Log-probabilities of a deterministic rollout are exactly zero.
        for lp in out.sampled_log_prob_values(&g) {
            assert!(lp.abs() < 1e-9);
        }
    }

    #[test]
    fn recorded_log_probs_match_distributions() {
        let p = tiny(10, 4, 6, 7);
        let src = vec![4, 6, 9];
        let mut g = Graph::new();
        let m = p.bind(&mut g, false);
        let enc = encode(&mut g, &m, &src).unwrap();
        let mut rng = SeededRng::new(3);
        let out = decode_sample(&mut g, &m, &enc, 5, 4, None, PgenMode::Learned, &mut rng);
        for ((d, &tok), &lp) in out.dists.iter().zip(&out.sampled).zip(&out.log_probs) {
            let p = g.value(*d)[[0, tok]];
            assert!((g.scalar_value(lp) - p.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn eos_stops_decoding() {
        let p = tiny(9, 4, 6, 8);
        // Source of only EOS-id tokens with a forced copy gate emits EOS
        // immediately.
        let src = vec![3];
        let mut g = Graph::new();
        let m = p.bind(&mut g, false);
        let enc = encode(&mut g, &m, &src).unwrap();
        let mut rng = SeededRng::new(1);
        let out = decode_sample(&mut g, &m, &enc, 7, 2, Some(3), PgenMode::Forced(0.0), &mut rng);
        assert_eq!(out.sampled, vec![3]);
        assert_eq!(out.greedy, vec![3]);
    }

    #[test]
    fn teacher_forced_nll_gradients_match_finite_differences() {
        // V <= 8, lengths <= 4 gradient check of the step log-likelihood
        // with respect to every parameter tensor.
        let p = tiny(8, 3, 4, 9);
        let src = vec![4, 6, 7];
        let targets = vec![5, 4, 3];

        let loss_of = |tensors: &[Arr]| -> f64 {
            let mut q = p.clone();
            for (dst, srcv) in q.tensors_mut().into_iter().zip(tensors) {
                *dst = srcv.clone();
            }
            let mut g = Graph::new();
            let m = q.bind(&mut g, false);
            let enc = encode(&mut g, &m, &src).unwrap();
            let dists = teacher_forced_dists(&mut g, &m, &enc, &targets, 2, PgenMode::Learned);
            let nll = sequence_nll(&mut g, &dists, &targets);
            g.scalar_value(nll)
        };

        let mut g = Graph::new();
        let m = p.bind(&mut g, true);
        let enc = encode(&mut g, &m, &src).unwrap();
        let dists = teacher_forced_dists(&mut g, &m, &enc, &targets, 2, PgenMode::Learned);
        let nll = sequence_nll(&mut g, &dists, &targets);
        let grads = g.backward(nll, &m.vars);

        let tensors: Vec<Arr> = p.tensors().into_iter().cloned().collect();
        // Recurrent-weight gradients are ~1e-7 at near-zero initial states;
        // eps must be large enough that cancellation noise in the forward
        // pass stays below them. Error scales as 1/eps (noise), not eps^2.
        let numeric = central_diff(&tensors, 1e-3, |ts| loss_of(ts));
        for (k, (gv, nv)) in grads.iter().zip(numeric.iter()).enumerate() {
            let err = rel_error(g.value(*gv), nv);
            assert!(err < 1e-4, "tensor {k}: rel err {err}");
        }
    }

    #[test]
    fn uniform_nll_is_log_vocab() {
        let mut g = Graph::new();
        let d1 = g.constant(Arr::from_elem((1, 4), 0.25));
        let d2 = g.constant(Arr::from_elem((1, 4), 0.25));
        let nll = sequence_nll(&mut g, &[d1, d2], &[1, 3]);
        assert!((g.scalar_value(nll) - 4.0f64.ln()).abs() < 1e-12);
    }
}
