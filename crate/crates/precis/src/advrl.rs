//! Method 2: self-critical adversarial REINFORCE.
//!
//! Discriminator D2 is a unidirectional recurrent scorer: at step i it
//! emits a score s_i for the prefix y_1..y_i, so a sequence can be judged
//! while it is being generated. The generator's per-step reward is the
//! self-critical difference r_1 = s_1, r_i = s_i - s_{i-1}; discounted
//! returns d_i = sum_j gamma^{j-i} r_j feed a likelihood-ratio surrogate.
//!
//! D2 trains with the same Wasserstein objective as D1. Discrete tokens
//! cannot be interpolated, so the gradient penalty acts on interpolations
//! of the embedded sequences, which enter the critic as raw input rows.

use crate::ad::{Arr, Graph, Var};
use crate::corpus::{TokenId, PAD};
use crate::error::{Error, Result};
use crate::par;
use crate::rng::SeededRng;
use crate::seq2seq::LstmWeights;
use crate::wgan::assemble_d_loss;
use serde::{Deserialize, Serialize};
use std::rc::Rc;

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct D2Config {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden: usize,
}

impl D2Config {
    /// Published configuration: hidden size 512.
    pub fn full(vocab_size: usize) -> Self {
        D2Config {
            vocab_size,
            embed_dim: 128,
            hidden: 512,
        }
    }
}

/// Recurrent per-step critic. Embeddings are its own, independent of the
/// generator's.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct D2Params {
    pub cfg: D2Config,
    pub embedding: Arr, // V x E
    pub lstm: LstmWeights,
    pub w_score: Arr, // H x 1
    pub b_score: Arr, // 1 x 1
}

impl D2Params {
    pub fn init(cfg: D2Config, rng: &mut SeededRng) -> Self {
        let s = 0.08;
        let mut m = |r: usize, c: usize| Arr::from_shape_fn((r, c), |_| rng.uniform_range(-s, s));
        let embedding = m(cfg.vocab_size, cfg.embed_dim);
        let w_score = m(cfg.hidden, 1);
        D2Params {
            cfg,
            embedding,
            lstm: LstmWeights::init(cfg.embed_dim, cfg.hidden, rng, s),
            w_score,
            b_score: Arr::zeros((1, 1)),
        }
    }

    pub fn tensors(&self) -> Vec<&Arr> {
        let mut v = vec![&self.embedding];
        v.extend(self.lstm.tensors());
        v.push(&self.w_score);
        v.push(&self.b_score);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Arr> {
        let mut v: Vec<&mut Arr> = vec![&mut self.embedding];
        v.extend(self.lstm.tensors_mut());
        v.push(&mut self.w_score);
        v.push(&mut self.b_score);
        v
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> D2Vars {
        let vars = self
            .tensors()
            .into_iter()
            .map(|a| {
                if trainable {
                    g.param(a.clone())
                } else {
                    g.constant(a.clone())
                }
            })
            .collect();
        D2Vars {
            cfg: self.cfg,
            vars,
        }
    }

    /// Embeds a token sequence outside any graph (plain values).
    pub fn embed_values(&self, tokens: &[TokenId]) -> Arr {
        let mut out = Arr::zeros((tokens.len(), self.cfg.embed_dim));
        for (i, &t) in tokens.iter().enumerate() {
            out.row_mut(i).assign(&self.embedding.row(t));
        }
        out
    }
}

pub struct D2Vars {
    pub cfg: D2Config,
    pub vars: Vec<Var>,
}

const D2_EMB: usize = 0;
const D2_LSTM: usize = 1; // 12 tensors
const D2_WS: usize = 13;
const D2_BS: usize = 14;

/// Per-step scores of embedded input rows (N x E); one scalar per row.
/// Score i depends only on rows 0..=i.
pub fn d2_scores_from_rows(g: &mut Graph, d2: &D2Vars, rows: Var) -> Vec<Var> {
    let (n, _) = g.shape(rows);
    let lstm = crate::seq2seq::LstmVars(&d2.vars[D2_LSTM..D2_LSTM + 12]);
    let mut h = g.constant(Arr::zeros((1, d2.cfg.hidden)));
    let mut c = g.constant(Arr::zeros((1, d2.cfg.hidden)));
    let mut scores = Vec::with_capacity(n);
    for t in 0..n {
        let x = g.slice_rows(rows, t, t + 1);
        let (h2, c2) = lstm.step(g, x, h, c);
        h = h2;
        c = c2;
        let s = g.affine_row(h, d2.vars[D2_WS], d2.vars[D2_BS]);
        scores.push(s);
    }
    scores
}

/// Per-step scores of a discrete token sequence.
pub fn d2_scores(g: &mut Graph, d2: &D2Vars, tokens: &[TokenId]) -> Result<Vec<Var>> {
    if tokens.is_empty() {
        return Err(Error::EmptySequence("discriminator input sequence"));
    }
    let ids = Rc::new(tokens.to_vec());
    let rows = g.row_select(d2.vars[D2_EMB], ids);
    Ok(d2_scores_from_rows(g, d2, rows))
}

/// D2(y) = arithmetic mean of the step scores.
pub fn d2_aggregate(scores: &[f64]) -> f64 {
    assert!(!scores.is_empty());
    scores.iter().sum::<f64>() / scores.len() as f64
}

fn mean_vars(g: &mut Graph, scores: &[Var]) -> Var {
    let mut acc = scores[0];
    for &s in &scores[1..] {
        acc = g.add(acc, s);
    }
    g.scale(acc, 1.0 / scores.len() as f64)
}

/// Self-critical per-step rewards: r_1 = s_1, r_i = s_i - s_{i-1}.
pub fn stepwise_rewards(scores: &[f64]) -> Vec<f64> {
    assert!(!scores.is_empty());
    let mut out = Vec::with_capacity(scores.len());
    out.push(scores[0]);
    for w in scores.windows(2) {
        out.push(w[1] - w[0]);
    }
    out
}

/// Discounted returns d_i = sum_{j>=i} gamma^{j-i} r_j via the backward
/// recursion d_i = r_i + gamma * d_{i+1}.
pub fn discount(rewards: &[f64], gamma: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::OutOfRange {
            what: "discount gamma",
            value: gamma,
        });
    }
    let mut out = vec![0.0; rewards.len()];
    let mut next = 0.0;
    for i in (0..rewards.len()).rev() {
        next = rewards[i] + gamma * next;
        out[i] = next;
    }
    Ok(out)
}

/// Likelihood-ratio surrogate `-sum_i d_i * log p_i`; the returns enter as
/// constants.
pub fn reinforce_surrogate_returns(g: &mut Graph, log_probs: &[Var], returns: &[f64]) -> Var {
    assert_eq!(log_probs.len(), returns.len());
    assert!(!log_probs.is_empty());
    let mut terms = Vec::with_capacity(returns.len());
    for (&lp, &d) in log_probs.iter().zip(returns) {
        terms.push(g.scale(lp, d));
    }
    let mut acc = terms[0];
    for &t in &terms[1..] {
        acc = g.add(acc, t);
    }
    g.neg(acc)
}

fn pad_tokens(tokens: &[TokenId], len: usize) -> Vec<TokenId> {
    let mut v = tokens.to_vec();
    v.resize(len, PAD);
    v
}

/// Loss value and parameter gradients for one D2 critic update.
pub struct D2LossOutput {
    pub loss: f64,
    pub grads: Vec<Arr>,
    pub fake_mean: f64,
    pub real_mean: f64,
}

/// Wasserstein loss for D2 over discrete fake/real token batches, with the
/// gradient penalty applied to interpolated embedded sequences (padded to
/// the batch maximum with PAD embeddings).
pub fn d2_loss(
    params: &D2Params,
    fake: &[Vec<TokenId>],
    real: &[Vec<TokenId>],
    beta2: f64,
    rng: &mut SeededRng,
) -> Result<D2LossOutput> {
    if fake.len() != real.len() {
        return Err(Error::BatchSizeMismatch {
            fake: fake.len(),
            real: real.len(),
        });
    }
    let k = fake.len();
    assert!(k >= 1);
    let max_len = fake
        .iter()
        .chain(real.iter())
        .map(Vec::len)
        .max()
        .unwrap()
        .max(1);
    let inv_k = 1.0 / k as f64;
    let eps: Vec<f64> = (0..k).map(|_| rng.uniform()).collect();

    struct PerExample {
        fake_score: f64,
        real_score: f64,
        grad_norm: f64,
        grads: Vec<Arr>,
    }

    let items: Vec<usize> = (0..k).collect();
    let per: Vec<Result<PerExample>> = par::map_batch(&items, |&i| {
        let mut g = Graph::new();
        let d2 = params.bind(&mut g, true);

        let fake_scores = d2_scores(&mut g, &d2, &fake[i])?;
        let real_scores = d2_scores(&mut g, &d2, &real[i])?;
        let s_fake = mean_vars(&mut g, &fake_scores);
        let s_real = mean_vars(&mut g, &real_scores);

        // Interpolated embedded rows enter as an input leaf; the penalty
        // differentiates the critic with respect to that input.
        let fe = params.embed_values(&pad_tokens(&fake[i], max_len));
        let re = params.embed_values(&pad_tokens(&real[i], max_len));
        let interp = fe.mapv(|x| eps[i] * x) + &re.mapv(|x| (1.0 - eps[i]) * x);
        let rows = g.param(interp);
        let interp_scores = d2_scores_from_rows(&mut g, &d2, rows);
        let s_interp = mean_vars(&mut g, &interp_scores);

        let gx = g.backward(s_interp, &[rows])[0];
        let norm = g.norm2(gx);
        let one = g.scalar(1.0);
        let diff = g.sub(norm, one);
        let pen = g.mul(diff, diff);

        let neg_real = g.neg(s_real);
        let fr = g.add(s_fake, neg_real);
        let pen_scaled = g.scale(pen, beta2);
        let total = g.add(fr, pen_scaled);
        let total = g.scale(total, inv_k);

        let grads = g.backward(total, &d2.vars);
        Ok(PerExample {
            fake_score: g.scalar_value(s_fake),
            real_score: g.scalar_value(s_real),
            grad_norm: g.scalar_value(norm),
            grads: grads.iter().map(|&v| g.value(v).clone()).collect(),
        })
    });

    let mut fake_scores = Vec::with_capacity(k);
    let mut real_scores = Vec::with_capacity(k);
    let mut norms = Vec::with_capacity(k);
    let mut grads: Option<Vec<Arr>> = None;
    for r in per {
        let e = r?;
        fake_scores.push(e.fake_score);
        real_scores.push(e.real_score);
        norms.push(e.grad_norm);
        grads = Some(match grads {
            None => e.grads,
            Some(mut acc) => {
                for (a, b) in acc.iter_mut().zip(&e.grads) {
                    *a += b;
                }
                acc
            }
        });
    }

    Ok(D2LossOutput {
        loss: assemble_d_loss(&fake_scores, &real_scores, &norms, beta2),
        grads: grads.unwrap(),
        fake_mean: fake_scores.iter().sum::<f64>() / k as f64,
        real_mean: real_scores.iter().sum::<f64>() / k as f64,
    })
}

/// Optional weight-clipping regularization (the alternative to the
/// gradient penalty): clamps every parameter into [-c, c].
pub fn clip_weights(params: &mut D2Params, c: f64) {
    for t in params.tensors_mut() {
        t.mapv_inplace(|x| x.clamp(-c, c));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ad::{central_diff, rel_error};
    use crate::optim::RmsProp;

    fn tiny(vocab: usize, seed: u64) -> D2Params {
        D2Params::init(
            D2Config {
                vocab_size: vocab,
                embed_dim: 5,
                hidden: 8,
            },
            &mut SeededRng::new(seed),
        )
    }

    fn score_values(p: &D2Params, tokens: &[TokenId]) -> Vec<f64> {
        let mut g = Graph::new();
        let d2 = p.bind(&mut g, false);
        let scores = d2_scores(&mut g, &d2, tokens).unwrap();
        scores.iter().map(|&s| g.scalar_value(s)).collect()
    }

    #[test]
    fn one_score_per_token_and_finiteness() {
        let p = tiny(9, 1);
        assert_eq!(score_values(&p, &[4]).len(), 1);
        let s = score_values(&p, &[4, 7, 2, 8]);
        assert_eq!(s.len(), 4);
        assert!(s.iter().all(|x| x.is_finite()));

        let mut g = Graph::new();
        let d2 = p.bind(&mut g, false);
        assert!(matches!(
            d2_scores(&mut g, &d2, &[]),
            Err(Error::EmptySequence(_))
        ));
    }

    #[test]
    fn shared_prefixes_share_scores_exactly() {
        let p = tiny(9, 2);
        let a = score_values(&p, &[4, 7, 2, 8, 5]);
        let b = score_values(&p, &[4, 7, 2, 1, 1]);
        assert_eq!(a[..3], b[..3], "causality: prefix scores must match");
        assert_ne!(a[3], b[3]);
    }

    #[test]
    fn aggregate_is_arithmetic_mean() {
        assert_eq!(d2_aggregate(&[1.0, 2.0, 3.0]), 2.0);
        assert_eq!(d2_aggregate(&[0.7]), 0.7);
        assert_eq!(d2_aggregate(&[0.5, -0.5]), 0.0);
    }

    #[test]
    fn stepwise_reward_substitutions() {
        let r = stepwise_rewards(&[0.3, 0.5, 0.1]);
        assert!((r[0] - 0.3).abs() < 1e-12);
        assert!((r[1] - 0.2).abs() < 1e-12);
        assert!((r[2] - (-0.4)).abs() < 1e-12);
        assert_eq!(stepwise_rewards(&[2.5, 2.5, 2.5]), vec![2.5, 0.0, 0.0]);
    }

    #[test]
    fn rewards_telescope_to_final_score() {
        let mut rng = SeededRng::new(3);
        for _ in 0..1000 {
            let n = 1 + rng.below(12);
            let s: Vec<f64> = (0..n).map(|_| rng.uniform_range(-2.0, 2.0)).collect();
            let total: f64 = stepwise_rewards(&s).iter().sum();
            assert!((total - s[n - 1]).abs() < 1e-9);
        }
    }

    #[test]
    fn discount_substitutions_and_recursion() {
        assert_eq!(discount(&[1.0, -0.5, 0.2], 0.0).unwrap(), vec![1.0, -0.5, 0.2]);
        let d = discount(&[1.0, -0.5, 0.2], 0.5).unwrap();
        assert!((d[0] - 0.8).abs() < 1e-12);
        assert!((d[1] - (-0.4)).abs() < 1e-12);
        assert!((d[2] - 0.2).abs() < 1e-12);
        assert_eq!(discount(&[1.0, 1.0, 1.0], 1.0).unwrap(), vec![3.0, 2.0, 1.0]);
        assert!(discount(&[1.0], 1.5).is_err());
        assert!(discount(&[1.0], -0.1).is_err());

        let mut rng = SeededRng::new(4);
        for _ in 0..500 {
            let n = 1 + rng.below(10);
            let r: Vec<f64> = (0..n).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
            let gamma = rng.uniform();
            let d = discount(&r, gamma).unwrap();
            for i in 0..n {
                let next = if i + 1 < n { d[i + 1] } else { 0.0 };
                assert!((d[i] - gamma * next - r[i]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn constant_score_shift_moves_only_first_reward() {
        let mut rng = SeededRng::new(5);
        let gamma = 0.9;
        for _ in 0..100 {
            let n = 2 + rng.below(6);
            let s: Vec<f64> = (0..n).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
            let c = rng.uniform_range(-2.0, 2.0);
            let shifted: Vec<f64> = s.iter().map(|x| x + c).collect();
            let r1 = stepwise_rewards(&s);
            let r2 = stepwise_rewards(&shifted);
            assert!((r2[0] - (r1[0] + c)).abs() < 1e-12);
            for i in 1..n {
                assert!((r2[i] - r1[i]).abs() < 1e-12);
            }
            // Hence d_i shifts by c * gamma^{i-1}... wait: only r_1 moves,
            // so d_i changes by c only for i = 1.
            let d1 = discount(&r1, gamma).unwrap();
            let d2v = discount(&r2, gamma).unwrap();
            assert!((d2v[0] - (d1[0] + c)).abs() < 1e-9);
            for i in 1..n {
                assert!((d2v[i] - d1[i]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn zero_returns_give_zero_gradient() {
        let p = tiny(8, 6);
        let mut g = Graph::new();
        let d2 = p.bind(&mut g, true);
        let lp1 = {
            let s = d2_scores(&mut g, &d2, &[4, 5]).unwrap();
            // Stand-in log-probs: any differentiable scalars work here.
            s
        };
        let surr = reinforce_surrogate_returns(&mut g, &lp1, &[0.0, 0.0]);
        let grads = g.backward(surr, &d2.vars);
        for gv in grads {
            assert!(g.value(gv).iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn constant_critic_loss_equals_beta() {
        let mut p = tiny(7, 7);
        for t in p.tensors_mut() {
            t.fill(0.0);
        }
        let mut rng = SeededRng::new(8);
        let out = d2_loss(&p, &[vec![4, 5]], &[vec![6]], 1.0, &mut rng).unwrap();
        assert!((out.loss - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hand_assembled_loss_example() {
        // fake mean 0.1, real mean 0.9, penalty norm 1, K=1 -> -0.8.
        assert!((assemble_d_loss(&[0.1], &[0.9], &[1.0], 1.0) - (-0.8)).abs() < 1e-15);
    }

    #[test]
    fn batch_mismatch_rejected() {
        let p = tiny(7, 9);
        let mut rng = SeededRng::new(9);
        assert!(matches!(
            d2_loss(&p, &[vec![4]], &[], 1.0, &mut rng),
            Err(Error::BatchSizeMismatch { .. })
        ));
    }

    #[test]
    fn input_row_gradients_match_finite_differences() {
        let p = tiny(7, 10);
        let mut rng = SeededRng::new(11);
        let rows = Arr::from_shape_fn((3, 5), |_| rng.uniform_range(-0.5, 0.5));

        let mut g = Graph::new();
        let d2 = p.bind(&mut g, false);
        let rv = g.param(rows.clone());
        let scores = d2_scores_from_rows(&mut g, &d2, rv);
        let s = mean_vars(&mut g, &scores);
        let gx = g.backward(s, &[rv])[0];

        let numeric = central_diff(&[rows], 1e-5, |xs| {
            let mut g2 = Graph::new();
            let d2 = p.bind(&mut g2, false);
            let rv = g2.constant(xs[0].clone());
            let scores = d2_scores_from_rows(&mut g2, &d2, rv);
            let s = mean_vars(&mut g2, &scores);
            g2.scalar_value(s)
        });
        let err = rel_error(g.value(gx), &numeric[0]);
        assert!(err < 1e-4, "rel err {err}");
    }

    #[test]
    fn weight_clipping_clamps_all_tensors() {
        let mut p = tiny(7, 12);
        p.w_score[[0, 0]] = 3.0;
        p.embedding[[4, 0]] = -2.0;
        clip_weights(&mut p, 0.1);
        for t in p.tensors() {
            assert!(t.iter().all(|&x| (-0.1..=0.1).contains(&x)));
        }
    }

    #[test]
    fn critic_separates_patterned_real_from_random_fake() {
        // Real sequences repeat a token pattern; fake are uniform random.
        let vocab = 10;
        let mut p = D2Params::init(
            D2Config {
                vocab_size: vocab,
                embed_dim: 6,
                hidden: 12,
            },
            &mut SeededRng::new(13),
        );
        let mut rng = SeededRng::new(14);
        let mut opt = RmsProp::new(1e-2);
        let mut first_loss = None;
        let mut gap = 0.0;
        for step in 0..500 {
            let fake: Vec<Vec<TokenId>> =
                (0..4).map(|_| (0..5).map(|_| rng.below(vocab)).collect()).collect();
            let real: Vec<Vec<TokenId>> = (0..4)
                .map(|_| {
                    let a = 2 * rng.below(5);
                    vec![a, a + 1, a, a + 1, a]
                })
                .collect();
            let out = d2_loss(&p, &fake, &real, 1.0, &mut rng).unwrap();
            if step == 0 {
                first_loss = Some(out.loss);
            }
            let mut tensors = p.tensors_mut();
            opt.step(&mut tensors, &out.grads);
            gap = out.fake_mean - out.real_mean;
            if gap < -1.0 {
                assert!(out.loss < first_loss.unwrap());
                return;
            }
        }
        panic!("D2 failed to separate: gap {gap}");
    }
}
