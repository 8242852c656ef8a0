//! Method 1: Wasserstein critic over word-distribution sequences.
//!
//! Discriminator D1 is a residual convolutional network that reads an
//! N x V matrix of probability rows and emits one score. It trains with
//! the Wasserstein objective plus a gradient penalty on sequences
//! interpolated between generator output rows and one-hot real rows; the
//! generator's adversarial term is the mean critic score of its output
//! distributions, differentiable through the rows (no sampling on this
//! path).

use crate::ad::{Arr, Graph, Var};
use crate::corpus::{TokenId, PAD};
use crate::error::{Error, Result};
use crate::par;
use crate::rng::SeededRng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct D1Config {
    pub vocab_size: usize,
    pub hidden: usize,
    pub blocks: usize,
}

impl D1Config {
    /// Published configuration: four residual blocks, 512 hidden dims.
    pub fn full(vocab_size: usize) -> Self {
        D1Config {
            vocab_size,
            hidden: 512,
            blocks: 4,
        }
    }
}

/// One residual block: two kernel-3 convolutions along time with a ReLU
/// between, added back to the input.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResBlock {
    pub w1l: Arr,
    pub w1c: Arr,
    pub w1r: Arr,
    pub b1: Arr,
    pub w2l: Arr,
    pub w2c: Arr,
    pub w2r: Arr,
    pub b2: Arr,
}

impl ResBlock {
    fn init(d: usize, rng: &mut SeededRng, scale: f64) -> Self {
        let mut m = |r: usize, c: usize| Arr::from_shape_fn((r, c), |_| rng.uniform_range(-scale, scale));
        ResBlock {
            w1l: m(d, d),
            w1c: m(d, d),
            w1r: m(d, d),
            b1: Arr::zeros((1, d)),
            w2l: m(d, d),
            w2c: m(d, d),
            w2r: m(d, d),
            b2: Arr::zeros((1, d)),
        }
    }

    fn tensors(&self) -> Vec<&Arr> {
        vec![
            &self.w1l, &self.w1c, &self.w1r, &self.b1, &self.w2l, &self.w2c, &self.w2r, &self.b2,
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Arr> {
        vec![
            &mut self.w1l, &mut self.w1c, &mut self.w1r, &mut self.b1, &mut self.w2l,
            &mut self.w2c, &mut self.w2r, &mut self.b2,
        ]
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct D1Params {
    pub cfg: D1Config,
    pub w_in: Arr, // V x d
    pub b_in: Arr, // 1 x d
    pub blocks: Vec<ResBlock>,
    pub w_out: Arr, // d x 1
    pub b_out: Arr, // 1 x 1
}

impl D1Params {
    pub fn init(cfg: D1Config, rng: &mut SeededRng) -> Self {
        let s = 0.08;
        let mut m = |r: usize, c: usize| Arr::from_shape_fn((r, c), |_| rng.uniform_range(-s, s));
        let w_in = m(cfg.vocab_size, cfg.hidden);
        let w_out = m(cfg.hidden, 1);
        D1Params {
            cfg,
            w_in,
            b_in: Arr::zeros((1, cfg.hidden)),
            blocks: (0..cfg.blocks)
                .map(|_| ResBlock::init(cfg.hidden, rng, s))
                .collect(),
            w_out,
            b_out: Arr::zeros((1, 1)),
        }
    }

    pub fn tensors(&self) -> Vec<&Arr> {
        let mut v = vec![&self.w_in, &self.b_in];
        for b in &self.blocks {
            v.extend(b.tensors());
        }
        v.push(&self.w_out);
        v.push(&self.b_out);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Arr> {
        let mut v: Vec<&mut Arr> = vec![&mut self.w_in, &mut self.b_in];
        for b in &mut self.blocks {
            v.extend(b.tensors_mut());
        }
        v.push(&mut self.w_out);
        v.push(&mut self.b_out);
        v
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> D1Vars {
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
        D1Vars {
            cfg: self.cfg,
            vars,
        }
    }
}

pub struct D1Vars {
    pub cfg: D1Config,
    pub vars: Vec<Var>,
}

/// `out[t] = x[t+1]`, zero row at the end.
fn shift_up(g: &mut Graph, x: Var) -> Var {
    let (n, _) = g.shape(x);
    if n == 1 {
        let (_, c) = g.shape(x);
        return g.constant(Arr::zeros((1, c)));
    }
    let body = g.slice_rows(x, 1, n);
    g.pad_rows(body, n, 0)
}

/// `out[t] = x[t-1]`, zero row at the start.
fn shift_down(g: &mut Graph, x: Var) -> Var {
    let (n, _) = g.shape(x);
    if n == 1 {
        let (_, c) = g.shape(x);
        return g.constant(Arr::zeros((1, c)));
    }
    let body = g.slice_rows(x, 0, n - 1);
    g.pad_rows(body, n, 1)
}

/// Kernel-3 convolution along time expressed as three shifted matmuls.
fn conv3(g: &mut Graph, x: Var, wl: Var, wc: Var, wr: Var, b: Var) -> Var {
    let (n, _) = g.shape(x);
    let left = shift_down(g, x);
    let right = shift_up(g, x);
    let a = g.matmul(left, wl);
    let c = g.matmul(x, wc);
    let r = g.matmul(right, wr);
    let ac = g.add(a, c);
    let acr = g.add(ac, r);
    let bb = g.repeat_row(b, n);
    g.add(acr, bb)
}

/// Critic score of a sequence of probability rows (N x V) -> scalar.
pub fn d1_score(g: &mut Graph, d1: &D1Vars, rows: Var) -> Result<Var> {
    let vals = g.value(rows);
    if vals.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("discriminator input rows"));
    }
    let (_, v) = g.shape(rows);
    assert_eq!(v, d1.cfg.vocab_size, "input width must match vocabulary");

    let (n, _) = g.shape(rows);
    let w_in = d1.vars[0];
    let b_in = d1.vars[1];
    let proj = g.matmul(rows, w_in);
    let b0 = g.repeat_row(b_in, n);
    let mut h = g.add(proj, b0);

    for blk in 0..d1.cfg.blocks {
        let base = 2 + blk * 8;
        let (w1l, w1c, w1r, b1) = (d1.vars[base], d1.vars[base + 1], d1.vars[base + 2], d1.vars[base + 3]);
        let (w2l, w2c, w2r, b2) = (d1.vars[base + 4], d1.vars[base + 5], d1.vars[base + 6], d1.vars[base + 7]);
        let c1 = conv3(g, h, w1l, w1c, w1r, b1);
        let a1 = g.relu(c1);
        let c2 = conv3(g, a1, w2l, w2c, w2r, b2);
        h = g.add(h, c2);
    }

    // Mean-pool over time, then a linear head.
    let pooled = g.sum_rows(h);
    let pooled = g.scale(pooled, 1.0 / n as f64);
    let w_out = d1.vars[d1.vars.len() - 2];
    let b_out = d1.vars[d1.vars.len() - 1];
    let out = g.affine_row(pooled, w_out, b_out);
    Ok(out)
}

/// One-hot rows for a token sequence; PAD tokens become PAD one-hots.
pub fn one_hot_rows(tokens: &[TokenId], vocab: usize) -> Arr {
    let mut a = Arr::zeros((tokens.len(), vocab));
    for (i, &t) in tokens.iter().enumerate() {
        a[[i, t]] = 1.0;
    }
    a
}

/// Appends all-mass-on-PAD rows until the matrix has `len` rows.
pub fn pad_dist_rows(rows: &Arr, len: usize) -> Arr {
    let (n, v) = rows.dim();
    assert!(len >= n);
    if len == n {
        return rows.clone();
    }
    let mut out = Arr::zeros((len, v));
    out.slice_mut(ndarray::s![..n, ..]).assign(rows);
    for t in n..len {
        out[[t, PAD]] = 1.0;
    }
    out
}

/// Elementwise convex combination `eps * fake + (1 - eps) * real`.
pub fn interpolate(fake: &Arr, real: &Arr, eps: f64) -> Result<Arr> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::OutOfRange {
            what: "interpolation epsilon",
            value: eps,
        });
    }
    assert_eq!(fake.dim(), real.dim(), "interpolate needs equal shapes");
    Ok(fake.mapv(|x| eps * x) + &real.mapv(|x| (1.0 - eps) * x))
}

/// Mean(fake) - mean(real) + beta * mean((norm - 1)^2): the Wasserstein
/// loss assembled from per-example pieces.
pub fn assemble_d_loss(
    fake_scores: &[f64],
    real_scores: &[f64],
    grad_norms: &[f64],
    beta: f64,
) -> f64 {
    let k = fake_scores.len() as f64;
    let fake: f64 = fake_scores.iter().sum::<f64>() / k;
    let real: f64 = real_scores.iter().sum::<f64>() / k;
    let pen: f64 = grad_norms.iter().map(|n| (n - 1.0) * (n - 1.0)).sum::<f64>() / k;
    fake - real + beta * pen
}

/// Everything one critic update needs: the loss value and its parameter
/// gradients (summed over the batch, already divided by K).
pub struct D1LossOutput {
    pub loss: f64,
    pub grads: Vec<Arr>,
    pub fake_mean: f64,
    pub real_mean: f64,
}

/// Wasserstein critic loss with gradient penalty over a batch of fake
/// distribution sequences and real one-hot sequences. Every sequence is
/// padded to the batch's maximum length with PAD rows; epsilon is drawn
/// uniformly per example.
pub fn wgan_d_loss(
    params: &D1Params,
    fake: &[Arr],
    real: &[Arr],
    beta1: f64,
    rng: &mut SeededRng,
) -> Result<D1LossOutput> {
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
        .map(|a| a.dim().0)
        .max()
        .unwrap();
    let inv_k = 1.0 / k as f64;

    // One epsilon per example, drawn before the parallel fan-out so the
    // result does not depend on scheduling.
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
        let d1 = params.bind(&mut g, true);
        let fk = pad_dist_rows(&fake[i], max_len);
        let rl = pad_dist_rows(&real[i], max_len);
        let interp = interpolate(&fk, &rl, eps[i])?;

        let fk_rows = g.constant(fk);
        let rl_rows = g.constant(rl);
        let in_rows = g.param(interp);

        let s_fake = d1_score(&mut g, &d1, fk_rows)?;
        let s_real = d1_score(&mut g, &d1, rl_rows)?;
        let s_interp = d1_score(&mut g, &d1, in_rows)?;

        let gx = g.backward(s_interp, &[in_rows])[0];
        let norm = g.norm2(gx);
        let one = g.scalar(1.0);
        let diff = g.sub(norm, one);
        let pen = g.mul(diff, diff);

        // Per-example loss contribution: (fake - real + beta*pen) / K.
        let neg_real = g.neg(s_real);
        let fr = g.add(s_fake, neg_real);
        let pen_scaled = g.scale(pen, beta1);
        let total = g.add(fr, pen_scaled);
        let total = g.scale(total, inv_k);

        let d1_grads = g.backward(total, &d1.vars);
        Ok(PerExample {
            fake_score: g.scalar_value(s_fake),
            real_score: g.scalar_value(s_real),
            grad_norm: g.scalar_value(norm),
            grads: d1_grads.iter().map(|&v| g.value(v).clone()).collect(),
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

    Ok(D1LossOutput {
        loss: assemble_d_loss(&fake_scores, &real_scores, &norms, beta1),
        grads: grads.unwrap(),
        fake_mean: fake_scores.iter().sum::<f64>() / k as f64,
        real_mean: real_scores.iter().sum::<f64>() / k as f64,
    })
}

/// The generator's adversarial objective `D'_loss = mean_k D1(G(x_k))` as
/// a graph node, built inside the generator's own graph so gradients flow
/// into G through the distribution rows. The critic enters as constants.
pub fn wgan_g_objective(
    g: &mut Graph,
    d1_params: &D1Params,
    fake_rows: &[Var],
) -> Result<Var> {
    assert!(!fake_rows.is_empty());
    let d1 = d1_params.bind(g, false);
    let mut scores = Vec::with_capacity(fake_rows.len());
    for &rows in fake_rows {
        scores.push(d1_score(g, &d1, rows)?);
    }
    let mut acc = scores[0];
    for &s in &scores[1..] {
        acc = g.add(acc, s);
    }
    Ok(g.scale(acc, 1.0 / fake_rows.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ad::{central_diff, rel_error};
    use crate::optim::RmsProp;

    fn tiny(vocab: usize, hidden: usize, seed: u64) -> D1Params {
        D1Params::init(
            D1Config {
                vocab_size: vocab,
                hidden,
                blocks: 2,
            },
            &mut SeededRng::new(seed),
        )
    }

    fn random_rows(n: usize, v: usize, rng: &mut SeededRng) -> Arr {
        let mut a = Arr::from_shape_fn((n, v), |_| rng.uniform() + 0.01);
        for mut row in a.rows_mut() {
            let s: f64 = row.iter().sum();
            row.mapv_inplace(|x| x / s);
        }
        a
    }

    #[test]
    fn assembly_hand_examples() {
        // K=1, D(fake)=0.2, D(real)=0.7, norm 1 -> -0.5 (penalty vanishes).
        assert!((assemble_d_loss(&[0.2], &[0.7], &[1.0], 10.0) - (-0.5)).abs() < 1e-15);
        // norm 2, beta 10 -> -0.5 + 10.
        assert!((assemble_d_loss(&[0.2], &[0.7], &[2.0], 10.0) - 9.5).abs() < 1e-15);
        // Constant critic: zero gap, zero input gradient -> beta.
        assert!((assemble_d_loss(&[0.3], &[0.3], &[0.0], 10.0) - 10.0).abs() < 1e-15);
    }

    #[test]
    fn first_two_terms_antisymmetric_under_swap() {
        let mut rng = SeededRng::new(1);
        let f: Vec<f64> = (0..4).map(|_| rng.uniform()).collect();
        let r: Vec<f64> = (0..4).map(|_| rng.uniform()).collect();
        let a = assemble_d_loss(&f, &r, &[1.0; 4], 10.0);
        let b = assemble_d_loss(&r, &f, &[1.0; 4], 10.0);
        assert!((a + b).abs() < 1e-12);
    }

    #[test]
    fn scores_are_deterministic_and_finite() {
        let p = tiny(8, 10, 2);
        let mut rng = SeededRng::new(3);
        let rows = random_rows(4, 8, &mut rng);
        let score = |rows: &Arr| {
            let mut g = Graph::new();
            let d1 = p.bind(&mut g, false);
            let r = g.constant(rows.clone());
            let s = d1_score(&mut g, &d1, r).unwrap();
            g.scalar_value(s)
        };
        let s1 = score(&rows);
        assert_eq!(s1, score(&rows));
        assert!(s1.is_finite());

        // One-hot real rows are a valid input.
        let oh = one_hot_rows(&[3, 1, 4], 8);
        assert!(score(&oh).is_finite());

        // NaN input is rejected.
        let mut bad = rows.clone();
        bad[[0, 0]] = f64::NAN;
        let mut g = Graph::new();
        let d1 = p.bind(&mut g, false);
        let r = g.constant(bad);
        assert!(matches!(
            d1_score(&mut g, &d1, r),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn interpolation_endpoints_and_midpoint() {
        let fake = Arr::from_shape_vec((1, 2), vec![0.6, 0.4]).unwrap();
        let real = Arr::from_shape_vec((1, 2), vec![1.0, 0.0]).unwrap();
        assert_eq!(interpolate(&fake, &real, 1.0).unwrap(), fake);
        assert_eq!(interpolate(&fake, &real, 0.0).unwrap(), real);
        let mid = interpolate(&fake, &real, 0.5).unwrap();
        assert!((mid[[0, 0]] - 0.8).abs() < 1e-15);
        assert!((mid[[0, 1]] - 0.2).abs() < 1e-15);
        assert!(matches!(
            interpolate(&fake, &real, 1.5),
            Err(Error::OutOfRange { .. })
        ));
        assert!(matches!(
            interpolate(&fake, &real, -0.1),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn interpolated_rows_stay_on_the_simplex() {
        let mut rng = SeededRng::new(4);
        for _ in 0..50 {
            let f = random_rows(3, 6, &mut rng);
            let r = one_hot_rows(&[2, 5, 0], 6);
            let eps = rng.uniform();
            let i = interpolate(&f, &r, eps).unwrap();
            for row in i.rows() {
                let s: f64 = row.iter().sum();
                assert!((s - 1.0).abs() < 1e-12);
                assert!(row.iter().all(|&x| x >= 0.0));
            }
        }
    }

    #[test]
    fn constant_critic_loss_equals_beta() {
        // Zero all weights, keep a bias on the head: D1 is constant, the
        // input gradient is exactly zero, so the loss is beta * (0-1)^2.
        let mut p = tiny(6, 8, 5);
        for t in p.tensors_mut() {
            t.fill(0.0);
        }
        p.b_out[[0, 0]] = 0.37;
        let mut rng = SeededRng::new(6);
        let fake = vec![random_rows(3, 6, &mut rng)];
        let real = vec![one_hot_rows(&[1, 2], 6)];
        let out = wgan_d_loss(&p, &fake, &real, 10.0, &mut rng).unwrap();
        assert!((out.loss - 10.0).abs() < 1e-12);
        assert_eq!(out.fake_mean, 0.37);
        assert_eq!(out.real_mean, 0.37);
    }

    #[test]
    fn batch_size_mismatch_is_an_error() {
        let p = tiny(6, 8, 7);
        let mut rng = SeededRng::new(8);
        let fake = vec![random_rows(2, 6, &mut rng)];
        let e = wgan_d_loss(&p, &fake, &[], 10.0, &mut rng);
        assert!(matches!(e, Err(Error::BatchSizeMismatch { .. })));
    }

    #[test]
    fn score_gradient_wrt_input_matches_finite_differences() {
        let p = tiny(8, 6, 9);
        let mut rng = SeededRng::new(10);
        let rows = random_rows(4, 8, &mut rng);

        let mut g = Graph::new();
        let d1 = p.bind(&mut g, false);
        let rv = g.param(rows.clone());
        let s = d1_score(&mut g, &d1, rv).unwrap();
        let gx = g.backward(s, &[rv])[0];

        let numeric = central_diff(&[rows], 1e-5, |xs| {
            let mut g2 = Graph::new();
            let d1 = p.bind(&mut g2, false);
            let rv = g2.constant(xs[0].clone());
            let s = d1_score(&mut g2, &d1, rv).unwrap();
            g2.scalar_value(s)
        });
        let err = rel_error(g.value(gx), &numeric[0]);
        assert!(err < 1e-4, "rel err {err}");
    }

    #[test]
    fn penalty_parameter_gradient_matches_finite_differences() {
        // Double-backward check: d/dtheta of (||grad_x D(x)|| - 1)^2.
        let p = tiny(6, 5, 11);
        let mut rng = SeededRng::new(12);
        let rows = random_rows(3, 6, &mut rng);

        let penalty_of = |tensors: &[Arr]| -> f64 {
            let mut q = p.clone();
            for (dst, src) in q.tensors_mut().into_iter().zip(tensors) {
                *dst = src.clone();
            }
            let mut g = Graph::new();
            let d1 = q.bind(&mut g, false);
            let rv = g.param(rows.clone());
            let s = d1_score(&mut g, &d1, rv).unwrap();
            let gx = g.backward(s, &[rv])[0];
            let n = g.norm2(gx);
            let one = g.scalar(1.0);
            let d = g.sub(n, one);
            let pen = g.mul(d, d);
            g.scalar_value(pen)
        };

        let mut g = Graph::new();
        let d1 = p.bind(&mut g, true);
        let rv = g.param(rows.clone());
        let s = d1_score(&mut g, &d1, rv).unwrap();
        let gx = g.backward(s, &[rv])[0];
        let n = g.norm2(gx);
        let one = g.scalar(1.0);
        let d = g.sub(n, one);
        let pen = g.mul(d, d);
        let grads = g.backward(pen, &d1.vars);

        let tensors: Vec<Arr> = p.tensors().into_iter().cloned().collect();
        let numeric = central_diff(&tensors, 1e-5, |ts| penalty_of(ts));
        for (k, (gv, nv)) in grads.iter().zip(numeric.iter()).enumerate() {
            let err = rel_error(g.value(*gv), nv);
            assert!(err < 1e-4, "tensor {k}: rel err {err}");
        }
    }

    #[test]
    fn g_objective_is_mean_critic_score() {
        let p = tiny(6, 8, 13);
        let mut rng = SeededRng::new(14);
        let rows = random_rows(3, 6, &mut rng);

        let mut g = Graph::new();
        let rv = g.constant(rows.clone());
        let obj1 = wgan_g_objective(&mut g, &p, &[rv]).unwrap();
        let d1 = p.bind(&mut g, false);
        let s = d1_score(&mut g, &d1, rv).unwrap();
        assert!((g.scalar_value(obj1) - g.scalar_value(s)).abs() < 1e-12);

        // Duplicating the batch leaves the mean unchanged.
        let mut g2 = Graph::new();
        let r1 = g2.constant(rows.clone());
        let r2 = g2.constant(rows.clone());
        let obj2 = wgan_g_objective(&mut g2, &p, &[r1, r2]).unwrap();
        assert!((g.scalar_value(obj1) - g2.scalar_value(obj2)).abs() < 1e-12);
    }

    #[test]
    fn g_objective_gradient_wrt_rows_matches_finite_differences() {
        let p = tiny(7, 5, 15);
        let mut rng = SeededRng::new(16);
        let rows = random_rows(3, 7, &mut rng);

        let mut g = Graph::new();
        let rv = g.param(rows.clone());
        let obj = wgan_g_objective(&mut g, &p, &[rv]).unwrap();
        let gx = g.backward(obj, &[rv])[0];

        let numeric = central_diff(&[rows], 1e-5, |xs| {
            let mut g2 = Graph::new();
            let rv = g2.constant(xs[0].clone());
            let obj = wgan_g_objective(&mut g2, &p, &[rv]).unwrap();
            g2.scalar_value(obj)
        });
        let err = rel_error(g.value(gx), &numeric[0]);
        assert!(err < 1e-4, "rel err {err}");
    }

    #[test]
    fn critic_separates_uniform_fake_from_one_hot_real() {
        // Training D1 alone on separable toy data drives the
        // fake-minus-real gap below -1 within 500 updates.
        let vocab = 8;
        let mut p = tiny(vocab, 12, 17);
        let mut rng = SeededRng::new(18);
        let mut opt = RmsProp::new(1e-2);
        let mut gap = 0.0;
        for _ in 0..500 {
            let fake: Vec<Arr> = (0..4).map(|_| Arr::from_elem((3, vocab), 1.0 / vocab as f64)).collect();
            let real: Vec<Arr> = (0..4)
                .map(|_| one_hot_rows(&[rng.below(vocab), rng.below(vocab), rng.below(vocab)], vocab))
                .collect();
            let out = wgan_d_loss(&p, &fake, &real, 10.0, &mut rng).unwrap();
            let mut tensors = p.tensors_mut();
            opt.step(&mut tensors, &out.grads);
            gap = out.fake_mean - out.real_mean;
            if gap < -1.0 {
                return;
            }
        }
        panic!("critic failed to separate: gap {gap}");
    }
}
