//! Joint adversarial training.
//!
//! Each update runs `d_steps_per_g` discriminator steps followed by one
//! generator step minimizing `G_loss = alpha * R_loss - D'_loss`: the
//! reconstruction term enters through a REINFORCE surrogate with the
//! self-critical reward, the adversarial term is the critic score of the
//! output distributions (wgan mode, differentiable path) or the
//! discounted-return surrogate (adv-reinforce mode). The reconstructor
//! takes its own step on the same samples. Runs are bit-reproducible
//! under a fixed seed, including across checkpoint save/load.

use crate::ad::{Arr, Graph};
use crate::advrl::{self, D2Config, D2Params};
use crate::checkpoint;
use crate::corpus::{Batch, BatchSampler, Document, RealSummaryPool, TokenId, Vocabulary, BOS, EOS};
use crate::error::{Error, Result};
use crate::optim::RmsProp;
use crate::par;
use crate::recon::{reconstruct_loss, reinforce_surrogate, BaselineSchedule};
use crate::rng::SeededRng;
use crate::seq2seq::{
    decode_sample, encode, sequence_nll, teacher_forced_dists, PgenMode, Seq2SeqConfig,
    Seq2SeqParams,
};
use crate::wgan::{self, d1_score, one_hot_rows, D1Config, D1Params};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;

/// Which adversarial method trains the generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Wgan,
    AdvReinforce,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Wgan => write!(f, "wgan"),
            Mode::AdvReinforce => write!(f, "reinforce"),
        }
    }
}

/// Critic regularization: the gradient penalty (default) or weight
/// clipping at the given bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ClipMode {
    Penalty,
    WeightClip(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: Mode,
    /// Weight of the reconstruction term in the generator loss.
    pub alpha: f64,
    /// Gradient-penalty weight for the distribution critic.
    pub beta1: f64,
    /// Gradient-penalty weight for the recurrent critic.
    pub beta2: f64,
    /// Discount for per-step adversarial rewards.
    pub gamma: f64,
    pub g_lr: f64,
    pub d_lr: f64,
    pub baseline: BaselineSchedule,
    pub teacher_force_period: Option<usize>,
    pub d_steps_per_g: usize,
    pub max_updates: usize,
    pub seed: u64,
    pub batch_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub d1_hidden: usize,
    pub d1_blocks: usize,
    pub d2_embed_dim: usize,
    pub d2_hidden: usize,
    /// Decode cap for generated summaries.
    pub max_sum_len: usize,
    pub clip_mode: ClipMode,
}

impl Default for TrainConfig {
    /// Published defaults. Alpha too large pushes output away from
    /// human-written text; too small unmoors it from the input.
    fn default() -> Self {
        TrainConfig {
            mode: Mode::Wgan,
            alpha: 25.0,
            beta1: 10.0,
            beta2: 1.0,
            gamma: 0.9,
            g_lr: 1e-5,
            d_lr: 1e-3,
            baseline: BaselineSchedule::default(),
            teacher_force_period: None,
            d_steps_per_g: 1,
            max_updates: 0,
            seed: 0,
            batch_size: 32,
            embed_dim: 128,
            hidden_dim: 600,
            d1_hidden: 512,
            d1_blocks: 4,
            d2_embed_dim: 128,
            d2_hidden: 512,
            max_sum_len: 20,
            clip_mode: ClipMode::Penalty,
        }
    }
}

impl TrainConfig {
    /// Transfer learning doubles the reconstruction weight to keep the
    /// generator from overfitting the source-domain summary style.
    pub fn transfer() -> Self {
        TrainConfig {
            alpha: 50.0,
            ..TrainConfig::default()
        }
    }

    /// Parses a flat `key=value` config file. Unknown keys are rejected.
    pub fn from_key_values(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value, got {raw:?}", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            let bad = |what: &str| Error::Config(format!("line {}: bad {what}: {value:?}", lineno + 1));
            match key {
                "mode" => {
                    cfg.mode = match value {
                        "wgan" => Mode::Wgan,
                        "reinforce" => Mode::AdvReinforce,
                        _ => return Err(bad("mode")),
                    }
                }
                "alpha" => cfg.alpha = value.parse().map_err(|_| bad("alpha"))?,
                "beta1" => cfg.beta1 = value.parse().map_err(|_| bad("beta1"))?,
                "beta2" => cfg.beta2 = value.parse().map_err(|_| bad("beta2"))?,
                "gamma" => cfg.gamma = value.parse().map_err(|_| bad("gamma"))?,
                "g_lr" => cfg.g_lr = value.parse().map_err(|_| bad("g_lr"))?,
                "d_lr" => cfg.d_lr = value.parse().map_err(|_| bad("d_lr"))?,
                "baseline_b0" => cfg.baseline.b0 = value.parse().map_err(|_| bad("baseline_b0"))?,
                "baseline_horizon" => {
                    cfg.baseline.horizon = value.parse().map_err(|_| bad("baseline_horizon"))?
                }
                "teacher_force_period" => {
                    cfg.teacher_force_period = if value == "none" {
                        None
                    } else {
                        Some(value.parse().map_err(|_| bad("teacher_force_period"))?)
                    }
                }
                "d_steps_per_g" => {
                    cfg.d_steps_per_g = value.parse().map_err(|_| bad("d_steps_per_g"))?
                }
                "max_updates" => cfg.max_updates = value.parse().map_err(|_| bad("max_updates"))?,
                "seed" => cfg.seed = value.parse().map_err(|_| bad("seed"))?,
                "batch_size" => cfg.batch_size = value.parse().map_err(|_| bad("batch_size"))?,
                "embed_dim" => cfg.embed_dim = value.parse().map_err(|_| bad("embed_dim"))?,
                "hidden_dim" => cfg.hidden_dim = value.parse().map_err(|_| bad("hidden_dim"))?,
                "d1_hidden" => cfg.d1_hidden = value.parse().map_err(|_| bad("d1_hidden"))?,
                "d1_blocks" => cfg.d1_blocks = value.parse().map_err(|_| bad("d1_blocks"))?,
                "d2_embed_dim" => {
                    cfg.d2_embed_dim = value.parse().map_err(|_| bad("d2_embed_dim"))?
                }
                "d2_hidden" => cfg.d2_hidden = value.parse().map_err(|_| bad("d2_hidden"))?,
                "max_sum_len" => cfg.max_sum_len = value.parse().map_err(|_| bad("max_sum_len"))?,
                "clip_mode" => {
                    cfg.clip_mode = if value == "penalty" {
                        ClipMode::Penalty
                    } else if let Some(c) = value.strip_prefix("weight-clip:") {
                        ClipMode::WeightClip(c.parse().map_err(|_| bad("clip bound"))?)
                    } else {
                        return Err(bad("clip_mode"));
                    }
                }
                other => {
                    return Err(Error::Config(format!(
                        "line {}: unknown key {other:?}",
                        lineno + 1
                    )))
                }
            }
        }
        if cfg.alpha <= 0.0 {
            return Err(Error::Config("alpha must be > 0".into()));
        }
        if cfg.g_lr <= 0.0 || cfg.d_lr <= 0.0 {
            return Err(Error::Config("learning rates must be > 0".into()));
        }
        if cfg.teacher_force_period == Some(0) {
            return Err(Error::Config("teacher_force_period must be >= 1".into()));
        }
        Ok(cfg)
    }

    /// Serializes back to the `key=value` format accepted by
    /// [`TrainConfig::from_key_values`].
    pub fn to_key_values(&self) -> String {
        let tf = match self.teacher_force_period {
            None => "none".to_string(),
            Some(p) => p.to_string(),
        };
        let clip = match self.clip_mode {
            ClipMode::Penalty => "penalty".to_string(),
            ClipMode::WeightClip(c) => format!("weight-clip:{c}"),
        };
        format!(
            "mode={}\nalpha={}\nbeta1={}\nbeta2={}\ngamma={}\ng_lr={}\nd_lr={}\n\
             baseline_b0={}\nbaseline_horizon={}\nteacher_force_period={tf}\n\
             d_steps_per_g={}\nmax_updates={}\nseed={}\nbatch_size={}\nembed_dim={}\n\
             hidden_dim={}\nd1_hidden={}\nd1_blocks={}\nd2_embed_dim={}\nd2_hidden={}\n\
             max_sum_len={}\nclip_mode={clip}\n",
            self.mode,
            self.alpha,
            self.beta1,
            self.beta2,
            self.gamma,
            self.g_lr,
            self.d_lr,
            self.baseline.b0,
            self.baseline.horizon,
            self.d_steps_per_g,
            self.max_updates,
            self.seed,
            self.batch_size,
            self.embed_dim,
            self.hidden_dim,
            self.d1_hidden,
            self.d1_blocks,
            self.d2_embed_dim,
            self.d2_hidden,
            self.max_sum_len,
        )
    }
}

/// Teacher-forcing cadence by labeled-data size: every 25 unpaired updates
/// at 10K pairs, every 5 at 500K, every 3 at 1M.
pub fn teacher_force_period(labeled_size: usize) -> usize {
    if labeled_size >= 1_000_000 {
        3
    } else if labeled_size >= 500_000 {
        5
    } else {
        25
    }
}

/// One metrics-log record per generator update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub t: usize,
    pub r_loss: f64,
    pub d_loss: f64,
    pub adv: f64,
    pub reward_mean: f64,
    pub baseline: f64,
}

impl fmt::Display for MetricRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "t={} r_loss={} d_loss={} adv={} reward_mean={} b={}",
            self.t, self.r_loss, self.d_loss, self.adv, self.reward_mean, self.baseline
        )
    }
}

/// Everything a run needs to resume exactly: parameters, optimizer
/// moments, the batch sampler, the RNG, and the metric log.
#[derive(Clone, Serialize, Deserialize)]
pub struct TrainState {
    pub t: usize,
    pub tf_steps: usize,
    pub config: TrainConfig,
    pub vocab: Vocabulary,
    pub generator: Seq2SeqParams,
    pub reconstructor: Seq2SeqParams,
    pub d1: D1Params,
    pub d2: D2Params,
    pub opt_g: RmsProp,
    pub opt_r: RmsProp,
    pub opt_d: RmsProp,
    pub sampler: BatchSampler,
    pub rng: SeededRng,
    pub metrics: Vec<MetricRecord>,
}

impl TrainState {
    pub fn new(
        config: TrainConfig,
        vocab: Vocabulary,
        num_docs: usize,
        num_summaries: usize,
    ) -> Result<Self> {
        let mut rng = SeededRng::new(config.seed);
        let v = vocab.size();
        let s2s = Seq2SeqConfig {
            vocab_size: v,
            embed_dim: config.embed_dim,
            hidden_dim: config.hidden_dim,
        };
        let generator = Seq2SeqParams::init(s2s, &mut rng);
        let reconstructor = Seq2SeqParams::init(s2s, &mut rng);
        let d1 = D1Params::init(
            D1Config {
                vocab_size: v,
                hidden: config.d1_hidden,
                blocks: config.d1_blocks,
            },
            &mut rng,
        );
        let d2 = D2Params::init(
            D2Config {
                vocab_size: v,
                embed_dim: config.d2_embed_dim,
                hidden: config.d2_hidden,
            },
            &mut rng,
        );
        let sampler = BatchSampler::new(num_docs, num_summaries, rng.next_u64())?;
        Ok(TrainState {
            t: 0,
            tf_steps: 0,
            opt_g: RmsProp::new(config.g_lr),
            // The reconstructor is a critic of the generator; it keeps the
            // discriminator learning rate.
            opt_r: RmsProp::new(config.d_lr),
            opt_d: RmsProp::new(config.d_lr),
            config,
            vocab,
            generator,
            reconstructor,
            d1,
            d2,
            sampler,
            rng,
            metrics: Vec::new(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(path, self.vocab.hash(), self)
    }

    pub fn load(path: &Path, expected_vocab_hash: Option<u64>) -> Result<Self> {
        let (_, mut state): (u64, TrainState) = checkpoint::load(path, expected_vocab_hash)?;
        state.vocab.rebuild_index();
        Ok(state)
    }
}

/// Per-example terms of one generator step, kept for tests and metrics.
pub struct GStepTerms {
    pub objective: f64,
    pub recon_surrogate: f64,
    pub adv_term: f64,
    pub l_s: f64,
    pub l_a: f64,
    pub reward: f64,
}

pub struct GUpdateStats {
    pub terms: Vec<GStepTerms>,
    pub r_loss_mean: f64,
    pub adv_mean: f64,
    pub reward_mean: f64,
    pub baseline: f64,
}

pub struct Trainer<'a> {
    pub state: TrainState,
    pub docs: &'a [Document],
    pub pool: &'a RealSummaryPool,
    pub paired: Option<&'a [(Document, Vec<TokenId>)]>,
}

impl<'a> Trainer<'a> {
    pub fn new(
        state: TrainState,
        docs: &'a [Document],
        pool: &'a RealSummaryPool,
        paired: Option<&'a [(Document, Vec<TokenId>)]>,
    ) -> Self {
        Trainer {
            state,
            docs,
            pool,
            paired,
        }
    }

    fn next_batch(&mut self) -> Result<Batch> {
        let (batch, _) = self
            .state
            .sampler
            .next_batch(self.docs, self.pool, self.state.config.batch_size)?;
        Ok(batch)
    }

    /// One optimizer step on G (and, on the same samples, one on R).
    pub fn g_update(&mut self, batch: &Batch) -> Result<GUpdateStats> {
        let cfg = self.state.config.clone();
        let k = batch.size();
        let inv_k = 1.0 / k as f64;
        let b = cfg.baseline.value(self.state.t);
        let rngs: Vec<SeededRng> = (0..k).map(|_| self.state.rng.split()).collect();

        struct PerExample {
            g_grads: Vec<Arr>,
            r_grads: Vec<Arr>,
            terms: GStepTerms,
        }

        let generator = &self.state.generator;
        let reconstructor = &self.state.reconstructor;
        let d1 = &self.state.d1;
        let d2 = &self.state.d2;

        let items: Vec<usize> = (0..k).collect();
        let per: Vec<Result<PerExample>> = par::map_batch(&items, |&i| {
            let mut rng = rngs[i].clone();
            let doc = batch.doc(i);
            let mut g = Graph::new();
            let gen = generator.bind(&mut g, true);
            let rec = reconstructor.bind(&mut g, true);
            let rec_frozen = reconstructor.bind(&mut g, false);

            let enc = encode(&mut g, &gen, doc)?;
            let out = decode_sample(
                &mut g,
                &gen,
                &enc,
                cfg.max_sum_len,
                BOS,
                Some(EOS),
                PgenMode::Learned,
                &mut rng,
            );

            let l_s_var = reconstruct_loss(&mut g, &rec, &out.sampled, doc, BOS)?;
            let l_a_var = reconstruct_loss(&mut g, &rec_frozen, &out.greedy, doc, BOS)?;
            let l_s = g.scalar_value(l_s_var);
            let l_a = g.scalar_value(l_a_var);
            let reward = crate::recon::reconstruction_reward(l_s, l_a, b);

            let recon_surr = reinforce_surrogate(&mut g, &out.log_probs, reward);

            let adv_term_var = match cfg.mode {
                Mode::Wgan => {
                    let rows = g.concat_rows(&out.dists);
                    let d1v = d1.bind(&mut g, false);
                    let score = d1_score(&mut g, &d1v, rows)?;
                    g.neg(score)
                }
                Mode::AdvReinforce => {
                    let d2v = d2.bind(&mut g, false);
                    let score_vars = advrl::d2_scores(&mut g, &d2v, &out.sampled)?;
                    let svals: Vec<f64> =
                        score_vars.iter().map(|&s| g.scalar_value(s)).collect();
                    let rewards = advrl::stepwise_rewards(&svals);
                    let returns = advrl::discount(&rewards, cfg.gamma)?;
                    advrl::reinforce_surrogate_returns(&mut g, &out.log_probs, &returns)
                }
            };

            let scaled_recon = g.scale(recon_surr, cfg.alpha);
            let objective = g.add(scaled_recon, adv_term_var);
            let objective_k = g.scale(objective, inv_k);

            let obj_val = g.scalar_value(objective);
            if !obj_val.is_finite() || !l_s.is_finite() || !l_a.is_finite() {
                return Err(Error::NonFinite("generator objective"));
            }

            let g_grads = g.backward(objective_k, &gen.vars);
            let l_s_k = g.scale(l_s_var, inv_k);
            let r_grads = g.backward(l_s_k, &rec.vars);

            Ok(PerExample {
                g_grads: g_grads.iter().map(|&v| g.value(v).clone()).collect(),
                r_grads: r_grads.iter().map(|&v| g.value(v).clone()).collect(),
                terms: GStepTerms {
                    objective: obj_val,
                    recon_surrogate: g.scalar_value(recon_surr),
                    adv_term: g.scalar_value(adv_term_var),
                    l_s,
                    l_a,
                    reward,
                },
            })
        });

        let mut g_sum: Option<Vec<Arr>> = None;
        let mut r_sum: Option<Vec<Arr>> = None;
        let mut terms = Vec::with_capacity(k);
        for r in per {
            let e = r?;
            terms.push(e.terms);
            let fold = |acc: Option<Vec<Arr>>, inc: Vec<Arr>| -> Option<Vec<Arr>> {
                Some(match acc {
                    None => inc,
                    Some(mut a) => {
                        for (x, y) in a.iter_mut().zip(&inc) {
                            *x += y;
                        }
                        a
                    }
                })
            };
            g_sum = fold(g_sum, e.g_grads);
            r_sum = fold(r_sum, e.r_grads);
        }

        let g_grads = g_sum.unwrap();
        let r_grads = r_sum.unwrap();
        {
            let mut tensors = self.state.generator.tensors_mut();
            self.state.opt_g.step(&mut tensors, &g_grads);
        }
        {
            let mut tensors = self.state.reconstructor.tensors_mut();
            self.state.opt_r.step(&mut tensors, &r_grads);
        }

        let r_loss_mean = terms.iter().map(|t| t.l_s).sum::<f64>() * inv_k;
        let adv_mean = match cfg.mode {
            Mode::Wgan => terms.iter().map(|t| -t.adv_term).sum::<f64>() * inv_k,
            Mode::AdvReinforce => terms.iter().map(|t| t.adv_term).sum::<f64>() * inv_k,
        };
        let reward_mean = terms.iter().map(|t| t.reward).sum::<f64>() * inv_k;
        Ok(GUpdateStats {
            terms,
            r_loss_mean,
            adv_mean,
            reward_mean,
            baseline: b,
        })
    }

    /// One optimizer step on the active discriminator.
    pub fn d_update(&mut self, batch: &Batch) -> Result<f64> {
        let cfg = self.state.config.clone();
        let k = batch.size();
        let rngs: Vec<SeededRng> = (0..k).map(|_| self.state.rng.split()).collect();
        let generator = &self.state.generator;

        // Fresh frozen-generator samples for the fake side.
        struct Fake {
            tokens: Vec<TokenId>,
            rows: Arr,
        }
        let items: Vec<usize> = (0..k).collect();
        let fakes: Vec<Result<Fake>> = par::map_batch(&items, |&i| {
            let mut rng = rngs[i].clone();
            let mut g = Graph::new();
            let gen = generator.bind(&mut g, false);
            let enc = encode(&mut g, &gen, batch.doc(i))?;
            let out = decode_sample(
                &mut g,
                &gen,
                &enc,
                cfg.max_sum_len,
                BOS,
                Some(EOS),
                PgenMode::Learned,
                &mut rng,
            );
            let mut rows = Arr::zeros((out.dists.len(), generator.cfg.vocab_size));
            for (t, &d) in out.dists.iter().enumerate() {
                rows.row_mut(t).assign(&g.value(d).row(0));
            }
            Ok(Fake {
                tokens: out.sampled,
                rows,
            })
        });
        let fakes: Vec<Fake> = fakes.into_iter().collect::<Result<_>>()?;

        let beta = match (cfg.clip_mode, cfg.mode) {
            (ClipMode::WeightClip(_), _) => 0.0,
            (ClipMode::Penalty, Mode::Wgan) => cfg.beta1,
            (ClipMode::Penalty, Mode::AdvReinforce) => cfg.beta2,
        };

        // Generated sequences end with an EOS step, so real summaries get
        // one appended before the critic sees them; otherwise the critic
        // separates on termination alone.
        let real_with_eos = |i: usize| -> Vec<TokenId> {
            let mut v = batch.summary(i).to_vec();
            v.push(EOS);
            v
        };

        let loss = match cfg.mode {
            Mode::Wgan => {
                let fake_rows: Vec<Arr> = fakes.iter().map(|f| f.rows.clone()).collect();
                let real_rows: Vec<Arr> = (0..k)
                    .map(|i| one_hot_rows(&real_with_eos(i), self.state.vocab.size()))
                    .collect();
                let out =
                    wgan::wgan_d_loss(&self.state.d1, &fake_rows, &real_rows, beta, &mut self.state.rng)?;
                let mut tensors = self.state.d1.tensors_mut();
                self.state.opt_d.step(&mut tensors, &out.grads);
                out.loss
            }
            Mode::AdvReinforce => {
                let fake_tokens: Vec<Vec<TokenId>> =
                    fakes.iter().map(|f| f.tokens.clone()).collect();
                let real_tokens: Vec<Vec<TokenId>> = (0..k).map(real_with_eos).collect();
                let out = advrl::d2_loss(
                    &self.state.d2,
                    &fake_tokens,
                    &real_tokens,
                    beta,
                    &mut self.state.rng,
                )?;
                let mut tensors = self.state.d2.tensors_mut();
                self.state.opt_d.step(&mut tensors, &out.grads);
                out.loss
            }
        };
        if let ClipMode::WeightClip(c) = cfg.clip_mode {
            match cfg.mode {
                Mode::Wgan => {
                    for t in self.state.d1.tensors_mut() {
                        t.mapv_inplace(|x| x.clamp(-c, c));
                    }
                }
                Mode::AdvReinforce => advrl::clip_weights(&mut self.state.d2, c),
            }
        }
        if !loss.is_finite() {
            return Err(Error::NonFinite("discriminator loss"));
        }
        Ok(loss)
    }

    /// Supervised teacher-forcing step on labeled pairs.
    pub fn teacher_force_step(&mut self, pairs: &[(Document, Vec<TokenId>)]) -> Result<f64> {
        assert!(!pairs.is_empty());
        let cfg = &self.state.config;
        let k = cfg.batch_size.min(pairs.len());
        let idx: Vec<usize> = (0..k).map(|_| self.state.rng.below(pairs.len())).collect();
        let inv_k = 1.0 / k as f64;
        let generator = &self.state.generator;

        let results: Vec<Result<(f64, Vec<Arr>)>> = par::map_batch(&idx, |&i| {
            let (doc, summary) = &pairs[i];
            let mut g = Graph::new();
            let gen = generator.bind(&mut g, true);
            let enc = encode(&mut g, &gen, &doc.tokens)?;
            let mut targets = summary.clone();
            targets.push(EOS);
            let dists = teacher_forced_dists(&mut g, &gen, &enc, &targets, BOS, PgenMode::Learned);
            let nll = sequence_nll(&mut g, &dists, &targets);
            let scaled = g.scale(nll, inv_k);
            let grads = g.backward(scaled, &gen.vars);
            Ok((
                g.scalar_value(nll),
                grads.iter().map(|&v| g.value(v).clone()).collect(),
            ))
        });

        let mut total = 0.0;
        let mut sum: Option<Vec<Arr>> = None;
        for r in results {
            let (loss, gv) = r?;
            total += loss;
            sum = Some(match sum {
                None => gv,
                Some(mut a) => {
                    for (x, y) in a.iter_mut().zip(&gv) {
                        *x += y;
                    }
                    a
                }
            });
        }
        let grads = sum.unwrap();
        let mut tensors = self.state.generator.tensors_mut();
        self.state.opt_g.step(&mut tensors, &grads);
        self.state.tf_steps += 1;
        Ok(total * inv_k)
    }

    /// Runs `n` updates: `d_steps_per_g` discriminator steps, one
    /// generator step, then teacher forcing every `period` updates when
    /// labeled pairs are present.
    pub fn run_n(&mut self, n: usize) -> Result<()> {
        for _ in 0..n {
            let mut d_loss = 0.0;
            for _ in 0..self.state.config.d_steps_per_g {
                let batch = self.next_batch()?;
                d_loss = self.d_update(&batch)?;
            }
            let batch = self.next_batch()?;
            let stats = self.g_update(&batch)?;
            self.state.t += 1;

            if let (Some(period), Some(pairs)) = (self.state.config.teacher_force_period, self.paired)
            {
                if self.state.t % period == 0 && !pairs.is_empty() {
                    self.teacher_force_step(pairs)?;
                }
            }

            self.state.metrics.push(MetricRecord {
                t: self.state.t,
                r_loss: stats.r_loss_mean,
                d_loss,
                adv: stats.adv_mean,
                reward_mean: stats.reward_mean,
                baseline: stats.baseline,
            });
        }
        Ok(())
    }

    /// Runs until `max_updates`.
    pub fn run(&mut self) -> Result<()> {
        let remaining = self.state.config.max_updates.saturating_sub(self.state.t);
        self.run_n(remaining)
    }
}
