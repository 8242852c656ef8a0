use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use precis::ad::Graph;
use precis::beam::{beam_search, RepetitionFilter};
use precis::corpus::{
    self, build_vocabulary, load_documents, Document, Language, Provenance, RealSummaryPool,
    TokenId, Vocabulary, BOS, EOS, NUM_SPECIALS,
};
use precis::pretrain::{self, PretrainPair, Recipe};
use precis::rouge::{evaluate_corpus, lead_k, Interner};
use precis::seq2seq::{encode, PgenMode, Seq2SeqStepper};
use precis::trainer::{Mode, TrainConfig, TrainState, Trainer};
use precis::SeededRng;
use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "precis",
    about = "Unpaired abstractive summarization: train, summarize, evaluate"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Wgan,
    Reinforce,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Wgan => Mode::Wgan,
            ModeArg::Reinforce => Mode::AdvReinforce,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum RecipeArg {
    Shuffle,
    NextSentences,
    Transfer,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Generator,
    Reconstructor,
    Discriminator,
}

#[derive(Subcommand)]
enum Command {
    /// Build a vocabulary file from a corpus (most frequent tokens).
    BuildVocab(BuildVocabArgs),
    /// Emit self-supervised pre-training pairs (input TAB target).
    MakePretrainPairs(MakePairsArgs),
    /// Pre-train one component into a checkpoint.
    Pretrain(PretrainArgs),
    /// Joint adversarial training.
    Train(TrainArgs),
    /// Beam-search summaries for each input line.
    Summarize(SummarizeArgs),
    /// ROUGE-1/2/L F1 of candidates against references.
    Evaluate(EvaluateArgs),
    /// Lead-k baseline summaries.
    Baseline(BaselineArgs),
}

#[derive(Args)]
struct BuildVocabArgs {
    #[arg(long)]
    articles: PathBuf,
    /// Optional second corpus (e.g. the real-summary pool) counted too.
    #[arg(long)]
    summaries: Option<PathBuf>,
    #[arg(long, default_value_t = 15_000)]
    vocab_size: usize,
    /// Character-level tokenization.
    #[arg(long)]
    chinese: bool,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct MakePairsArgs {
    #[arg(long)]
    recipe: RecipeArg,
    #[arg(long)]
    articles: PathBuf,
    /// Aligned summaries file (transfer recipe only).
    #[arg(long)]
    summaries: Option<PathBuf>,
    /// Sentences to predict (next-sentences recipe).
    #[arg(long, default_value_t = 4)]
    k: usize,
    #[arg(long)]
    chinese: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct PretrainArgs {
    #[arg(long)]
    model: ModelArg,
    /// Flat key=value training config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Existing checkpoint to continue from (required for
    /// reconstructor/discriminator, optional for generator).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Vocabulary file (generator from scratch).
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Pairs file from make-pretrain-pairs (generator).
    #[arg(long)]
    pairs: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    /// Articles corpus (reconstructor/discriminator).
    #[arg(long)]
    articles: Option<PathBuf>,
    /// Real-summary pool (discriminator).
    #[arg(long)]
    summaries: Option<PathBuf>,
    #[arg(long, default_value_t = 300)]
    updates: usize,
    #[arg(long, default_value_t = 250)]
    max_src_len: usize,
    #[arg(long)]
    chinese: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    mode: ModeArg,
    /// Flat key=value training config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    articles: PathBuf,
    /// Same-domain real-summary pool.
    #[arg(long)]
    summaries: Option<PathBuf>,
    /// Source-domain summaries (transfer learning; implies alpha=50
    /// unless the config file overrides it).
    #[arg(long)]
    transfer_summaries: Option<PathBuf>,
    /// Aligned labeled pair of files for semi-supervised teacher forcing:
    /// --paired articles.txt summaries.txt
    #[arg(long, num_args = 2, value_names = ["ARTICLES", "SUMMARIES"])]
    paired: Option<Vec<PathBuf>>,
    /// Teacher-forcing period; defaults to the labeled-size schedule.
    #[arg(long)]
    tf_period: Option<usize>,
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Pre-trained checkpoint to start from.
    #[arg(long)]
    init: Option<PathBuf>,
    /// Run built-in pre-training (shuffle recipe + critics) first.
    #[arg(long)]
    pretrain: bool,
    #[arg(long, default_value_t = 10)]
    pretrain_epochs: usize,
    #[arg(long, default_value_t = 300)]
    pretrain_updates: usize,
    #[arg(long, default_value_t = 250)]
    max_src_len: usize,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    chinese: bool,
    #[arg(long, default_value_t = 500)]
    checkpoint_every: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SummarizeArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 5)]
    beam: usize,
    /// Decode cap; defaults to the checkpoint's configured value.
    #[arg(long)]
    max_len: Option<usize>,
    /// Vocabulary file to verify the checkpoint against.
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long, default_value_t = 250)]
    max_src_len: usize,
    #[arg(long)]
    chinese: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    candidates: PathBuf,
    #[arg(long)]
    references: PathBuf,
    /// English suffix stemming before matching.
    #[arg(long)]
    stem: bool,
    /// Write per-document records (index r1 r2 rl) to this file.
    #[arg(long)]
    per_doc: Option<PathBuf>,
}

#[derive(Args)]
struct BaselineArgs {
    /// Take the first k tokens of each article.
    #[arg(long)]
    lead: usize,
    #[arg(long)]
    articles: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

fn lang_of(chinese: bool) -> Language {
    if chinese {
        Language::Chinese
    } else {
        Language::English
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text.lines().map(str::to_owned).collect())
}

fn load_config(path: &Option<PathBuf>, base: TrainConfig) -> Result<TrainConfig> {
    match path {
        None => Ok(base),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(TrainConfig::from_key_values_over(&text, base)?)
        }
    }
}

fn cmd_build_vocab(a: BuildVocabArgs) -> Result<()> {
    let lang = lang_of(a.chinese);
    let mut lines = read_lines(&a.articles)?;
    if let Some(s) = &a.summaries {
        lines.extend(read_lines(s)?);
    }
    let vocab =
        corpus::build_vocabulary_from_lines(lines.iter().map(String::as_str), a.vocab_size, lang)?;
    vocab.save(&a.output)?;
    println!(
        "vocabulary: {} tokens (incl. {} specials) -> {}",
        vocab.size(),
        NUM_SPECIALS,
        a.output.display()
    );
    Ok(())
}

/// Interns one document's tokens so the id-based recipes can run without a
/// global vocabulary; pair files stay plain text.
struct LocalIds {
    ids: HashMap<String, TokenId>,
    tokens: Vec<String>,
}

impl LocalIds {
    fn new() -> Self {
        LocalIds {
            ids: HashMap::new(),
            tokens: Vec::new(),
        }
    }

    fn encode(&mut self, words: &[String]) -> Vec<TokenId> {
        words
            .iter()
            .map(|w| {
                if let Some(&id) = self.ids.get(w) {
                    id
                } else {
                    // Offset past the reserved specials so Document
                    // invariants hold.
                    let id = self.tokens.len() + NUM_SPECIALS;
                    self.ids.insert(w.clone(), id);
                    self.tokens.push(w.clone());
                    id
                }
            })
            .collect()
    }

    fn decode(&self, ids: &[TokenId]) -> String {
        ids.iter()
            .map(|&i| self.tokens[i - NUM_SPECIALS].as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Splits a token sequence into sentences at terminal-punctuation tokens
/// (the delimiter stays with its sentence).
fn split_sentences(words: &[String]) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    for w in words {
        cur.push(w.clone());
        if matches!(w.as_str(), "." | "!" | "?" | "。" | "！" | "？") {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn cmd_make_pairs(a: MakePairsArgs) -> Result<()> {
    let lang = lang_of(a.chinese);
    let articles = read_lines(&a.articles)?;
    let mut rng = SeededRng::new(a.seed);
    let mut out = fs::File::create(&a.output)?;
    let mut written = 0usize;
    let mut skipped = 0usize;

    match a.recipe {
        RecipeArg::Shuffle => {
            for line in &articles {
                let words = lang.tokenize(line);
                if words.is_empty() {
                    continue;
                }
                let mut ids = LocalIds::new();
                let doc = Document::new(ids.encode(&words));
                match pretrain::make_shuffle_pair(&doc, &mut rng) {
                    Some(p) => {
                        writeln!(out, "{}\t{}", ids.decode(&p.input), ids.decode(&p.target))?;
                        written += 1;
                    }
                    None => skipped += 1,
                }
            }
        }
        RecipeArg::NextSentences => {
            for line in &articles {
                let words = lang.tokenize(line);
                let sentences = split_sentences(&words);
                if sentences.len() < 2 {
                    skipped += 1;
                    continue;
                }
                let mut ids = LocalIds::new();
                let sent_ids: Vec<Vec<TokenId>> =
                    sentences.iter().map(|s| ids.encode(s)).collect();
                for i in 1..sent_ids.len() {
                    if i + a.k > sent_ids.len() {
                        break;
                    }
                    match pretrain::make_next_sentences_pair(&sent_ids, i, a.k)? {
                        Some(p) => {
                            writeln!(out, "{}\t{}", ids.decode(&p.input), ids.decode(&p.target))?;
                            written += 1;
                        }
                        None => skipped += 1,
                    }
                }
            }
        }
        RecipeArg::Transfer => {
            let spath = a
                .summaries
                .ok_or_else(|| anyhow!("--summaries is required for the transfer recipe"))?;
            let summaries = read_lines(&spath)?;
            if summaries.len() != articles.len() {
                bail!(
                    "aligned files differ: {} articles vs {} summaries",
                    articles.len(),
                    summaries.len()
                );
            }
            for (art, sum) in articles.iter().zip(&summaries) {
                let words = lang.tokenize(art);
                if words.is_empty() {
                    skipped += 1;
                    continue;
                }
                let mut ids = LocalIds::new();
                let doc = Document::new(ids.encode(&words));
                let sent_ids: Vec<Vec<TokenId>> = split_sentences(&lang.tokenize(sum))
                    .iter()
                    .map(|s| ids.encode(s))
                    .collect();
                match pretrain::make_transfer_pair(&doc, &sent_ids, &mut rng) {
                    Some(p) => {
                        writeln!(out, "{}\t{}", ids.decode(&p.input), ids.decode(&p.target))?;
                        written += 1;
                    }
                    None => skipped += 1,
                }
            }
        }
    }
    println!("pairs written: {written}, skipped: {skipped} -> {}", a.output.display());
    Ok(())
}

fn read_pairs(path: &Path, vocab: &Vocabulary, lang: Language) -> Result<Vec<PretrainPair>> {
    let mut pairs = Vec::new();
    for (i, line) in read_lines(path)?.iter().enumerate() {
        if line.is_empty() {
            continue;
        }
        let (input, target) = line
            .split_once('\t')
            .ok_or_else(|| anyhow!("{}:{}: expected input TAB target", path.display(), i + 1))?;
        let input = vocab.encode(&lang.tokenize(input));
        let target = vocab.encode(&lang.tokenize(target));
        if input.is_empty() || target.is_empty() {
            continue;
        }
        pairs.push(PretrainPair {
            input,
            target,
            recipe: Recipe::Shuffle,
        });
    }
    if pairs.is_empty() {
        bail!("no usable pairs in {}", path.display());
    }
    Ok(pairs)
}

fn cmd_pretrain(a: PretrainArgs) -> Result<()> {
    let lang = lang_of(a.chinese);
    match a.model {
        ModelArg::Generator => {
            let mut state = match (&a.checkpoint, &a.vocab) {
                (Some(ck), _) => TrainState::load(ck, None)?,
                (None, Some(vp)) => {
                    let vocab = Vocabulary::load(vp)?;
                    let config = load_config(&a.config, TrainConfig::default())?;
                    TrainState::new(config, vocab, 1, 1)?
                }
                (None, None) => bail!("--vocab (or --checkpoint) is required"),
            };
            let pairs_path = a.pairs.ok_or_else(|| anyhow!("--pairs is required"))?;
            let pairs = read_pairs(&pairs_path, &state.vocab, lang)?;
            let mut rng = state.rng.clone();
            let losses = pretrain::pretrain_generator(
                &mut state.generator,
                &pairs,
                a.epochs,
                state.config.batch_size,
                state.config.d_lr,
                &mut rng,
            )?;
            state.rng = rng;
            println!(
                "generator pre-training: {} pairs, {} epochs, loss {:.4} -> {:.4}",
                pairs.len(),
                a.epochs,
                losses.first().unwrap(),
                losses.last().unwrap()
            );
            state.save(&a.out)?;
        }
        ModelArg::Reconstructor | ModelArg::Discriminator => {
            let ck = a
                .checkpoint
                .ok_or_else(|| anyhow!("--checkpoint with a pre-trained generator is required"))?;
            let mut state = TrainState::load(&ck, None)?;
            let apath = a.articles.ok_or_else(|| anyhow!("--articles is required"))?;
            let (docs, _) = load_documents(&apath, &state.vocab, a.max_src_len, lang)?;
            let mut rng = state.rng.clone();
            match a.model {
                ModelArg::Reconstructor => {
                    let losses = pretrain::pretrain_reconstructor(
                        &state.generator.clone(),
                        &mut state.reconstructor,
                        &docs,
                        a.updates,
                        state.config.batch_size,
                        state.config.max_sum_len,
                        state.config.d_lr,
                        &mut rng,
                    )?;
                    println!(
                        "reconstructor pre-training: loss {:.4} -> {:.4}",
                        losses.first().unwrap(),
                        losses.last().unwrap()
                    );
                }
                ModelArg::Discriminator => {
                    let spath = a.summaries.ok_or_else(|| anyhow!("--summaries is required"))?;
                    let (pool, _) = RealSummaryPool::load(
                        &spath,
                        &state.vocab,
                        state.config.max_sum_len,
                        lang,
                        Provenance::SameDomain,
                    )?;
                    let beta = match state.config.mode {
                        Mode::Wgan => state.config.beta1,
                        Mode::AdvReinforce => state.config.beta2,
                    };
                    let generator = state.generator.clone();
                    let losses = pretrain::pretrain_discriminator(
                        &generator,
                        &mut state.d1,
                        &mut state.d2,
                        state.config.mode,
                        &docs,
                        &pool,
                        a.updates,
                        state.config.batch_size,
                        state.config.max_sum_len,
                        state.config.d_lr,
                        beta,
                        &mut rng,
                    )?;
                    println!(
                        "discriminator pre-training ({}): loss {:.4} -> {:.4}",
                        state.config.mode,
                        losses.first().unwrap(),
                        losses.last().unwrap()
                    );
                }
                ModelArg::Generator => unreachable!(),
            }
            state.rng = rng;
            state.save(&a.out)?;
        }
    }
    println!("checkpoint -> {}", a.out.display());
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let lang = lang_of(a.chinese);
    let transfer = a.transfer_summaries.is_some();
    let base = if transfer {
        TrainConfig::transfer()
    } else {
        TrainConfig::default()
    };
    let mut config = load_config(&a.config, base)?;
    config.mode = a.mode.into();
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    if let Some(p) = a.tf_period {
        config.teacher_force_period = Some(p);
    }

    // Corpora.
    let (summaries_path, provenance) = match (&a.summaries, &a.transfer_summaries) {
        (Some(p), None) => (p.clone(), Provenance::SameDomain),
        (None, Some(p)) => (p.clone(), Provenance::TransferSource),
        (Some(_), Some(_)) => bail!("--summaries and --transfer-summaries are exclusive"),
        (None, None) => bail!("one of --summaries or --transfer-summaries is required"),
    };

    // Labeled pairs for teacher forcing.
    let mut paired: Option<Vec<(Document, Vec<TokenId>)>> = None;

    let mut state = match (&a.init, a.pretrain) {
        (Some(ck), _) => {
            let mut st = TrainState::load(ck, None)?;
            st.config = config.clone();
            st
        }
        (None, false) => bail!(
            "no pre-trained checkpoint: pass --init <checkpoint> or enable --pretrain"
        ),
        (None, true) => {
            let vp = a
                .vocab
                .as_ref()
                .ok_or_else(|| anyhow!("--vocab is required with --pretrain"))?;
            let vocab = Vocabulary::load(vp)?;
            TrainState::new(config.clone(), vocab, 1, 1)?
        }
    };

    let (docs, dstats) = load_documents(&a.articles, &state.vocab, a.max_src_len, lang)?;
    let (pool, _) = RealSummaryPool::load(
        &summaries_path,
        &state.vocab,
        state.config.max_sum_len,
        lang,
        provenance,
    )?;
    println!(
        "loaded {} documents ({} blank lines skipped), {} real summaries",
        dstats.loaded,
        dstats.skipped_blank,
        pool.sentences.len()
    );

    if let Some(pfiles) = &a.paired {
        let (parts, _) = load_documents(&pfiles[0], &state.vocab, a.max_src_len, lang)?;
        let (psums, _) = load_documents(
            &pfiles[1],
            &state.vocab,
            state.config.max_sum_len,
            lang,
        )?;
        if parts.len() != psums.len() {
            bail!(
                "aligned files differ: {} articles vs {} summaries",
                parts.len(),
                psums.len()
            );
        }
        if state.config.teacher_force_period.is_none() {
            state.config.teacher_force_period =
                Some(precis::trainer::teacher_force_period(parts.len()));
        }
        paired = Some(
            parts
                .into_iter()
                .zip(psums.into_iter().map(|d| d.tokens))
                .collect(),
        );
    }

    if a.init.is_none() && a.pretrain {
        // Built-in pre-training: shuffle recipe for G, then critics.
        let mut rng = state.rng.clone();
        let mut pairs = Vec::new();
        for _ in 0..2 {
            for d in &docs {
                if let Some(p) = pretrain::make_shuffle_pair(d, &mut rng) {
                    pairs.push(p);
                }
            }
        }
        if pairs.is_empty() {
            bail!("no pre-training pairs (documents shorter than 6 tokens?)");
        }
        let losses = pretrain::pretrain_generator(
            &mut state.generator,
            &pairs,
            a.pretrain_epochs,
            state.config.batch_size,
            state.config.d_lr,
            &mut rng,
        )?;
        println!(
            "generator pre-training: loss {:.4} -> {:.4}",
            losses.first().unwrap(),
            losses.last().unwrap()
        );
        let beta = match state.config.mode {
            Mode::Wgan => state.config.beta1,
            Mode::AdvReinforce => state.config.beta2,
        };
        let generator = state.generator.clone();
        let log = pretrain::pretrain_critics(
            &generator,
            &mut state.reconstructor,
            &mut state.d1,
            &mut state.d2,
            state.config.mode,
            &docs,
            &pool,
            a.pretrain_updates,
            state.config.batch_size,
            state.config.max_sum_len,
            state.config.d_lr,
            beta,
            &mut rng,
        )?;
        println!(
            "critic pre-training: R {:.4} -> {:.4}, D {:.4} -> {:.4}",
            log.r_losses.first().unwrap(),
            log.r_losses.last().unwrap(),
            log.d_losses.first().unwrap(),
            log.d_losses.last().unwrap()
        );
        state.rng = rng;
    }

    state.reset_sampler(docs.len(), pool.sentences.len())?;

    fs::create_dir_all(&a.out)?;
    fs::write(a.out.join("config.txt"), state.config.to_key_values())?;
    let metrics_path = a.out.join("metrics.log");
    let ck_path = a.out.join("checkpoint.json");

    let mut metrics_file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&metrics_path)?;

    let mut trainer = Trainer::new(state, &docs, &pool, paired.as_deref());
    let total = trainer.state.config.max_updates;
    while trainer.state.t < total {
        let chunk = a
            .checkpoint_every
            .min(total - trainer.state.t)
            .max(1);
        let logged = trainer.state.metrics.len();
        trainer.run_n(chunk)?;
        for rec in &trainer.state.metrics[logged..] {
            writeln!(metrics_file, "{rec}")?;
        }
        metrics_file.flush()?;
        trainer.state.save(&ck_path)?;
        println!(
            "t={} / {total}  (checkpoint -> {})",
            trainer.state.t,
            ck_path.display()
        );
    }
    trainer.state.save(&ck_path)?;
    println!("done: {} updates, metrics -> {}", trainer.state.t, metrics_path.display());
    Ok(())
}

fn cmd_summarize(a: SummarizeArgs) -> Result<()> {
    let lang = lang_of(a.chinese);
    let expected = match &a.vocab {
        Some(vp) => Some(Vocabulary::load(vp)?.hash()),
        None => None,
    };
    let state = TrainState::load(&a.checkpoint, expected)?;
    let vocab = &state.vocab;
    let max_len = a.max_len.unwrap_or(state.config.max_sum_len);

    let lines = read_lines(&a.input)?;
    let mut out = fs::File::create(&a.output)?;
    for line in &lines {
        let words = lang.tokenize(line);
        if words.is_empty() {
            writeln!(out)?;
            continue;
        }
        let mut ids = vocab.encode(&words);
        ids.truncate(a.max_src_len);
        let mut g = Graph::new();
        let m = state.generator.bind(&mut g, false);
        let enc = encode(&mut g, &m, &ids)?;
        let mut stepper = Seq2SeqStepper {
            g: &mut g,
            model: &m,
            enc: &enc,
            start: BOS,
            pgen_mode: PgenMode::Learned,
        };
        let tokens = beam_search(&mut stepper, a.beam, max_len, Some(EOS), RepetitionFilter::On);
        let surface: Vec<TokenId> = tokens.into_iter().filter(|&t| t >= NUM_SPECIALS).collect();
        writeln!(out, "{}", vocab.decode_string(&surface))?;
    }
    println!("{} summaries -> {}", lines.len(), a.output.display());
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let cands = read_lines(&a.candidates)?;
    let refs = read_lines(&a.references)?;
    let mut interner = Interner::new(a.stem);
    let cand_ids: Vec<Vec<TokenId>> = cands.iter().map(|l| interner.intern_line(l)).collect();
    let ref_ids: Vec<Vec<TokenId>> = refs.iter().map(|l| interner.intern_line(l)).collect();
    let report = evaluate_corpus(&cand_ids, &ref_ids)?;
    println!(
        "ROUGE-1 F1 {:.4} (P {:.4} R {:.4})",
        report.mean.r1.f1, report.mean.r1.precision, report.mean.r1.recall
    );
    println!(
        "ROUGE-2 F1 {:.4} (P {:.4} R {:.4})",
        report.mean.r2.f1, report.mean.r2.precision, report.mean.r2.recall
    );
    println!(
        "ROUGE-L F1 {:.4} (P {:.4} R {:.4})",
        report.mean.rl.f1, report.mean.rl.precision, report.mean.rl.recall
    );
    if let Some(path) = &a.per_doc {
        let mut f = fs::File::create(path)?;
        for (i, s) in report.per_doc.iter().enumerate() {
            writeln!(f, "{i} {} {} {}", s.r1.f1, s.r2.f1, s.rl.f1)?;
        }
        println!("per-document scores -> {}", path.display());
    }
    Ok(())
}

fn cmd_baseline(a: BaselineArgs) -> Result<()> {
    if a.lead == 0 {
        bail!("--lead must be >= 1");
    }
    let lines = read_lines(&a.articles)?;
    let mut out = fs::File::create(&a.output)?;
    for line in &lines {
        let words: Vec<&str> = line.split_whitespace().collect();
        let ids: Vec<TokenId> = (0..words.len()).collect();
        let head = lead_k(&ids, a.lead);
        let text: Vec<&str> = head.iter().map(|&i| words[i]).collect();
        writeln!(out, "{}", text.join(" "))?;
    }
    println!("lead-{} baselines -> {}", a.lead, a.output.display());
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::BuildVocab(a) => cmd_build_vocab(a),
        Command::MakePretrainPairs(a) => cmd_make_pairs(a),
        Command::Pretrain(a) => cmd_pretrain(a),
        Command::Train(a) => cmd_train(a),
        Command::Summarize(a) => cmd_summarize(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Baseline(a) => cmd_baseline(a),
    }
}
