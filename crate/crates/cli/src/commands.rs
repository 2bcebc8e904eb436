//! The subcommand implementations. Every command reads the same
//! [`RunConfig`], validates paths before touching any output, and writes
//! plain-text artifacts whose bytes are fully determined by (config, seed).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qexpert_core::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use qexpert_core::corpus::{
    dataset_to_tsv, encode_text, generate_synthetic, parse_dataset, tokenize, CandidatePool,
    DataFormat, Dataset, Split, SyntheticConfig, Vocab,
};
use qexpert_core::embed::{deepwalk, load_vectors, save_vectors, train_skipgram, EmbeddingTable};
use qexpert_core::eval::{evaluate_answers_top1, evaluate_top1, rank_candidates, EvalReport};
use qexpert_core::grid::run_grid;
use qexpert_core::seeds;
use qexpert_core::train::{ModelKind, Trainer};
use qexpert_core::ExecMode;

use crate::config::{EmbeddingSource, RunConfig};

/// Which embedding family `embed` should train.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbedTarget {
    Users,
    Words,
}

impl std::str::FromStr for EmbedTarget {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "users" => Ok(EmbedTarget::Users),
            "words" => Ok(EmbedTarget::Words),
            other => Err(anyhow!("unknown embed target {other:?} (expected users|words)")),
        }
    }
}

fn read_split(config: &RunConfig, format: DataFormat, split: Split) -> Result<Dataset> {
    let path = config.path_for(split)?;
    Ok(parse_dataset(path, format, split)?)
}

fn build_vocab(config: &RunConfig, train: &Dataset) -> Result<Vocab> {
    Ok(Vocab::build(
        &[train],
        config.tokenizer.mode,
        config.tokenizer.min_count,
    )?)
}

/// Train skip-gram word vectors on the train split's question and answer
/// texts, aligned to `vocab` ids. Tokens below min_count are dropped from
/// the sentences (they have no vocabulary row to train).
fn train_word_vectors(config: &RunConfig, train: &Dataset, vocab: &Vocab) -> Result<EmbeddingTable> {
    let mode = config.tokenizer.mode;
    let mut sentences: Vec<Vec<usize>> = Vec::new();
    let mut push = |text: &str| {
        let ids: Vec<usize> = tokenize(text, mode)
            .iter()
            .filter_map(|t| vocab.id(t))
            .collect();
        if !ids.is_empty() {
            sentences.push(ids);
        }
    };
    for rec in &train.records {
        push(&rec.text);
        for ans in &rec.answers {
            if let Some(text) = &ans.answer_text {
                push(text);
            }
        }
    }
    let (mut table, _) = train_skipgram(
        &sentences,
        vocab.tokens().to_vec(),
        &config.skipgram_config(),
        seeds::mix_str(config.seed, "embed/words"),
    )?;
    // The padding row is a pure placeholder; keep its vector at zero so the
    // saved artifact matches what the model will actually use.
    table.row_mut(qexpert_core::corpus::PAD).fill(0.0);
    Ok(table)
}

fn train_user_vectors(config: &RunConfig, train: &Dataset) -> Result<EmbeddingTable> {
    let (table, _) = deepwalk(
        train,
        &config.deepwalk_config(),
        seeds::mix_str(config.seed, "embed/users"),
        ExecMode::auto(),
    )?;
    Ok(table)
}

/// Everything model training and the grid need: the train split, its
/// vocabulary, and word/user tables obtained per the configured sources.
struct Resources {
    train: Dataset,
    vocab: Vocab,
    word_source: EmbeddingTable,
    user_table: EmbeddingTable,
}

fn load_resources(config: &RunConfig, format: DataFormat) -> Result<Resources> {
    let train = read_split(config, format, Split::Train)?;
    let vocab = build_vocab(config, &train)?;
    let word_source = match config.embeddings.words.source {
        EmbeddingSource::Train => train_word_vectors(config, &train, &vocab)?,
        EmbeddingSource::Load => load_vectors(&config.words_path())?,
    };
    let user_table = match config.embeddings.users.source {
        EmbeddingSource::Train => train_user_vectors(config, &train)?,
        EmbeddingSource::Load => load_vectors(&config.users_path())?,
    };
    Ok(Resources {
        train,
        vocab,
        word_source,
        user_table,
    })
}

/// Rebuild the exact key lists the checkpoint fingerprints were computed
/// over: vocabulary tokens for words, and either the train split's sorted
/// answerer ids (source = train) or the loaded vector file's keys.
fn checkpoint_keys(config: &RunConfig, format: DataFormat) -> Result<(Vec<String>, Vec<String>)> {
    let train = read_split(config, format, Split::Train)?;
    let vocab = build_vocab(config, &train)?;
    let user_keys = match config.embeddings.users.source {
        EmbeddingSource::Train => train.user_ids(),
        EmbeddingSource::Load => load_vectors(&config.users_path())?.keys().to_vec(),
    };
    Ok((vocab.tokens().to_vec(), user_keys))
}

fn load_model(config: &RunConfig, format: DataFormat, model: ModelKind) -> Result<Checkpoint> {
    let path = config.checkpoint_path(model);
    if !path.exists() {
        bail!(
            "no checkpoint at {}; run `train` first or point output_dir at one",
            path.display()
        );
    }
    let (word_keys, user_keys) = checkpoint_keys(config, format)?;
    Ok(load_checkpoint(&path, &word_keys, &user_keys)?)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

// ---------------------------------------------------------------------------
// ingest

pub fn cmd_ingest(config: &RunConfig, format: DataFormat) -> Result<()> {
    let configured = config.split_paths();
    if configured.is_empty() {
        bail!("config names no dataset paths; fill in the [data] section");
    }
    config.validate(&[])?;

    let mut train_ds = None;
    for (&split, _) in &configured {
        let ds = read_split(config, format, split)?;
        let users = ds.user_ids().len();
        println!("{split}\t{} records\t{users} users", ds.records.len());
        if split == Split::Train {
            train_ds = Some(ds);
        }
    }
    match train_ds {
        Some(train) => {
            let vocab = build_vocab(config, &train)?;
            println!(
                "vocab\t{} tokens (min_count {})",
                vocab.len(),
                config.tokenizer.min_count
            );
        }
        None => println!("vocab\tskipped (no train split configured)"),
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// embed

pub fn cmd_embed(config: &RunConfig, format: DataFormat, target: EmbedTarget) -> Result<()> {
    config.validate(&[Split::Train])?;
    let train = read_split(config, format, Split::Train)?;

    let (table, path) = match target {
        EmbedTarget::Words => {
            let vocab = build_vocab(config, &train)?;
            (train_word_vectors(config, &train, &vocab)?, config.words_path())
        }
        EmbedTarget::Users => (train_user_vectors(config, &train)?, config.users_path()),
    };
    save_vectors(&table, &path)?;
    println!("wrote\t{}", path.display());
    println!("header\t{} {}", table.len(), table.dim());
    Ok(())
}

// ---------------------------------------------------------------------------
// train

pub fn cmd_train(
    config: &RunConfig,
    format: DataFormat,
    model_override: Option<ModelKind>,
    grid: bool,
    out: Option<PathBuf>,
) -> Result<()> {
    if grid {
        return cmd_grid(config, format, out);
    }
    config.validate(&[Split::Train])?;
    let train_config = config.train_config(model_override);
    train_config.validate()?;
    let model = train_config.model;

    let res = load_resources(config, format)?;
    let dev = match config.data.dev {
        Some(_) => Some(read_split(config, format, Split::Dev)?),
        None => None,
    };

    let mut trainer = Trainer::new(
        train_config,
        &res.train,
        &res.vocab,
        &res.word_source,
        &res.user_table,
    )?;
    println!("model\t{model}");
    println!("triples\t{}", trainer.example_count());
    let stats = &trainer.build_stats;
    if stats.skipped_unknown_user > 0 || stats.skipped_missing_answer_text > 0 {
        println!(
            "skipped\t{} unknown-user, {} missing-answer-text",
            stats.skipped_unknown_user, stats.skipped_missing_answer_text
        );
    }

    let metrics_path = config.metrics_path(model);
    let mut metrics = BufWriter::new(
        File::create(&metrics_path)
            .with_context(|| format!("cannot write {}", metrics_path.display()))?,
    );
    writeln!(metrics, "epoch\tloss\tdev_top1")?;

    let dev_args = dev
        .as_ref()
        .map(|ds| (ds, config.eval.k, config.eval_seed()));
    let summary = trainer.fit(dev_args, Some(&mut metrics), ExecMode::auto())?;
    metrics.flush()?;

    // Best-seen dev error per epoch: nonincreasing by construction, and a
    // quick visual check that model selection behaved.
    if dev.is_some() {
        let mut curve = String::from("epoch\tbest_dev_error\n");
        let mut best = f64::INFINITY;
        for (i, top1) in summary.dev_curve.iter().enumerate() {
            if let Some(t) = top1 {
                best = best.min(1.0 - t);
            }
            curve.push_str(&format!("{}\t{best}\n", i + 1));
        }
        write_text(&config.best_curve_path(model), &curve)?;
        println!("best_curve\t{}", config.best_curve_path(model).display());
    }

    let epoch = summary.best_epoch.unwrap_or(summary.epochs_run) as u64;
    let ckpt_path = config.checkpoint_path(model);
    save_checkpoint(&ckpt_path, &trainer.params, &trainer.config, epoch)?;

    println!("epochs\t{}", summary.epochs_run);
    if let Some(loss) = summary.epoch_losses.last() {
        println!("final_loss\t{loss}");
    }
    if let (Some(e), Some(acc)) = (summary.best_epoch, summary.best_dev_top1) {
        println!("best_epoch\t{e}");
        println!("best_dev_top1\t{acc}");
    }
    println!("metrics\t{}", metrics_path.display());
    println!("checkpoint\t{}", ckpt_path.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// eval

pub fn cmd_eval(
    config: &RunConfig,
    format: DataFormat,
    model_override: Option<ModelKind>,
    split_override: Option<Split>,
    k_override: Option<usize>,
    out: Option<PathBuf>,
) -> Result<()> {
    let split = split_override.unwrap_or(config.eval.split);
    let model = model_override.unwrap_or(config.train.model);
    config.validate(&[Split::Train, split])?;
    let k = k_override.unwrap_or(config.eval.k);

    let ckpt = load_model(config, format, model)?;
    let dataset = read_split(config, format, split)?;
    let report = run_eval(&ckpt, model, &dataset, k, config.eval_seed())?;

    let path = out.unwrap_or_else(|| config.eval_report_path(split, model));
    write_text(&path, &report.to_tsv())?;
    println!("split\t{split}");
    println!("model\t{model}");
    println!("questions\t{}", report.questions);
    println!("top1\t{}", report.top1_accuracy);
    println!("report\t{}", path.display());
    Ok(())
}

fn run_eval(
    ckpt: &Checkpoint,
    model: ModelKind,
    dataset: &Dataset,
    k: usize,
    seed: u64,
) -> Result<EvalReport> {
    let tokenize_mode = ckpt.config.tokenize_mode;
    let report = match model {
        ModelKind::QUser => evaluate_top1(
            &ckpt.params,
            dataset,
            tokenize_mode,
            k,
            seed,
            false,
            ExecMode::auto(),
        )?,
        ModelKind::QAnswer => evaluate_answers_top1(
            &ckpt.params,
            dataset,
            tokenize_mode,
            k,
            seed,
            false,
            ExecMode::auto(),
        )?,
    };
    Ok(report)
}

// ---------------------------------------------------------------------------
// rank

pub fn cmd_rank(
    config: &RunConfig,
    format: DataFormat,
    model_override: Option<ModelKind>,
    question: &str,
    pool_file: &Path,
) -> Result<()> {
    let model = model_override.unwrap_or(config.train.model);
    config.validate(&[Split::Train])?;
    let pool_text = std::fs::read_to_string(pool_file)
        .with_context(|| format!("cannot read pool file {}", pool_file.display()))?;

    let ckpt = load_model(config, format, model)?;
    let encoder_vocab = {
        let train = read_split(config, format, Split::Train)?;
        build_vocab(config, &train)?
    };
    let tokens = tokenize(question, ckpt.config.tokenize_mode);
    let ids = encode_text(&tokens, &encoder_vocab, ckpt.params.seq_len)?;

    let mut candidates = Vec::new();
    for line in pool_text.lines() {
        let user = line.trim();
        if user.is_empty() || candidates.iter().any(|c| c == user) {
            continue;
        }
        if ckpt.params.user_id(user).is_none() {
            eprintln!("unknown user: {user}");
            continue;
        }
        candidates.push(user.to_string());
    }
    let pool = CandidatePool {
        question_id: String::new(),
        candidates,
        gold_index: 0,
    };
    for (i, c) in rank_candidates(&ids, &pool, &ckpt.params)?.iter().enumerate() {
        println!("{}\t{}\t{}", i + 1, c.user_id, c.score);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// grid

pub fn cmd_grid(config: &RunConfig, format: DataFormat, out: Option<PathBuf>) -> Result<()> {
    let section = config
        .grid
        .as_ref()
        .ok_or_else(|| anyhow!("config has no [grid] section"))?;
    let axes = section.axes();
    axes.validate()?;
    config.validate(&[Split::Train, Split::Test1, Split::Test2])?;

    let res = load_resources(config, format)?;
    let test1 = read_split(config, format, Split::Test1)?;
    let test2 = read_split(config, format, Split::Test2)?;
    let base = config.train_config(None);

    let mut progress = std::io::stderr();
    let report = run_grid(
        &base,
        &axes,
        &res.train,
        &test1,
        &test2,
        &res.vocab,
        &res.word_source,
        &res.user_table,
        config.eval.k,
        config.eval_seed(),
        ExecMode::auto(),
        Some(&mut progress),
    )?;

    let path = out.unwrap_or_else(|| config.grid_path());
    write_text(&path, &report.to_tsv())?;
    for model in axes.models.iter().take(2) {
        if let Some(best) = report.best_mean_top1(*model) {
            println!("best_{model}\t{best}");
        }
    }
    println!("cells\t{}", report.cells.len());
    println!("report\t{}", path.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// synth

pub fn cmd_synth(config: &RunConfig) -> Result<()> {
    config.ensure_output_dir()?;
    let s = &config.synth;
    let base = SyntheticConfig {
        topics: s.topics,
        users: s.users,
        questions: 0, // per split below
        vocab_size: s.vocab_size,
        noise_rate: s.noise_rate,
        same_topic_answerers: s.same_topic_answerers,
        distractor_answerers: s.distractor_answerers,
        question_len: s.question_len,
        answer_len: s.answer_len,
        with_answer_text: s.with_answer_text,
    };
    let splits = [
        (Split::Train, s.train_questions),
        (Split::Dev, s.dev_questions),
        (Split::Test1, s.test1_questions),
        (Split::Test2, s.test2_questions),
    ];
    for (split, questions) in splits {
        let cfg = SyntheticConfig { questions, ..base.clone() };
        let mut rng =
            ChaCha8Rng::seed_from_u64(seeds::mix_str(config.seed, &format!("synth/{split}")));
        let (dataset, experts) = generate_synthetic(&cfg, split, &mut rng)?;

        let data_path = config.synth_data_path(split);
        write_text(&data_path, &dataset_to_tsv(&dataset)?)?;
        let mut map = String::new();
        for (qid, user) in &experts {
            map.push_str(&format!("{qid}\t{user}\n"));
        }
        write_text(&config.synth_experts_path(split), &map)?;
        println!(
            "{split}\t{} records\t{}",
            dataset.records.len(),
            data_path.display()
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embed_target_parses_both_forms() {
        assert_eq!("users".parse::<EmbedTarget>().unwrap(), EmbedTarget::Users);
        assert_eq!("words".parse::<EmbedTarget>().unwrap(), EmbedTarget::Words);
        assert!("user".parse::<EmbedTarget>().is_err());
    }
}
