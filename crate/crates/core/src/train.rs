//! Hinge-loss training over (question, better, worse) triples for both
//! models: user ranking (question tower vs. user vectors) and answer
//! ranking (siamese question/answer towers).

use std::collections::HashMap;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{make_triples, tokenize, Dataset, TokenizeMode, Vocab};
use crate::embed::EmbeddingTable;
use crate::error::{Error, Result};
use crate::eval::{evaluate_answers_top1, evaluate_top1};
use crate::exec::{map_indexed, ExecMode};
use crate::model::{backward, forward_trace, ForwardTrace, ModelParams};
use crate::nn::{cosine, cosine_backward, Mode, Optimizer, OptimizerKind};
use crate::seeds;

/// Which pairing the triples score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    /// Rank users: cosine(question encoding, user vector).
    #[serde(rename = "quser")]
    QUser,
    /// Rank answer texts: cosine(question encoding, answer encoding),
    /// both produced by one shared tower.
    #[serde(rename = "qa")]
    QAnswer,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelKind::QUser => write!(f, "quser"),
            ModelKind::QAnswer => write!(f, "qa"),
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quser" => Ok(ModelKind::QUser),
            "qa" => Ok(ModelKind::QAnswer),
            other => Err(Error::InvalidConfig(format!(
                "unknown model {other:?} (expected quser|qa)"
            ))),
        }
    }
}

/// Everything a training run depends on. Defaults follow the reference
/// hyperparameters: margin 0.1, learning rate 1e-5, dropout 0.5, sequence
/// length 50, region sizes 2–5.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub margin: f64,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub dropout_rate: f64,
    pub region_sizes: Vec<usize>,
    pub filters_per_size: usize,
    pub seq_len: usize,
    pub tokenize_mode: TokenizeMode,
    pub seed: u64,
    /// Fine-tune user vectors alongside the tower (frozen by default).
    pub fine_tune_users: bool,
    pub max_pairs_per_question: usize,
    /// Early-stopping patience on dev Top-1 during [`Trainer::fit`].
    pub patience: usize,
    /// Abort on unresolvable users / missing answer texts instead of
    /// skipping them with a counter.
    pub strict_ids: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::QUser,
            margin: 0.1,
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-5,
            epochs: 25,
            batch_size: 32,
            dropout_rate: 0.5,
            region_sizes: vec![2, 3, 4, 5],
            filters_per_size: 100,
            seq_len: 50,
            tokenize_mode: TokenizeMode::Whitespace,
            seed: 0,
            fine_tune_users: false,
            max_pairs_per_question: 10,
            patience: 5,
            strict_ids: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.margin <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "margin must be positive, got {}",
                self.margin
            )));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.max_pairs_per_question == 0 {
            return Err(Error::InvalidConfig(
                "epochs, batch_size and max_pairs_per_question must be positive".into(),
            ));
        }
        if self.seq_len == 0 {
            return Err(Error::InvalidConfig("seq_len must be positive".into()));
        }
        Ok(())
    }
}

/// The margin ranking loss `max(0, margin - (s_pos - s_neg))`. The
/// subgradient at the kink is 0, so satisfied triples are inert.
pub fn hinge_loss(s_pos: f64, s_neg: f64, margin: f64) -> f64 {
    (margin - (s_pos - s_neg)).max(0.0)
}

/// Token-id encoder bound to a model's vocabulary (the word-table keys).
pub struct TextEncoder<'a> {
    index: HashMap<&'a str, usize>,
    mode: TokenizeMode,
    seq_len: usize,
}

impl<'a> TextEncoder<'a> {
    pub fn new(params: &'a ModelParams, mode: TokenizeMode) -> Self {
        let index = params
            .word_keys()
            .iter()
            .enumerate()
            .map(|(i, k)| (k.as_str(), i))
            .collect();
        Self {
            index,
            mode,
            seq_len: params.seq_len,
        }
    }

    /// Tokenize, map (unknowns to the UNK id), truncate/pad to `seq_len`.
    pub fn encode(&self, text: &str) -> Vec<usize> {
        let tokens = tokenize(text, self.mode);
        let mut ids = Vec::with_capacity(self.seq_len);
        for token in tokens.iter().take(self.seq_len) {
            ids.push(
                self.index
                    .get(token.as_str())
                    .copied()
                    .unwrap_or(crate::corpus::UNK),
            );
        }
        ids.resize(self.seq_len, crate::corpus::PAD);
        ids
    }
}

/// One pre-encoded training triple.
#[derive(Debug, Clone)]
pub enum TrainExample {
    User {
        question: Vec<usize>,
        pos: usize,
        neg: usize,
    },
    Answer {
        question: Vec<usize>,
        pos: Vec<usize>,
        neg: Vec<usize>,
    },
}

/// What example building dropped and why.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct BuildStats {
    pub triples_total: usize,
    pub skipped_unknown_user: usize,
    pub skipped_missing_answer_text: usize,
}

/// Turn a training split into encoded examples for the configured model.
/// With `strict_ids` unset, unresolvable triples are counted and skipped.
pub fn build_examples(
    dataset: &Dataset,
    params: &ModelParams,
    config: &TrainConfig,
) -> Result<(Vec<TrainExample>, BuildStats)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::mix(&[config.seed, 0x54524950]));
    let triples = make_triples(dataset, config.max_pairs_per_question, &mut rng);
    let encoder = TextEncoder::new(params, config.tokenize_mode);

    let by_id: HashMap<&str, &crate::corpus::QuestionRecord> = dataset
        .records
        .iter()
        .map(|r| (r.question_id.as_str(), r))
        .collect();

    let mut stats = BuildStats {
        triples_total: triples.len(),
        ..BuildStats::default()
    };
    let mut examples = Vec::with_capacity(triples.len());
    for t in &triples {
        let record = by_id[t.question_id.as_str()];
        let question = encoder.encode(&record.text);
        match config.model {
            ModelKind::QUser => {
                let (pos, neg) = match (
                    params.user_id(&t.pos_user_id),
                    params.user_id(&t.neg_user_id),
                ) {
                    (Some(p), Some(n)) => (p, n),
                    _ => {
                        if config.strict_ids {
                            let missing = if params.user_id(&t.pos_user_id).is_none() {
                                &t.pos_user_id
                            } else {
                                &t.neg_user_id
                            };
                            return Err(Error::UnknownUser(missing.clone()));
                        }
                        stats.skipped_unknown_user += 1;
                        continue;
                    }
                };
                examples.push(TrainExample::User { question, pos, neg });
            }
            ModelKind::QAnswer => {
                let text_of = |user: &str| {
                    record
                        .answers
                        .iter()
                        .filter(|a| a.user_id == user && a.answer_text.is_some())
                        .max_by_key(|a| a.votes)
                        .and_then(|a| a.answer_text.as_deref())
                };
                match (text_of(&t.pos_user_id), text_of(&t.neg_user_id)) {
                    (Some(p), Some(n)) => examples.push(TrainExample::Answer {
                        question,
                        pos: encoder.encode(p),
                        neg: encoder.encode(n),
                    }),
                    _ => {
                        if config.strict_ids {
                            return Err(Error::InvalidConfig(format!(
                                "question {:?} lacks answer text for a triple; \
                                 the answer-ranking model needs the extended dataset variant",
                                t.question_id
                            )));
                        }
                        stats.skipped_missing_answer_text += 1;
                    }
                }
            }
        }
    }
    Ok((examples, stats))
}

/// Build a vocabulary-aligned word table: rows follow vocab ids exactly.
/// `source` supplies vectors for the tokens it knows; everything else
/// starts at zero. The PAD row is forced to zero even when `source` has a
/// vector for it, so padded positions start inert.
pub fn word_table_for_vocab(vocab: &Vocab, source: &EmbeddingTable) -> Result<EmbeddingTable> {
    let dim = source.dim();
    let mut data = vec![0.0; vocab.len() * dim];
    for (i, token) in vocab.tokens().iter().enumerate() {
        if i == crate::corpus::PAD {
            continue;
        }
        if let Some(v) = source.get(token) {
            data[i * dim..(i + 1) * dim].copy_from_slice(v);
        }
    }
    EmbeddingTable::from_rows(vocab.tokens().to_vec(), dim, data)
}

struct TripleForward {
    q: ForwardTrace,
    pos: TowerOrRow,
    neg: TowerOrRow,
    loss: f64,
}

enum TowerOrRow {
    Row(usize),
    Tower(Box<ForwardTrace>),
}

/// One optimizer step over a batch: train-mode forwards (parallel,
/// deterministic per-triple rng streams), hinge loss, backward for the
/// violating triples only, then the optimizer update. Returns the mean
/// batch loss. A batch where every triple satisfies the margin leaves all
/// parameters bitwise unchanged.
pub fn train_step(
    batch: &[TrainExample],
    params: &mut ModelParams,
    optimizer: &mut Optimizer,
    config: &TrainConfig,
    epoch: u64,
    batch_offset: usize,
    mode: ExecMode,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("empty training batch".into()));
    }

    let shared: &ModelParams = params;
    let forwards: Vec<Result<TripleForward>> = map_indexed(mode, batch.len(), |i| {
        let global = (batch_offset + i) as u64;
        let tower_rng = |tower: u64| {
            ChaCha8Rng::seed_from_u64(seeds::mix(&[config.seed, epoch, global, tower]))
        };
        match &batch[i] {
            TrainExample::User { question, pos, neg } => {
                let q = forward_trace(question, shared, Mode::Train, &mut tower_rng(0))?;
                let s_pos = cosine(&q.output, shared.user_emb.row(*pos))?;
                let s_neg = cosine(&q.output, shared.user_emb.row(*neg))?;
                Ok(TripleForward {
                    q,
                    pos: TowerOrRow::Row(*pos),
                    neg: TowerOrRow::Row(*neg),
                    loss: hinge_loss(s_pos, s_neg, config.margin),
                })
            }
            TrainExample::Answer { question, pos, neg } => {
                let q = forward_trace(question, shared, Mode::Train, &mut tower_rng(0))?;
                let p = forward_trace(pos, shared, Mode::Train, &mut tower_rng(1))?;
                let n = forward_trace(neg, shared, Mode::Train, &mut tower_rng(2))?;
                let s_pos = cosine(&q.output, &p.output)?;
                let s_neg = cosine(&q.output, &n.output)?;
                Ok(TripleForward {
                    q,
                    pos: TowerOrRow::Tower(Box::new(p)),
                    neg: TowerOrRow::Tower(Box::new(n)),
                    loss: hinge_loss(s_pos, s_neg, config.margin),
                })
            }
        }
    });

    params.zero_grads();
    let scale = 1.0 / batch.len() as f64;
    let mut loss_sum = 0.0;
    for fwd in forwards {
        let fwd = fwd?;
        loss_sum += fwd.loss;
        if fwd.loss <= 0.0 {
            continue; // margin satisfied: zero subgradient at and past the kink
        }
        // d loss / d s_pos = -1, d loss / d s_neg = +1, averaged over batch
        match (&fwd.pos, &fwd.neg) {
            (TowerOrRow::Row(p), TowerOrRow::Row(n)) => {
                let (dq_p, du_p) =
                    cosine_backward(&fwd.q.output, params.user_emb.row(*p), -scale);
                let (dq_n, du_n) =
                    cosine_backward(&fwd.q.output, params.user_emb.row(*n), scale);
                let dq: Vec<f64> = dq_p.iter().zip(&dq_n).map(|(a, b)| a + b).collect();
                backward(&fwd.q, params, &dq)?;
                accumulate_row(params, *p, &du_p);
                accumulate_row(params, *n, &du_n);
            }
            (TowerOrRow::Tower(p), TowerOrRow::Tower(n)) => {
                let (dq_p, da_p) = cosine_backward(&fwd.q.output, &p.output, -scale);
                let (dq_n, da_n) = cosine_backward(&fwd.q.output, &n.output, scale);
                let dq: Vec<f64> = dq_p.iter().zip(&dq_n).map(|(a, b)| a + b).collect();
                backward(&fwd.q, params, &dq)?;
                backward(p, params, &da_p)?;
                backward(n, params, &da_n)?;
            }
            _ => unreachable!("a batch never mixes example kinds"),
        }
    }

    let mut tensors = params.trainable_tensors_mut();
    optimizer.step(&mut tensors);
    Ok(loss_sum * scale)
}

fn accumulate_row(params: &mut ModelParams, row: usize, grad: &[f64]) {
    let dim = params.user_dim();
    if params.user_emb.grad().is_none() {
        params.user_emb.alloc_grad();
    }
    let g = params.user_emb.grad_mut().expect("allocated");
    for (d, s) in g[row * dim..(row + 1) * dim].iter_mut().zip(grad) {
        *d += s;
    }
}

/// Summary of a [`Trainer::fit`] run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitSummary {
    pub epochs_run: usize,
    pub epoch_losses: Vec<f64>,
    /// Dev Top-1 per epoch, present when a dev split was supplied.
    pub dev_curve: Vec<Option<f64>>,
    pub best_epoch: Option<usize>,
    pub best_dev_top1: Option<f64>,
}

/// Owns the model, optimizer and pre-encoded examples for a training run.
pub struct Trainer {
    pub params: ModelParams,
    pub config: TrainConfig,
    optimizer: Optimizer,
    examples: Vec<TrainExample>,
    pub build_stats: BuildStats,
    epochs_done: u64,
}

impl Trainer {
    /// Initialize the model around an existing word table (aligned to
    /// `vocab` ids) and user table, and pre-encode the training triples.
    pub fn new(
        config: TrainConfig,
        train: &Dataset,
        vocab: &Vocab,
        word_source: &EmbeddingTable,
        user_table: &EmbeddingTable,
    ) -> Result<Self> {
        config.validate()?;
        let word_table = word_table_for_vocab(vocab, word_source)?;
        let mut init_rng = ChaCha8Rng::seed_from_u64(seeds::mix(&[config.seed, 0x494e4954]));
        let params = ModelParams::init(
            crate::model::ConvSpec {
                region_sizes: config.region_sizes.clone(),
                filters_per_size: config.filters_per_size,
            },
            config.seq_len,
            config.dropout_rate,
            config.fine_tune_users,
            &word_table,
            user_table,
            &mut init_rng,
        )?;
        let (examples, build_stats) = build_examples(train, &params, &config)?;
        if examples.is_empty() {
            return Err(Error::EmptyInput(
                "no training triples survived example building".into(),
            ));
        }
        let optimizer = Optimizer::new(
            config.optimizer,
            config.learning_rate,
            0.9,
            0.999,
            1e-8,
        )?;
        Ok(Self {
            params,
            config,
            optimizer,
            examples,
            build_stats,
            epochs_done: 0,
        })
    }

    pub fn example_count(&self) -> usize {
        self.examples.len()
    }

    pub fn epochs_done(&self) -> u64 {
        self.epochs_done
    }

    /// One pass over all examples in a freshly shuffled order; returns the
    /// mean per-triple loss of the epoch.
    pub fn run_epoch(&mut self, mode: ExecMode) -> Result<f64> {
        let epoch = self.epochs_done;
        let mut order: Vec<usize> = (0..self.examples.len()).collect();
        let mut rng =
            ChaCha8Rng::seed_from_u64(seeds::mix(&[self.config.seed, epoch, 0x4f524452]));
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng);

        let mut loss_weighted = 0.0;
        let mut offset = 0;
        while offset < order.len() {
            let end = (offset + self.config.batch_size).min(order.len());
            let batch: Vec<TrainExample> = order[offset..end]
                .iter()
                .map(|&i| self.examples[i].clone())
                .collect();
            let mean = train_step(
                &batch,
                &mut self.params,
                &mut self.optimizer,
                &self.config,
                epoch,
                offset,
                mode,
            )?;
            loss_weighted += mean * batch.len() as f64;
            offset = end;
        }
        self.epochs_done += 1;
        Ok(loss_weighted / self.examples.len() as f64)
    }

    /// Train for up to `config.epochs` epochs. With a dev split, evaluates
    /// Top-1 after every epoch, stops after `patience` epochs without
    /// improvement, and restores the best parameters. Each metrics line is
    /// `epoch TAB mean_loss TAB dev_top1` (dev column `NA` without a dev
    /// split).
    pub fn fit(
        &mut self,
        dev: Option<(&Dataset, usize, u64)>,
        mut metrics: Option<&mut dyn Write>,
        mode: ExecMode,
    ) -> Result<FitSummary> {
        let mut summary = FitSummary {
            epochs_run: 0,
            epoch_losses: Vec::new(),
            dev_curve: Vec::new(),
            best_epoch: None,
            best_dev_top1: None,
        };
        let mut best_params: Option<ModelParams> = None;
        let mut since_best = 0usize;

        for epoch in 1..=self.config.epochs {
            let loss = self.run_epoch(mode)?;
            summary.epochs_run = epoch;
            summary.epoch_losses.push(loss);

            // Model selection must measure what the model ranks: users for
            // the user tower, answers for the siamese baseline.
            let dev_top1 = match dev {
                Some((split, k, eval_seed)) => {
                    let report = match self.config.model {
                        ModelKind::QUser => evaluate_top1(
                            &self.params,
                            split,
                            self.config.tokenize_mode,
                            k,
                            eval_seed,
                            false,
                            mode,
                        )?,
                        ModelKind::QAnswer => evaluate_answers_top1(
                            &self.params,
                            split,
                            self.config.tokenize_mode,
                            k,
                            eval_seed,
                            false,
                            mode,
                        )?,
                    };
                    Some(report.top1_accuracy)
                }
                None => None,
            };
            summary.dev_curve.push(dev_top1);
            if let Some(out) = metrics.as_deref_mut() {
                match dev_top1 {
                    Some(acc) => writeln!(out, "{epoch}\t{loss}\t{acc}")?,
                    None => writeln!(out, "{epoch}\t{loss}\tNA")?,
                }
            }

            if let Some(acc) = dev_top1 {
                if summary.best_dev_top1.map_or(true, |best| acc > best) {
                    summary.best_dev_top1 = Some(acc);
                    summary.best_epoch = Some(epoch);
                    best_params = Some(self.params.clone());
                    since_best = 0;
                } else {
                    since_best += 1;
                    if since_best >= self.config.patience {
                        break;
                    }
                }
            }
        }
        if let Some(best) = best_params {
            self.params = best;
        }
        Ok(summary)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Answer, QuestionRecord, Split};

    fn tiny_dataset() -> Dataset {
        let mk = |qid: &str, text: &str, answers: &[(&str, u64, Option<&str>)]| QuestionRecord {
            question_id: qid.into(),
            text: text.into(),
            answers: answers
                .iter()
                .map(|&(u, v, t)| Answer {
                    user_id: u.into(),
                    votes: v,
                    answer_text: t.map(|s| s.to_string()),
                })
                .collect(),
        };
        Dataset {
            split: Split::Train,
            records: vec![
                mk(
                    "q1",
                    "alpha beta gamma",
                    &[("ua", 9, Some("alpha alpha")), ("ub", 3, Some("delta"))],
                ),
                mk(
                    "q2",
                    "beta beta delta",
                    &[("ub", 7, Some("beta beta")), ("uc", 1, Some("alpha"))],
                ),
                mk(
                    "q3",
                    "gamma alpha",
                    &[("ua", 5, Some("gamma")), ("uc", 2, Some("beta delta"))],
                ),
            ],
        }
    }

    fn tiny_setup(config: &TrainConfig) -> (Dataset, Vocab, EmbeddingTable, EmbeddingTable) {
        let ds = tiny_dataset();
        let vocab = Vocab::build(&[&ds], config.tokenize_mode, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let words =
            EmbeddingTable::random(vocab.tokens().to_vec(), 8, &mut rng).unwrap();
        let mut users = EmbeddingTable::random(
            vec!["ua".into(), "ub".into(), "uc".into()],
            6,
            &mut rng,
        )
        .unwrap();
        users.data_mut().iter_mut().for_each(|v| *v *= 100.0);
        (ds, vocab, words, users)
    }

    fn tiny_config(model: ModelKind) -> TrainConfig {
        TrainConfig {
            model,
            region_sizes: vec![2],
            filters_per_size: 4,
            seq_len: 5,
            epochs: 3,
            batch_size: 4,
            dropout_rate: 0.0,
            learning_rate: 0.01,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn hinge_loss_contracts() {
        assert_eq!(hinge_loss(0.9, 0.2, 0.1), 0.0);
        assert_eq!(hinge_loss(0.4, 0.4, 0.1), 0.1);
        assert!((hinge_loss(0.50, 0.45, 0.1) - 0.05).abs() < 1e-15);
        // never negative, zero exactly when the margin is met
        assert_eq!(hinge_loss(0.8, 0.3, 0.1), 0.0);
        assert!(hinge_loss(0.0, 0.5, 0.1) > 0.0);
    }

    #[test]
    fn encoder_pads_and_maps_unknowns() {
        let config = tiny_config(ModelKind::QUser);
        let (ds, vocab, words, users) = tiny_setup(&config);
        let trainer = Trainer::new(config, &ds, &vocab, &words, &users).unwrap();
        let enc = TextEncoder::new(&trainer.params, TokenizeMode::Whitespace);
        let ids = enc.encode("alpha zzz");
        assert_eq!(ids.len(), 5);
        assert_eq!(ids[1], crate::corpus::UNK);
        assert_eq!(ids[2], crate::corpus::PAD);
        assert_eq!(ids[0], vocab.id("alpha").unwrap());
    }

    #[test]
    fn builds_examples_for_both_models() {
        for kind in [ModelKind::QUser, ModelKind::QAnswer] {
            let config = tiny_config(kind);
            let (ds, vocab, words, users) = tiny_setup(&config);
            let trainer = Trainer::new(config, &ds, &vocab, &words, &users).unwrap();
            assert_eq!(trainer.example_count(), 3);
            assert_eq!(trainer.build_stats.triples_total, 3);
        }
    }

    #[test]
    fn missing_answer_text_skips_or_aborts_per_flag() {
        let mut ds = tiny_dataset();
        ds.records[0].answers[1].answer_text = None;
        let vocab = Vocab::build(&[&ds], TokenizeMode::Whitespace, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let words = EmbeddingTable::random(vocab.tokens().to_vec(), 8, &mut rng).unwrap();
        let users = EmbeddingTable::random(
            vec!["ua".into(), "ub".into(), "uc".into()],
            6,
            &mut rng,
        )
        .unwrap();

        let strict = tiny_config(ModelKind::QAnswer);
        assert!(Trainer::new(strict, &ds, &vocab, &words, &users).is_err());

        let lax = TrainConfig {
            strict_ids: false,
            ..tiny_config(ModelKind::QAnswer)
        };
        let trainer = Trainer::new(lax, &ds, &vocab, &words, &users).unwrap();
        assert_eq!(trainer.build_stats.skipped_missing_answer_text, 1);
        assert_eq!(trainer.example_count(), 2);
    }

    #[test]
    fn unknown_user_skips_or_aborts_per_flag() {
        let config = tiny_config(ModelKind::QUser);
        let (ds, vocab, words, _) = tiny_setup(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        // user table missing "uc"
        let users =
            EmbeddingTable::random(vec!["ua".into(), "ub".into()], 6, &mut rng).unwrap();
        assert!(matches!(
            Trainer::new(config.clone(), &ds, &vocab, &words, &users),
            Err(Error::UnknownUser(_))
        ));
        let lax = TrainConfig {
            strict_ids: false,
            ..config
        };
        let trainer = Trainer::new(lax, &ds, &vocab, &words, &users).unwrap();
        assert_eq!(trainer.build_stats.skipped_unknown_user, 2);
        assert_eq!(trainer.example_count(), 1);
    }

    #[test]
    fn satisfied_batch_leaves_parameters_bitwise_unchanged() {
        for optimizer in [OptimizerKind::Sgd, OptimizerKind::Adam] {
            let config = TrainConfig {
                optimizer,
                ..tiny_config(ModelKind::QUser)
            };
            let (ds, vocab, words, users) = tiny_setup(&config);
            let mut trainer = Trainer::new(config, &ds, &vocab, &words, &users).unwrap();

            // craft a provably satisfied triple: with dropout 0 the train
            // forward equals the eval encoding, so aligning the positive
            // row with it (cosine 1) and the negative row against it
            // (cosine -1) clears any margin < 2
            let enc = TextEncoder::new(&trainer.params, TokenizeMode::Whitespace);
            let q = enc.encode("alpha beta");
            let q_out = crate::model::encode_eval(&q, &trainer.params)
                .unwrap()
                .vector;
            trainer.params.user_emb.row_mut(0).copy_from_slice(&q_out);
            let neg_row: Vec<f64> = q_out.iter().map(|v| -v).collect();
            trainer.params.user_emb.row_mut(2).copy_from_slice(&neg_row);
            let batch = vec![TrainExample::User {
                question: q,
                pos: 0,
                neg: 2,
            }];
            // snapshot parameter values only: the step may allocate or
            // zero gradient buffers, which is not a parameter change
            let snapshot = |p: &ModelParams| -> Vec<Vec<f64>> {
                let mut v = vec![p.word_emb.data().to_vec(), p.user_emb.data().to_vec()];
                v.extend(p.filters.iter().map(|t| t.data().to_vec()));
                v.extend(p.conv_bias.iter().map(|t| t.data().to_vec()));
                v.push(p.projection.data().to_vec());
                v.push(p.proj_bias.data().to_vec());
                v
            };
            let before = snapshot(&trainer.params);
            let mut opt = Optimizer::new(trainer.config.optimizer, 0.01, 0.9, 0.999, 1e-8).unwrap();
            let loss = train_step(
                &batch,
                &mut trainer.params,
                &mut opt,
                &trainer.config.clone(),
                0,
                0,
                ExecMode::Sequential,
            )
            .unwrap();
            assert_eq!(loss, 0.0, "cosine(v,v)=1 vs cosine(v,-v)=-1 must satisfy the margin");
            assert_eq!(snapshot(&trainer.params), before, "{optimizer:?} moved parameters");
        }
    }

    #[test]
    fn loss_decreases_with_training() {
        let config = TrainConfig {
            learning_rate: 0.005,
            epochs: 10,
            ..tiny_config(ModelKind::QUser)
        };
        let (ds, vocab, words, users) = tiny_setup(&config);
        let mut trainer = Trainer::new(config, &ds, &vocab, &words, &users).unwrap();
        let first = trainer.run_epoch(ExecMode::Sequential).unwrap();
        let mut last = first;
        for _ in 0..9 {
            last = trainer.run_epoch(ExecMode::Sequential).unwrap();
        }
        assert!(last < first, "loss stayed at {first} -> {last}");
    }

    #[test]
    fn training_is_deterministic_and_mode_independent() {
        for kind in [ModelKind::QUser, ModelKind::QAnswer] {
            let config = TrainConfig {
                dropout_rate: 0.5,
                epochs: 2,
                ..tiny_config(kind)
            };
            let (ds, vocab, words, users) = tiny_setup(&config);
            let run = |mode: ExecMode| {
                let mut t =
                    Trainer::new(config.clone(), &ds, &vocab, &words, &users).unwrap();
                let mut losses = Vec::new();
                for _ in 0..2 {
                    losses.push(t.run_epoch(mode).unwrap());
                }
                (losses, t.params)
            };
            let (loss_seq, params_seq) = run(ExecMode::Sequential);
            let (loss_par, params_par) = run(ExecMode::Parallel);
            assert_eq!(loss_seq, loss_par);
            assert_eq!(params_seq, params_par);
        }
    }

    #[test]
    fn frozen_user_table_stays_put_and_finetuned_moves() {
        for fine_tune in [false, true] {
            let config = TrainConfig {
                fine_tune_users: fine_tune,
                learning_rate: 0.05,
                ..tiny_config(ModelKind::QUser)
            };
            let (ds, vocab, words, users) = tiny_setup(&config);
            let mut trainer = Trainer::new(config, &ds, &vocab, &words, &users).unwrap();
            let before = trainer.params.user_emb.data().to_vec();
            trainer.run_epoch(ExecMode::Sequential).unwrap();
            let moved = trainer.params.user_emb.data() != before.as_slice();
            assert_eq!(moved, fine_tune);
        }
    }

    fn flat_tensors(p: &ModelParams) -> Vec<&crate::nn::Tensor> {
        // fixed flattening order shared by the helpers below
        let mut v = vec![&p.word_emb, &p.user_emb];
        v.extend(p.filters.iter());
        v.extend(p.conv_bias.iter());
        v.push(&p.projection);
        v.push(&p.proj_bias);
        v
    }

    fn read_flat(p: &ModelParams) -> Vec<f64> {
        flat_tensors(p)
            .into_iter()
            .flat_map(|t| t.data().to_vec())
            .collect()
    }

    fn read_flat_grads(p: &ModelParams) -> Vec<f64> {
        flat_tensors(p)
            .into_iter()
            .flat_map(|t| t.grad().map_or_else(|| vec![0.0; t.numel()], |g| g.to_vec()))
            .collect()
    }

    fn write_flat(p: &mut ModelParams, flat: &[f64]) {
        let mut at = 0;
        let mut write = |t: &mut crate::nn::Tensor| {
            let n = t.numel();
            t.data_mut().copy_from_slice(&flat[at..at + n]);
            at += n;
        };
        write(&mut p.word_emb);
        write(&mut p.user_emb);
        for t in &mut p.filters {
            write(t);
        }
        for t in &mut p.conv_bias {
            write(t);
        }
        write(&mut p.projection);
        write(&mut p.proj_bias);
        assert_eq!(at, flat.len());
    }

    fn triple_loss(
        p: &ModelParams,
        kind: ModelKind,
        q: &[usize],
        pos_ids: &[usize],
        neg_ids: &[usize],
        margin: f64,
    ) -> crate::error::Result<f64> {
        let qe = crate::model::encode_eval(q, p)?.vector;
        let (s_pos, s_neg) = match kind {
            ModelKind::QUser => (
                cosine(&qe, p.user_emb.row(0))?,
                cosine(&qe, p.user_emb.row(2))?,
            ),
            ModelKind::QAnswer => (
                cosine(&qe, &crate::model::encode_eval(pos_ids, p)?.vector)?,
                cosine(&qe, &crate::model::encode_eval(neg_ids, p)?.vector)?,
            ),
        };
        Ok(hinge_loss(s_pos, s_neg, margin))
    }

    #[test]
    fn full_pipeline_gradient_matches_finite_differences() {
        use crate::nn::grad_check;
        for kind in [ModelKind::QUser, ModelKind::QAnswer] {
            let config = TrainConfig {
                margin: 10.0, // keeps the hinge strictly in its linear region
                fine_tune_users: true,
                dropout_rate: 0.0,
                ..tiny_config(kind)
            };
            let (ds, vocab, words, users) = tiny_setup(&config);
            let trainer = Trainer::new(config.clone(), &ds, &vocab, &words, &users).unwrap();
            let mut params = trainer.params;

            // fill every position with a real token: an all-zero PAD row
            // would park pre-activations exactly on the ReLU kink, where
            // finite differences are one-sided and the comparison invalid
            let (q, pos_ids, neg_ids) = {
                let enc = TextEncoder::new(&params, TokenizeMode::Whitespace);
                (
                    enc.encode("alpha beta gamma alpha beta"),
                    enc.encode("alpha alpha delta beta gamma"),
                    enc.encode("delta beta alpha gamma delta"),
                )
            };
            assert!(!q.contains(&crate::corpus::PAD));

            // analytic gradients of the (linear-region) hinge loss
            params.zero_grads();
            let mut dummy = ChaCha8Rng::seed_from_u64(0);
            let trace_q = forward_trace(&q, &params, Mode::Eval, &mut dummy).unwrap();
            match kind {
                ModelKind::QUser => {
                    let (dq_p, du_p) =
                        cosine_backward(&trace_q.output, params.user_emb.row(0), -1.0);
                    let (dq_n, du_n) =
                        cosine_backward(&trace_q.output, params.user_emb.row(2), 1.0);
                    let dq: Vec<f64> = dq_p.iter().zip(&dq_n).map(|(a, b)| a + b).collect();
                    crate::model::backward(&trace_q, &mut params, &dq).unwrap();
                    accumulate_row(&mut params, 0, &du_p);
                    accumulate_row(&mut params, 2, &du_n);
                }
                ModelKind::QAnswer => {
                    let trace_p =
                        forward_trace(&pos_ids, &params, Mode::Eval, &mut dummy).unwrap();
                    let trace_n =
                        forward_trace(&neg_ids, &params, Mode::Eval, &mut dummy).unwrap();
                    let (dq_p, da_p) = cosine_backward(&trace_q.output, &trace_p.output, -1.0);
                    let (dq_n, da_n) = cosine_backward(&trace_q.output, &trace_n.output, 1.0);
                    let dq: Vec<f64> = dq_p.iter().zip(&dq_n).map(|(a, b)| a + b).collect();
                    crate::model::backward(&trace_q, &mut params, &dq).unwrap();
                    crate::model::backward(&trace_p, &mut params, &da_p).unwrap();
                    crate::model::backward(&trace_n, &mut params, &da_n).unwrap();
                }
            }
            let analytic = read_flat_grads(&params);
            let mut flat = read_flat(&params);
            assert!(
                triple_loss(&params, kind, &q, &pos_ids, &neg_ids, config.margin).unwrap() > 0.0
            );

            let template = params.clone();
            let err = grad_check(
                |p| {
                    let mut probe = template.clone();
                    write_flat(&mut probe, p);
                    triple_loss(&probe, kind, &q, &pos_ids, &neg_ids, config.margin)
                },
                &mut flat,
                &analytic,
                1e-5,
            )
            .unwrap();
            assert!(err < 1e-4, "{kind:?}: worst relative error {err}");
        }
    }

    #[test]
    fn early_stopping_waits_out_patience_then_restores_best() {
        // with a vanishing learning rate dev accuracy never improves after
        // epoch 1, so fit must stop after patience more epochs
        let config = TrainConfig {
            epochs: 20,
            patience: 3,
            learning_rate: 1e-13,
            ..tiny_config(ModelKind::QUser)
        };
        let (ds, vocab, words, users) = tiny_setup(&config);
        let mut trainer = Trainer::new(config, &ds, &vocab, &words, &users).unwrap();
        let summary = trainer
            .fit(Some((&ds, 2, 7)), None, ExecMode::Sequential)
            .unwrap();
        assert_eq!(summary.best_epoch, Some(1));
        assert_eq!(summary.epochs_run, 4, "1 best + 3 patience epochs");
        assert_eq!(summary.dev_curve.len(), 4);
        assert!(summary.best_dev_top1.is_some());
    }

    #[test]
    fn metrics_log_has_one_line_per_epoch() {
        let config = TrainConfig {
            epochs: 3,
            ..tiny_config(ModelKind::QUser)
        };
        let (ds, vocab, words, users) = tiny_setup(&config);
        let mut trainer = Trainer::new(config, &ds, &vocab, &words, &users).unwrap();
        let mut buf: Vec<u8> = Vec::new();
        let summary = trainer
            .fit(None, Some(&mut buf), ExecMode::Sequential)
            .unwrap();
        assert_eq!(summary.epochs_run, 3);
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        for (i, line) in lines.iter().enumerate() {
            let fields: Vec<&str> = line.split('\t').collect();
            assert_eq!(fields.len(), 3);
            assert_eq!(fields[0], (i + 1).to_string());
            assert!(fields[1].parse::<f64>().is_ok());
            assert_eq!(fields[2], "NA");
        }
    }
}
