//! Top-1 evaluation over fixed-size candidate pools, plus the ranking
//! primitive the CLI exposes directly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{sample_candidate_pool, CandidatePool, Dataset, QuestionRecord, TokenizeMode};
use crate::error::{Error, Result};
use crate::exec::{map_indexed, ExecMode};
use crate::model::{encode_eval, ModelParams};
use crate::nn::cosine;
use crate::seeds;
use crate::train::TextEncoder;

/// One scored candidate. For user ranking `user_id` is the user key; for
/// answer ranking it is an answer label of the form `user@question#index`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub user_id: String,
    pub score: f64,
}

/// Score every pool candidate against the question and sort best-first.
/// The question is encoded once; candidates absent from the user table are
/// excluded; ties break toward the lexicographically smaller user id.
pub fn rank_candidates(
    q_ids: &[usize],
    pool: &CandidatePool,
    params: &ModelParams,
) -> Result<Vec<RankedCandidate>> {
    let encoding = encode_eval(q_ids, params)?;
    let mut ranked: Vec<RankedCandidate> = Vec::with_capacity(pool.candidates.len());
    for user in &pool.candidates {
        let Some(row) = params.user_id(user) else {
            continue;
        };
        let score = cosine(&encoding.vector, params.user_emb.row(row))?;
        ranked.push(RankedCandidate {
            user_id: user.clone(),
            score,
        });
    }
    sort_ranked(&mut ranked);
    Ok(ranked)
}

fn sort_ranked(ranked: &mut [RankedCandidate]) {
    ranked.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.user_id.cmp(&b.user_id))
    });
}

/// Per-question ranking detail, kept when the caller asks for a dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRanking {
    pub question_id: String,
    pub gold: String,
    pub hit: bool,
    pub ranked: Vec<RankedCandidate>,
}

/// Aggregate Top-1 accuracy over one split. Skipped questions stay on the
/// books: a tied top vote or an unresolvable gold never silently shrinks
/// the denominator story.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: String,
    pub k: usize,
    /// Questions actually scored (skips excluded).
    pub questions: usize,
    pub skipped_tied_gold: usize,
    pub skipped_missing_gold: usize,
    pub top1_accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rankings: Option<Vec<QuestionRanking>>,
}

impl EvalReport {
    /// Stable text rendering: a key/value header, then (with a dump) one
    /// line per ranked candidate.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("split\t{}\n", self.split));
        out.push_str(&format!("k\t{}\n", self.k));
        out.push_str(&format!("questions\t{}\n", self.questions));
        out.push_str(&format!("skipped_tied_gold\t{}\n", self.skipped_tied_gold));
        out.push_str(&format!(
            "skipped_missing_gold\t{}\n",
            self.skipped_missing_gold
        ));
        out.push_str(&format!("top1_accuracy\t{}\n", self.top1_accuracy));
        if let Some(rankings) = &self.rankings {
            out.push_str("question\tgold\trank\tcandidate\tscore\n");
            for r in rankings {
                for (i, c) in r.ranked.iter().enumerate() {
                    out.push_str(&format!(
                        "{}\t{}\t{}\t{}\t{}\n",
                        r.question_id,
                        r.gold,
                        i + 1,
                        c.user_id,
                        c.score
                    ));
                }
            }
        }
        out
    }
}

enum Outcome {
    Scored(QuestionRanking),
    SkipTie,
    SkipMissingGold,
}

fn aggregate(
    split: String,
    k: usize,
    outcomes: Vec<Result<Outcome>>,
    dump: bool,
) -> Result<EvalReport> {
    let mut report = EvalReport {
        split,
        k,
        questions: 0,
        skipped_tied_gold: 0,
        skipped_missing_gold: 0,
        top1_accuracy: 0.0,
        rankings: dump.then(Vec::new),
    };
    let mut hits = 0usize;
    for outcome in outcomes {
        match outcome? {
            Outcome::Scored(r) => {
                report.questions += 1;
                if r.hit {
                    hits += 1;
                }
                if let Some(rankings) = &mut report.rankings {
                    rankings.push(r);
                }
            }
            Outcome::SkipTie => report.skipped_tied_gold += 1,
            Outcome::SkipMissingGold => report.skipped_missing_gold += 1,
        }
    }
    if report.questions == 0 {
        return Err(Error::EmptyDataset);
    }
    report.top1_accuracy = hits as f64 / report.questions as f64;
    Ok(report)
}

/// Generic pool walker: candidate pools are derived purely from
/// `(seed, question_id)`, so any two runs (and any execution mode) see the
/// same pools, and `ranker` supplies the ordering. Questions with a tied
/// top vote or a gold user outside `users` are skipped and counted.
pub fn evaluate_top1_by<F>(
    dataset: &Dataset,
    users: &[String],
    k: usize,
    seed: u64,
    ranker: F,
    dump: bool,
    mode: ExecMode,
) -> Result<EvalReport>
where
    F: Fn(&QuestionRecord, &CandidatePool) -> Result<Vec<RankedCandidate>> + Sync,
{
    if dataset.records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let outcomes = map_indexed(mode, dataset.records.len(), |i| {
        let record = &dataset.records[i];
        let gold = match record.gold_user() {
            Ok(g) => g,
            Err(Error::TiedTopVote(_)) => return Ok(Outcome::SkipTie),
            Err(e) => return Err(e),
        };
        if !users.iter().any(|u| u == gold) {
            return Ok(Outcome::SkipMissingGold);
        }
        let mut rng =
            ChaCha8Rng::seed_from_u64(seeds::mix_str(seed, &record.question_id));
        let pool = sample_candidate_pool(record, users, k, &mut rng)?;
        let ranked = ranker(record, &pool)?;
        let Some(top) = ranked.first() else {
            return Err(Error::EmptyInput(format!(
                "ranking for question {:?} is empty",
                record.question_id
            )));
        };
        Ok(Outcome::Scored(QuestionRanking {
            question_id: record.question_id.clone(),
            gold: gold.to_string(),
            hit: top.user_id == gold,
            ranked,
        }))
    });
    aggregate(dataset.split.to_string(), k, outcomes, dump)
}

/// Model-scored Top-1 over user pools: for each question, the gold user
/// plus `k - 1` distractors drawn without replacement from the model's
/// user table, ranked by cosine against the question encoding.
pub fn evaluate_top1(
    params: &ModelParams,
    dataset: &Dataset,
    tokenize_mode: TokenizeMode,
    k: usize,
    seed: u64,
    dump: bool,
    mode: ExecMode,
) -> Result<EvalReport> {
    let mut users = params.user_keys().to_vec();
    users.sort_unstable();
    let encoder = TextEncoder::new(params, tokenize_mode);
    evaluate_top1_by(
        dataset,
        &users,
        k,
        seed,
        |record, pool| rank_candidates(&encoder.encode(&record.text), pool, params),
        dump,
        mode,
    )
}

/// Model-scored Top-1 over answer pools, for the answer-ranking model:
/// each question's pool holds the gold user's best answer text plus
/// `k - 1` answers sampled from other questions, all encoded by the same
/// tower as the question. Candidate labels read `user@question#index`.
pub fn evaluate_answers_top1(
    params: &ModelParams,
    dataset: &Dataset,
    tokenize_mode: TokenizeMode,
    k: usize,
    seed: u64,
    dump: bool,
    mode: ExecMode,
) -> Result<EvalReport> {
    if dataset.records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if k < 1 {
        return Err(Error::InvalidConfig(
            "candidate pools need k >= 1".into(),
        ));
    }
    let encoder = TextEncoder::new(params, tokenize_mode);

    struct Candidate {
        question: usize,
        label: String,
        ids: Vec<usize>,
    }
    let mut all: Vec<Candidate> = Vec::new();
    for (qi, record) in dataset.records.iter().enumerate() {
        for (ai, answer) in record.answers.iter().enumerate() {
            if let Some(text) = &answer.answer_text {
                all.push(Candidate {
                    question: qi,
                    label: format!("{}@{}#{}", answer.user_id, record.question_id, ai),
                    ids: encoder.encode(text),
                });
            }
        }
    }

    let outcomes = map_indexed(mode, dataset.records.len(), |qi| {
        let record = &dataset.records[qi];
        let gold_user = match record.gold_user() {
            Ok(g) => g,
            Err(Error::TiedTopVote(_)) => return Ok(Outcome::SkipTie),
            Err(e) => return Err(e),
        };
        // the gold candidate is the gold user's top-voted answer with text
        let gold_answer = record
            .answers
            .iter()
            .enumerate()
            .filter(|(_, a)| a.user_id == gold_user && a.answer_text.is_some())
            .max_by(|(ia, a), (ib, b)| a.votes.cmp(&b.votes).then(ib.cmp(ia)));
        let Some((gold_idx, _)) = gold_answer else {
            return Ok(Outcome::SkipMissingGold);
        };
        let gold_label = format!("{}@{}#{}", gold_user, record.question_id, gold_idx);

        let fillers: Vec<usize> = (0..all.len())
            .filter(|&ci| all[ci].question != qi)
            .collect();
        let mut rng =
            ChaCha8Rng::seed_from_u64(seeds::mix_str(seed, &record.question_id));
        use rand::seq::SliceRandom;
        let mut chosen: Vec<usize> = fillers
            .choose_multiple(&mut rng, k - 1)
            .copied()
            .collect();
        let gold_pos = all
            .iter()
            .position(|c| c.label == gold_label)
            .expect("gold answer text was indexed");
        chosen.push(gold_pos);
        chosen.shuffle(&mut rng);

        let encoding = encode_eval(&encoder.encode(&record.text), params)?;
        let mut ranked = Vec::with_capacity(chosen.len());
        for ci in &chosen {
            let candidate = &all[*ci];
            let candidate_encoding = encode_eval(&candidate.ids, params)?;
            ranked.push(RankedCandidate {
                user_id: candidate.label.clone(),
                score: cosine(&encoding.vector, &candidate_encoding.vector)?,
            });
        }
        sort_ranked(&mut ranked);
        Ok(Outcome::Scored(QuestionRanking {
            question_id: record.question_id.clone(),
            gold: gold_label.clone(),
            hit: ranked[0].user_id == gold_label,
            ranked,
        }))
    });
    aggregate(dataset.split.to_string(), k, outcomes, dump)
}
