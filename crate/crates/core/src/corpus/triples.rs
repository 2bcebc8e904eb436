//! Training triples (question, better answerer, worse answerer) and
//! candidate pools for ranking evaluation.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, QuestionRecord};
use crate::error::{Error, Result};

/// One pairwise training example: on `question_id`, `pos_user_id` received
/// strictly more votes than `neg_user_id`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triple {
    pub question_id: String,
    pub pos_user_id: String,
    pub neg_user_id: String,
}

/// A question with a shuffled list of candidate users, exactly one of whom
/// (at `gold_index`) is the question's highest-vote answerer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidatePool {
    pub question_id: String,
    pub candidates: Vec<String>,
    pub gold_index: usize,
}

/// Distinct answerers of a question with each user's best vote count,
/// in descending vote order (ties by user id, for determinism).
fn ranked_answerers(record: &QuestionRecord) -> Vec<(&str, u64)> {
    let mut best: Vec<(&str, u64)> = Vec::new();
    for ans in &record.answers {
        match best.iter_mut().find(|(u, _)| *u == ans.user_id) {
            Some(entry) => entry.1 = entry.1.max(ans.votes),
            None => best.push((&ans.user_id, ans.votes)),
        }
    }
    best.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    best
}

/// Emit pairwise triples for every question in a training split.
///
/// Each question contributes one triple per ordered answerer pair with a
/// strict vote gap, keeping at most `max_pairs_per_question` pairs with the
/// largest gaps (ties by user ids). Vote ties never form a pair. The
/// combined list is shuffled with `rng`, so the order — and therefore the
/// whole training run — is reproducible from the seed.
pub fn make_triples<R: Rng>(
    dataset: &Dataset,
    max_pairs_per_question: usize,
    rng: &mut R,
) -> Vec<Triple> {
    let mut triples = Vec::new();
    for record in &dataset.records {
        let ranked = ranked_answerers(record);
        let mut pairs: Vec<(u64, &str, &str)> = Vec::new();
        for (i, &(pos, pos_votes)) in ranked.iter().enumerate() {
            for &(neg, neg_votes) in &ranked[i + 1..] {
                if pos_votes > neg_votes {
                    pairs.push((pos_votes - neg_votes, pos, neg));
                }
            }
        }
        pairs.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| (a.1, a.2).cmp(&(b.1, b.2))));
        pairs.truncate(max_pairs_per_question);
        triples.extend(pairs.into_iter().map(|(_, pos, neg)| Triple {
            question_id: record.question_id.clone(),
            pos_user_id: pos.to_string(),
            neg_user_id: neg.to_string(),
        }));
    }
    triples.shuffle(rng);
    triples
}

/// Build a size-`k` candidate pool for one question: the gold (highest-vote)
/// answerer plus `k - 1` other users drawn uniformly without replacement,
/// shuffled together. `all_users` must be duplicate-free; passing it in a
/// fixed order (e.g. [`Dataset::user_ids`]) makes pools reproducible.
pub fn sample_candidate_pool<R: Rng>(
    question: &QuestionRecord,
    all_users: &[String],
    k: usize,
    rng: &mut R,
) -> Result<CandidatePool> {
    if k < 1 {
        return Err(Error::InvalidConfig(
            "candidate pool size must be at least 1".into(),
        ));
    }
    if k > all_users.len() {
        return Err(Error::InvalidConfig(format!(
            "candidate pool size {k} exceeds the {} known users",
            all_users.len()
        )));
    }
    let gold = question.gold_user()?.to_string();
    if !all_users.contains(&gold) {
        return Err(Error::UnknownUser(gold));
    }

    let others: Vec<&String> = all_users.iter().filter(|u| **u != gold).collect();
    let mut candidates: Vec<String> = others
        .choose_multiple(rng, k - 1)
        .map(|u| (*u).clone())
        .collect();
    candidates.push(gold.clone());
    candidates.shuffle(rng);
    let gold_index = candidates.iter().position(|u| *u == gold).expect("gold present");
    Ok(CandidatePool {
        question_id: question.question_id.clone(),
        candidates,
        gold_index,
    })
}
