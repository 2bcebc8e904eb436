//! Synthetic QA data with planted expertise, used by the end-to-end tests
//! and the `synth` CLI command.
//!
//! Users are partitioned into topic blocks; the first user of each block is
//! that topic's designated expert. Every question draws its tokens from one
//! topic's disjoint keyword set (plus a configurable fraction of shared
//! noise tokens) and is answered by that topic's expert (highest votes),
//! a few other same-topic users, and lower-voted distractors from other
//! topics. The returned expert map is the ground truth for ranking.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Answer, Dataset, QuestionRecord, Split};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub topics: usize,
    pub users: usize,
    pub questions: usize,
    /// Total synthetic token inventory: split into per-topic keyword sets
    /// with one extra share reserved for the global noise pool.
    pub vocab_size: usize,
    /// Probability that a token position is filled from the noise pool
    /// instead of the question's topic keywords. Must be in [0, 1).
    pub noise_rate: f64,
    /// Same-topic answerers per question besides the expert.
    pub same_topic_answerers: usize,
    /// Lower-voted answerers drawn from other topics.
    pub distractor_answerers: usize,
    pub question_len: usize,
    pub answer_len: usize,
    /// Attach answer texts (drawn from each answerer's own topic keywords)
    /// so the answer-ranking baseline has something to read.
    pub with_answer_text: bool,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            topics: 5,
            users: 50,
            questions: 1000,
            vocab_size: 120,
            noise_rate: 0.1,
            same_topic_answerers: 1,
            distractor_answerers: 1,
            question_len: 12,
            answer_len: 12,
            with_answer_text: false,
        }
    }
}

struct Layout {
    /// Half-open user-index range per topic.
    blocks: Vec<(usize, usize)>,
    /// Keyword tokens per topic (disjoint sets).
    keywords: Vec<Vec<String>>,
    noise: Vec<String>,
    user_names: Vec<String>,
}

fn layout(cfg: &SyntheticConfig) -> Result<Layout> {
    if cfg.topics == 0 {
        return Err(Error::InvalidConfig("need at least one topic".into()));
    }
    if cfg.users < cfg.topics {
        return Err(Error::InvalidConfig(format!(
            "{} users cannot cover {} topics",
            cfg.users, cfg.topics
        )));
    }
    if !(0.0..1.0).contains(&cfg.noise_rate) {
        return Err(Error::InvalidConfig(format!(
            "noise rate must be in [0, 1), got {}",
            cfg.noise_rate
        )));
    }
    if cfg.question_len == 0 || cfg.questions == 0 {
        return Err(Error::InvalidConfig(
            "questions and question_len must be positive".into(),
        ));
    }
    let keywords_per_topic = cfg.vocab_size / (cfg.topics + 1);
    if keywords_per_topic == 0 {
        return Err(Error::InvalidConfig(format!(
            "vocab size {} is too small for {} topics plus a noise pool",
            cfg.vocab_size, cfg.topics
        )));
    }
    let noise_count = cfg.vocab_size - cfg.topics * keywords_per_topic;

    // Users are split as evenly as possible; earlier blocks absorb the
    // remainder. The block's first user is the topic expert.
    let base = cfg.users / cfg.topics;
    let extra = cfg.users % cfg.topics;
    let mut blocks = Vec::with_capacity(cfg.topics);
    let mut start = 0;
    for t in 0..cfg.topics {
        let size = base + usize::from(t < extra);
        blocks.push((start, start + size));
        start += size;
    }
    let min_block = blocks.iter().map(|(s, e)| e - s).min().unwrap();
    if min_block < 1 + cfg.same_topic_answerers {
        return Err(Error::InvalidConfig(format!(
            "smallest topic block has {min_block} users; need {} (expert + same-topic answerers)",
            1 + cfg.same_topic_answerers
        )));
    }
    if cfg.distractor_answerers > 0 && cfg.topics < 2 {
        return Err(Error::InvalidConfig(
            "distractor answerers require at least two topics".into(),
        ));
    }
    let max_block = blocks.iter().map(|(s, e)| e - s).max().unwrap();
    if cfg.users - max_block < cfg.distractor_answerers {
        return Err(Error::InvalidConfig(format!(
            "not enough off-topic users for {} distractors",
            cfg.distractor_answerers
        )));
    }

    Ok(Layout {
        blocks,
        keywords: (0..cfg.topics)
            .map(|t| (0..keywords_per_topic).map(|j| format!("k{t}_{j}")).collect())
            .collect(),
        noise: (0..noise_count).map(|j| format!("n{j}")).collect(),
        user_names: (0..cfg.users).map(|i| format!("u{i:04}")).collect(),
    })
}

fn sample_text<R: Rng>(
    keywords: &[String],
    noise: &[String],
    noise_rate: f64,
    len: usize,
    rng: &mut R,
) -> String {
    let mut tokens = Vec::with_capacity(len);
    for _ in 0..len {
        let token = if !noise.is_empty() && rng.gen_bool(noise_rate) {
            &noise[rng.gen_range(0..noise.len())]
        } else {
            &keywords[rng.gen_range(0..keywords.len())]
        };
        tokens.push(token.as_str());
    }
    tokens.join(" ")
}

/// Generate one synthetic split plus its question → expert ground truth.
/// Fully deterministic given the rng state.
pub fn generate_synthetic<R: Rng>(
    cfg: &SyntheticConfig,
    split: Split,
    rng: &mut R,
) -> Result<(Dataset, BTreeMap<String, String>)> {
    let lay = layout(cfg)?;
    let mut records = Vec::with_capacity(cfg.questions);
    let mut expert_map = BTreeMap::new();

    for i in 0..cfg.questions {
        let topic = rng.gen_range(0..cfg.topics);
        let (block_start, block_end) = lay.blocks[topic];
        let expert = block_start;

        let question_id = format!("{split}-q{i:05}");
        let text = sample_text(
            &lay.keywords[topic],
            &lay.noise,
            cfg.noise_rate,
            cfg.question_len,
            rng,
        );

        // Answerers in planted vote order: expert, same-topic users,
        // then off-topic distractors.
        let mut answerer_ids = vec![expert];
        let peers: Vec<usize> = (block_start + 1..block_end).collect();
        answerer_ids.extend(
            peers
                .choose_multiple(rng, cfg.same_topic_answerers)
                .copied(),
        );
        let outsiders: Vec<usize> = (0..cfg.users)
            .filter(|u| *u < block_start || *u >= block_end)
            .collect();
        answerer_ids.extend(
            outsiders
                .choose_multiple(rng, cfg.distractor_answerers)
                .copied(),
        );

        let mut votes = 50u64;
        let mut answers = Vec::with_capacity(answerer_ids.len());
        for (rank, &user) in answerer_ids.iter().enumerate() {
            if rank > 0 {
                votes -= 1 + rng.gen_range(0..3u64);
            }
            let answer_text = cfg.with_answer_text.then(|| {
                let user_topic = lay
                    .blocks
                    .iter()
                    .position(|&(s, e)| (s..e).contains(&user))
                    .expect("user belongs to a block");
                sample_text(
                    &lay.keywords[user_topic],
                    &lay.noise,
                    cfg.noise_rate,
                    cfg.answer_len,
                    rng,
                )
            });
            answers.push(Answer {
                user_id: lay.user_names[user].clone(),
                votes,
                answer_text,
            });
        }

        expert_map.insert(question_id.clone(), lay.user_names[expert].clone());
        records.push(QuestionRecord {
            question_id,
            text,
            answers,
        });
    }

    Ok((Dataset { split, records }, expert_map))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{tokenize, TokenizeMode};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;

    fn base_cfg() -> SyntheticConfig {
        SyntheticConfig {
            topics: 4,
            users: 20,
            questions: 400,
            vocab_size: 100,
            noise_rate: 0.1,
            same_topic_answerers: 1,
            distractor_answerers: 1,
            question_len: 12,
            answer_len: 10,
            with_answer_text: false,
        }
    }

    #[test]
    fn fewer_users_than_topics_is_rejected() {
        let cfg = SyntheticConfig {
            topics: 10,
            users: 3,
            ..base_cfg()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(generate_synthetic(&cfg, Split::Train, &mut rng).is_err());
    }

    #[test]
    fn zero_noise_keeps_each_question_inside_one_keyword_set() {
        let cfg = SyntheticConfig {
            topics: 2,
            users: 10,
            questions: 100,
            noise_rate: 0.0,
            ..base_cfg()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (ds, _) = generate_synthetic(&cfg, Split::Train, &mut rng).unwrap();
        for rec in &ds.records {
            let prefixes: std::collections::HashSet<&str> = rec
                .text
                .split(' ')
                .map(|t| t.split('_').next().unwrap())
                .collect();
            assert_eq!(prefixes.len(), 1, "question {} mixes topics", rec.question_id);
        }
    }

    #[test]
    fn planted_expert_always_has_strict_max_votes() {
        let cfg = base_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (ds, experts) = generate_synthetic(&cfg, Split::Train, &mut rng).unwrap();
        assert_eq!(ds.records.len(), cfg.questions);
        for rec in &ds.records {
            let gold = rec.gold_user().expect("no vote ties by construction");
            assert_eq!(gold, experts[&rec.question_id]);
        }
    }

    #[test]
    fn same_seed_reproduces_dataset_exactly() {
        let cfg = SyntheticConfig {
            with_answer_text: true,
            ..base_cfg()
        };
        let gen = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            generate_synthetic(&cfg, Split::Dev, &mut rng).unwrap()
        };
        let (ds_a, map_a) = gen(123);
        let (ds_b, map_b) = gen(123);
        assert_eq!(map_a, map_b);
        assert_eq!(ds_a.records, ds_b.records);
    }

    #[test]
    fn answer_texts_come_from_the_answerers_topic() {
        let cfg = SyntheticConfig {
            topics: 2,
            users: 10,
            questions: 50,
            noise_rate: 0.0,
            with_answer_text: true,
            ..base_cfg()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (ds, _) = generate_synthetic(&cfg, Split::Train, &mut rng).unwrap();
        // distractor answers (last answer of each record) should not share
        // a keyword prefix with the question text
        for rec in &ds.records {
            let q_prefix = rec.text.split('_').next().unwrap().to_string();
            let distractor = rec.answers.last().unwrap();
            let d_text = distractor.answer_text.as_ref().unwrap();
            let d_prefix = d_text.split('_').next().unwrap();
            assert_ne!(q_prefix, d_prefix, "distractor text on question topic");
        }
    }

    /// Independent sanity check that the planted topic signal is learnable:
    /// a bag-of-words nearest-centroid classifier labeled by each topic's
    /// expert should recover nearly every question's topic at 10% noise.
    #[test]
    fn nearest_centroid_recovers_topics() {
        let cfg = base_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let (ds, experts) = generate_synthetic(&cfg, Split::Train, &mut rng).unwrap();

        // token -> dense index
        let mut token_ids: HashMap<String, usize> = HashMap::new();
        let mut bags: Vec<(String, Vec<(usize, f64)>)> = Vec::new();
        for rec in &ds.records {
            let mut counts: HashMap<usize, f64> = HashMap::new();
            for tok in tokenize(&rec.text, TokenizeMode::Whitespace) {
                let next = token_ids.len();
                let id = *token_ids.entry(tok).or_insert(next);
                *counts.entry(id).or_insert(0.0) += 1.0;
            }
            let mut sparse: Vec<(usize, f64)> = counts.into_iter().collect();
            sparse.sort_unstable_by_key(|&(i, _)| i);
            bags.push((experts[&rec.question_id].clone(), sparse));
        }
        let dim = token_ids.len();

        // centroid per label
        let mut centroids: HashMap<&str, (Vec<f64>, f64)> = HashMap::new();
        for (label, bag) in &bags {
            let entry = centroids
                .entry(label)
                .or_insert_with(|| (vec![0.0; dim], 0.0));
            for &(i, c) in bag {
                entry.0[i] += c;
            }
            entry.1 += 1.0;
        }
        let centroids: Vec<(&str, Vec<f64>)> = centroids
            .into_iter()
            .map(|(label, (mut v, n))| {
                v.iter_mut().for_each(|x| *x /= n);
                (label, v)
            })
            .collect();

        let mut hits = 0usize;
        for (label, bag) in &bags {
            let mut best = (f64::NEG_INFINITY, "");
            for (c_label, c) in &centroids {
                let dot: f64 = bag.iter().map(|&(i, v)| v * c[i]).sum();
                let c_norm: f64 = c.iter().map(|x| x * x).sum::<f64>().sqrt();
                let b_norm: f64 = bag.iter().map(|&(_, v)| v * v).sum::<f64>().sqrt();
                let cos = dot / (c_norm * b_norm).max(1e-12);
                if cos > best.0 {
                    best = (cos, c_label);
                }
            }
            if best.1 == label {
                hits += 1;
            }
        }
        let accuracy = hits as f64 / bags.len() as f64;
        assert!(accuracy >= 0.99, "centroid accuracy {accuracy}");
    }
}
