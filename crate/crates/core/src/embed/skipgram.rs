//! Skip-gram with negative sampling over id sequences.
//!
//! One trainer serves two callers: random-walk corpora (user vectors) and
//! tokenized question text (word vectors). Training is single-writer and
//! sequential by design; determinism comes from per-sentence rng streams
//! and a seeded epoch shuffle.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embed::table::EmbeddingTable;
use crate::error::{Error, Result};
use crate::seeds;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkipGramConfig {
    pub dim: usize,
    /// Context positions up to `window` away on each side, clipped at
    /// sequence ends.
    pub window: usize,
    /// Negative samples per (center, context) pair.
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        Self {
            dim: 100,
            window: 5,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
        }
    }
}

impl SkipGramConfig {
    fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.window == 0 || self.negatives == 0 || self.epochs == 0 {
            return Err(Error::InvalidConfig(format!(
                "skip-gram needs positive dim/window/negatives/epochs, got {self:?}"
            )));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Per-run summary used by tests and the CLI's progress output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkipGramStats {
    /// (center, context) pairs per epoch — a structural count, identical
    /// every epoch.
    pub pairs_per_epoch: u64,
    /// Mean loss of one positive + its negatives, averaged per pair.
    pub mean_loss_per_epoch: Vec<f64>,
}

/// Structural pair count: each position pairs with its clipped window.
pub fn pair_count(corpus: &[Vec<usize>], window: usize) -> u64 {
    let mut pairs = 0u64;
    for sentence in corpus {
        let len = sentence.len();
        for i in 0..len {
            pairs += (i.min(window) + (len - 1 - i).min(window)) as u64;
        }
    }
    pairs
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `-ln sigmoid(x)`, computed as softplus(-x) to stay finite for any x.
fn neg_ln_sigmoid(x: f64) -> f64 {
    let z = -x;
    if z > 30.0 {
        z
    } else {
        z.exp().ln_1p()
    }
}

/// Cumulative table for the unigram^0.75 noise distribution.
struct NoiseTable {
    cumulative: Vec<f64>,
    total: f64,
}

impl NoiseTable {
    fn new(counts: &[u64]) -> Self {
        let mut cumulative = Vec::with_capacity(counts.len());
        let mut total = 0.0;
        for &c in counts {
            total += (c as f64).powf(0.75);
            cumulative.push(total);
        }
        Self { cumulative, total }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let r = rng.gen_range(0.0..self.total);
        self.cumulative.partition_point(|&c| c <= r)
    }
}

/// Train input/output vector pairs over `corpus`, whose ids index `keys`,
/// and return the input-side vectors keyed by `keys`.
///
/// For every center position and every in-window context position this
/// performs one positive logistic update and `negatives` noise updates,
/// with noise ids drawn from the corpus unigram distribution raised to
/// 0.75 (a draw that hits the true context is skipped, as usual).
pub fn train_skipgram(
    corpus: &[Vec<usize>],
    keys: Vec<String>,
    cfg: &SkipGramConfig,
    seed: u64,
) -> Result<(EmbeddingTable, SkipGramStats)> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::EmptyInput("skip-gram corpus has no sentences".into()));
    }
    let n = keys.len();
    let mut counts = vec![0u64; n];
    for sentence in corpus {
        for &id in sentence {
            if id >= n {
                return Err(Error::IdOutOfRange { id, size: n });
            }
            counts[id] += 1;
        }
    }
    let noise = NoiseTable::new(&counts);
    let dim = cfg.dim;

    let mut init_rng = ChaCha8Rng::seed_from_u64(seeds::mix(&[seed, 0x494e4954]));
    let mut input = EmbeddingTable::random(keys, dim, &mut init_rng)?;
    let mut output = vec![0.0f64; n * dim];

    let pairs_per_epoch = pair_count(corpus, cfg.window);
    let mut mean_loss_per_epoch = Vec::with_capacity(cfg.epochs);
    let mut e_buf = vec![0.0f64; dim];

    for epoch in 0..cfg.epochs as u64 {
        let mut order: Vec<usize> = (0..corpus.len()).collect();
        let mut order_rng = ChaCha8Rng::seed_from_u64(seeds::mix(&[seed, epoch, 0x4f524445]));
        order.shuffle(&mut order_rng);

        let mut loss_sum = 0.0;
        let mut pairs_seen = 0u64;
        for &si in &order {
            let sentence = &corpus[si];
            let mut rng = ChaCha8Rng::seed_from_u64(seeds::mix(&[seed, epoch, si as u64]));
            for (i, &center) in sentence.iter().enumerate() {
                let lo = i.saturating_sub(cfg.window);
                let hi = (i + cfg.window).min(sentence.len() - 1);
                for j in lo..=hi {
                    if j == i {
                        continue;
                    }
                    let context = sentence[j];
                    pairs_seen += 1;
                    e_buf.iter_mut().for_each(|x| *x = 0.0);
                    let mut pair_loss = 0.0;
                    for k in 0..=cfg.negatives {
                        let (target, label) = if k == 0 {
                            (context, 1.0)
                        } else {
                            let t = noise.sample(&mut rng);
                            if t == context {
                                continue;
                            }
                            (t, 0.0)
                        };
                        let v = input.row(center);
                        let u = &mut output[target * dim..(target + 1) * dim];
                        let score: f64 = crate::nn::dot(v, u);
                        pair_loss += if label > 0.5 {
                            neg_ln_sigmoid(score)
                        } else {
                            neg_ln_sigmoid(-score)
                        };
                        let g = (label - sigmoid(score)) * cfg.learning_rate;
                        for d in 0..dim {
                            e_buf[d] += g * u[d];
                            u[d] += g * v[d];
                        }
                    }
                    let v = input.row_mut(center);
                    for d in 0..dim {
                        v[d] += e_buf[d];
                    }
                    loss_sum += pair_loss;
                }
            }
        }
        debug_assert_eq!(pairs_seen, pairs_per_epoch);
        mean_loss_per_epoch.push(if pairs_seen == 0 {
            0.0
        } else {
            loss_sum / pairs_seen as f64
        });
    }

    Ok((
        input,
        SkipGramStats {
            pairs_per_epoch,
            mean_loss_per_epoch,
        },
    ))
}
