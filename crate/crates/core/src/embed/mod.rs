//! User and word embeddings: co-answer graph, truncated random walks,
//! skip-gram with negative sampling, and vector-file I/O.

mod graph;
mod skipgram;
mod table;

pub use graph::{build_user_graph, generate_walks, UserGraph, WalkCorpus};
pub use skipgram::{pair_count, train_skipgram, SkipGramConfig, SkipGramStats};
pub use table::{load_vectors, save_vectors, EmbeddingTable};

use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::error::Result;
use crate::exec::ExecMode;
use crate::seeds;

/// Walk-then-skip-gram settings for user vectors. Defaults are scaled for
/// desk-sized graphs; the user dimension default is 200.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeepWalkConfig {
    pub dim: usize,
    pub walks_per_vertex: usize,
    pub walk_length: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
}

impl Default for DeepWalkConfig {
    fn default() -> Self {
        Self {
            dim: 200,
            walks_per_vertex: 10,
            walk_length: 40,
            window: 5,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
        }
    }
}

/// Learn user vectors from an existing graph: random walks become
/// skip-gram sentences. Walk generation honors `mode`; results are
/// bitwise identical across modes.
pub fn deepwalk_from_graph(
    graph: &UserGraph,
    cfg: &DeepWalkConfig,
    seed: u64,
    mode: ExecMode,
) -> Result<(EmbeddingTable, SkipGramStats)> {
    let corpus = generate_walks(
        graph,
        cfg.walks_per_vertex,
        cfg.walk_length,
        cfg.window,
        seeds::mix(&[seed, 0x57414c4b]),
        mode,
    )?;
    let sg = SkipGramConfig {
        dim: cfg.dim,
        window: cfg.window,
        negatives: cfg.negatives,
        epochs: cfg.epochs,
        learning_rate: cfg.learning_rate,
    };
    train_skipgram(
        &corpus.walks,
        graph.users().to_vec(),
        &sg,
        seeds::mix(&[seed, 0x534b4950]),
    )
}

/// Build the co-answer graph of `dataset` and run [`deepwalk_from_graph`].
pub fn deepwalk(
    dataset: &Dataset,
    cfg: &DeepWalkConfig,
    seed: u64,
    mode: ExecMode,
) -> Result<(EmbeddingTable, SkipGramStats)> {
    let graph = build_user_graph(dataset)?;
    deepwalk_from_graph(&graph, cfg, seed, mode)
}
