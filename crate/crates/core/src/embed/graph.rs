//! Co-answer graph over users and weighted truncated random walks.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::Dataset;
use crate::error::{Error, Result};
use crate::exec::{map_indexed, ExecMode};
use crate::seeds;

/// Undirected user graph: an edge's weight counts the questions both users
/// answered. Vertices are all answerers, sorted by id, including users who
/// never co-answered (degree 0).
#[derive(Debug, Clone)]
pub struct UserGraph {
    users: Vec<String>,
    /// Per vertex: `(neighbor, weight)` sorted by neighbor index.
    adjacency: Vec<Vec<(usize, u64)>>,
}

impl UserGraph {
    /// Direct constructor from an undirected edge list (each edge given
    /// once, in either direction). Rejects self-loops, zero weights,
    /// duplicate edges, and out-of-range endpoints.
    pub fn from_edges(users: Vec<String>, edges: &[(usize, usize, u64)]) -> Result<Self> {
        let n = users.len();
        let mut adjacency = vec![Vec::new(); n];
        let mut seen = std::collections::HashSet::new();
        for &(a, b, w) in edges {
            if a >= n || b >= n {
                return Err(Error::IdOutOfRange { id: a.max(b), size: n });
            }
            if a == b {
                return Err(Error::InvalidConfig(format!("self-loop on vertex {a}")));
            }
            if w == 0 {
                return Err(Error::InvalidConfig(format!(
                    "edge ({a},{b}) has zero weight"
                )));
            }
            let key = (a.min(b), a.max(b));
            if !seen.insert(key) {
                return Err(Error::InvalidConfig(format!("duplicate edge ({a},{b})")));
            }
            adjacency[a].push((b, w));
            adjacency[b].push((a, w));
        }
        for list in &mut adjacency {
            list.sort_unstable_by_key(|&(v, _)| v);
        }
        Ok(Self { users, adjacency })
    }

    pub fn vertex_count(&self) -> usize {
        self.users.len()
    }

    pub fn users(&self) -> &[String] {
        &self.users
    }

    pub fn neighbors(&self, v: usize) -> &[(usize, u64)] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn weight(&self, a: usize, b: usize) -> Option<u64> {
        self.adjacency[a]
            .iter()
            .find(|&&(v, _)| v == b)
            .map(|&(_, w)| w)
    }
}

/// Build the co-answer graph of a training split. Users answering the same
/// question get an edge; answering together `k` times gives weight `k`.
pub fn build_user_graph(dataset: &Dataset) -> Result<UserGraph> {
    if dataset.records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let users = dataset.user_ids();
    let index: std::collections::HashMap<&str, usize> = users
        .iter()
        .enumerate()
        .map(|(i, u)| (u.as_str(), i))
        .collect();

    let mut weights: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    for rec in &dataset.records {
        let mut ids: Vec<usize> = rec
            .answers
            .iter()
            .map(|a| index[a.user_id.as_str()])
            .collect();
        ids.sort_unstable();
        ids.dedup(); // a user answering twice still co-answers once
        for (i, &a) in ids.iter().enumerate() {
            for &b in &ids[i + 1..] {
                *weights.entry((a, b)).or_insert(0) += 1;
            }
        }
    }
    let edges: Vec<(usize, usize, u64)> = weights
        .into_iter()
        .map(|((a, b), w)| (a, b, w))
        .collect();
    UserGraph::from_edges(users, &edges)
}

/// The sentences fed to skip-gram: one truncated random walk per
/// (pass, start vertex), in pass order with a shuffled vertex order inside
/// each pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalkCorpus {
    pub walks: Vec<Vec<usize>>,
    pub walk_length: usize,
    pub walks_per_vertex: usize,
    pub window: usize,
}

/// Tag mixed into the per-pass shuffle seed so it never collides with a
/// per-vertex walk stream.
const SHUFFLE_STREAM: u64 = u64::MAX;

fn weighted_step<R: Rng>(neighbors: &[(usize, u64)], rng: &mut R) -> usize {
    let total: u64 = neighbors.iter().map(|&(_, w)| w).sum();
    let mut r = rng.gen_range(0..total);
    for &(v, w) in neighbors {
        if r < w {
            return v;
        }
        r -= w;
    }
    neighbors.last().expect("nonempty").0
}

/// Generate `walks_per_vertex` truncated random walks from every vertex.
///
/// Each step moves to a neighbor with probability proportional to edge
/// weight; a degree-0 start yields the singleton walk. Every walk owns an
/// rng derived from `(seed, pass, start)` and each pass shuffles its vertex
/// order with a stream of its own, so output is identical whatever the
/// execution mode or thread count.
pub fn generate_walks(
    graph: &UserGraph,
    walks_per_vertex: usize,
    walk_length: usize,
    window: usize,
    seed: u64,
    mode: ExecMode,
) -> Result<WalkCorpus> {
    if walks_per_vertex < 1 || walk_length < 2 {
        return Err(Error::InvalidConfig(format!(
            "need walks_per_vertex >= 1 and walk_length >= 2, got {walks_per_vertex} and {walk_length}"
        )));
    }
    let n = graph.vertex_count();
    let mut starts: Vec<(u64, usize)> = Vec::with_capacity(walks_per_vertex * n);
    for pass in 0..walks_per_vertex as u64 {
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::mix(&[seed, pass, SHUFFLE_STREAM]));
        order.shuffle(&mut rng);
        starts.extend(order.into_iter().map(|v| (pass, v)));
    }

    let walks = map_indexed(mode, starts.len(), |i| {
        let (pass, start) = starts[i];
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::mix(&[seed, pass, start as u64]));
        let mut walk = Vec::with_capacity(walk_length);
        walk.push(start);
        let mut here = start;
        while walk.len() < walk_length {
            let neighbors = graph.neighbors(here);
            if neighbors.is_empty() {
                break;
            }
            here = weighted_step(neighbors, &mut rng);
            walk.push(here);
        }
        walk
    });

    Ok(WalkCorpus {
        walks,
        walk_length,
        walks_per_vertex,
        window,
    })
}
