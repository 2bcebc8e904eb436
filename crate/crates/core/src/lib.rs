//! Expert-ranking engine for community question answering.
//!
//! Scores (question, answerer) pairs by embedding historical answerers of a
//! site into a vector space (random-walk embeddings over the co-answer
//! graph) and encoding question text with a small convolutional tower, then
//! ranking candidate users by cosine similarity. A sibling text-vs-text
//! model ranks candidate answer texts with a shared tower so the two
//! approaches can be compared on the same data.

pub mod checkpoint;
pub mod corpus;
pub mod embed;
pub mod error;
pub mod eval;
pub mod exec;
pub mod grid;
pub mod model;
pub mod nn;
pub mod seeds;
pub mod train;

pub use error::{Error, Result};
pub use exec::ExecMode;
