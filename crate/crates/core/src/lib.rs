//! Learn which objects in symbolic artworks stand for which ideas.
//!
//! Semantic-role frames mined from texts about the artworks are folded into
//! a weighted bipartite [`KnowledgeGraph`] from signifiers (depicted
//! objects) to signifieds (their meanings). Object detections are mapped
//! through the graph to meanings, and both the graph and the end-to-end
//! mapping are scored with exact, partial and semantic matching.

pub mod corpus;
pub mod detection;
pub mod embedding;
pub mod eval;
pub mod extraction;
pub mod graph;
pub mod jsonl;
pub mod term;

pub use graph::{GraphError, KnowledgeGraph};
pub use term::{Term, TermError};
