//! Bridge-concept extraction over a commonsense knowledge graph.
//!
//! The pipeline aligns a statement to source concepts, retrieves a pruned
//! multi-hop subgraph, scores its triples with a small trainable model, routes
//! triple scores along monotone paths and selects the top bridge concepts.

pub mod codec;
pub mod encoder;
pub mod eval;
pub mod synthetic;
pub mod extractor;
pub mod kg;
pub mod subgraph;
pub mod text;
