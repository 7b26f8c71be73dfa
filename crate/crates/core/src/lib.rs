//! Post-retrieval reasoning toolkit for Graph-RAG question answering.
//!
//! - [`graph`]: knowledge graph loaded from indexer JSONL output
//! - [`context`]: retrieved context sections, canonical rendering, token counting
//! - [`seeds`]: question-entity anchoring by string heuristics
//! - [`walk`]: BFS/co-occurrence graph walk and budgeted context assembly
//! - [`prompt`]: baseline, SPARQL CoT, generic CoT and router prompts; reply parsing
//! - [`gateway`]: chat-completion providers (HTTP, scripted stub) with retries
//! - [`eval`]: SQuAD-style metrics, judged accuracy, coverage, error decomposition
//! - [`pipeline`]: sampling, run configurations, routing, report emission

pub mod context;
pub mod error;
pub mod eval;
pub mod gateway;
pub mod graph;
pub mod jsonl;
pub mod pipeline;
pub mod prompt;
pub mod seeds;
pub mod walk;

pub use error::{Error, Result};
