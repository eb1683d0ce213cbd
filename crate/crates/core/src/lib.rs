//! Temporal question answering over drifting document corpora.
//!
//! The crate is organised around the life of a benchmark question:
//!
//! - [`model`] holds the shared domain types and the benchmark JSON reader/writer.
//! - [`ingest`] cleans raw page dumps and verifies that evidence contains the answer.
//! - [`snapshot`] chooses dated evidence (closest, latest, cumulative) for a question year.
//! - [`retrieval`] chunks, embeds and ranks evidence by cosine similarity.
//! - [`kb`] is the temporal fact store used by the knowledge-organization pipeline.
//! - [`llm`] talks to chat-completion backends and renders the task prompts.
//! - [`pipeline`] runs zero-shot, in-context, retrieval-augmented and
//!   knowledge-organization inference over a corpus.
//! - [`eval`] scores predictions and renders result tables.
//!
//! Data-parallel loops go through [`exec::Exec`], which uses rayon when the
//! `parallel` feature is enabled and falls back to plain iteration otherwise.

pub mod eval;
pub mod exec;
pub mod ingest;
pub mod kb;
pub mod llm;
pub mod model;
pub mod pipeline;
pub mod retrieval;
pub mod snapshot;

pub use exec::Exec;
pub use model::{normalize_key, BenchmarkEvent, EvidenceBundle, GoldAnswer, TemporalFact};
