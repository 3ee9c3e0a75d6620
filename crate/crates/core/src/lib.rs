//! Zero-shot knowledge graph construction from free text.
//!
//! The pipeline runs in three steps: seed concepts are drawn from a topic
//! model over the corpus, an LLM extracts candidate triplets around each seed
//! from retrieved context, and a fusion pass merges aliases, resolves
//! conflicting relations per concept pair and proposes new triplets. The
//! crate also carries the pairwise link-prediction task, a graph-grounded QA
//! runner and the scoring functions used to evaluate all of them.
//!
//! Every LLM interaction goes through [`llm::LlmBackend`]; the
//! [`llm::ScriptedBackend`] replays a prompt/response transcript so that the
//! whole pipeline runs offline and deterministically.

pub mod corpus;
pub mod embed;
pub mod error;
pub mod graphusion;
pub mod kgraph;
pub mod linkpred;
pub mod llm;
pub mod metrics;
pub mod seeds;
pub mod tutorqa;

pub use error::{Error, Result};
