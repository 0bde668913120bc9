//! Chain-of-Query: SQL-aided table question answering.
//!
//! A question about a table is decomposed into sub-questions; each
//! sub-question drives a clause-by-clause SQL chain (generate one clause,
//! execute, keep or revert) that stops as soon as the executed result is
//! sufficient; sub-answers are read off the results and fused into a final
//! answer. SQL does the mechanical retrieval, the model does the final
//! inference.

pub mod answerer;
pub mod chain;
pub mod config;
pub mod error;
pub mod eval;
pub mod executor;
pub mod llm;
pub mod orchestrator;
pub mod planner;
pub mod splitter;
pub mod table;

pub use config::{BackendChoice, RunConfig};
pub use error::{CoqError, Result};
pub use orchestrator::{run_batch, run_question, RunRecord, RunStatus};
