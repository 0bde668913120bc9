//! Run configuration: one schema shared by the CLI and the library so the
//! defaults live in exactly one place.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{CoqError, Result};

pub const DEFAULT_BUDGET: u32 = 22;
pub const DEFAULT_SAMPLE_K: usize = 3;
pub const DEFAULT_ROW_LIMIT: usize = 50;
pub const DEFAULT_MAX_SUBQUESTIONS: usize = 4;
pub const DEFAULT_TIMEOUT_MS: u64 = 5_000;
/// A run needs decompose + SELECT-FROM + sufficiency + sub-answer + final.
pub const MIN_BUDGET: u32 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BackendChoice {
    /// HTTP chat-completion endpoint; key comes from COQ_API_KEY.
    Live {
        base_url: String,
        model: String,
        #[serde(default = "default_temperature")]
        temperature: f32,
        #[serde(default = "default_top_p")]
        top_p: f32,
    },
    /// Recorded exchanges from a JSONL fixture file.
    Replay { path: PathBuf },
    /// Built-in heuristic rules; offline demo and test mode.
    Scripted,
}

fn default_temperature() -> f32 {
    0.0
}

fn default_top_p() -> f32 {
    1.0
}

impl Default for BackendChoice {
    fn default() -> Self {
        BackendChoice::Scripted
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub backend: BackendChoice,
    /// Hard cap on LLM calls per question.
    pub budget: u32,
    /// Rows shown as value examples in the schema and planner samples.
    pub sample_k: usize,
    /// Rows materialized per query execution.
    pub row_limit: usize,
    pub max_subquestions: usize,
    pub parallelism: usize,
    /// Disable the zero-call shortcuts so every answer passes through the
    /// model.
    pub strict: bool,
    pub timeout_ms: u64,
    /// Directory of prompt template overrides and few-shot example blocks.
    pub prompt_dir: Option<PathBuf>,
    /// Where records.jsonl / report.json / report.txt land.
    pub out_dir: Option<PathBuf>,
    /// When recording, append exchanges to this JSONL file.
    pub record_path: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            backend: BackendChoice::default(),
            budget: DEFAULT_BUDGET,
            sample_k: DEFAULT_SAMPLE_K,
            row_limit: DEFAULT_ROW_LIMIT,
            max_subquestions: DEFAULT_MAX_SUBQUESTIONS,
            parallelism: 1,
            strict: false,
            timeout_ms: DEFAULT_TIMEOUT_MS,
            prompt_dir: None,
            out_dir: None,
            record_path: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: RunConfig =
            toml::from_str(text).map_err(|e| CoqError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.budget < MIN_BUDGET {
            return Err(CoqError::Config(format!(
                "budget must be at least {MIN_BUDGET} (got {})",
                self.budget
            )));
        }
        if self.sample_k < 1 {
            return Err(CoqError::Config("sample_k must be at least 1".into()));
        }
        if self.parallelism < 1 {
            return Err(CoqError::Config("parallelism must be at least 1".into()));
        }
        if self.row_limit < 1 {
            return Err(CoqError::Config("row_limit must be at least 1".into()));
        }
        if self.max_subquestions < 1 {
            return Err(CoqError::Config(
                "max_subquestions must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_documented_ones() {
        let c = RunConfig::default();
        assert_eq!(c.budget, 22);
        assert_eq!(c.sample_k, 3);
        assert_eq!(c.row_limit, 50);
        assert_eq!(c.max_subquestions, 4);
        assert!(!c.strict);
        assert_eq!(c.backend, BackendChoice::Scripted);
    }

    #[test]
    fn toml_round_trip_with_partial_file() {
        let c = RunConfig::from_toml(
            "budget = 10\nstrict = true\n\n[backend]\nkind = \"replay\"\npath = \"fixtures/r.jsonl\"\n",
        )
        .unwrap();
        assert_eq!(c.budget, 10);
        assert!(c.strict);
        assert_eq!(c.sample_k, 3); // untouched default
        assert!(matches!(c.backend, BackendChoice::Replay { .. }));
    }

    #[test]
    fn budget_floor_enforced() {
        let err = RunConfig::from_toml("budget = 4").unwrap_err();
        assert!(matches!(err, CoqError::Config(_)));
    }

    #[test]
    fn sample_k_floor_enforced() {
        let err = RunConfig::from_toml("sample_k = 0").unwrap_err();
        assert!(matches!(err, CoqError::Config(_)));
    }

    #[test]
    fn live_backend_decoding_defaults() {
        let c = RunConfig::from_toml(
            "[backend]\nkind = \"live\"\nbase_url = \"http://x\"\nmodel = \"m\"\n",
        )
        .unwrap();
        match c.backend {
            BackendChoice::Live {
                temperature, top_p, ..
            } => {
                assert_eq!(temperature, 0.0);
                assert_eq!(top_p, 1.0);
            }
            _ => panic!("expected live backend"),
        }
    }
}
