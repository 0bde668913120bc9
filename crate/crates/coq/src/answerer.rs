//! Answer generation: read a sub-answer off an execution result, then fuse
//! the sub-answers into one final answer. Both stages carry a zero-call
//! shortcut for the degenerate cases (single non-empty cell, single
//! sub-answer); strict mode disables the shortcuts so every answer passes
//! through the model.

use serde::{Deserialize, Serialize};

use crate::error::{CoqError, Result};
use crate::executor::ResultSet;
use crate::llm::parse::parse_answer_marker;
use crate::llm::{Gateway, RoleTag};
use crate::splitter::SubQuestion;
use crate::table::NlSchema;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubAnswer {
    pub subquestion: String,
    pub text: String,
    /// true when the answer was lifted straight from a single-cell result
    /// without an LLM call
    pub via_shortcut: bool,
    /// true when the budget ran out and the raw result stood in for a real
    /// answer
    pub degraded: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FinalAnswer {
    pub text: String,
    pub degraded: bool,
}

fn single_cell(result: &ResultSet) -> Option<&str> {
    if result.total_row_count == 1 && result.rows.len() == 1 && result.rows[0].len() == 1 {
        let cell = result.rows[0][0].trim();
        if !cell.is_empty() {
            return Some(cell);
        }
    }
    None
}

/// Answer one sub-question from the final execution result of its chain.
pub fn answer_sub(
    subq: &SubQuestion,
    schema: &NlSchema,
    sql: &str,
    result: &ResultSet,
    gateway: &Gateway,
    shortcuts: bool,
) -> Result<SubAnswer> {
    if shortcuts {
        if let Some(cell) = single_cell(result) {
            return Ok(SubAnswer {
                subquestion: subq.text.clone(),
                text: cell.to_string(),
                via_shortcut: true,
                degraded: false,
            });
        }
    }
    let exchange = match gateway.complete(
        RoleTag::SubAnswer,
        &[
            ("schema", schema.render()),
            ("question", subq.text.clone()),
            ("sql", sql.to_string()),
            ("result", result.to_pipe()),
        ],
    ) {
        Ok(ex) => ex,
        // out of calls: fall back to the raw result so the run can still
        // finish in a degraded state
        Err(CoqError::BudgetExhausted { .. }) => {
            return Ok(SubAnswer {
                subquestion: subq.text.clone(),
                text: single_cell(result)
                    .map(str::to_string)
                    .unwrap_or_else(|| result.to_pipe()),
                via_shortcut: true,
                degraded: true,
            });
        }
        Err(e) => return Err(e),
    };
    let (text, _) = parse_answer_marker(&exchange.response);
    Ok(SubAnswer {
        subquestion: subq.text.clone(),
        text,
        via_shortcut: false,
        degraded: false,
    })
}

/// Fuse the sub-answers into the final answer to the original question.
pub fn aggregate_final(
    question: &str,
    subanswers: &[SubAnswer],
    gateway: &Gateway,
    shortcuts: bool,
) -> Result<FinalAnswer> {
    assert!(!subanswers.is_empty(), "at least one sub-answer is required");
    if shortcuts && subanswers.len() == 1 {
        return Ok(FinalAnswer {
            text: subanswers[0].text.clone(),
            degraded: false,
        });
    }
    let subquestions = subanswers
        .iter()
        .enumerate()
        .map(|(i, sa)| format!("{}. {}", i + 1, sa.subquestion))
        .collect::<Vec<_>>()
        .join("\n");
    let answers = subanswers
        .iter()
        .enumerate()
        .map(|(i, sa)| format!("{}. {}", i + 1, sa.text))
        .collect::<Vec<_>>()
        .join("\n");
    let exchange = match gateway.complete(
        RoleTag::FinalAnswer,
        &[
            ("question", question.to_string()),
            ("subquestions", subquestions),
            ("subanswers", answers),
        ],
    ) {
        Ok(ex) => ex,
        Err(CoqError::BudgetExhausted { .. }) => {
            // degrade to the joined sub-answers
            return Ok(FinalAnswer {
                text: subanswers
                    .iter()
                    .map(|sa| sa.text.as_str())
                    .collect::<Vec<_>>()
                    .join("; "),
                degraded: true,
            });
        }
        Err(e) => return Err(e),
    };
    let (text, _) = parse_answer_marker(&exchange.response);
    Ok(FinalAnswer {
        text,
        degraded: false,
    })
}
