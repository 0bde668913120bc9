//! Question decomposition: one LLM call that splits a compound question
//! into independently answerable sub-questions.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::llm::parse::parse_subquestion_list;
use crate::llm::{Gateway, RoleTag};
use crate::table::NlSchema;

pub const DEFAULT_MAX_SUBQUESTIONS: usize = 4;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubQuestion {
    pub text: String,
    pub index: usize,
    pub parent_question: String,
}

/// Split `question` into sub-questions. Parsing failures and empty lists
/// degrade to a singleton containing the original question; the list is
/// truncated to `max_subquestions`.
pub fn decompose(
    question: &str,
    schema: &NlSchema,
    gateway: &Gateway,
    max_subquestions: usize,
) -> Result<Vec<SubQuestion>> {
    let exchange = gateway.complete(
        RoleTag::Decompose,
        &[
            ("schema", schema.render()),
            ("question", question.to_string()),
        ],
    )?;
    let mut texts = parse_subquestion_list(&exchange.response, question);
    texts.truncate(max_subquestions.max(1));
    Ok(texts
        .into_iter()
        .enumerate()
        .map(|(index, text)| SubQuestion {
            text,
            index,
            parent_question: question.to_string(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{LlmBackend, PromptCatalog, ScriptedBackend};
    use std::sync::Arc;

    fn gateway(response: &'static str) -> Gateway {
        let backend: Arc<dyn LlmBackend> =
            Arc::new(ScriptedBackend::new(vec![Box::new(move |_, _| {
                Some(response.to_string())
            })]));
        Gateway::new(backend, Arc::new(PromptCatalog::builtin()), 22)
    }

    fn schema() -> NlSchema {
        NlSchema {
            table_name: "t".into(),
            headers: vec![("a".into(), crate::table::ValueType::Integer)],
            value_examples: "a\n1".into(),
        }
    }

    #[test]
    fn splits_into_indexed_subquestions() {
        let gw = gateway("```python\nsubquestions = [\"x?\", \"y?\"]\n```");
        let subs = decompose("x and y?", &schema(), &gw, 4).unwrap();
        assert_eq!(subs.len(), 2);
        assert_eq!(subs[0].index, 0);
        assert_eq!(subs[1].text, "y?");
        assert_eq!(subs[1].parent_question, "x and y?");
    }

    #[test]
    fn unparseable_response_degrades_to_original() {
        let gw = gateway("I cannot help with that.");
        let subs = decompose("the question?", &schema(), &gw, 4).unwrap();
        assert_eq!(subs.len(), 1);
        assert_eq!(subs[0].text, "the question?");
    }

    #[test]
    fn truncates_to_cap() {
        let gw = gateway("subquestions = [\"a\", \"b\", \"c\", \"d\", \"e\", \"f\"]");
        let subs = decompose("q", &schema(), &gw, 4).unwrap();
        assert_eq!(subs.len(), 4);
    }

    #[test]
    fn costs_exactly_one_call() {
        let gw = gateway("subquestions = [\"a\"]");
        decompose("q", &schema(), &gw, 4).unwrap();
        assert_eq!(gw.calls_used(), 1);
    }
}
