//! Prompt templates with named placeholders. Built-in templates are
//! embedded at compile time; a directory of same-named files can override
//! them, and per-role few-shot examples fill the {examples} slot.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{CoqError, Result};
use crate::llm::RoleTag;

/// Placeholders a template may reference.
const PLACEHOLDERS: [&str; 10] = [
    "examples",
    "schema",
    "question",
    "sql",
    "result",
    "error",
    "subanswers",
    "subquestions",
    "row_count",
    "clause",
];

/// Instruction sentence each role's rendered prompt must contain verbatim.
/// Guards against template drift.
pub fn instruction_anchor(role: RoleTag) -> &'static str {
    match role {
        RoleTag::Decompose => "Your task is to decompose a question into subquestions.",
        RoleTag::SubAnswer => {
            "Your task is to answer a question related to a given table based on the execution result attained by running SQLite."
        }
        RoleTag::FinalAnswer => {
            "Your task is to generate a final, coherent answer by combining the provided subanswers."
        }
        RoleTag::ClauseSelectFrom => {
            "Your task is to fill in the missing column names in an incomplete SQLite query so that it extracts the columns required to interpret the question correctly."
        }
        RoleTag::ClauseWhere => {
            "Your task is to fill in the WHERE clause in an incomplete SQLite query so that it extracts a useful subset of rows that are most relevant to answering the question, even if the query is not final."
        }
        RoleTag::ClauseWithAs => {
            "Your task is to write a WITH ... AS SELECT statement that restructures the original table to enable accurate computation or aggregation (e.g., summing, grouping)."
        }
        RoleTag::ClauseAgg => {
            "Your task is to choose exactly one aggregate function from the list (COUNT, AVG, MAX, MIN, SUM) and rewrite the provided SQLite query."
        }
        RoleTag::ClauseOrderBy => {
            "Your task is to add an ORDER BY clause to the provided SQLite query."
        }
        RoleTag::PlanSufficient => {
            "Your task is to decide whether the current SQL result is sufficient to answer the question."
        }
        RoleTag::PlanWhereNeeded => {
            "Your task is to decide whether answering the question require using a SQL WHERE clause to filter rows in the table?"
        }
        RoleTag::PlanWithAsNeeded => {
            "Your task is to decide whether answering the question requires restructuring the retrieved columns with a SQL WITH ... AS statement that creates a temporary table with new or transformed columns."
        }
        RoleTag::PlanAggNeeded => {
            "Your task is to decide whether answering the question requires applying a SQL aggregate function (COUNT, AVG, MAX, MIN, SUM) to the retrieved data."
        }
        RoleTag::PlanOrderByNeeded => {
            "Your task is to decide whether answering the question requires sorting the retrieved rows with a SQL ORDER BY clause."
        }
        RoleTag::Correct => "When executing the SQLite query below, an error occurred in the",
    }
}

fn template_file_name(role: RoleTag) -> &'static str {
    match role {
        RoleTag::Decompose => "decompose.txt",
        RoleTag::ClauseSelectFrom => "clause_select_from.txt",
        RoleTag::ClauseWhere => "clause_where.txt",
        RoleTag::ClauseWithAs => "clause_with_as.txt",
        RoleTag::ClauseAgg => "clause_agg.txt",
        RoleTag::ClauseOrderBy => "clause_order_by.txt",
        RoleTag::PlanSufficient => "plan_sufficient.txt",
        RoleTag::PlanWhereNeeded => "plan_where_needed.txt",
        RoleTag::PlanWithAsNeeded => "plan_with_as_needed.txt",
        RoleTag::PlanAggNeeded => "plan_agg_needed.txt",
        RoleTag::PlanOrderByNeeded => "plan_order_by_needed.txt",
        RoleTag::Correct => "correct.txt",
        RoleTag::SubAnswer => "sub_answer.txt",
        RoleTag::FinalAnswer => "final_answer.txt",
    }
}

fn builtin_text(role: RoleTag) -> &'static str {
    match role {
        RoleTag::Decompose => include_str!("../../prompts/decompose.txt"),
        RoleTag::ClauseSelectFrom => include_str!("../../prompts/clause_select_from.txt"),
        RoleTag::ClauseWhere => include_str!("../../prompts/clause_where.txt"),
        RoleTag::ClauseWithAs => include_str!("../../prompts/clause_with_as.txt"),
        RoleTag::ClauseAgg => include_str!("../../prompts/clause_agg.txt"),
        RoleTag::ClauseOrderBy => include_str!("../../prompts/clause_order_by.txt"),
        RoleTag::PlanSufficient => include_str!("../../prompts/plan_sufficient.txt"),
        RoleTag::PlanWhereNeeded => include_str!("../../prompts/plan_where_needed.txt"),
        RoleTag::PlanWithAsNeeded => include_str!("../../prompts/plan_with_as_needed.txt"),
        RoleTag::PlanAggNeeded => include_str!("../../prompts/plan_agg_needed.txt"),
        RoleTag::PlanOrderByNeeded => include_str!("../../prompts/plan_order_by_needed.txt"),
        RoleTag::Correct => include_str!("../../prompts/correct.txt"),
        RoleTag::SubAnswer => include_str!("../../prompts/sub_answer.txt"),
        RoleTag::FinalAnswer => include_str!("../../prompts/final_answer.txt"),
    }
}

#[derive(Debug, Clone)]
pub struct PromptTemplate {
    pub role: RoleTag,
    pub text: String,
}

impl PromptTemplate {
    pub fn render(&self, bindings: &[(&str, String)]) -> Result<String> {
        let mut out = self.text.clone();
        for (name, value) in bindings {
            out = out.replace(&format!("{{{name}}}"), value);
        }
        for name in PLACEHOLDERS {
            let marker = format!("{{{name}}}");
            if out.contains(&marker) {
                return Err(CoqError::Template(format!(
                    "unbound placeholder {marker} in {} template",
                    self.role.as_str()
                )));
            }
        }
        Ok(out)
    }
}

/// All templates plus per-role few-shot example blocks.
pub struct PromptCatalog {
    templates: HashMap<RoleTag, PromptTemplate>,
    examples: HashMap<RoleTag, String>,
}

impl PromptCatalog {
    /// The embedded templates with empty few-shot slots.
    pub fn builtin() -> Self {
        let templates = RoleTag::ALL
            .iter()
            .map(|&role| {
                (
                    role,
                    PromptTemplate {
                        role,
                        text: builtin_text(role).trim_end().to_string(),
                    },
                )
            })
            .collect();
        PromptCatalog {
            templates,
            examples: HashMap::new(),
        }
    }

    /// Override templates from `<dir>/<name>.txt` and load few-shot blocks
    /// from `<dir>/<name>.examples.txt` where present.
    pub fn load_overrides(&mut self, dir: &Path) -> Result<()> {
        for &role in &RoleTag::ALL {
            let file = dir.join(template_file_name(role));
            if file.is_file() {
                let text = std::fs::read_to_string(&file)?;
                if !text.contains(instruction_anchor(role)) {
                    return Err(CoqError::Template(format!(
                        "{} is missing the {} instruction sentence",
                        file.display(),
                        role.as_str()
                    )));
                }
                self.templates.insert(
                    role,
                    PromptTemplate {
                        role,
                        text: text.trim_end().to_string(),
                    },
                );
            }
            let examples = dir.join(format!(
                "{}.examples.txt",
                template_file_name(role).trim_end_matches(".txt")
            ));
            if examples.is_file() {
                self.examples
                    .insert(role, std::fs::read_to_string(&examples)?);
            }
        }
        Ok(())
    }

    pub fn template(&self, role: RoleTag) -> &PromptTemplate {
        &self.templates[&role]
    }

    /// Render the role's template; the {examples} slot is filled from the
    /// catalog, every other placeholder from `bindings`.
    pub fn render(&self, role: RoleTag, bindings: &[(&str, String)]) -> Result<String> {
        let examples = match self.examples.get(&role) {
            Some(block) if !block.trim().is_empty() => format!("{}\n\n", block.trim_end()),
            _ => String::new(),
        };
        let mut all: Vec<(&str, String)> = vec![("examples", examples)];
        all.extend(bindings.iter().map(|(k, v)| (*k, v.clone())));
        self.template(role).render(&all)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_builtin_template_contains_its_anchor() {
        let catalog = PromptCatalog::builtin();
        for &role in &RoleTag::ALL {
            assert!(
                catalog.template(role).text.contains(instruction_anchor(role)),
                "missing anchor for {}",
                role.as_str()
            );
        }
    }

    #[test]
    fn render_fills_placeholders() {
        let catalog = PromptCatalog::builtin();
        let prompt = catalog
            .render(
                RoleTag::PlanWhereNeeded,
                &[
                    ("schema", "Table name: t".into()),
                    ("row_count", "10".into()),
                    ("question", "top 10?".into()),
                ],
            )
            .unwrap();
        assert!(prompt.contains("Total number of rows:\n10"));
        assert!(prompt.contains(instruction_anchor(RoleTag::PlanWhereNeeded)));
    }

    #[test]
    fn render_rejects_unbound_placeholder() {
        let catalog = PromptCatalog::builtin();
        let err = catalog
            .render(RoleTag::PlanWhereNeeded, &[("schema", "s".into())])
            .unwrap_err();
        assert!(matches!(err, CoqError::Template(_)));
    }

    #[test]
    fn overrides_require_anchor() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("decompose.txt"), "my own prompt {question}").unwrap();
        let mut catalog = PromptCatalog::builtin();
        let err = catalog.load_overrides(dir.path()).unwrap_err();
        assert!(matches!(err, CoqError::Template(_)));
    }

    #[test]
    fn few_shot_block_is_injected() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("plan_sufficient.examples.txt"),
            "Example 1: ...\nExample 2: ...",
        )
        .unwrap();
        let mut catalog = PromptCatalog::builtin();
        catalog.load_overrides(dir.path()).unwrap();
        let prompt = catalog
            .render(
                RoleTag::PlanSufficient,
                &[
                    ("schema", "s".into()),
                    ("question", "q".into()),
                    ("sql", "SELECT 1".into()),
                    ("result", "1".into()),
                ],
            )
            .unwrap();
        assert!(prompt.contains("Example 1: ..."));
    }
}
