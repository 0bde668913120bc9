//! Per-subquestion control flow: after every validated chain state, decide
//! whether the current execution result already suffices, and if not, which
//! clause kind to add next.

use serde::{Deserialize, Serialize};

use crate::chain::{ClauseKind, QueryChain};
use crate::error::{CoqError, Result};
use crate::executor::ResultSet;
use crate::llm::parse::parse_yes_no;
use crate::llm::{Gateway, RoleTag};
use crate::splitter::SubQuestion;
use crate::table::NlSchema;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlanDecision {
    Add(ClauseKind),
    Stop,
    /// Budget ran out mid-decision; treated as Stop by the chain, but the
    /// run is marked degraded.
    Exhausted,
}

fn need_check_role(kind: ClauseKind) -> RoleTag {
    match kind {
        ClauseKind::Where => RoleTag::PlanWhereNeeded,
        ClauseKind::WithAs => RoleTag::PlanWithAsNeeded,
        ClauseKind::Aggregate => RoleTag::PlanAggNeeded,
        ClauseKind::OrderBy => RoleTag::PlanOrderByNeeded,
        ClauseKind::SelectFrom => unreachable!("SELECT-FROM is never a planner candidate"),
    }
}

/// Decide the next move. Sufficiency is checked first (one call); a Yes
/// stops the chain. Otherwise the not-yet-applied extension kinds are
/// probed in a fixed order and the first affirmative wins. No affirmative,
/// an unparseable verdict, or an exhausted budget all mean Stop — the
/// pipeline degrades to whatever the chain retrieved so far.
pub fn decide(
    chain: &QueryChain,
    result: &ResultSet,
    subq: &SubQuestion,
    schema: &NlSchema,
    row_count: usize,
    attempted: &[ClauseKind],
    gateway: &Gateway,
) -> Result<PlanDecision> {
    let sufficiency_bindings = [
        ("schema", schema.render()),
        ("question", subq.text.clone()),
        ("sql", chain.current_sql().to_string()),
        ("result", result.to_pipe()),
    ];
    let verdict = match gateway.complete(RoleTag::PlanSufficient, &sufficiency_bindings) {
        Ok(ex) => parse_yes_no(&ex.response),
        Err(CoqError::BudgetExhausted { .. }) => return Ok(PlanDecision::Exhausted),
        Err(e) => return Err(e),
    };
    match verdict {
        Ok(true) | Err(_) => return Ok(PlanDecision::Stop),
        Ok(false) => {}
    }

    for kind in ClauseKind::EXTENSIONS {
        if chain.has_kind(kind) || attempted.contains(&kind) {
            continue;
        }
        let bindings: Vec<(&str, String)> = if kind == ClauseKind::Where {
            vec![
                ("schema", schema.render()),
                ("row_count", row_count.to_string()),
                ("question", subq.text.clone()),
            ]
        } else {
            vec![
                ("schema", schema.render()),
                ("question", subq.text.clone()),
                ("sql", chain.current_sql().to_string()),
                ("result", result.to_pipe()),
            ]
        };
        let needed = match gateway.complete(need_check_role(kind), &bindings) {
            Ok(ex) => parse_yes_no(&ex.response).unwrap_or(false),
            Err(CoqError::BudgetExhausted { .. }) => return Ok(PlanDecision::Exhausted),
            Err(e) => return Err(e),
        };
        if needed {
            return Ok(PlanDecision::Add(kind));
        }
    }
    Ok(PlanDecision::Stop)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::ClauseStep;
    use crate::llm::{LlmBackend, PromptCatalog, ScriptedBackend};
    use std::sync::Arc;

    fn gateway(rules: Vec<Box<dyn Fn(RoleTag, &str) -> Option<String> + Send + Sync>>) -> Gateway {
        let backend: Arc<dyn LlmBackend> = Arc::new(ScriptedBackend::new(rules));
        Gateway::new(backend, Arc::new(PromptCatalog::builtin()), 22)
    }

    fn chain_with(kinds: &[ClauseKind]) -> QueryChain {
        QueryChain {
            steps: kinds
                .iter()
                .map(|&kind| ClauseStep {
                    kind,
                    sql_after: "SELECT a FROM t".into(),
                    validated: true,
                    correction_used: false,
                    error_before_correction: None,
                })
                .collect(),
            rejected: Vec::new(),
        }
    }

    fn result() -> ResultSet {
        ResultSet {
            column_names: vec!["a".into()],
            rows: vec![vec!["1".into()]],
            truncated: false,
            total_row_count: 1,
        }
    }

    fn subq() -> SubQuestion {
        SubQuestion {
            text: "q?".into(),
            index: 0,
            parent_question: "q?".into(),
        }
    }

    fn schema() -> NlSchema {
        NlSchema {
            table_name: "t".into(),
            headers: vec![("a".into(), crate::table::ValueType::Integer)],
            value_examples: "a\n1".into(),
        }
    }

    #[test]
    fn sufficient_stops_after_one_call() {
        let gw = gateway(vec![Box::new(|role, _| {
            (role == RoleTag::PlanSufficient).then(|| "Decision:\nYes".into())
        })]);
        let chain = chain_with(&[ClauseKind::SelectFrom]);
        let d = decide(&chain, &result(), &subq(), &schema(), 3, &[], &gw).unwrap();
        assert_eq!(d, PlanDecision::Stop);
        assert_eq!(gw.calls_used(), 1);
    }

    #[test]
    fn first_affirmative_need_check_wins() {
        let gw = gateway(vec![
            Box::new(|role, _| (role == RoleTag::PlanSufficient).then(|| "Decision:\nNo".into())),
            Box::new(|role, _| {
                (role == RoleTag::PlanWhereNeeded).then(|| "Decision:\nNo".into())
            }),
            Box::new(|role, _| {
                (role == RoleTag::PlanWithAsNeeded).then(|| "Decision:\nYes".into())
            }),
        ]);
        let chain = chain_with(&[ClauseKind::SelectFrom]);
        let d = decide(&chain, &result(), &subq(), &schema(), 3, &[], &gw).unwrap();
        assert_eq!(d, PlanDecision::Add(ClauseKind::WithAs));
        // sufficiency + WHERE check + WITH-AS check; later kinds never asked
        assert_eq!(gw.calls_used(), 3);
    }

    #[test]
    fn applied_kinds_are_skipped() {
        let gw = gateway(vec![
            Box::new(|role, _| (role == RoleTag::PlanSufficient).then(|| "No".into())),
            Box::new(|role, _| (role == RoleTag::PlanAggNeeded).then(|| "Yes".into())),
            Box::new(|_, _| Some("No".into())),
        ]);
        let chain = chain_with(&[ClauseKind::SelectFrom, ClauseKind::Where]);
        let d = decide(&chain, &result(), &subq(), &schema(), 3, &[], &gw).unwrap();
        assert_eq!(d, PlanDecision::Add(ClauseKind::Aggregate));
    }

    #[test]
    fn all_negative_stops() {
        let gw = gateway(vec![Box::new(|_, _| Some("Decision:\nNo".into()))]);
        let chain = chain_with(&[ClauseKind::SelectFrom]);
        let d = decide(&chain, &result(), &subq(), &schema(), 3, &[], &gw).unwrap();
        assert_eq!(d, PlanDecision::Stop);
        // sufficiency + 4 need checks
        assert_eq!(gw.calls_used(), 5);
    }

    #[test]
    fn unparseable_sufficiency_stops() {
        let gw = gateway(vec![Box::new(|role, _| {
            (role == RoleTag::PlanSufficient).then(|| "mumble".into())
        })]);
        let chain = chain_with(&[ClauseKind::SelectFrom]);
        let d = decide(&chain, &result(), &subq(), &schema(), 3, &[], &gw).unwrap();
        assert_eq!(d, PlanDecision::Stop);
        assert_eq!(gw.calls_used(), 1);
    }

    #[test]
    fn exhausted_budget_degrades_to_stop() {
        let backend: Arc<dyn LlmBackend> =
            Arc::new(ScriptedBackend::new(vec![Box::new(|_, _| Some("No".into()))]));
        let gw = Gateway::new(backend, Arc::new(PromptCatalog::builtin()), 5);
        let chain = chain_with(&[ClauseKind::SelectFrom]);
        for _ in 0..5 {
            gw.complete(RoleTag::PlanSufficient, &[
                ("schema", "s".into()),
                ("question", "q".into()),
                ("sql", "SELECT 1".into()),
                ("result", "1".into()),
            ])
            .unwrap();
        }
        let d = decide(&chain, &result(), &subq(), &schema(), 3, &[], &gw).unwrap();
        assert_eq!(d, PlanDecision::Exhausted);
    }

    #[test]
    fn attempted_kinds_are_not_re_proposed() {
        let gw = gateway(vec![
            Box::new(|role, _| (role == RoleTag::PlanSufficient).then(|| "No".into())),
            Box::new(|role, _| (role == RoleTag::PlanWhereNeeded).then(|| "Yes".into())),
            Box::new(|_, _| Some("No".into())),
        ]);
        let chain = chain_with(&[ClauseKind::SelectFrom]);
        // WHERE already failed once; it must not be proposed again
        let d = decide(&chain, &result(), &subq(), &schema(), 3, &[ClauseKind::Where], &gw)
            .unwrap();
        assert_eq!(d, PlanDecision::Stop);
    }
}
