//! Uniform LLM access: prompt catalog, response parsing, call accounting,
//! and interchangeable backends (live, replay, scripted).

pub mod backend;
pub mod parse;
pub mod template;

use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::{CoqError, Result};

pub use backend::{LiveBackend, LlmBackend, RecordingBackend, ReplayBackend, ScriptedBackend};
pub use template::{PromptCatalog, PromptTemplate};

/// Agent role behind a single LLM exchange. One role per prompt template.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RoleTag {
    Decompose,
    ClauseSelectFrom,
    ClauseWhere,
    ClauseWithAs,
    ClauseAgg,
    ClauseOrderBy,
    PlanSufficient,
    PlanWhereNeeded,
    PlanWithAsNeeded,
    PlanAggNeeded,
    PlanOrderByNeeded,
    Correct,
    SubAnswer,
    FinalAnswer,
}

impl RoleTag {
    pub const ALL: [RoleTag; 14] = [
        RoleTag::Decompose,
        RoleTag::ClauseSelectFrom,
        RoleTag::ClauseWhere,
        RoleTag::ClauseWithAs,
        RoleTag::ClauseAgg,
        RoleTag::ClauseOrderBy,
        RoleTag::PlanSufficient,
        RoleTag::PlanWhereNeeded,
        RoleTag::PlanWithAsNeeded,
        RoleTag::PlanAggNeeded,
        RoleTag::PlanOrderByNeeded,
        RoleTag::Correct,
        RoleTag::SubAnswer,
        RoleTag::FinalAnswer,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RoleTag::Decompose => "DECOMPOSE",
            RoleTag::ClauseSelectFrom => "CLAUSE_SELECT_FROM",
            RoleTag::ClauseWhere => "CLAUSE_WHERE",
            RoleTag::ClauseWithAs => "CLAUSE_WITH_AS",
            RoleTag::ClauseAgg => "CLAUSE_AGG",
            RoleTag::ClauseOrderBy => "CLAUSE_ORDER_BY",
            RoleTag::PlanSufficient => "PLAN_SUFFICIENT",
            RoleTag::PlanWhereNeeded => "PLAN_WHERE_NEEDED",
            RoleTag::PlanWithAsNeeded => "PLAN_WITH_AS_NEEDED",
            RoleTag::PlanAggNeeded => "PLAN_AGG_NEEDED",
            RoleTag::PlanOrderByNeeded => "PLAN_ORDER_BY_NEEDED",
            RoleTag::Correct => "CORRECT",
            RoleTag::SubAnswer => "SUB_ANSWER",
            RoleTag::FinalAnswer => "FINAL_ANSWER",
        }
    }
}

/// One prompt/response pair, in run-trace order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LlmExchange {
    pub role_tag: RoleTag,
    pub prompt: String,
    pub response: String,
    pub backend_id: String,
    pub sequence_no: u32,
}

/// Hard cap on LLM invocations for one question.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CallBudget {
    pub max_calls: u32,
    pub used: u32,
}

impl CallBudget {
    pub fn new(max_calls: u32) -> Self {
        CallBudget { max_calls, used: 0 }
    }

    pub fn remaining(&self) -> u32 {
        self.max_calls - self.used
    }
}

struct GatewayState {
    budget: CallBudget,
    trace: Vec<LlmExchange>,
}

/// Per-question LLM gateway: renders prompts from the catalog, enforces the
/// call budget, and records every exchange in order.
pub struct Gateway {
    backend: Arc<dyn LlmBackend>,
    catalog: Arc<PromptCatalog>,
    state: Mutex<GatewayState>,
}

impl Gateway {
    pub fn new(backend: Arc<dyn LlmBackend>, catalog: Arc<PromptCatalog>, max_calls: u32) -> Self {
        Gateway {
            backend,
            catalog,
            state: Mutex::new(GatewayState {
                budget: CallBudget::new(max_calls),
                trace: Vec::new(),
            }),
        }
    }

    /// Render the role's template with `bindings` and send it to the
    /// backend. Increments the budget and appends to the trace on success.
    pub fn complete(&self, role: RoleTag, bindings: &[(&str, String)]) -> Result<LlmExchange> {
        let prompt = self.catalog.render(role, bindings)?;
        let mut state = self.state.lock().expect("gateway lock poisoned");
        if state.budget.used >= state.budget.max_calls {
            return Err(CoqError::BudgetExhausted {
                used: state.budget.used,
                max: state.budget.max_calls,
            });
        }
        let response = self.backend.complete(role, &prompt)?;
        state.budget.used += 1;
        let exchange = LlmExchange {
            role_tag: role,
            prompt,
            response,
            backend_id: self.backend.id().to_string(),
            sequence_no: state.trace.len() as u32,
        };
        state.trace.push(exchange.clone());
        Ok(exchange)
    }

    pub fn budget(&self) -> CallBudget {
        self.state.lock().expect("gateway lock poisoned").budget
    }

    pub fn calls_used(&self) -> u32 {
        self.budget().used
    }

    /// Drain the exchange trace, consuming the gateway.
    pub fn into_trace(self) -> Vec<LlmExchange> {
        self.state.into_inner().expect("gateway lock poisoned").trace
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn yes_backend() -> Arc<dyn LlmBackend> {
        Arc::new(ScriptedBackend::new(vec![Box::new(|_, _| {
            Some("Decision:\nYes".to_string())
        })]))
    }

    fn gateway(max: u32) -> Gateway {
        Gateway::new(yes_backend(), Arc::new(PromptCatalog::builtin()), max)
    }

    fn sufficiency_bindings() -> Vec<(&'static str, String)> {
        vec![
            ("schema", "Table name: t".into()),
            ("question", "q".into()),
            ("sql", "SELECT 1".into()),
            ("result", "1".into()),
        ]
    }

    #[test]
    fn budget_boundary_succeeds_at_last_call() {
        let gw = gateway(22);
        for _ in 0..21 {
            gw.complete(RoleTag::PlanSufficient, &sufficiency_bindings())
                .unwrap();
        }
        assert_eq!(gw.budget().used, 21);
        gw.complete(RoleTag::PlanSufficient, &sufficiency_bindings())
            .unwrap();
        assert_eq!(gw.budget().used, 22);
    }

    #[test]
    fn budget_exhaustion_rejected() {
        let gw = gateway(1);
        gw.complete(RoleTag::PlanSufficient, &sufficiency_bindings())
            .unwrap();
        let err = gw
            .complete(RoleTag::PlanSufficient, &sufficiency_bindings())
            .unwrap_err();
        assert!(matches!(err, CoqError::BudgetExhausted { used: 1, max: 1 }));
    }

    #[test]
    fn sequence_numbers_increase() {
        let gw = gateway(5);
        for i in 0..3 {
            let ex = gw
                .complete(RoleTag::PlanSufficient, &sufficiency_bindings())
                .unwrap();
            assert_eq!(ex.sequence_no, i);
        }
        let trace = gw.into_trace();
        assert_eq!(trace.len(), 3);
    }
}
