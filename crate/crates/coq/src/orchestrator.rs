//! Pipeline driver: wire decomposition, chain construction, planning, and
//! answering into one run per question, under a global call budget, and
//! emit a complete record of everything that happened.

use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::answerer::{aggregate_final, answer_sub, FinalAnswer, SubAnswer};
use crate::chain::{extend_chain, init_chain, ClauseKind, ExtendOutcome, QueryChain};
use crate::config::RunConfig;
use crate::error::CoqError;
use crate::eval::EvalExample;
use crate::executor::{sample_result, Sandbox};
use crate::llm::{Gateway, LlmBackend, LlmExchange, PromptCatalog};
use crate::planner::{decide, PlanDecision};
use crate::splitter::{decompose, SubQuestion};
use crate::table::{build_nl_schema, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RunStatus {
    Clean,
    /// Budget ran out somewhere; every stage still produced output.
    Degraded,
    /// At least one sub-question ended without a validated query, or the
    /// engine faulted.
    Failed,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Clean => 0,
            RunStatus::Degraded => 3,
            RunStatus::Failed => 2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub subquestion_index: usize,
    pub decision: PlanDecision,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub question: String,
    pub table_id: String,
    pub subquestions: Vec<SubQuestion>,
    pub chains: Vec<QueryChain>,
    pub exchanges: Vec<LlmExchange>,
    pub decisions: Vec<DecisionRecord>,
    pub subanswers: Vec<SubAnswer>,
    pub final_answer: FinalAnswer,
    pub call_count: u32,
    /// invalid_flags[i]: sub-question i's final query failed to execute
    /// (or no query was ever validated)
    pub invalid_flags: Vec<bool>,
    pub status: RunStatus,
    pub wall_time_ms: u64,
}

impl RunRecord {
    /// Deterministic serialized form: sorted keys, wall time stripped.
    pub fn canonical_json(&self) -> String {
        let mut value = serde_json::to_value(self).expect("record serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("wall_time_ms");
        }
        value.to_string()
    }
}

fn failure_record(
    question: &str,
    table_id: &str,
    gateway: Gateway,
    start: Instant,
) -> RunRecord {
    let call_count = gateway.calls_used();
    RunRecord {
        question: question.to_string(),
        table_id: table_id.to_string(),
        subquestions: Vec::new(),
        chains: Vec::new(),
        exchanges: gateway.into_trace(),
        decisions: Vec::new(),
        subanswers: Vec::new(),
        final_answer: FinalAnswer {
            text: String::new(),
            degraded: true,
        },
        call_count,
        invalid_flags: vec![true],
        status: RunStatus::Failed,
        wall_time_ms: start.elapsed().as_millis() as u64,
    }
}

/// Run the full pipeline on one question. Never panics on model or engine
/// misbehavior: budget exhaustion degrades stage by stage (chains freeze
/// first, answers fall back to raw results) and engine faults surface as a
/// failure-status record.
pub fn run_question(
    table: &Table,
    question: &str,
    table_id: &str,
    config: &RunConfig,
    backend: Arc<dyn LlmBackend>,
    catalog: Arc<PromptCatalog>,
) -> RunRecord {
    let start = Instant::now();
    let gateway = Gateway::new(backend, catalog, config.budget);
    let shortcuts = !config.strict;

    let sandbox = match Sandbox::load_table_with_timeout(
        table,
        std::time::Duration::from_millis(config.timeout_ms),
    ) {
        Ok(s) => s,
        Err(_) => return failure_record(question, table_id, gateway, start),
    };
    let schema = build_nl_schema(table, config.sample_k);

    let mut degraded = false;
    let subquestions = match decompose(question, &schema, &gateway, config.max_subquestions) {
        Ok(subs) => subs,
        Err(CoqError::BudgetExhausted { .. }) => {
            return failure_record(question, table_id, gateway, start)
        }
        Err(_) => return failure_record(question, table_id, gateway, start),
    };

    let mut chains: Vec<QueryChain> = Vec::new();
    let mut decisions: Vec<DecisionRecord> = Vec::new();
    let mut subanswers: Vec<SubAnswer> = Vec::new();
    let mut invalid_flags: Vec<bool> = Vec::new();

    for subq in &subquestions {
        let (chain, invalid, sa) = run_subquestion(
            subq,
            &schema,
            &sandbox,
            &gateway,
            config,
            shortcuts,
            &mut decisions,
            &mut degraded,
        );
        invalid_flags.push(invalid);
        chains.push(chain);
        subanswers.push(sa);
    }

    let final_answer = if subanswers.iter().all(|sa| sa.text.is_empty()) {
        degraded = true;
        FinalAnswer {
            text: String::new(),
            degraded: true,
        }
    } else {
        match aggregate_final(question, &subanswers, &gateway, shortcuts) {
            Ok(fa) => {
                if fa.degraded {
                    degraded = true;
                }
                fa
            }
            Err(_) => {
                degraded = true;
                FinalAnswer {
                    text: String::new(),
                    degraded: true,
                }
            }
        }
    };

    let any_invalid = invalid_flags.iter().any(|&f| f);
    let any_answer_degraded = subanswers.iter().any(|sa| sa.degraded);
    let status = if any_invalid || final_answer.text.is_empty() {
        RunStatus::Failed
    } else if degraded || any_answer_degraded {
        RunStatus::Degraded
    } else {
        RunStatus::Clean
    };

    let call_count = gateway.calls_used();
    RunRecord {
        question: question.to_string(),
        table_id: table_id.to_string(),
        subquestions,
        chains,
        exchanges: gateway.into_trace(),
        decisions,
        subanswers,
        final_answer,
        call_count,
        invalid_flags,
        status,
        wall_time_ms: start.elapsed().as_millis() as u64,
    }
}

#[allow(clippy::too_many_arguments)]
fn run_subquestion(
    subq: &SubQuestion,
    schema: &crate::table::NlSchema,
    sandbox: &Sandbox,
    gateway: &Gateway,
    config: &RunConfig,
    shortcuts: bool,
    decisions: &mut Vec<DecisionRecord>,
    degraded: &mut bool,
) -> (QueryChain, bool, SubAnswer) {
    let empty_answer = |text: &str| SubAnswer {
        subquestion: subq.text.clone(),
        text: text.to_string(),
        via_shortcut: true,
        degraded: true,
    };
    let empty_chain = QueryChain {
        steps: Vec::new(),
        rejected: Vec::new(),
    };

    let mut chain = match init_chain(subq, schema, gateway, sandbox, config.row_limit) {
        Ok(c) => c,
        Err(_) => {
            // budget starved (or engine faulted) before the first query
            *degraded = true;
            return (empty_chain, true, empty_answer(""));
        }
    };

    // replan-after-revert loop; each kind is tried at most once
    let mut attempted: Vec<ClauseKind> = Vec::new();
    let final_result = loop {
        let result = match sandbox.execute(chain.current_sql(), config.row_limit) {
            Ok(r) => r,
            // validated queries re-execute; a fault here is an engine fault
            Err(_) => {
                *degraded = true;
                return (chain, true, empty_answer(""));
            }
        };
        let sampled = sample_result(&result, config.sample_k);
        let decision = match decide(
            &chain,
            &sampled,
            subq,
            schema,
            sandbox.row_count(),
            &attempted,
            gateway,
        ) {
            Ok(d) => d,
            Err(_) => {
                *degraded = true;
                break result;
            }
        };
        decisions.push(DecisionRecord {
            subquestion_index: subq.index,
            decision,
        });
        match decision {
            PlanDecision::Stop => break result,
            PlanDecision::Exhausted => {
                *degraded = true;
                break result;
            }
            PlanDecision::Add(kind) => {
                match extend_chain(
                    &mut chain,
                    kind,
                    subq,
                    schema,
                    gateway,
                    sandbox,
                    config.row_limit,
                ) {
                    Ok(ExtendOutcome::Extended) => {}
                    Ok(ExtendOutcome::Reverted) => attempted.push(kind),
                    Ok(ExtendOutcome::Exhausted) => {
                        *degraded = true;
                        break result;
                    }
                    Err(_) => {
                        *degraded = true;
                        break result;
                    }
                }
            }
        }
    };

    let sa = match answer_sub(
        subq,
        schema,
        chain.current_sql(),
        &final_result,
        gateway,
        shortcuts,
    ) {
        Ok(sa) => {
            if sa.degraded {
                *degraded = true;
            }
            sa
        }
        Err(_) => {
            *degraded = true;
            empty_answer(&final_result.to_pipe())
        }
    };
    (chain, false, sa)
}

/// Run a batch with at most `parallelism` worker threads. Records come back
/// in dataset order regardless of completion order; each run gets a fresh
/// sandbox and budget.
pub fn run_batch(
    examples: &[EvalExample],
    config: &RunConfig,
    backend: Arc<dyn LlmBackend>,
    catalog: Arc<PromptCatalog>,
) -> Vec<RunRecord> {
    let workers = config.parallelism.max(1).min(examples.len().max(1));
    let next = Mutex::new(0usize);
    let slots: Vec<Mutex<Option<RunRecord>>> =
        (0..examples.len()).map(|_| Mutex::new(None)).collect();

    std::thread::scope(|scope| {
        for _ in 0..workers {
            let backend = Arc::clone(&backend);
            let catalog = Arc::clone(&catalog);
            let next = &next;
            let slots = &slots;
            scope.spawn(move || loop {
                let index = {
                    let mut guard = next.lock().unwrap();
                    let i = *guard;
                    if i >= examples.len() {
                        break;
                    }
                    *guard += 1;
                    i
                };
                let example = &examples[index];
                let record = run_question(
                    &example.table,
                    &example.question,
                    &example.id,
                    config,
                    Arc::clone(&backend),
                    Arc::clone(&catalog),
                );
                log::info!(
                    "[{}/{}] {} -> {:?} ({} calls)",
                    index + 1,
                    examples.len(),
                    example.id,
                    record.status,
                    record.call_count
                );
                *slots[index].lock().unwrap() = Some(record);
            });
        }
    });

    slots
        .into_iter()
        .map(|slot| slot.into_inner().unwrap().expect("every slot filled"))
        .collect()
}

/// Worst status across a batch, for the process exit code.
pub fn batch_status(records: &[RunRecord]) -> RunStatus {
    let mut status = RunStatus::Clean;
    for record in records {
        match record.status {
            RunStatus::Failed => return RunStatus::Failed,
            RunStatus::Degraded => status = RunStatus::Degraded,
            RunStatus::Clean => {}
        }
    }
    status
}
