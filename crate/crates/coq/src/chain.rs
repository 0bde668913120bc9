//! Clause-by-clause SQL construction. A chain starts from a validated
//! SELECT-FROM query and grows one clause at a time; every retained state
//! executed cleanly, and a failed extension (after one correction attempt)
//! reverts to the previous state.

use serde::{Deserialize, Serialize};

use crate::error::{CoqError, Result};
use crate::executor::{ResultSet, Sandbox, SqlError};
use crate::llm::parse::parse_fenced_sql;
use crate::llm::{Gateway, RoleTag};
use crate::splitter::SubQuestion;
use crate::table::NlSchema;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ClauseKind {
    SelectFrom,
    Where,
    WithAs,
    Aggregate,
    OrderBy,
}

impl ClauseKind {
    pub const ALL: [ClauseKind; 5] = [
        ClauseKind::SelectFrom,
        ClauseKind::Where,
        ClauseKind::WithAs,
        ClauseKind::Aggregate,
        ClauseKind::OrderBy,
    ];

    /// Kinds the planner may add after SELECT-FROM, in candidate order.
    pub const EXTENSIONS: [ClauseKind; 4] = [
        ClauseKind::Where,
        ClauseKind::WithAs,
        ClauseKind::Aggregate,
        ClauseKind::OrderBy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ClauseKind::SelectFrom => "SELECT-FROM",
            ClauseKind::Where => "WHERE",
            ClauseKind::WithAs => "WITH-AS",
            ClauseKind::Aggregate => "AGGREGATE",
            ClauseKind::OrderBy => "ORDER-BY",
        }
    }

    fn generation_role(self) -> RoleTag {
        match self {
            ClauseKind::SelectFrom => RoleTag::ClauseSelectFrom,
            ClauseKind::Where => RoleTag::ClauseWhere,
            ClauseKind::WithAs => RoleTag::ClauseWithAs,
            ClauseKind::Aggregate => RoleTag::ClauseAgg,
            ClauseKind::OrderBy => RoleTag::ClauseOrderBy,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClauseStep {
    pub kind: ClauseKind,
    pub sql_after: String,
    pub validated: bool,
    pub correction_used: bool,
    pub error_before_correction: Option<SqlError>,
}

/// A rejected extension attempt, logged outside the chain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RejectedStep {
    pub kind: ClauseKind,
    pub candidate_sql: String,
    pub error: Option<SqlError>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QueryChain {
    pub steps: Vec<ClauseStep>,
    pub rejected: Vec<RejectedStep>,
}

impl QueryChain {
    pub fn current_sql(&self) -> &str {
        &self
            .steps
            .last()
            .expect("chain always has a SELECT-FROM step")
            .sql_after
    }

    pub fn applied_kinds(&self) -> Vec<ClauseKind> {
        self.steps.iter().map(|s| s.kind).collect()
    }

    pub fn has_kind(&self, kind: ClauseKind) -> bool {
        self.steps.iter().any(|s| s.kind == kind)
    }
}

/// Collapse whitespace runs to single spaces for textual diffing.
fn normalize_ws(sql: &str) -> String {
    sql.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Split a select-list on top-level commas (depth-0 with respect to
/// parentheses, outside quotes).
fn split_top_level(list: &str) -> Vec<String> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut quote: Option<char> = None;
    let mut current = String::new();
    for ch in list.chars() {
        match quote {
            Some(q) => {
                current.push(ch);
                if ch == q {
                    quote = None;
                }
            }
            None => match ch {
                '\'' | '"' => {
                    quote = Some(ch);
                    current.push(ch);
                }
                '(' => {
                    depth += 1;
                    current.push(ch);
                }
                ')' => {
                    depth -= 1;
                    current.push(ch);
                }
                ',' if depth == 0 => {
                    parts.push(current.trim().to_string());
                    current.clear();
                }
                _ => current.push(ch),
            },
        }
    }
    if !current.trim().is_empty() {
        parts.push(current.trim().to_string());
    }
    parts
}

/// Find a top-level keyword (outside quotes/parens), case-insensitive.
/// Returns the byte offset of its first character.
fn find_keyword(sql: &str, keyword: &str) -> Option<usize> {
    let upper = sql.to_ascii_uppercase();
    let kw = keyword.to_ascii_uppercase();
    let bytes = upper.as_bytes();
    let mut depth = 0i32;
    let mut quote: Option<u8> = None;
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if let Some(q) = quote {
            if c == q {
                quote = None;
            }
            i += 1;
            continue;
        }
        match c {
            b'\'' | b'"' => quote = Some(c),
            b'(' => depth += 1,
            b')' => depth -= 1,
            _ if depth == 0 && upper[i..].starts_with(&kw) => {
                let before_ok = i == 0 || !bytes[i - 1].is_ascii_alphanumeric();
                let after = i + kw.len();
                let after_ok = after >= bytes.len() || !bytes[after].is_ascii_alphanumeric();
                if before_ok && after_ok {
                    return Some(i);
                }
            }
            _ => {}
        }
        i += 1;
    }
    None
}

fn last_keyword(sql: &str, keyword: &str) -> Option<usize> {
    let mut pos = None;
    let mut offset = 0;
    while let Some(found) = find_keyword(&sql[offset..], keyword) {
        pos = Some(offset + found);
        offset += found + keyword.len();
    }
    pos
}

/// Strip quotes/aliases from one select-list item, keeping the bare column
/// name (last identifier path segment; "expr AS alias" keeps the alias).
fn item_name(item: &str) -> String {
    let item = item.trim();
    let upper = item.to_ascii_uppercase();
    let core = match upper.rfind(" AS ") {
        Some(pos) => item[pos + 4..].trim(),
        None => item,
    };
    core.trim_matches(|c| c == '"' || c == '`' || c == '[' || c == ']')
        .trim()
        .to_string()
}

/// Select-list column names of a plain SELECT query (text between the first
/// SELECT and its FROM).
fn select_columns(sql: &str) -> Vec<String> {
    let Some(select_pos) = find_keyword(sql, "SELECT") else {
        return Vec::new();
    };
    let after = &sql[select_pos + "SELECT".len()..];
    let end = find_keyword(after, "FROM").unwrap_or(after.len());
    split_top_level(&after[..end])
        .iter()
        .map(|item| item_name(item))
        .collect()
}

const AGGREGATE_FNS: [&str; 5] = ["COUNT", "AVG", "MAX", "MIN", "SUM"];

fn count_aggregates(text: &str) -> usize {
    let upper = text.to_ascii_uppercase();
    AGGREGATE_FNS
        .iter()
        .map(|f| {
            let mut count = 0;
            let mut offset = 0;
            while let Some(pos) = upper[offset..].find(&format!("{f}(")) {
                let abs = offset + pos;
                if abs == 0 || !upper.as_bytes()[abs - 1].is_ascii_alphanumeric() {
                    count += 1;
                }
                offset = abs + f.len();
            }
            count
        })
        .sum()
}

/// True iff `next_sql` differs from `prev_sql` in a way consistent with
/// appending/rewriting the given clause kind. Textual rules only; the
/// engine remains the ground-truth parser.
pub fn diff_step(prev_sql: &str, next_sql: &str, kind: ClauseKind) -> bool {
    let prev_norm = normalize_ws(prev_sql);
    let next_norm = normalize_ws(next_sql);
    match kind {
        ClauseKind::SelectFrom => find_keyword(next_sql, "SELECT").is_some(),
        ClauseKind::Where | ClauseKind::OrderBy => {
            // suffix-preserving: the prior query text survives verbatim
            next_norm.contains(&prev_norm) && next_norm != prev_norm
        }
        ClauseKind::WithAs => {
            if !next_norm.to_ascii_uppercase().starts_with("WITH") {
                return false;
            }
            let prev_cols = select_columns(prev_sql);
            if prev_cols.iter().any(|c| c == "*") {
                return true; // cannot enumerate a star select-list
            }
            let Some(final_select) = last_keyword(next_sql, "SELECT") else {
                return false;
            };
            let tail = &next_sql[final_select..];
            let tail_upper = tail.to_ascii_uppercase();
            prev_cols.iter().all(|col| {
                col == "*"
                    || tail_upper.contains(&col.to_ascii_uppercase())
                    || tail_upper.contains("*")
            })
        }
        ClauseKind::Aggregate => {
            let Some(from_pos) = find_keyword(prev_sql, "FROM") else {
                return false;
            };
            let prev_tail = normalize_ws(&prev_sql[from_pos..]);
            if !next_norm.contains(&prev_tail) {
                return false;
            }
            let Some(next_select) = find_keyword(next_sql, "SELECT") else {
                return false;
            };
            let after = &next_sql[next_select + "SELECT".len()..];
            let end = find_keyword(after, "FROM").unwrap_or(after.len());
            count_aggregates(&after[..end]) == 1
        }
    }
}

/// Render bindings shared by all clause prompts.
fn clause_bindings<'a>(
    schema: &NlSchema,
    subq: &SubQuestion,
    sql: &str,
) -> Vec<(&'a str, String)> {
    vec![
        ("schema", schema.render()),
        ("question", subq.text.clone()),
        ("sql", sql.to_string()),
    ]
}

fn correction_bindings<'a>(
    schema: &NlSchema,
    subq: &SubQuestion,
    kind: ClauseKind,
    sql: &str,
    error: &SqlError,
) -> Vec<(&'a str, String)> {
    vec![
        ("clause", kind.as_str().to_string()),
        ("schema", schema.render()),
        ("question", subq.text.clone()),
        ("sql", sql.to_string()),
        ("error", error.message.clone()),
    ]
}

/// Validate a candidate: executes cleanly AND its diff against the previous
/// state is consistent with the clause kind.
fn validate_candidate(
    sandbox: &Sandbox,
    prev_sql: Option<&str>,
    candidate: &str,
    kind: ClauseKind,
    row_limit: usize,
) -> std::result::Result<ResultSet, SqlError> {
    let result = sandbox.execute(candidate, row_limit)?;
    if let Some(prev) = prev_sql {
        if !diff_step(prev, candidate, kind) {
            return Err(SqlError {
                kind: crate::executor::SqlErrorKind::Runtime,
                message: format!(
                    "candidate is not a {} refinement of the previous query",
                    kind.as_str()
                ),
            });
        }
    }
    Ok(result)
}

/// Produce the initial validated SELECT-FROM chain. Falls back to
/// `SELECT * FROM <table>` when generation and correction both fail, so the
/// chain always starts validated.
pub fn init_chain(
    subq: &SubQuestion,
    schema: &NlSchema,
    gateway: &Gateway,
    sandbox: &Sandbox,
    row_limit: usize,
) -> Result<QueryChain> {
    let skeleton = format!("SELECT () FROM \"{}\"", schema.table_name.replace('"', "\"\""));
    let mut chain = QueryChain {
        steps: Vec::new(),
        rejected: Vec::new(),
    };

    let exchange = gateway.complete(
        RoleTag::ClauseSelectFrom,
        &clause_bindings(schema, subq, &skeleton),
    )?;
    let candidate = parse_fenced_sql(&exchange.response).ok();

    let first_error = match &candidate {
        Some(sql) => match validate_candidate(sandbox, None, sql, ClauseKind::SelectFrom, row_limit)
        {
            Ok(_) => {
                chain.steps.push(ClauseStep {
                    kind: ClauseKind::SelectFrom,
                    sql_after: sql.clone(),
                    validated: true,
                    correction_used: false,
                    error_before_correction: None,
                });
                return Ok(chain);
            }
            Err(e) => e,
        },
        None => SqlError {
            kind: crate::executor::SqlErrorKind::Syntax,
            message: "response contained no SQL".into(),
        },
    };

    // one correction attempt
    let bad_sql = candidate.unwrap_or(skeleton.clone());
    if let Ok(exchange) = gateway.complete(
        RoleTag::Correct,
        &correction_bindings(schema, subq, ClauseKind::SelectFrom, &bad_sql, &first_error),
    ) {
        if let Ok(corrected) = parse_fenced_sql(&exchange.response) {
            if validate_candidate(sandbox, None, &corrected, ClauseKind::SelectFrom, row_limit)
                .is_ok()
            {
                chain.steps.push(ClauseStep {
                    kind: ClauseKind::SelectFrom,
                    sql_after: corrected,
                    validated: true,
                    correction_used: true,
                    error_before_correction: Some(first_error),
                });
                return Ok(chain);
            }
        }
    }

    // fallback is valid by construction
    chain.rejected.push(RejectedStep {
        kind: ClauseKind::SelectFrom,
        candidate_sql: bad_sql,
        error: Some(first_error.clone()),
    });
    let fallback = format!("SELECT * FROM {}", sandbox.relation());
    chain.steps.push(ClauseStep {
        kind: ClauseKind::SelectFrom,
        sql_after: fallback,
        validated: true,
        correction_used: true,
        error_before_correction: Some(first_error),
    });
    Ok(chain)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtendOutcome {
    Extended,
    /// Candidate and its one correction both failed; chain unchanged.
    Reverted,
    /// Call budget ran out before a candidate was produced; chain unchanged.
    Exhausted,
}

/// Extend the chain with one clause of the given kind. On a failed
/// candidate, one correction is attempted; if that also fails the chain is
/// returned unchanged and the attempt is logged in `rejected`.
pub fn extend_chain(
    chain: &mut QueryChain,
    kind: ClauseKind,
    subq: &SubQuestion,
    schema: &NlSchema,
    gateway: &Gateway,
    sandbox: &Sandbox,
    row_limit: usize,
) -> Result<ExtendOutcome> {
    assert!(kind != ClauseKind::SelectFrom, "chains start with SELECT-FROM");
    assert!(!chain.has_kind(kind), "each clause kind applies at most once");

    let prev_sql = chain.current_sql().to_string();
    let exchange = match gateway.complete(
        kind.generation_role(),
        &clause_bindings(schema, subq, &prev_sql),
    ) {
        Ok(ex) => ex,
        // budget died mid-extension: chain stays as-is
        Err(CoqError::BudgetExhausted { .. }) => return Ok(ExtendOutcome::Exhausted),
        Err(e) => return Err(e),
    };
    let candidate = parse_fenced_sql(&exchange.response).ok();

    let first_error = match &candidate {
        Some(sql) => {
            match validate_candidate(sandbox, Some(&prev_sql), sql, kind, row_limit) {
                Ok(_) => {
                    chain.steps.push(ClauseStep {
                        kind,
                        sql_after: sql.clone(),
                        validated: true,
                        correction_used: false,
                        error_before_correction: None,
                    });
                    return Ok(ExtendOutcome::Extended);
                }
                Err(e) => e,
            }
        }
        None => SqlError {
            kind: crate::executor::SqlErrorKind::Syntax,
            message: "response contained no SQL".into(),
        },
    };

    let bad_sql = candidate.unwrap_or_else(|| prev_sql.clone());
    let correction = match gateway.complete(
        RoleTag::Correct,
        &correction_bindings(schema, subq, kind, &bad_sql, &first_error),
    ) {
        Ok(ex) => parse_fenced_sql(&ex.response).ok(),
        Err(CoqError::BudgetExhausted { .. }) => None,
        Err(e) => return Err(e),
    };

    if let Some(corrected) = correction {
        if validate_candidate(sandbox, Some(&prev_sql), &corrected, kind, row_limit).is_ok() {
            chain.steps.push(ClauseStep {
                kind,
                sql_after: corrected,
                validated: true,
                correction_used: true,
                error_before_correction: Some(first_error),
            });
            return Ok(ExtendOutcome::Extended);
        }
    }

    // revert: keep the last validated query, log the rejection
    chain.rejected.push(RejectedStep {
        kind,
        candidate_sql: bad_sql,
        error: Some(first_error),
    });
    Ok(ExtendOutcome::Reverted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{LlmBackend, PromptCatalog, ScriptedBackend};
    use crate::table::{build_nl_schema, infer_types, ingest_table, TableFormat};
    use std::sync::Arc;

    fn santoro() -> crate::table::Table {
        let csv = "Name,2001,2002,n_win_loss\n\
                   Australian Open,2R,3R,22-18\n\
                   French Open,2R,2R,17-20\n\
                   Wimbledon,2R,1R,11-14\n";
        infer_types(ingest_table(&mut csv.as_bytes(), TableFormat::Csv, "fabrice_santoro").unwrap())
    }

    fn gateway_with(rules: Vec<Box<dyn Fn(RoleTag, &str) -> Option<String> + Send + Sync>>) -> Gateway {
        let backend: Arc<dyn LlmBackend> = Arc::new(ScriptedBackend::new(rules));
        Gateway::new(backend, Arc::new(PromptCatalog::builtin()), 22)
    }

    fn subq(text: &str) -> SubQuestion {
        SubQuestion {
            text: text.into(),
            index: 0,
            parent_question: text.into(),
        }
    }

    fn sql_response(sql: &str) -> String {
        format!("Analysis:\n**...**\nSQL:\n```sql\n{sql}\n```")
    }

    #[test]
    fn diff_where_append_ok() {
        assert!(diff_step(
            "SELECT a FROM t",
            "SELECT a FROM t WHERE a>1",
            ClauseKind::Where
        ));
    }

    #[test]
    fn diff_where_rejects_select_list_mutation() {
        assert!(!diff_step(
            "SELECT a FROM t",
            "SELECT b FROM t",
            ClauseKind::Where
        ));
    }

    #[test]
    fn diff_with_as_preserves_columns() {
        assert!(diff_step(
            "SELECT a FROM t",
            "WITH c AS (SELECT a FROM t) SELECT a FROM c",
            ClauseKind::WithAs
        ));
        assert!(!diff_step(
            "SELECT a FROM t",
            "SELECT a FROM t WHERE 1",
            ClauseKind::WithAs
        ));
        assert!(!diff_step(
            "SELECT a, b FROM t",
            "WITH c AS (SELECT a FROM t) SELECT q FROM c",
            ClauseKind::WithAs
        ));
    }

    #[test]
    fn diff_aggregate_rewrites_select_list_only() {
        assert!(diff_step(
            "SELECT a FROM t WHERE a>1",
            "SELECT MAX(a) FROM t WHERE a>1",
            ClauseKind::Aggregate
        ));
        // two aggregates is not "exactly one"
        assert!(!diff_step(
            "SELECT a FROM t",
            "SELECT MAX(a), MIN(a) FROM t",
            ClauseKind::Aggregate
        ));
        // FROM/WHERE must survive
        assert!(!diff_step(
            "SELECT a FROM t WHERE a>1",
            "SELECT MAX(a) FROM t",
            ClauseKind::Aggregate
        ));
    }

    #[test]
    fn diff_order_by_is_suffix_only() {
        assert!(diff_step(
            "SELECT a FROM t",
            "SELECT a FROM t ORDER BY a DESC",
            ClauseKind::OrderBy
        ));
    }

    #[test]
    fn init_chain_happy_path() {
        let table = santoro();
        let schema = build_nl_schema(&table, 3);
        let sandbox = Sandbox::load_table(&table).unwrap();
        let gw = gateway_with(vec![Box::new(|role, _| {
            (role == RoleTag::ClauseSelectFrom).then(|| {
                sql_response("SELECT \"Name\", \"n_win_loss\" FROM \"fabrice_santoro\"")
            })
        })]);
        let chain = init_chain(&subq("who won more?"), &schema, &gw, &sandbox, 50).unwrap();
        assert_eq!(chain.steps.len(), 1);
        assert!(chain.steps[0].validated);
        assert!(!chain.steps[0].correction_used);
        assert_eq!(
            chain.current_sql(),
            "SELECT \"Name\", \"n_win_loss\" FROM \"fabrice_santoro\""
        );
    }

    #[test]
    fn init_chain_falls_back_after_two_failures() {
        let table = santoro();
        let schema = build_nl_schema(&table, 3);
        let sandbox = Sandbox::load_table(&table).unwrap();
        let gw = gateway_with(vec![Box::new(|_, _| Some(sql_response("SELEC garbage")))]);
        let chain = init_chain(&subq("q"), &schema, &gw, &sandbox, 50).unwrap();
        assert_eq!(chain.current_sql(), "SELECT * FROM \"fabrice_santoro\"");
        assert!(chain.steps[0].correction_used);
        assert!(chain.steps[0].error_before_correction.is_some());
        // generation + correction
        assert_eq!(gw.calls_used(), 2);
    }

    #[test]
    fn extend_chain_reverts_when_correction_fails() {
        let table = santoro();
        let schema = build_nl_schema(&table, 3);
        let sandbox = Sandbox::load_table(&table).unwrap();
        let gw = gateway_with(vec![
            Box::new(|role, _| {
                (role == RoleTag::ClauseSelectFrom)
                    .then(|| sql_response("SELECT \"Name\" FROM \"fabrice_santoro\""))
            }),
            Box::new(|_, _| Some(sql_response("SELECT broken WHERE"))),
        ]);
        let mut chain = init_chain(&subq("q"), &schema, &gw, &sandbox, 50).unwrap();
        let before = chain.current_sql().to_string();
        let outcome =
            extend_chain(&mut chain, ClauseKind::Where, &subq("q"), &schema, &gw, &sandbox, 50)
                .unwrap();
        assert_eq!(outcome, ExtendOutcome::Reverted);
        assert_eq!(chain.current_sql(), before);
        assert_eq!(chain.steps.len(), 1);
        assert_eq!(chain.rejected.len(), 1);
        assert_eq!(chain.rejected[0].kind, ClauseKind::Where);
    }

    #[test]
    fn extend_chain_keeps_empty_result_step() {
        let table = santoro();
        let schema = build_nl_schema(&table, 3);
        let sandbox = Sandbox::load_table(&table).unwrap();
        let gw = gateway_with(vec![
            Box::new(|role, _| {
                (role == RoleTag::ClauseSelectFrom)
                    .then(|| sql_response("SELECT \"Name\" FROM \"fabrice_santoro\""))
            }),
            Box::new(|role, _| {
                (role == RoleTag::ClauseWhere).then(|| {
                    sql_response(
                        "SELECT \"Name\" FROM \"fabrice_santoro\" WHERE \"Name\" LIKE '%US Open%'",
                    )
                })
            }),
        ]);
        let mut chain = init_chain(&subq("q"), &schema, &gw, &sandbox, 50).unwrap();
        let outcome =
            extend_chain(&mut chain, ClauseKind::Where, &subq("q"), &schema, &gw, &sandbox, 50)
                .unwrap();
        // empty result is still a valid state; sufficiency is the planner's job
        assert_eq!(outcome, ExtendOutcome::Extended);
        assert_eq!(chain.steps.len(), 2);
        let result = sandbox.execute(chain.current_sql(), 50).unwrap();
        assert_eq!(result.total_row_count, 0);
    }

    #[test]
    fn extend_chain_order_by_preserves_prior_text() {
        let table = santoro();
        let schema = build_nl_schema(&table, 3);
        let sandbox = Sandbox::load_table(&table).unwrap();
        let gw = gateway_with(vec![
            Box::new(|role, _| {
                (role == RoleTag::ClauseSelectFrom)
                    .then(|| sql_response("SELECT \"Name\" FROM \"fabrice_santoro\""))
            }),
            Box::new(|role, _| {
                (role == RoleTag::ClauseOrderBy).then(|| {
                    sql_response("SELECT \"Name\" FROM \"fabrice_santoro\" ORDER BY \"Name\" ASC")
                })
            }),
        ]);
        let mut chain = init_chain(&subq("q"), &schema, &gw, &sandbox, 50).unwrap();
        let prev = chain.current_sql().to_string();
        extend_chain(&mut chain, ClauseKind::OrderBy, &subq("q"), &schema, &gw, &sandbox, 50)
            .unwrap();
        assert!(chain.current_sql().starts_with(&prev));
    }

    #[test]
    fn monotonicity_violation_triggers_revert() {
        let table = santoro();
        let schema = build_nl_schema(&table, 3);
        let sandbox = Sandbox::load_table(&table).unwrap();
        // WHERE candidate executes fine but rewrites the select list
        let gw = gateway_with(vec![
            Box::new(|role, _| {
                (role == RoleTag::ClauseSelectFrom)
                    .then(|| sql_response("SELECT \"Name\" FROM \"fabrice_santoro\""))
            }),
            Box::new(|_, _| {
                Some(sql_response("SELECT \"n_win_loss\" FROM \"fabrice_santoro\""))
            }),
        ]);
        let mut chain = init_chain(&subq("q"), &schema, &gw, &sandbox, 50).unwrap();
        let outcome =
            extend_chain(&mut chain, ClauseKind::Where, &subq("q"), &schema, &gw, &sandbox, 50)
                .unwrap();
        assert_eq!(outcome, ExtendOutcome::Reverted);
        assert_eq!(chain.steps.len(), 1);
    }
}
