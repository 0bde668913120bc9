//! In-memory SQLite sandbox: one relation per run, read-only execution for
//! candidate validation and data retrieval.

use std::time::{Duration, Instant};

use rusqlite::types::ValueRef;
use rusqlite::Connection;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CoqError, Result};
use crate::table::{Table, ValueType};

pub const DEFAULT_ROW_LIMIT: usize = 50;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(5);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SqlErrorKind {
    /// The statement failed to compile.
    Syntax,
    /// The statement compiled but failed during execution, timed out, or
    /// was rejected as a write/multi-statement.
    Runtime,
}

#[derive(Debug, Clone, thiserror::Error, Serialize, Deserialize)]
#[error("{kind:?}: {message}")]
pub struct SqlError {
    pub kind: SqlErrorKind,
    pub message: String,
}

impl SqlError {
    fn syntax(message: impl Into<String>) -> Self {
        SqlError {
            kind: SqlErrorKind::Syntax,
            message: message.into(),
        }
    }

    fn runtime(message: impl Into<String>) -> Self {
        SqlError {
            kind: SqlErrorKind::Runtime,
            message: message.into(),
        }
    }
}

/// Materialized query output, possibly truncated to a row limit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultSet {
    pub column_names: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub truncated: bool,
    pub total_row_count: usize,
}

impl ResultSet {
    /// PIPE rendering used in prompts: header line plus one line per row.
    pub fn to_pipe(&self) -> String {
        let escape = |s: &str| s.replace('|', "/");
        let mut lines = vec![self
            .column_names
            .iter()
            .map(|c| escape(c))
            .collect::<Vec<_>>()
            .join("|")];
        for row in &self.rows {
            lines.push(row.iter().map(|c| escape(c)).collect::<Vec<_>>().join("|"));
        }
        let mut out = lines.join("\n");
        if self.truncated {
            out.push_str(&format!(
                "\n... ({} rows in total, showing first {})",
                self.total_row_count,
                self.rows.len()
            ));
        }
        out
    }

    /// SHA-256 digest of the rendered result, for answer provenance.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.to_pipe().as_bytes());
        hex::encode(hasher.finalize())
    }
}

/// Head-`k` sample; total count and truncation state are preserved.
pub fn sample_result(result: &ResultSet, k: usize) -> ResultSet {
    let rows: Vec<Vec<String>> = result.rows.iter().take(k).cloned().collect();
    let truncated = result.truncated || rows.len() < result.total_row_count;
    ResultSet {
        column_names: result.column_names.clone(),
        rows,
        truncated,
        total_row_count: result.total_row_count,
    }
}

fn quote_ident(name: &str) -> String {
    format!("\"{}\"", name.replace('"', "\"\""))
}

/// Strip quoted regions and comments, then look for a second statement.
fn has_multiple_statements(sql: &str) -> bool {
    let bytes = sql.as_bytes();
    let mut i = 0;
    let mut depth_done = false; // saw a top-level ';'
    while i < bytes.len() {
        match bytes[i] {
            b'\'' | b'"' | b'`' => {
                let quote = bytes[i];
                i += 1;
                while i < bytes.len() {
                    if bytes[i] == quote {
                        if i + 1 < bytes.len() && bytes[i + 1] == quote {
                            i += 2;
                            continue;
                        }
                        break;
                    }
                    i += 1;
                }
            }
            b'-' if i + 1 < bytes.len() && bytes[i + 1] == b'-' => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            b'/' if i + 1 < bytes.len() && bytes[i + 1] == b'*' => {
                i += 2;
                while i + 1 < bytes.len() && !(bytes[i] == b'*' && bytes[i + 1] == b'/') {
                    i += 1;
                }
                i += 1;
            }
            b';' => depth_done = true,
            c if depth_done && !c.is_ascii_whitespace() => return true,
            _ => {}
        }
        i += 1;
    }
    false
}

fn first_keyword(sql: &str) -> String {
    sql.trim_start()
        .split(|c: char| c.is_whitespace() || c == '(')
        .next()
        .unwrap_or("")
        .to_ascii_uppercase()
}

/// One in-memory database holding a single relation. Queries never mutate
/// it: the connection is switched to query-only mode after loading and
/// every statement must be a read-only SELECT/WITH/VALUES.
pub struct Sandbox {
    conn: Connection,
    relation: String,
    row_count: usize,
    timeout: Duration,
}

impl Sandbox {
    /// Create the relation from a typed table. Empty cells become NULL;
    /// numeric columns store parsed values, everything else stays text.
    pub fn load_table(table: &Table) -> Result<Self> {
        Self::load_table_with_timeout(table, DEFAULT_TIMEOUT)
    }

    pub fn load_table_with_timeout(table: &Table, timeout: Duration) -> Result<Self> {
        let conn = Connection::open_in_memory()
            .map_err(|e| CoqError::EngineFailure(e.to_string()))?;
        let relation = quote_ident(&table.name);
        let columns = table
            .columns
            .iter()
            .map(|c| format!("{} {}", quote_ident(&c.sane_name), c.value_type.sql_affinity()))
            .collect::<Vec<_>>()
            .join(", ");
        conn.execute(&format!("CREATE TABLE {relation} ({columns})"), [])
            .map_err(|e| CoqError::EngineFailure(e.to_string()))?;

        let placeholders = vec!["?"; table.columns.len()].join(", ");
        let insert = format!("INSERT INTO {relation} VALUES ({placeholders})");
        {
            let mut stmt = conn
                .prepare(&insert)
                .map_err(|e| CoqError::EngineFailure(e.to_string()))?;
            for row in &table.rows {
                let params: Vec<rusqlite::types::Value> = row
                    .iter()
                    .zip(&table.columns)
                    .map(|(cell, col)| {
                        let cell = cell.trim();
                        if cell.is_empty() {
                            return rusqlite::types::Value::Null;
                        }
                        match col.value_type {
                            ValueType::Integer => cell
                                .parse::<i64>()
                                .map(rusqlite::types::Value::Integer)
                                .unwrap_or_else(|_| {
                                    rusqlite::types::Value::Text(cell.to_string())
                                }),
                            ValueType::Real => cell
                                .parse::<f64>()
                                .map(rusqlite::types::Value::Real)
                                .unwrap_or_else(|_| {
                                    rusqlite::types::Value::Text(cell.to_string())
                                }),
                            ValueType::Text => rusqlite::types::Value::Text(cell.to_string()),
                        }
                    })
                    .collect();
                stmt.execute(rusqlite::params_from_iter(params))
                    .map_err(|e| CoqError::EngineFailure(e.to_string()))?;
            }
        }
        conn.pragma_update(None, "query_only", true)
            .map_err(|e| CoqError::EngineFailure(e.to_string()))?;
        Ok(Sandbox {
            conn,
            relation,
            row_count: table.rows.len(),
            timeout,
        })
    }

    pub fn relation(&self) -> &str {
        &self.relation
    }

    pub fn row_count(&self) -> usize {
        self.row_count
    }

    /// Execute `sql` read-only, materializing at most `row_limit` rows.
    pub fn execute(
        &self,
        sql: &str,
        row_limit: usize,
    ) -> std::result::Result<ResultSet, SqlError> {
        if has_multiple_statements(sql) {
            return Err(SqlError::runtime("multiple statements are not allowed"));
        }
        const REJECTED: [&str; 19] = [
            "INSERT", "UPDATE", "DELETE", "REPLACE", "DROP", "CREATE", "ALTER", "PRAGMA",
            "ATTACH", "DETACH", "VACUUM", "REINDEX", "ANALYZE", "BEGIN", "COMMIT", "ROLLBACK",
            "SAVEPOINT", "RELEASE", "EXPLAIN",
        ];
        match first_keyword(sql).as_str() {
            "SELECT" | "WITH" | "VALUES" => {}
            "" => return Err(SqlError::syntax("empty statement")),
            other if REJECTED.contains(&other) => {
                return Err(SqlError::runtime(format!(
                    "write or non-query statement rejected: {other}"
                )))
            }
            // unknown first token: let the engine report the syntax error
            _ => {}
        }

        let mut stmt = self
            .conn
            .prepare(sql)
            .map_err(|e| SqlError::syntax(e.to_string()))?;
        if !stmt.readonly() {
            return Err(SqlError::runtime("statement is not read-only"));
        }

        let deadline = Instant::now() + self.timeout;
        self.conn
            .progress_handler(1000, Some(move || Instant::now() > deadline));

        let column_names: Vec<String> = stmt
            .column_names()
            .into_iter()
            .map(|s| s.to_string())
            .collect();
        let width = column_names.len();
        let outcome = (|| {
            let mut rows = stmt.query([]).map_err(|e| SqlError::runtime(e.to_string()))?;
            let mut materialized: Vec<Vec<String>> = Vec::new();
            let mut total = 0usize;
            loop {
                match rows.next() {
                    Ok(Some(row)) => {
                        total += 1;
                        if materialized.len() < row_limit {
                            let mut cells = Vec::with_capacity(width);
                            for i in 0..width {
                                let cell = match row.get_ref(i) {
                                    Ok(ValueRef::Null) => String::new(),
                                    Ok(ValueRef::Integer(v)) => v.to_string(),
                                    Ok(ValueRef::Real(v)) => v.to_string(),
                                    Ok(ValueRef::Text(t)) => {
                                        String::from_utf8_lossy(t).into_owned()
                                    }
                                    Ok(ValueRef::Blob(b)) => hex::encode(b),
                                    Err(e) => return Err(SqlError::runtime(e.to_string())),
                                };
                                cells.push(cell);
                            }
                            materialized.push(cells);
                        }
                    }
                    Ok(None) => break,
                    Err(e) => return Err(SqlError::runtime(e.to_string())),
                }
            }
            let truncated = total > materialized.len();
            Ok(ResultSet {
                column_names,
                rows: materialized,
                truncated,
                total_row_count: total,
            })
        })();
        self.conn.progress_handler(1000, None::<fn() -> bool>);
        outcome
    }

    /// Row count plus a content checksum, for isolation assertions.
    pub fn checksum(&self) -> Result<String> {
        let result = self
            .execute(&format!("SELECT * FROM {} ORDER BY rowid", self.relation), usize::MAX)
            .map_err(|e| CoqError::EngineFailure(e.to_string()))?;
        let mut hasher = Sha256::new();
        hasher.update(result.total_row_count.to_le_bytes());
        for row in &result.rows {
            for cell in row {
                hasher.update(cell.as_bytes());
                hasher.update([0u8]);
            }
            hasher.update([1u8]);
        }
        Ok(hex::encode(hasher.finalize()))
    }
}
