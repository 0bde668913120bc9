//! Table ingestion, column type inference, and the natural-language-style
//! schema that stands in for full-table input.
//!
//! Tables are immutable after construction and safe to share across
//! concurrent pipelines.

use std::collections::HashSet;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{CoqError, Result};

/// Storage affinity of a column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValueType {
    Integer,
    Real,
    Text,
}

impl ValueType {
    pub fn sql_affinity(self) -> &'static str {
        match self {
            ValueType::Integer => "INTEGER",
            ValueType::Real => "REAL",
            ValueType::Text => "TEXT",
        }
    }
}

impl std::fmt::Display for ValueType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ValueType::Integer => "integer",
            ValueType::Real => "real",
            ValueType::Text => "text",
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnSpec {
    /// Header as it appeared in the source file.
    pub raw_name: String,
    /// Identifier-safe name, unique within the table.
    pub sane_name: String,
    pub value_type: ValueType,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<ColumnSpec>,
    /// Row-major cell values; every row has `columns.len()` cells.
    pub rows: Vec<Vec<String>>,
}

/// Input format for [`ingest_table`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Json,
}

/// Natural-language-style schema: table name, typed headers, and a PIPE
/// block of example rows, used as a surrogate for the full table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NlSchema {
    pub table_name: String,
    pub headers: Vec<(String, ValueType)>,
    /// PIPE-formatted header line plus up to `sample_k` example rows.
    pub value_examples: String,
}

impl NlSchema {
    /// Rendering used inside prompts.
    pub fn render(&self) -> String {
        let headers = self
            .headers
            .iter()
            .map(|(name, ty)| format!("({name}, {ty})"))
            .collect::<Vec<_>>()
            .join(", ");
        format!(
            "Table name: {}\nHeaders: {}\nValue examples:\n{}",
            self.table_name, headers, self.value_examples
        )
    }
}

/// Reduce a raw header to an identifier-safe name. Non-alphanumeric
/// characters collapse to "_"; an empty result becomes "col".
fn sanitize_name(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut last_underscore = false;
    for ch in raw.trim().chars() {
        if ch.is_alphanumeric() {
            out.push(ch);
            last_underscore = false;
        } else if !last_underscore && !out.is_empty() {
            out.push('_');
            last_underscore = true;
        }
    }
    let out = out.trim_end_matches('_').to_string();
    if out.is_empty() {
        "col".to_string()
    } else {
        out
    }
}

/// Build column specs from raw headers, suffixing duplicates "_2", "_3", ...
/// in order of appearance. Types start as TEXT; see [`infer_types`].
fn build_columns(raw_headers: &[String]) -> Vec<ColumnSpec> {
    let mut seen: HashSet<String> = HashSet::new();
    let mut columns = Vec::with_capacity(raw_headers.len());
    for raw in raw_headers {
        let base = sanitize_name(raw);
        let mut candidate = base.clone();
        let mut suffix = 2usize;
        while !seen.insert(candidate.clone()) {
            candidate = format!("{base}_{suffix}");
            suffix += 1;
        }
        columns.push(ColumnSpec {
            raw_name: raw.trim().to_string(),
            sane_name: candidate,
            value_type: ValueType::Text,
        });
    }
    columns
}

fn table_from_parts(name: &str, headers: Vec<String>, rows: Vec<Vec<String>>) -> Result<Table> {
    if headers.is_empty() {
        return Err(CoqError::EmptyTable("table has zero columns".into()));
    }
    let width = headers.len();
    for (i, row) in rows.iter().enumerate() {
        if row.len() != width {
            return Err(CoqError::MalformedInput(format!(
                "row {i} has {} cells, expected {width}",
                row.len()
            )));
        }
    }
    Ok(Table {
        name: name.to_string(),
        columns: build_columns(&headers),
        rows,
    })
}

/// Ingest a table from a byte stream. Cells are trimmed; duplicate raw
/// headers get "_2", "_3" suffixes in their sanitized names.
pub fn ingest_table(source: &mut dyn Read, format: TableFormat, name: &str) -> Result<Table> {
    let mut buf = Vec::new();
    source.read_to_end(&mut buf)?;
    let text = String::from_utf8(buf)
        .map_err(|e| CoqError::MalformedInput(format!("input is not UTF-8: {e}")))?;
    match format {
        TableFormat::Csv => ingest_csv(&text, name),
        TableFormat::Json => ingest_json(&text, name),
    }
}

fn ingest_csv(text: &str, name: &str) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| CoqError::MalformedInput(format!("bad CSV header: {e}")))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CoqError::MalformedInput(format!("bad CSV row: {e}")))?;
        rows.push(record.iter().map(|c| c.trim().to_string()).collect());
    }
    table_from_parts(name, headers, rows)
}

fn ingest_json(text: &str, name: &str) -> Result<Table> {
    let value: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| CoqError::MalformedInput(format!("bad JSON: {e}")))?;

    let cell_to_string = |v: &serde_json::Value| -> String {
        match v {
            serde_json::Value::String(s) => s.trim().to_string(),
            serde_json::Value::Null => String::new(),
            other => other.to_string(),
        }
    };

    // {"header": [...], "rows": [[...], ...]}
    if let Some(obj) = value.as_object() {
        let header = obj
            .get("header")
            .and_then(|h| h.as_array())
            .ok_or_else(|| CoqError::MalformedInput("missing \"header\" array".into()))?;
        let headers: Vec<String> = header
            .iter()
            .map(|h| cell_to_string(h))
            .collect();
        let rows_value = obj
            .get("rows")
            .and_then(|r| r.as_array())
            .ok_or_else(|| CoqError::MalformedInput("missing \"rows\" array".into()))?;
        let mut rows = Vec::new();
        for row in rows_value {
            let cells = row
                .as_array()
                .ok_or_else(|| CoqError::MalformedInput("row is not an array".into()))?;
            rows.push(cells.iter().map(cell_to_string).collect());
        }
        return table_from_parts(name, headers, rows);
    }

    // array of objects; headers in first-object key order
    if let Some(arr) = value.as_array() {
        let first = arr
            .first()
            .and_then(|v| v.as_object())
            .ok_or_else(|| CoqError::EmptyTable("empty JSON array".into()))?;
        let headers: Vec<String> = first.keys().cloned().collect();
        let mut rows = Vec::new();
        for item in arr {
            let obj = item
                .as_object()
                .ok_or_else(|| CoqError::MalformedInput("array item is not an object".into()))?;
            rows.push(
                headers
                    .iter()
                    .map(|h| obj.get(h).map(&cell_to_string).unwrap_or_default())
                    .collect(),
            );
        }
        return table_from_parts(name, headers, rows);
    }

    Err(CoqError::MalformedInput(
        "JSON table must be an object with header/rows or an array of objects".into(),
    ))
}

fn parses_as_integer(cell: &str) -> bool {
    let s = cell.trim();
    let s = s.strip_prefix(['+', '-']).unwrap_or(s);
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())
}

fn parses_as_real(cell: &str) -> bool {
    let s = cell.trim();
    if parses_as_integer(s) {
        return true;
    }
    // decimal grammar only; reject inf/nan/hex accepted by f64::from_str
    let body = s.strip_prefix(['+', '-']).unwrap_or(s);
    let ok_shape = body
        .bytes()
        .all(|b| b.is_ascii_digit() || b == b'.' || b == b'e' || b == b'E' || b == b'+' || b == b'-');
    ok_shape && body.bytes().any(|b| b.is_ascii_digit()) && body.parse::<f64>().is_ok()
}

/// Populate each column's value type: INTEGER if every non-empty cell is a
/// base-10 integer, else REAL if every non-empty cell is a decimal number,
/// else TEXT. Columns with no non-empty cells stay TEXT.
pub fn infer_types(mut table: Table) -> Table {
    for (idx, column) in table.columns.iter_mut().enumerate() {
        let mut saw_value = false;
        let mut all_int = true;
        let mut all_real = true;
        for row in &table.rows {
            let cell = row[idx].trim();
            if cell.is_empty() {
                continue;
            }
            saw_value = true;
            if all_int && !parses_as_integer(cell) {
                all_int = false;
            }
            if all_real && !parses_as_real(cell) {
                all_real = false;
            }
            if !all_real {
                break;
            }
        }
        column.value_type = if !saw_value {
            ValueType::Text
        } else if all_int {
            ValueType::Integer
        } else if all_real {
            ValueType::Real
        } else {
            ValueType::Text
        };
    }
    table
}

/// Escape a cell for PIPE output: any "|" becomes "/" so that splitting a
/// line on "|" always yields the column count.
fn pipe_cell(cell: &str) -> String {
    cell.replace('|', "/")
}

/// Render the header plus the selected rows as a PIPE block. No trailing
/// newline.
pub fn serialize_pipe(table: &Table, row_indices: &[usize]) -> Result<String> {
    let mut lines = Vec::with_capacity(row_indices.len() + 1);
    lines.push(
        table
            .columns
            .iter()
            .map(|c| pipe_cell(&c.raw_name))
            .collect::<Vec<_>>()
            .join("|"),
    );
    for &idx in row_indices {
        let row = table.rows.get(idx).ok_or_else(|| {
            CoqError::IndexOutOfRange(format!("row {idx} of {}", table.rows.len()))
        })?;
        lines.push(row.iter().map(|c| pipe_cell(c)).collect::<Vec<_>>().join("|"));
    }
    Ok(lines.join("\n"))
}

/// Build the natural-language-style schema. Value examples come from the
/// first `min(sample_k, rows)` rows so the result is deterministic and never
/// touches more than `sample_k` rows of cell data.
pub fn build_nl_schema(table: &Table, sample_k: usize) -> NlSchema {
    let k = sample_k.min(table.rows.len());
    let indices: Vec<usize> = (0..k).collect();
    let value_examples =
        serialize_pipe(table, &indices).expect("head indices are always in range");
    NlSchema {
        table_name: table.name.clone(),
        headers: table
            .columns
            .iter()
            .map(|c| (c.raw_name.clone(), c.value_type))
            .collect(),
        value_examples,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn santoro_csv() -> &'static str {
        "Name,2001,2002,n_win_loss\n\
         Australian Open,2R,3R,22-18\n\
         French Open,2R,2R,17-20\n\
         Wimbledon,2R,1R,11-14\n"
    }

    fn santoro_table() -> Table {
        let mut src = santoro_csv().as_bytes();
        infer_types(ingest_table(&mut src, TableFormat::Csv, "fabrice_santoro").unwrap())
    }

    #[test]
    fn ingest_csv_trims_and_shapes() {
        let table = santoro_table();
        assert_eq!(table.columns.len(), 4);
        assert_eq!(table.rows.len(), 3);
        assert_eq!(table.rows[0][0], "Australian Open");
        assert_eq!(table.rows[0][3], "22-18");
    }

    #[test]
    fn ingest_csv_header_only() {
        let mut src = "a\n".as_bytes();
        let table = ingest_table(&mut src, TableFormat::Csv, "t").unwrap();
        assert_eq!(table.columns.len(), 1);
        assert!(table.rows.is_empty());
    }

    #[test]
    fn ingest_csv_zero_columns_is_empty_table() {
        let mut src = "".as_bytes();
        let err = ingest_table(&mut src, TableFormat::Csv, "t").unwrap_err();
        assert!(matches!(err, CoqError::EmptyTable(_)));
    }

    #[test]
    fn duplicate_headers_get_suffixes() {
        let mut src = "x,x\n1,2\n".as_bytes();
        let table = ingest_table(&mut src, TableFormat::Csv, "t").unwrap();
        assert_eq!(table.columns[0].sane_name, "x");
        assert_eq!(table.columns[1].sane_name, "x_2");
    }

    #[test]
    fn ingest_json_header_rows() {
        let mut src = br#"{"header":["a","b"],"rows":[["1","x"],["2","y"]]}"#.as_slice();
        let table = ingest_table(&mut src, TableFormat::Json, "t").unwrap();
        assert_eq!(table.columns.len(), 2);
        assert_eq!(table.rows, vec![vec!["1", "x"], vec!["2", "y"]]);
    }

    #[test]
    fn ingest_json_array_of_objects() {
        let mut src = br#"[{"a":"1","b":"x"},{"a":"2","b":"y"}]"#.as_slice();
        let table = ingest_table(&mut src, TableFormat::Json, "t").unwrap();
        assert_eq!(table.rows.len(), 2);
        assert_eq!(table.rows[1], vec!["2", "y"]);
    }

    #[test]
    fn ragged_rows_rejected() {
        let mut src = "a,b\n1\n".as_bytes();
        let err = ingest_table(&mut src, TableFormat::Csv, "t").unwrap_err();
        assert!(matches!(err, CoqError::MalformedInput(_)));
    }

    #[test]
    fn infer_types_win_loss_is_text() {
        let table = santoro_table();
        assert_eq!(table.columns[3].value_type, ValueType::Text);
        // "2001"/"2002" columns hold round strings like "2R"
        assert_eq!(table.columns[1].value_type, ValueType::Text);
    }

    #[test]
    fn infer_types_numeric_columns() {
        let mut src = "i,r,mixed,empty\n1,1.5,1,\n2,2,2.5,\n3,-3e2,x,\n".as_bytes();
        let table = infer_types(ingest_table(&mut src, TableFormat::Csv, "t").unwrap());
        assert_eq!(table.columns[0].value_type, ValueType::Integer);
        assert_eq!(table.columns[1].value_type, ValueType::Real);
        assert_eq!(table.columns[2].value_type, ValueType::Text);
        assert_eq!(table.columns[3].value_type, ValueType::Text);
    }

    #[test]
    fn infer_types_is_idempotent() {
        let table = santoro_table();
        let again = infer_types(table.clone());
        for (a, b) in table.columns.iter().zip(&again.columns) {
            assert_eq!(a.value_type, b.value_type);
        }
    }

    #[test]
    fn pipe_golden_rows_zero_and_two() {
        let table = santoro_table();
        let out = serialize_pipe(&table, &[0, 2]).unwrap();
        assert_eq!(
            out,
            "Name|2001|2002|n_win_loss\n\
             Australian Open|2R|3R|22-18\n\
             Wimbledon|2R|1R|11-14"
        );
    }

    #[test]
    fn pipe_empty_selection_is_header_only() {
        let table = santoro_table();
        assert_eq!(serialize_pipe(&table, &[]).unwrap(), "Name|2001|2002|n_win_loss");
    }

    #[test]
    fn pipe_escapes_cell_pipes() {
        let mut src = "a,b\nx|y,z\n".as_bytes();
        let table = ingest_table(&mut src, TableFormat::Csv, "t").unwrap();
        let out = serialize_pipe(&table, &[0]).unwrap();
        let last = out.lines().last().unwrap();
        assert_eq!(last, "x/y|z");
        assert_eq!(last.split('|').count(), 2);
    }

    #[test]
    fn pipe_out_of_range_index() {
        let table = santoro_table();
        assert!(matches!(
            serialize_pipe(&table, &[7]),
            Err(CoqError::IndexOutOfRange(_))
        ));
    }

    #[test]
    fn nl_schema_has_all_three_rows_for_k3() {
        let table = santoro_table();
        let schema = build_nl_schema(&table, 3);
        assert_eq!(schema.table_name, "fabrice_santoro");
        assert_eq!(schema.headers.len(), 4);
        assert_eq!(schema.value_examples.lines().count(), 4);
    }

    #[test]
    fn nl_schema_zero_rows() {
        let mut src = "a\n".as_bytes();
        let table = infer_types(ingest_table(&mut src, TableFormat::Csv, "t").unwrap());
        let schema = build_nl_schema(&table, 3);
        assert_eq!(schema.value_examples, "a");
    }

    #[test]
    fn nl_schema_caps_at_sample_k() {
        let rows: String = (0..100).map(|i| format!("{i}\n")).collect();
        let csv = format!("n\n{rows}");
        let mut src = csv.as_bytes();
        let table = infer_types(ingest_table(&mut src, TableFormat::Csv, "t").unwrap());
        let schema = build_nl_schema(&table, 3);
        assert_eq!(schema.value_examples.lines().count(), 4);
    }
}
