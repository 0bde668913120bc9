//! Dataset loading, answer scoring, and report generation.
//!
//! Scoring is a simplified denotation match (normalize, compare, with
//! numeric tolerance and multiset handling for multi-part answers), not a
//! reimplementation of any benchmark's official evaluator.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoqError, Result};
use crate::orchestrator::RunRecord;
use crate::table::{infer_types, ingest_table, Table, TableFormat};

#[derive(Debug, Clone)]
pub struct EvalExample {
    pub id: String,
    pub table: Table,
    pub question: String,
    pub gold_answers: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct RawExample {
    id: String,
    table: RawTable,
    question: String,
    #[serde(default)]
    answers: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct RawTable {
    name: String,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn table_from_raw(raw: RawTable) -> Result<Table> {
    let csv_text;
    {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer
            .write_record(&raw.header)
            .map_err(|e| CoqError::MalformedDataset(e.to_string()))?;
        for row in &raw.rows {
            if row.len() != raw.header.len() {
                return Err(CoqError::MalformedDataset(format!(
                    "row width {} != header width {}",
                    row.len(),
                    raw.header.len()
                )));
            }
            writer
                .write_record(row)
                .map_err(|e| CoqError::MalformedDataset(e.to_string()))?;
        }
        let bytes = writer
            .into_inner()
            .map_err(|e| CoqError::MalformedDataset(e.to_string()))?;
        csv_text = String::from_utf8(bytes).map_err(|e| CoqError::MalformedDataset(e.to_string()))?;
    }
    let table = ingest_table(&mut csv_text.as_bytes(), TableFormat::Csv, &raw.name)?;
    Ok(infer_types(table))
}

/// Load a JSONL dataset: one `{id, table:{name,header,rows}, question,
/// answers}` object per line. Malformed examples are skipped with a
/// warning; more than 10% malformed is a hard failure.
pub fn load_dataset(path: &Path) -> Result<Vec<EvalExample>> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut examples = Vec::new();
    let mut malformed = 0usize;
    let mut total = 0usize;
    for (line_no, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        total += 1;
        let parsed: std::result::Result<RawExample, _> = serde_json::from_str(&line);
        let raw = match parsed {
            Ok(raw) => raw,
            Err(e) => {
                log::warn!("{}:{}: skipping malformed example: {e}", path.display(), line_no + 1);
                malformed += 1;
                continue;
            }
        };
        if raw.answers.is_empty() {
            log::warn!(
                "{}:{}: skipping example {:?} with no gold answers",
                path.display(),
                line_no + 1,
                raw.id
            );
            malformed += 1;
            continue;
        }
        let id = raw.id.clone();
        let question = raw.question.clone();
        let answers = raw.answers.clone();
        match table_from_raw(raw.table) {
            Ok(table) => examples.push(EvalExample {
                id,
                table,
                question,
                gold_answers: answers,
            }),
            Err(e) => {
                log::warn!("{}:{}: skipping example {id:?}: {e}", path.display(), line_no + 1);
                malformed += 1;
            }
        }
    }
    if total > 0 && malformed * 10 > total {
        return Err(CoqError::MalformedDataset(format!(
            "{malformed} of {total} examples malformed (>10%)"
        )));
    }
    Ok(examples)
}

/// Convert a WikiTQ-style TSV (`id<TAB>question<TAB>table_file<TAB>answer`)
/// plus its referenced CSV tables into the JSONL interchange format.
pub fn load_wikitq_tsv(tsv_path: &Path, table_base: &Path) -> Result<Vec<EvalExample>> {
    let text = std::fs::read_to_string(tsv_path)?;
    let mut examples = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        if line_no == 0 && line.to_ascii_lowercase().starts_with("id\t") {
            continue; // header row
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 4 {
            return Err(CoqError::MalformedDataset(format!(
                "{}:{}: expected 4 tab-separated fields",
                tsv_path.display(),
                line_no + 1
            )));
        }
        let table_path = table_base.join(fields[2]);
        let file = std::fs::File::open(&table_path)?;
        let mut reader = std::io::BufReader::new(file);
        let name = table_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "table".into());
        let table = infer_types(ingest_table(&mut reader, TableFormat::Csv, &name)?);
        examples.push(EvalExample {
            id: fields[0].to_string(),
            table,
            question: fields[1].to_string(),
            // multiple gold variants separated by "|"
            gold_answers: fields[3].split('|').map(|s| s.trim().to_string()).collect(),
        });
    }
    Ok(examples)
}

/// Write examples back out in the JSONL interchange format.
pub fn write_dataset(examples: &[EvalExample], path: &Path) -> Result<()> {
    use std::io::Write;
    let mut file = std::fs::File::create(path)?;
    for ex in examples {
        let header: Vec<&str> = ex.table.columns.iter().map(|c| c.raw_name.as_str()).collect();
        let value = serde_json::json!({
            "id": ex.id,
            "table": {
                "name": ex.table.name,
                "header": header,
                "rows": ex.table.rows,
            },
            "question": ex.question,
            "answers": ex.gold_answers,
        });
        writeln!(file, "{value}")?;
    }
    Ok(())
}

/// Map a free-text verdict onto the yes/no gold space of fact-verification
/// datasets.
pub fn map_entailment(predicted: &str) -> Option<&'static str> {
    let lower = predicted.to_ascii_lowercase();
    const YES_WORDS: [&str; 6] = ["yes", "true", "entail", "support", "correct", "confirmed"];
    const NO_WORDS: [&str; 6] = ["no", "false", "refut", "contradict", "incorrect", "wrong"];
    // negative cues first: "not supported" must map to "no"
    if lower.contains("not ") || NO_WORDS.iter().any(|w| lower.contains(w)) {
        return Some("no");
    }
    if YES_WORDS.iter().any(|w| lower.contains(w)) {
        return Some("yes");
    }
    None
}

/// Lowercase, trim, collapse whitespace, strip one trailing period.
fn normalize(text: &str) -> String {
    let collapsed = text
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase();
    collapsed.strip_suffix('.').unwrap_or(&collapsed).to_string()
}

/// Numeric value of a normalized atom, if any; digit-grouping commas and a
/// leading currency sign are stripped first.
fn numeric_value(atom: &str) -> Option<f64> {
    let cleaned = atom.trim().trim_start_matches('$').replace(',', "");
    if cleaned.is_empty() {
        return None;
    }
    cleaned.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn atoms_match(a: &str, b: &str) -> bool {
    if a == b {
        return true;
    }
    match (numeric_value(a), numeric_value(b)) {
        (Some(x), Some(y)) => (x - y).abs() <= 1e-6 * x.abs().max(y.abs()).max(1.0),
        _ => false,
    }
}

/// Split a multi-part answer on "|" or ", " into normalized atoms.
fn split_atoms(text: &str) -> Vec<String> {
    let parts: Vec<&str> = if text.contains('|') {
        text.split('|').collect()
    } else if text.contains(", ") {
        text.split(", ").collect()
    } else {
        vec![text]
    };
    parts.iter().map(|p| normalize(p)).filter(|p| !p.is_empty()).collect()
}

/// Multiset equality under atoms_match (greedy bipartite matching; atoms
/// are few so quadratic is fine).
fn multisets_match(mut left: Vec<String>, right: &[String]) -> bool {
    if left.len() != right.len() {
        return false;
    }
    for r in right {
        match left.iter().position(|l| atoms_match(l, r)) {
            Some(i) => {
                left.swap_remove(i);
            }
            None => return false,
        }
    }
    true
}

/// Denotation match of a predicted answer against any gold variant.
pub fn score_answer(predicted: &str, gold: &[String]) -> bool {
    let pred_norm = normalize(predicted);
    if pred_norm.is_empty() {
        return false;
    }
    let pred_atoms = split_atoms(predicted);
    gold.iter().any(|g| {
        let gold_norm = normalize(g);
        atoms_match(&pred_norm, &gold_norm) || multisets_match(pred_atoms.clone(), &split_atoms(g))
    })
}

/// Invalid-SQL rate: sub-questions whose final query failed to execute,
/// over all sub-questions. An empty batch counts as 0.
pub fn compute_invalid_rate(records: &[RunRecord]) -> f64 {
    let total: usize = records.iter().map(|r| r.invalid_flags.len()).sum();
    if total == 0 {
        return 0.0;
    }
    let invalid: usize = records
        .iter()
        .map(|r| r.invalid_flags.iter().filter(|&&f| f).count())
        .sum();
    invalid as f64 / total as f64
}

pub const HISTOGRAM_LABELS: [&str; 5] = ["<=5", "6-10", "11-20", "21-30", ">30"];

pub fn histogram_bucket(calls: u32) -> usize {
    match calls {
        0..=5 => 0,
        6..=10 => 1,
        11..=20 => 2,
        21..=30 => 3,
        _ => 4,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CallStats {
    pub mean: f64,
    pub median: f64,
    pub max: u32,
    pub histogram: [usize; 5],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerExample {
    pub id: String,
    pub correct: bool,
    pub invalid: bool,
    pub calls: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    /// report JSON schema version
    pub version: u32,
    pub accuracy: f64,
    pub invalid_sql_rate: f64,
    pub call_stats: CallStats,
    pub per_example: Vec<PerExample>,
}

fn call_stats(counts: &[u32]) -> CallStats {
    if counts.is_empty() {
        return CallStats {
            mean: 0.0,
            median: 0.0,
            max: 0,
            histogram: [0; 5],
        };
    }
    let mut sorted: Vec<u32> = counts.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        (sorted[n / 2 - 1] as f64 + sorted[n / 2] as f64) / 2.0
    };
    let mut histogram = [0usize; 5];
    for &c in counts {
        histogram[histogram_bucket(c)] += 1;
    }
    CallStats {
        mean: counts.iter().map(|&c| c as f64).sum::<f64>() / n as f64,
        median,
        max: *sorted.last().unwrap(),
        histogram,
    }
}

/// Score a batch of records against its examples. Records and examples are
/// matched by id; a record without a matching example is an error.
pub fn report(records: &[RunRecord], examples: &[EvalExample]) -> Result<EvalReport> {
    let by_id: HashMap<&str, &EvalExample> =
        examples.iter().map(|e| (e.id.as_str(), e)).collect();
    let mut per_example = Vec::with_capacity(records.len());
    let mut correct = 0usize;
    for record in records {
        let example = by_id.get(record.table_id.as_str()).ok_or_else(|| {
            CoqError::IdMismatch(record.table_id.clone())
        })?;
        let is_correct = score_answer(&record.final_answer.text, &example.gold_answers);
        if is_correct {
            correct += 1;
        }
        per_example.push(PerExample {
            id: record.table_id.clone(),
            correct: is_correct,
            invalid: record.invalid_flags.iter().any(|&f| f),
            calls: record.call_count,
        });
    }
    let counts: Vec<u32> = records.iter().map(|r| r.call_count).collect();
    Ok(EvalReport {
        version: 1,
        accuracy: if records.is_empty() {
            0.0
        } else {
            correct as f64 / records.len() as f64
        },
        invalid_sql_rate: compute_invalid_rate(records),
        call_stats: call_stats(&counts),
        per_example,
    })
}

impl EvalReport {
    /// Human-readable text table.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "examples:         {}\naccuracy:         {:.4}\ninvalid_sql_rate: {:.4}\n",
            self.per_example.len(),
            self.accuracy,
            self.invalid_sql_rate
        ));
        out.push_str(&format!(
            "calls: mean={:.2} median={} max={}\n",
            self.call_stats.mean, self.call_stats.median, self.call_stats.max
        ));
        out.push_str("call histogram:\n");
        for (label, count) in HISTOGRAM_LABELS.iter().zip(self.call_stats.histogram) {
            out.push_str(&format!("  {label:>5}: {count}\n"));
        }
        out.push_str(&format!(
            "{:<24} {:>7} {:>7} {:>5}\n",
            "id", "correct", "invalid", "calls"
        ));
        for pe in &self.per_example {
            out.push_str(&format!(
                "{:<24} {:>7} {:>7} {:>5}\n",
                pe.id, pe.correct, pe.invalid, pe.calls
            ));
        }
        out
    }

    pub fn summary_line(&self) -> String {
        format!(
            "accuracy={:.4} invalid={:.4} mean_calls={:.2}",
            self.accuracy, self.invalid_sql_rate, self.call_stats.mean
        )
    }
}
