//! Parsers for the structured response formats the prompts request.

use crate::error::{CoqError, Result};

fn is_statement_like(line: &str) -> bool {
    let first = line.split_whitespace().next().unwrap_or("");
    matches!(
        first.to_ascii_uppercase().as_str(),
        "SELECT" | "WITH" | "VALUES"
    )
}

/// Extract the content of the LAST ```sql fenced block. If no fence exists
/// and the response is exactly one statement-like line, return that line.
pub fn parse_fenced_sql(response: &str) -> Result<String> {
    let mut last_block: Option<String> = None;
    let mut in_block = false;
    let mut current = String::new();
    for line in response.lines() {
        let trimmed = line.trim();
        if !in_block {
            if trimmed.starts_with("```sql") {
                in_block = true;
                current.clear();
            }
        } else if trimmed.starts_with("```") {
            in_block = false;
            last_block = Some(current.trim().to_string());
        } else {
            current.push_str(line);
            current.push('\n');
        }
    }
    if let Some(block) = last_block {
        if !block.is_empty() {
            return Ok(block);
        }
    }
    let nonempty: Vec<&str> = response
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect();
    if nonempty.len() == 1 && is_statement_like(nonempty[0]) {
        return Ok(nonempty[0].to_string());
    }
    Err(CoqError::NoSqlFound)
}

fn yes_no_token(token: &str) -> Option<bool> {
    let cleaned: String = token
        .chars()
        .filter(|c| c.is_ascii_alphabetic())
        .collect::<String>()
        .to_ascii_lowercase();
    match cleaned.as_str() {
        "yes" => Some(true),
        "no" => Some(false),
        _ => None,
    }
}

/// Read the yes/no verdict after the last "Decision:" marker. Without a
/// marker, the last standalone yes/no token wins.
pub fn parse_yes_no(response: &str) -> Result<bool> {
    let lower = response.to_ascii_lowercase();
    if let Some(pos) = lower.rfind("decision:") {
        let after = &response[pos + "decision:".len()..];
        for token in after.split_whitespace() {
            if let Some(v) = yes_no_token(token) {
                return Ok(v);
            }
        }
        return Err(CoqError::NoDecisionFound);
    }
    let mut last = None;
    for token in response.split_whitespace() {
        if let Some(v) = yes_no_token(token) {
            last = Some(v);
        }
    }
    last.ok_or(CoqError::NoDecisionFound)
}

/// Parse the `subquestions = [ ... ]` string-list literal from the
/// response's code block. Any failure or an empty list degrades to a
/// singleton containing `original_question`.
pub fn parse_subquestion_list(response: &str, original_question: &str) -> Vec<String> {
    let fallback = || vec![original_question.to_string()];
    let Some(start) = response.find("subquestions") else {
        return fallback();
    };
    let Some(open) = response[start..].find('[') else {
        return fallback();
    };
    let body = &response[start + open + 1..];
    let mut items = Vec::new();
    let mut chars = body.chars();
    let mut current: Option<String> = None;
    let mut escaped = false;
    let mut quote = '"';
    for ch in chars.by_ref() {
        match current.as_mut() {
            Some(s) => {
                if escaped {
                    s.push(match ch {
                        'n' => '\n',
                        't' => '\t',
                        other => other,
                    });
                    escaped = false;
                } else if ch == '\\' {
                    escaped = true;
                } else if ch == quote {
                    let done = current.take().unwrap();
                    if !done.trim().is_empty() {
                        items.push(done);
                    }
                } else {
                    s.push(ch);
                }
            }
            None => {
                if ch == '"' || ch == '\'' {
                    quote = ch;
                    current = Some(String::new());
                } else if ch == ']' {
                    break;
                }
            }
        }
    }
    if items.is_empty() {
        fallback()
    } else {
        items
    }
}

/// Text after the last "Answer:" marker; whole trimmed response when the
/// marker is missing. Returns whether the marker was found.
pub fn parse_answer_marker(response: &str) -> (String, bool) {
    let lower = response.to_ascii_lowercase();
    if let Some(pos) = lower.rfind("answer:") {
        let text = response[pos + "answer:".len()..].trim();
        if !text.is_empty() {
            return (text.to_string(), true);
        }
    }
    (response.trim().to_string(), false)
}
