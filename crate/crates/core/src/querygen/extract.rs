//! Pulls JSON objects out of free-form completion text.

use serde_json::{Map, Value};

use super::QuerygenError;

pub type RawObject = Map<String, Value>;

/// Raw query objects in document order.
///
/// Fenced code blocks are searched first; only when they hold nothing is
/// the whole text scanned. Arrays are flattened, and a wrapper object whose
/// only array field holds objects (`{"queries": [...]}`) is unwrapped.
/// Python literals (single quotes, `True`/`None`, trailing commas) are
/// accepted as a fallback.
pub fn extract_query_objects(text: &str) -> Result<Vec<RawObject>, QuerygenError> {
    let text = unescape_latex(text);
    let mut found = Vec::new();
    for block in fenced_blocks(&text) {
        found.extend(scan(block));
    }
    if found.is_empty() {
        found = scan(&text);
    }
    if found.is_empty() {
        Err(QuerygenError::NoQueriesFound)
    } else {
        Ok(found)
    }
}

// Completions sometimes come back typeset (`\{"series\_id": ...\}`).
fn unescape_latex(text: &str) -> String {
    text.replace("\\{", "{")
        .replace("\\}", "}")
        .replace("\\_", "_")
        .replace("\\&", "&")
}

fn fenced_blocks(text: &str) -> Vec<&str> {
    let mut blocks = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find("```") {
        let after = &rest[open + 3..];
        // skip the info string (```json)
        let body_start = after.find('\n').map_or(after.len(), |i| i + 1);
        let body = &after[body_start..];
        match body.find("```") {
            Some(close) => {
                blocks.push(&body[..close]);
                rest = &body[close + 3..];
            }
            None => break,
        }
    }
    blocks
}

fn scan(text: &str) -> Vec<RawObject> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' || bytes[i] == b'[' {
            if let Some(end) = matching_close(bytes, i) {
                let candidate = &text[i..=end];
                if let Some(value) = parse_candidate(candidate) {
                    let objects = flatten(value);
                    if !objects.is_empty() {
                        out.extend(objects);
                        i = end + 1;
                        continue;
                    }
                }
            }
        }
        i += 1;
    }
    out
}

/// Index of the bracket closing the one at `start`, skipping string
/// contents. A single quote opens a string only where a Python literal
/// could start, so apostrophes in prose do not derail the scan.
fn matching_close(bytes: &[u8], start: usize) -> Option<usize> {
    let mut stack = Vec::new();
    let mut quote: Option<u8> = None;
    let mut prev_significant = b' ';
    let mut i = start;
    while i < bytes.len() {
        let c = bytes[i];
        if let Some(q) = quote {
            if c == b'\\' {
                i += 2;
                continue;
            }
            if c == q {
                quote = None;
                prev_significant = c;
            }
            i += 1;
            continue;
        }
        match c {
            b'"' => quote = Some(b'"'),
            b'\'' if matches!(prev_significant, b'{' | b'[' | b':' | b',' | b'(') => {
                quote = Some(b'\'')
            }
            b'{' => stack.push(b'}'),
            b'[' => stack.push(b']'),
            b'}' | b']' => {
                if stack.pop() != Some(c) {
                    return None;
                }
                if stack.is_empty() {
                    return Some(i);
                }
            }
            _ => {}
        }
        if !c.is_ascii_whitespace() {
            prev_significant = c;
        }
        i += 1;
    }
    None
}

fn parse_candidate(candidate: &str) -> Option<Value> {
    serde_json::from_str(candidate)
        .ok()
        .or_else(|| serde_json::from_str(&python_to_json(candidate)).ok())
}

fn flatten(value: Value) -> Vec<RawObject> {
    match value {
        Value::Array(items) => items.into_iter().flat_map(flatten).collect(),
        Value::Object(obj) => {
            let arrays: Vec<&Value> = obj.values().filter(|v| v.is_array()).collect();
            if obj.len() == 1 && arrays.len() == 1 {
                let inner = flatten(arrays[0].clone());
                if !inner.is_empty() {
                    return inner;
                }
            }
            vec![obj]
        }
        _ => Vec::new(),
    }
}

/// Rewrites a Python dict/list literal as JSON.
fn python_to_json(src: &str) -> String {
    let mut out = String::with_capacity(src.len());
    let mut chars = src.chars().peekable();
    let mut word = String::new();
    let flush = |word: &mut String, out: &mut String| {
        match word.as_str() {
            "True" => out.push_str("true"),
            "False" => out.push_str("false"),
            "None" => out.push_str("null"),
            _ => out.push_str(word),
        }
        word.clear();
    };
    while let Some(c) = chars.next() {
        if c.is_ascii_alphanumeric() || c == '_' {
            word.push(c);
            continue;
        }
        flush(&mut word, &mut out);
        match c {
            '\'' | '"' => {
                out.push('"');
                while let Some(d) = chars.next() {
                    match d {
                        '\\' => {
                            if let Some(e) = chars.next() {
                                if e == '\'' {
                                    out.push('\'');
                                } else {
                                    out.push('\\');
                                    out.push(e);
                                }
                            }
                        }
                        '"' if c == '\'' => out.push_str("\\\""),
                        d if d == c => break,
                        d => out.push(d),
                    }
                }
                out.push('"');
            }
            '#' => {
                // comment to end of line
                for d in chars.by_ref() {
                    if d == '\n' {
                        out.push('\n');
                        break;
                    }
                }
            }
            ',' => {
                let mut lookahead = chars.clone();
                let next = lookahead.find(|d: &char| !d.is_whitespace());
                if !matches!(next, Some('}') | Some(']')) {
                    out.push(',');
                }
            }
            c => out.push(c),
        }
    }
    flush(&mut word, &mut out);
    out
}
